#pragma once

#include <cstdint>
#include <string>

namespace mpoxrf {

// Reflecting surface material. Z/A/rho feed the critical angle formula.
struct Material {
    std::string name;
    double Z = 0.0;   // atomic number
    double A = 0.0;   // g/mol
    double rho = 0.0; // g/cm^3

    // Throws ConfigError when Z < 1, A <= 0, rho <= 0 or Z/A > 1.
    void validate() const;

    static Material iridium() { return {"Ir", 77.0, 192.217, 22.56}; }
};

// Survival probability model for a sub-critical wall bounce. Anything above
// the critical angle is absorbed in both models.
struct Reflectivity {
    enum class Kind { Binary, ConstantPerBounce };
    Kind kind = Kind::Binary;
    double r = 1.0; // per-bounce survival, ConstantPerBounce only

    static Reflectivity binary() { return {}; }
    static Reflectivity constant(double r) { return {Kind::ConstantPerBounce, r}; }
};

// Flat square-pore micro pore optic. Each pitch cell holds one centred
// square opening; the web between openings is opaque. Cell (0, 0) is centred
// on the optic axis.
struct MpoGeometry {
    double plate_side_mm = 20.0;
    double thickness_mm = 1.2;
    double pore_width_um = 20.0;
    double pitch_um = 25.0;
    Material coating = Material::iridium();
    Reflectivity reflectivity;

    void validate() const;

    double open_area_fraction() const {
        const double f = pore_width_um / pitch_um;
        return f * f;
    }

    // Plate of 20 mm, 1.2 mm thick, 20 um pores on a 25 um pitch, Ir coated.
    static MpoGeometry reference() { return {}; }
};

// Paraxial ray. The optic axis is +y; slopes are dx/dy and dz/dy.
struct Photon {
    double x = 0.0, y = 0.0, z = 0.0; // mm, lab frame
    double slope_x = 0.0;
    double slope_z = 0.0;
    double energy_kev = 0.0;
    double weight = 1.0;

    static constexpr double kParaxialLimit = 0.1;
    bool paraxial() const;
};

enum class TraceOutcome { Absorbed, Exited };

struct ChannelTraceResult {
    TraceOutcome outcome = TraceOutcome::Exited;
    double exit_u_um = 0.0; // pore-local, in [0, w]
    double exit_v_um = 0.0;
    double exit_slope_x = 0.0;
    double exit_slope_z = 0.0;
    std::uint32_t n_reflections_x = 0;
    std::uint32_t n_reflections_z = 0;
    // Product of per-bounce survival probabilities (1 for Binary survivors).
    double transmission = 1.0;

    bool exited() const { return outcome == TraceOutcome::Exited; }
};

enum class PathClass { CentralFocus, ArmAlongX, ArmAlongZ, Diffuse, Direct };
inline constexpr int kPathClassCount = 5;

const char *to_string(PathClass c);

// Approximate critical angle for total external reflection in degrees:
// 1.651 / E[keV] * sqrt(Z/A * rho). Throws std::domain_error for E <= 0.
double critical_angle_deg(double energy_kev, const Material &material);

// Survival probability of one bounce at the given grazing angle. The
// comparison with the critical angle is inclusive.
double grazing_reflectivity(double grazing_angle_deg, double energy_kev,
                            const MpoGeometry &geometry);

struct PoreEntry {
    enum class Status { Inside, Web, MissedPlate };
    Status status = Status::MissedPlate;
    std::int64_t i = 0, j = 0;    // cell indices along x and z
    double u_um = 0.0, v_um = 0.0; // pore-local entry, [0, w]
    // Lab position of the pore corner where u = v = 0.
    double origin_x_mm = 0.0;
    double origin_z_mm = 0.0;
};

PoreEntry pore_entry(double plate_x_mm, double plate_z_mm, const MpoGeometry &geometry);

// Single-plane unfolded path through a channel of the given width.
struct PlaneFold {
    double exit_um = 0.0;
    double exit_slope = 0.0;
    std::uint32_t reflections = 0;
};

PlaneFold fold_plane(double entry_um, double slope, double thickness_um, double width_um);

// Trace a ray through one pore by unfolding each plane independently. Entry
// must lie in [0, w] and slopes must be paraxial (std::invalid_argument
// otherwise). Deterministic: ConstantPerBounce survival is reported through
// `transmission` and left to the caller to sample.
ChannelTraceResult trace_channel(double entry_u_um, double entry_v_um, double slope_x,
                                 double slope_z, double energy_kev, const MpoGeometry &geometry);

// (odd, odd) central spot; (odd, even) focused in x only so the line runs
// along z; (even, odd) the reverse; (0, 0) direct; other (even, even) diffuse.
PathClass classify_path(std::uint32_t n_reflections_x, std::uint32_t n_reflections_z);

} // namespace mpoxrf
