#include "mpoxrf/optics.h"

#include "mpoxrf/error.h"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace mpoxrf {

namespace {

constexpr double kRadToDeg = 180.0 / std::numbers::pi;

} // namespace

void Material::validate() const {
    if (!(Z >= 1.0)) throw ConfigError("material " + name + ": Z must be >= 1");
    if (!(A > 0.0)) throw ConfigError("material " + name + ": A must be > 0");
    if (!(rho > 0.0)) throw ConfigError("material " + name + ": density must be > 0");
    if (Z / A > 1.0) throw ConfigError("material " + name + ": Z/A must not exceed 1");
}

void MpoGeometry::validate() const {
    coating.validate();
    if (!(plate_side_mm > 0.0)) throw ConfigError("mpo: plate side must be > 0");
    if (!(thickness_mm > 0.0)) throw ConfigError("mpo: thickness must be > 0");
    if (!(pore_width_um > 0.0 && pore_width_um < pitch_um))
        throw ConfigError("mpo: need 0 < pore width < pitch");
    if (reflectivity.kind == Reflectivity::Kind::ConstantPerBounce &&
        !(reflectivity.r >= 0.0 && reflectivity.r <= 1.0))
        throw ConfigError("mpo: per-bounce reflectivity must lie in [0, 1]");
}

bool Photon::paraxial() const {
    return std::isfinite(slope_x) && std::isfinite(slope_z) &&
           std::abs(slope_x) < kParaxialLimit && std::abs(slope_z) < kParaxialLimit;
}

const char *to_string(PathClass c) {
    switch (c) {
    case PathClass::CentralFocus: return "central_focus";
    case PathClass::ArmAlongX: return "arm_along_x";
    case PathClass::ArmAlongZ: return "arm_along_z";
    case PathClass::Diffuse: return "diffuse";
    case PathClass::Direct: return "direct";
    }
    return "?";
}

double critical_angle_deg(double energy_kev, const Material &material) {
    if (!(energy_kev > 0.0)) throw std::domain_error("critical_angle_deg: energy must be > 0");
    return 1.651 / energy_kev * std::sqrt(material.Z / material.A * material.rho);
}

double grazing_reflectivity(double grazing_angle_deg, double energy_kev,
                            const MpoGeometry &geometry) {
    if (grazing_angle_deg > critical_angle_deg(energy_kev, geometry.coating)) return 0.0;
    return geometry.reflectivity.kind == Reflectivity::Kind::Binary ? 1.0 : geometry.reflectivity.r;
}

PoreEntry pore_entry(double plate_x_mm, double plate_z_mm, const MpoGeometry &geometry) {
    PoreEntry e;
    const double half_side = 0.5 * geometry.plate_side_mm;
    if (!(std::abs(plate_x_mm) <= half_side && std::abs(plate_z_mm) <= half_side)) {
        e.status = PoreEntry::Status::MissedPlate;
        return e;
    }
    const double p = geometry.pitch_um;
    const double half_w = 0.5 * geometry.pore_width_um;
    const double xu = plate_x_mm * 1000.0;
    const double zu = plate_z_mm * 1000.0;
    e.i = static_cast<std::int64_t>(std::floor(xu / p + 0.5));
    e.j = static_cast<std::int64_t>(std::floor(zu / p + 0.5));
    const double dx = xu - static_cast<double>(e.i) * p;
    const double dz = zu - static_cast<double>(e.j) * p;
    if (std::abs(dx) > half_w || std::abs(dz) > half_w) {
        e.status = PoreEntry::Status::Web;
        return e;
    }
    e.status = PoreEntry::Status::Inside;
    e.u_um = dx + half_w;
    e.v_um = dz + half_w;
    e.origin_x_mm = (static_cast<double>(e.i) * p - half_w) / 1000.0;
    e.origin_z_mm = (static_cast<double>(e.j) * p - half_w) / 1000.0;
    return e;
}

PlaneFold fold_plane(double entry_um, double slope, double thickness_um, double width_um) {
    // Mirror tiles of period w: tile k holds the image after |k| reflections,
    // flipped when k is odd.
    const double unfolded = entry_um + thickness_um * slope;
    const double k = std::floor(unfolded / width_um);
    double r = unfolded - k * width_um;
    if (r < 0.0) r = 0.0;
    if (r > width_um) r = width_um;
    const bool odd = std::fmod(std::abs(k), 2.0) == 1.0;

    PlaneFold f;
    f.exit_um = odd ? width_um - r : r;
    f.exit_slope = odd ? -slope : slope;
    f.reflections = static_cast<std::uint32_t>(std::abs(k));
    return f;
}

ChannelTraceResult trace_channel(double entry_u_um, double entry_v_um, double slope_x,
                                 double slope_z, double energy_kev, const MpoGeometry &geometry) {
    const double w = geometry.pore_width_um;
    if (!(entry_u_um >= 0.0 && entry_u_um <= w && entry_v_um >= 0.0 && entry_v_um <= w))
        throw std::invalid_argument("trace_channel: entry outside the pore opening");
    if (!(std::isfinite(slope_x) && std::isfinite(slope_z)) ||
        std::abs(slope_x) >= Photon::kParaxialLimit || std::abs(slope_z) >= Photon::kParaxialLimit)
        throw std::invalid_argument("trace_channel: slope outside the paraxial regime");

    const double t = geometry.thickness_mm * 1000.0;
    const PlaneFold fx = fold_plane(entry_u_um, slope_x, t, w);
    const PlaneFold fz = fold_plane(entry_v_um, slope_z, t, w);

    ChannelTraceResult res;
    res.exit_u_um = fx.exit_um;
    res.exit_v_um = fz.exit_um;
    res.exit_slope_x = fx.exit_slope;
    res.exit_slope_z = fz.exit_slope;
    res.n_reflections_x = fx.reflections;
    res.n_reflections_z = fz.reflections;

    // Every bounce in one plane shares the same projected grazing angle.
    auto plane_survival = [&](double slope, std::uint32_t n) {
        if (n == 0) return 1.0;
        const double r =
            grazing_reflectivity(std::atan(std::abs(slope)) * kRadToDeg, energy_kev, geometry);
        return r == 0.0 ? 0.0 : std::pow(r, static_cast<double>(n));
    };
    const double sx = plane_survival(slope_x, fx.reflections);
    const double sz = plane_survival(slope_z, fz.reflections);
    if (sx == 0.0 || sz == 0.0) {
        res.outcome = TraceOutcome::Absorbed;
        if (sx == 0.0) res.n_reflections_x = 1;
        if (sz == 0.0) res.n_reflections_z = 1;
        res.transmission = 0.0;
        return res;
    }
    res.transmission = sx * sz;
    return res;
}

PathClass classify_path(std::uint32_t nx, std::uint32_t nz) {
    const bool odd_x = nx % 2 == 1;
    const bool odd_z = nz % 2 == 1;
    if (odd_x && odd_z) return PathClass::CentralFocus;
    if (odd_x) return PathClass::ArmAlongZ;
    if (odd_z) return PathClass::ArmAlongX;
    if (nx == 0 && nz == 0) return PathClass::Direct;
    return PathClass::Diffuse;
}

} // namespace mpoxrf
