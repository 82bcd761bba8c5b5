#pragma once

#include "mpoxrf/optics.h"

#include <array>
#include <cstdint>
#include <random>
#include <string>
#include <variant>
#include <vector>

namespace mpoxrf {

using Rng = std::mt19937_64;

struct EmissionLine {
    double energy_kev = 0.0;
    double relative_intensity = 1.0;
};

// Sources live in the sample plane, L_s upstream of the optic entrance.
struct PointShape {
    double x_mm = 0.0;
    double z_mm = 0.0;
};

struct RectShape {
    double center_x_mm = 0.0;
    double center_z_mm = 0.0;
    double width_mm = 0.0;  // along x
    double height_mm = 0.0; // along z
};

struct Source {
    std::string label;
    std::variant<PointShape, RectShape> shape;
    std::vector<EmissionLine> lines;

    void validate() const;
    // Sum of line intensities; sources are picked in proportion to it.
    double total_intensity() const;

    static Source point(std::string label, double x_mm, double z_mm,
                        std::vector<EmissionLine> lines);
    static Source rect(std::string label, double cx_mm, double cz_mm, double width_mm,
                       double height_mm, std::vector<EmissionLine> lines);
};

struct Scene {
    std::vector<Source> sources;
    double ls_mm = 25.0; // sample -> optic entrance
    double li_mm = 25.0; // optic exit -> detector

    void validate() const;
    // FNV-1a hash over a canonical text form of the scene.
    std::uint64_t digest() const;
};

struct DetectorSpec {
    std::uint32_t n_x = 256;
    std::uint32_t n_y = 256;
    double pitch_um = 55.0;
    double energy_fwhm_kev = 1.12; // constant in energy
    double threshold_kev = 2.0;
    double e_min_kev = 0.0;
    double e_bin_width_kev = 0.25;
    std::uint32_t n_bins = 100;

    void validate() const;

    // Pixel index covering a detector-plane coordinate. The optic axis hits
    // the corner shared by pixels n/2 - 1 and n/2. Returns -1 off the chip.
    std::int64_t pixel_x(double x_mm) const;
    std::int64_t pixel_y(double z_mm) const;
    // Bin index for a measured energy, -1 outside [e_min, e_min + n_bins*width).
    std::int64_t energy_bin(double energy_kev) const;
    double bin_center(std::uint32_t bin) const { return e_min_kev + (bin + 0.5) * e_bin_width_kev; }
};

// Pixel x energy-bin count cube. Row index y follows the lab z axis.
struct SpectralImage {
    std::uint32_t n_x = 0, n_y = 0, n_bins = 0;
    double e_min_kev = 0.0;
    double e_bin_width_kev = 0.0;
    double pixel_pitch_um = 0.0;
    std::uint64_t seed = 0;
    std::uint64_t photons = 0;
    std::uint64_t scene_digest = 0;
    std::uint64_t dropped = 0;      // calibrated events on dead pixels
    std::uint64_t out_of_range = 0; // calibrated events outside the energy bins
    std::vector<std::uint64_t> counts;

    static SpectralImage empty_like(const DetectorSpec &det);

    std::size_t index(std::uint32_t x, std::uint32_t y, std::uint32_t bin) const {
        return (static_cast<std::size_t>(y) * n_x + x) * n_bins + bin;
    }
    std::uint64_t &at(std::uint32_t x, std::uint32_t y, std::uint32_t bin) {
        return counts[index(x, y, bin)];
    }
    std::uint64_t at(std::uint32_t x, std::uint32_t y, std::uint32_t bin) const {
        return counts[index(x, y, bin)];
    }
    std::uint64_t total() const;
    bool operator==(const SpectralImage &) const = default;
};

// Uniformly random emission point on the source, direction uniform over the
// solid angle the plate subtends from that point, line picked by intensity.
// weight = plate solid angle / 4 pi.
Photon sample_emission(const Source &source, const MpoGeometry &geometry, const Scene &scene,
                       Rng &rng);

// Solid angle (sr) of the plate face seen from (x, z) at distance ls.
double plate_solid_angle(double x_mm, double z_mm, double ls_mm, const MpoGeometry &geometry);

struct DetectorHit {
    double x_mm = 0.0;
    double z_mm = 0.0;
};

// Straight-line propagation from the channel exit over li_mm.
DetectorHit project_to_detector(const ChannelTraceResult &exit, double pore_origin_x_mm,
                                double pore_origin_z_mm, double li_mm);

// Gaussian smear with sigma = FWHM / 2.3548.
double smear_energy(double true_energy_kev, double fwhm_kev, Rng &rng);
double apply_energy_response(double true_energy_kev, const DetectorSpec &detector, Rng &rng);

struct SimOptions {
    std::uint64_t n_photons = 0;
    std::uint64_t seed = 1;
    unsigned n_workers = 1;
    bool class_images = false;
};

struct SimTallies {
    std::uint64_t emitted = 0;
    std::uint64_t missed_plate = 0;
    std::uint64_t web_absorbed = 0;
    std::uint64_t wall_absorbed = 0;
    std::uint64_t outside_detector = 0;
    std::uint64_t below_threshold = 0;
    std::uint64_t outside_energy_range = 0;
    std::uint64_t detected = 0;
    std::array<std::uint64_t, kPathClassCount> per_class{};
    double weight_sum = 0.0; // sum of emission weights over emitted photons

    double mean_weight() const { return emitted ? weight_sum / static_cast<double>(emitted) : 0.0; }

    SimTallies &operator+=(const SimTallies &o);
};

struct SimResult {
    SpectralImage cube;
    SimTallies tallies;
    // Energy-integrated hit maps per PathClass (n_x * n_y each), filled when
    // SimOptions::class_images is set.
    std::array<std::vector<std::uint64_t>, kPathClassCount> class_images;
};

inline constexpr std::uint64_t kBatchSize = 65536;

// Seed of batch b: splitmix64(seed + 0x9E3779B97F4A7C15 * (b + 1)).
std::uint64_t batch_seed(std::uint64_t seed, std::uint64_t batch);

// Monte Carlo transport of n_photons through the optic. Output depends only on
// (scene, mpo, detector, n_photons, seed), not on n_workers.
SimResult simulate(const Scene &scene, const MpoGeometry &mpo, const DetectorSpec &detector,
                   const SimOptions &options);

} // namespace mpoxrf
