#include "mpoxrf/sim.h"

#include "mpoxrf/error.h"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <mutex>
#include <numbers>
#include <stdexcept>
#include <thread>

namespace mpoxrf {

namespace {

constexpr double kFwhmToSigma = 1.0 / 2.3548;

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

double uniform(Rng &rng, double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

// Solid angle of the rectangle [0, a] x [0, b] seen from distance d above
// its corner; odd in a and b so signed corners combine.
double corner_solid_angle(double a, double b, double d) {
    return std::atan(a * b / (d * std::sqrt(a * a + b * b + d * d)));
}

const EmissionLine &pick_line(const Source &source, Rng &rng) {
    if (source.lines.size() == 1) return source.lines.front();
    double u = uniform(rng, 0.0, source.total_intensity());
    for (const auto &line : source.lines) {
        if (u < line.relative_intensity) return line;
        u -= line.relative_intensity;
    }
    return source.lines.back();
}

} // namespace

void Source::validate() const {
    if (lines.empty()) throw ConfigError("source " + label + ": needs at least one line");
    for (const auto &l : lines) {
        if (!(l.energy_kev > 0.0)) throw ConfigError("source " + label + ": line energy must be > 0");
        if (!(l.relative_intensity > 0.0))
            throw ConfigError("source " + label + ": line intensity must be > 0");
    }
    if (const auto *r = std::get_if<RectShape>(&shape)) {
        if (!(r->width_mm > 0.0 && r->height_mm > 0.0))
            throw ConfigError("source " + label + ": rectangle dimensions must be > 0");
    }
}

double Source::total_intensity() const {
    double sum = 0.0;
    for (const auto &l : lines) sum += l.relative_intensity;
    return sum;
}

Source Source::point(std::string label, double x_mm, double z_mm, std::vector<EmissionLine> lines) {
    return {std::move(label), PointShape{x_mm, z_mm}, std::move(lines)};
}

Source Source::rect(std::string label, double cx_mm, double cz_mm, double width_mm,
                    double height_mm, std::vector<EmissionLine> lines) {
    return {std::move(label), RectShape{cx_mm, cz_mm, width_mm, height_mm}, std::move(lines)};
}

void Scene::validate() const {
    if (!(ls_mm > 0.0)) throw ConfigError("scene: L_s must be > 0");
    if (!(li_mm > 0.0)) throw ConfigError("scene: L_i must be > 0");
    for (const auto &s : sources) s.validate();
}

std::uint64_t Scene::digest() const {
    std::string text;
    char buf[128];
    std::snprintf(buf, sizeof buf, "ls=%.17g;li=%.17g;", ls_mm, li_mm);
    text += buf;
    for (const auto &s : sources) {
        text += s.label + ":";
        if (const auto *p = std::get_if<PointShape>(&s.shape)) {
            std::snprintf(buf, sizeof buf, "point(%.17g,%.17g)", p->x_mm, p->z_mm);
        } else {
            const auto &r = std::get<RectShape>(s.shape);
            std::snprintf(buf, sizeof buf, "rect(%.17g,%.17g,%.17g,%.17g)", r.center_x_mm,
                          r.center_z_mm, r.width_mm, r.height_mm);
        }
        text += buf;
        for (const auto &l : s.lines) {
            std::snprintf(buf, sizeof buf, "[%.17g:%.17g]", l.energy_kev, l.relative_intensity);
            text += buf;
        }
        text += ";";
    }
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

void DetectorSpec::validate() const {
    if (n_x == 0 || n_y == 0) throw ConfigError("detector: pixel counts must be > 0");
    if (!(pitch_um > 0.0)) throw ConfigError("detector: pitch must be > 0");
    if (!(energy_fwhm_kev >= 0.0)) throw ConfigError("detector: energy FWHM must be >= 0");
    if (n_bins == 0) throw ConfigError("detector: n_bins must be > 0");
    if (!(e_bin_width_kev > 0.0)) throw ConfigError("detector: bin width must be > 0");
}

std::int64_t DetectorSpec::pixel_x(double x_mm) const {
    const double f = std::floor(x_mm * 1000.0 / pitch_um + 0.5 * n_x);
    return (f >= 0.0 && f < n_x) ? static_cast<std::int64_t>(f) : -1;
}

std::int64_t DetectorSpec::pixel_y(double z_mm) const {
    const double f = std::floor(z_mm * 1000.0 / pitch_um + 0.5 * n_y);
    return (f >= 0.0 && f < n_y) ? static_cast<std::int64_t>(f) : -1;
}

std::int64_t DetectorSpec::energy_bin(double energy_kev) const {
    const double f = std::floor((energy_kev - e_min_kev) / e_bin_width_kev);
    return (f >= 0.0 && f < n_bins) ? static_cast<std::int64_t>(f) : -1;
}

SpectralImage SpectralImage::empty_like(const DetectorSpec &det) {
    SpectralImage img;
    img.n_x = det.n_x;
    img.n_y = det.n_y;
    img.n_bins = det.n_bins;
    img.e_min_kev = det.e_min_kev;
    img.e_bin_width_kev = det.e_bin_width_kev;
    img.pixel_pitch_um = det.pitch_um;
    img.counts.assign(static_cast<std::size_t>(det.n_x) * det.n_y * det.n_bins, 0);
    return img;
}

std::uint64_t SpectralImage::total() const {
    std::uint64_t t = 0;
    for (auto c : counts) t += c;
    return t;
}

double plate_solid_angle(double x_mm, double z_mm, double ls_mm, const MpoGeometry &geometry) {
    const double h = 0.5 * geometry.plate_side_mm;
    const double x1 = -h - x_mm, x2 = h - x_mm;
    const double z1 = -h - z_mm, z2 = h - z_mm;
    return corner_solid_angle(x2, z2, ls_mm) - corner_solid_angle(x1, z2, ls_mm) -
           corner_solid_angle(x2, z1, ls_mm) + corner_solid_angle(x1, z1, ls_mm);
}

Photon sample_emission(const Source &source, const MpoGeometry &geometry, const Scene &scene,
                       Rng &rng) {
    Photon ph;
    if (const auto *p = std::get_if<PointShape>(&source.shape)) {
        ph.x = p->x_mm;
        ph.z = p->z_mm;
    } else {
        const auto &r = std::get<RectShape>(source.shape);
        ph.x = uniform(rng, r.center_x_mm - 0.5 * r.width_mm, r.center_x_mm + 0.5 * r.width_mm);
        ph.z = uniform(rng, r.center_z_mm - 0.5 * r.height_mm, r.center_z_mm + 0.5 * r.height_mm);
    }
    ph.y = -scene.ls_mm;
    ph.energy_kev = pick_line(source, rng).energy_kev;

    const double d = scene.ls_mm;
    const double h = 0.5 * geometry.plate_side_mm;

    // Cone around the direction to the plate centre wide enough to hold every
    // corner; uniform on the cap, rejected outside the plate.
    const double ax = -ph.x, ay = d, az = -ph.z;
    const double an = std::sqrt(ax * ax + ay * ay + az * az);
    const double cx = ax / an, cy = ay / an, cz = az / an;
    double cos_alpha = 1.0;
    for (double sx : {-h, h}) {
        for (double sz : {-h, h}) {
            const double vx = sx - ph.x, vz = sz - ph.z;
            const double vn = std::sqrt(vx * vx + d * d + vz * vz);
            cos_alpha = std::min(cos_alpha, (vx * cx + d * cy + vz * cz) / vn);
        }
    }
    // Orthonormal frame (e1, e2, c).
    double e1x, e1y, e1z;
    if (std::abs(cx) < 0.9) {
        e1x = 0.0, e1y = -cz, e1z = cy; // c x (1,0,0)
    } else {
        e1x = cz, e1y = 0.0, e1z = -cx; // c x (0,1,0)
    }
    const double e1n = std::sqrt(e1x * e1x + e1y * e1y + e1z * e1z);
    e1x /= e1n, e1y /= e1n, e1z /= e1n;
    const double e2x = cy * e1z - cz * e1y;
    const double e2y = cz * e1x - cx * e1z;
    const double e2z = cx * e1y - cy * e1x;

    for (;;) {
        const double cos_t = uniform(rng, cos_alpha, 1.0);
        const double sin_t = std::sqrt(std::max(0.0, 1.0 - cos_t * cos_t));
        const double phi = uniform(rng, 0.0, 2.0 * std::numbers::pi);
        const double a = sin_t * std::cos(phi), b = sin_t * std::sin(phi);
        const double dx = a * e1x + b * e2x + cos_t * cx;
        const double dy = a * e1y + b * e2y + cos_t * cy;
        const double dz = a * e1z + b * e2z + cos_t * cz;
        if (dy <= 0.0) continue;
        const double sx = dx / dy, sz = dz / dy;
        if (std::abs(ph.x + sx * d) > h || std::abs(ph.z + sz * d) > h) continue;
        ph.slope_x = sx;
        ph.slope_z = sz;
        break;
    }
    ph.weight = plate_solid_angle(ph.x, ph.z, d, geometry) / (4.0 * std::numbers::pi);
    return ph;
}

DetectorHit project_to_detector(const ChannelTraceResult &exit, double pore_origin_x_mm,
                                double pore_origin_z_mm, double li_mm) {
    return {pore_origin_x_mm + exit.exit_u_um / 1000.0 + exit.exit_slope_x * li_mm,
            pore_origin_z_mm + exit.exit_v_um / 1000.0 + exit.exit_slope_z * li_mm};
}

double smear_energy(double true_energy_kev, double fwhm_kev, Rng &rng) {
    if (fwhm_kev <= 0.0) return true_energy_kev;
    return std::normal_distribution<double>(true_energy_kev, fwhm_kev * kFwhmToSigma)(rng);
}

double apply_energy_response(double true_energy_kev, const DetectorSpec &detector, Rng &rng) {
    return smear_energy(true_energy_kev, detector.energy_fwhm_kev, rng);
}

SimTallies &SimTallies::operator+=(const SimTallies &o) {
    emitted += o.emitted;
    missed_plate += o.missed_plate;
    web_absorbed += o.web_absorbed;
    wall_absorbed += o.wall_absorbed;
    outside_detector += o.outside_detector;
    below_threshold += o.below_threshold;
    outside_energy_range += o.outside_energy_range;
    detected += o.detected;
    for (int i = 0; i < kPathClassCount; ++i) per_class[i] += o.per_class[i];
    weight_sum += o.weight_sum;
    return *this;
}

std::uint64_t batch_seed(std::uint64_t seed, std::uint64_t batch) {
    return splitmix64(seed + 0x9E3779B97F4A7C15ull * (batch + 1));
}

namespace {

struct BatchOutput {
    SimTallies tallies;
    std::vector<std::size_t> hits;                                 // cube indices
    std::vector<std::pair<std::size_t, PathClass>> class_hits;     // pixel, class
};

// Exact outcome for a ray steeper than the paraxial limit: it must strike a
// wall, and the bounce is super-critical for any coating and energy where the
// critical angle stays below atan(0.1). Anything else is out of model.
bool steep_ray_absorbed(double slope, double energy_kev, const MpoGeometry &mpo) {
    const double s = std::abs(slope);
    if (s < Photon::kParaxialLimit) return false;
    const double t_um = mpo.thickness_mm * 1000.0;
    const double grazing_deg = std::atan(s) * 180.0 / std::numbers::pi;
    if (t_um * s >= mpo.pore_width_um &&
        grazing_deg > critical_angle_deg(energy_kev, mpo.coating))
        return true;
    throw std::runtime_error("simulate: non-paraxial ray may transmit; geometry out of model");
}

void run_batch(std::uint64_t batch, std::uint64_t count, std::uint64_t seed, const Scene &scene,
               const MpoGeometry &mpo, const DetectorSpec &det, bool want_classes,
               BatchOutput &out) {
    Rng rng(batch_seed(seed, batch));
    double total_intensity = 0.0;
    for (const auto &s : scene.sources) total_intensity += s.total_intensity();
    const bool roulette = mpo.reflectivity.kind == Reflectivity::Kind::ConstantPerBounce;

    auto &t = out.tallies;
    for (std::uint64_t n = 0; n < count; ++n) {
        const Source *src = &scene.sources.front();
        if (scene.sources.size() > 1) {
            double u = uniform(rng, 0.0, total_intensity);
            for (const auto &s : scene.sources) {
                src = &s;
                if (u < s.total_intensity()) break;
                u -= s.total_intensity();
            }
        }
        const Photon ph = sample_emission(*src, mpo, scene, rng);
        ++t.emitted;
        t.weight_sum += ph.weight;

        const double plate_x = ph.x + ph.slope_x * scene.ls_mm;
        const double plate_z = ph.z + ph.slope_z * scene.ls_mm;
        const PoreEntry entry = pore_entry(plate_x, plate_z, mpo);
        if (entry.status == PoreEntry::Status::MissedPlate) {
            ++t.missed_plate;
            continue;
        }
        if (entry.status == PoreEntry::Status::Web) {
            ++t.web_absorbed;
            continue;
        }
        if (!ph.paraxial()) {
            if (steep_ray_absorbed(ph.slope_x, ph.energy_kev, mpo) ||
                steep_ray_absorbed(ph.slope_z, ph.energy_kev, mpo)) {
                ++t.wall_absorbed;
                continue;
            }
        }
        const ChannelTraceResult tr =
            trace_channel(entry.u_um, entry.v_um, ph.slope_x, ph.slope_z, ph.energy_kev, mpo);
        if (!tr.exited()) {
            ++t.wall_absorbed;
            continue;
        }
        if (roulette && tr.transmission < 1.0 && uniform(rng, 0.0, 1.0) >= tr.transmission) {
            ++t.wall_absorbed;
            continue;
        }
        const DetectorHit hit =
            project_to_detector(tr, entry.origin_x_mm, entry.origin_z_mm, scene.li_mm);
        const std::int64_t px = det.pixel_x(hit.x_mm);
        const std::int64_t py = det.pixel_y(hit.z_mm);
        if (px < 0 || py < 0) {
            ++t.outside_detector;
            continue;
        }
        const double measured = apply_energy_response(ph.energy_kev, det, rng);
        if (measured < det.threshold_kev) {
            ++t.below_threshold;
            continue;
        }
        const std::int64_t bin = det.energy_bin(measured);
        if (bin < 0) {
            ++t.outside_energy_range;
            continue;
        }
        ++t.detected;
        const PathClass cls = classify_path(tr.n_reflections_x, tr.n_reflections_z);
        ++t.per_class[static_cast<int>(cls)];
        const std::size_t pixel = static_cast<std::size_t>(py) * det.n_x + static_cast<std::size_t>(px);
        out.hits.push_back(pixel * det.n_bins + static_cast<std::size_t>(bin));
        if (want_classes) out.class_hits.emplace_back(pixel, cls);
    }
}

} // namespace

SimResult simulate(const Scene &scene, const MpoGeometry &mpo, const DetectorSpec &detector,
                   const SimOptions &options) {
    scene.validate();
    mpo.validate();
    detector.validate();
    if (options.n_photons > 0 && scene.sources.empty())
        throw ConfigError("scene: no sources defined");

    SimResult result;
    result.cube = SpectralImage::empty_like(detector);
    result.cube.seed = options.seed;
    result.cube.photons = options.n_photons;
    result.cube.scene_digest = scene.digest();
    if (options.class_images) {
        for (auto &img : result.class_images)
            img.assign(static_cast<std::size_t>(detector.n_x) * detector.n_y, 0);
    }

    const std::uint64_t n_batches = (options.n_photons + kBatchSize - 1) / kBatchSize;
    std::atomic<std::uint64_t> next{0};
    std::mutex merge_mutex;
    std::exception_ptr failure;
    // Per-batch weight sums, added in batch order so the total is worker-independent.
    std::vector<double> batch_weights(n_batches, 0.0);

    auto worker = [&] {
        BatchOutput out;
        for (;;) {
            const std::uint64_t b = next.fetch_add(1);
            if (b >= n_batches) return;
            const std::uint64_t first = b * kBatchSize;
            const std::uint64_t count = std::min(kBatchSize, options.n_photons - first);
            out.tallies = {};
            out.hits.clear();
            out.class_hits.clear();
            try {
                run_batch(b, count, options.seed, scene, mpo, detector, options.class_images, out);
            } catch (...) {
                std::lock_guard lock(merge_mutex);
                if (!failure) failure = std::current_exception();
                next.store(n_batches);
                return;
            }
            std::lock_guard lock(merge_mutex);
            batch_weights[b] = out.tallies.weight_sum;
            out.tallies.weight_sum = 0.0;
            result.tallies += out.tallies;
            for (auto idx : out.hits) ++result.cube.counts[idx];
            for (const auto &[pixel, cls] : out.class_hits)
                ++result.class_images[static_cast<int>(cls)][pixel];
        }
    };

    const unsigned n_threads = static_cast<unsigned>(
        std::min<std::uint64_t>(std::max(1u, options.n_workers), std::max<std::uint64_t>(1, n_batches)));
    if (n_threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(n_threads);
        for (unsigned i = 0; i < n_threads; ++i) pool.emplace_back(worker);
        for (auto &th : pool) th.join();
    }
    if (failure) std::rethrow_exception(failure);
    for (double w : batch_weights) result.tallies.weight_sum += w;
    return result;
}

} // namespace mpoxrf
