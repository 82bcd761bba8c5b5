#include "mpoxrf/analysis.h"

#include "mpoxrf/error.h"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <memory>
#include <mutex>
#include <numbers>
#include <stdexcept>

namespace mpoxrf {

namespace {

// The FFTW planner is not reentrant.
std::mutex &planner_mutex() {
    static std::mutex m;
    return m;
}

struct FftwFree {
    void operator()(fftw_complex *p) const { fftw_free(p); }
};
using FftwBuffer = std::unique_ptr<fftw_complex[], FftwFree>;

// Unnormalised 2-D DFT of a row-major n_y x n_x complex array, in place.
void dft2d(fftw_complex *data, std::uint32_t n_x, std::uint32_t n_y, int sign) {
    fftw_plan plan;
    {
        std::lock_guard lock(planner_mutex());
        plan = fftw_plan_dft_2d(static_cast<int>(n_y), static_cast<int>(n_x), data, data, sign,
                                FFTW_ESTIMATE);
    }
    fftw_execute(plan);
    std::lock_guard lock(planner_mutex());
    fftw_destroy_plan(plan);
}

FftwBuffer make_buffer(std::size_t n) {
    return FftwBuffer(static_cast<fftw_complex *>(fftw_malloc(sizeof(fftw_complex) * n)));
}

void require_same_size(const Image2D &a, const Image2D &b, const char *what) {
    if (a.n_x != b.n_x || a.n_y != b.n_y)
        throw AnalysisError(AnalysisError::Kind::DimensionMismatch,
                            std::string(what) + ": image sizes differ (" + std::to_string(a.n_x) +
                                "x" + std::to_string(a.n_y) + " vs " + std::to_string(b.n_x) + "x" +
                                std::to_string(b.n_y) + ")");
}

double median(std::vector<double> v) {
    if (v.empty()) return 0.0;
    const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
    std::nth_element(v.begin(), mid, v.end());
    if (v.size() % 2 == 1) return *mid;
    const double upper = *mid;
    const double lower = *std::max_element(v.begin(), mid);
    return 0.5 * (lower + upper);
}

double lerp_crossing(double x0, double v0, double x1, double v1, double level) {
    if (v1 == v0) return x0;
    return x0 + (level - v0) / (v1 - v0) * (x1 - x0);
}

} // namespace

double Image2D::max() const {
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < values.size(); ++i)
        if (valid(i)) m = std::max(m, values[i]);
    return m;
}

double Image2D::sum() const {
    double s = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i)
        if (valid(i)) s += values[i];
    return s;
}

double Atf::freq_x(std::uint32_t k) const {
    const double n = n_x;
    const double kk = k < (n_x + 1) / 2 ? static_cast<double>(k) : static_cast<double>(k) - n;
    return kk / (n * pitch_um / 1000.0);
}

double Atf::freq_y(std::uint32_t k) const {
    const double n = n_y;
    const double kk = k < (n_y + 1) / 2 ? static_cast<double>(k) : static_cast<double>(k) - n;
    return kk / (n * pitch_um / 1000.0);
}

Image2D flat_field_correct(const Image2D &image, const Image2D &flat) {
    require_same_size(image, flat, "flat_field_correct");
    double mean = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < flat.size(); ++i) {
        if (!flat.valid(i)) continue;
        mean += flat.values[i];
        ++n;
    }
    if (n == 0 || !(mean > 0.0))
        throw AnalysisError(AnalysisError::Kind::EmptyRegion, "flat_field_correct: flat field is empty");
    mean /= static_cast<double>(n);

    Image2D out(image.n_x, image.n_y, image.pitch_um);
    out.mask.assign(out.size(), 1);
    const double floor_level = 1e-3 * mean;
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (!image.valid(i) || !flat.valid(i) || flat.values[i] < floor_level) {
            out.mask[i] = 0;
            continue;
        }
        out.values[i] = image.values[i] / (flat.values[i] / mean);
    }
    return out;
}

WindowImage energy_window(const SpectralImage &cube, double e_lo_kev, double e_hi_kev) {
    if (!(e_lo_kev < e_hi_kev)) throw std::invalid_argument("energy_window: need e_lo < e_hi");
    WindowImage w;
    w.image = Image2D(cube.n_x, cube.n_y, cube.pixel_pitch_um);
    std::vector<std::uint32_t> bins;
    for (std::uint32_t b = 0; b < cube.n_bins; ++b) {
        const double c = cube.e_min_kev + (b + 0.5) * cube.e_bin_width_kev;
        if (c >= e_lo_kev && c < e_hi_kev) bins.push_back(b);
    }
    w.outside_range = bins.empty();
    for (std::uint32_t y = 0; y < cube.n_y; ++y) {
        for (std::uint32_t x = 0; x < cube.n_x; ++x) {
            std::uint64_t s = 0;
            for (auto b : bins) s += cube.at(x, y, b);
            w.image.at(x, y) = static_cast<double>(s);
        }
    }
    return w;
}

Image2D full_window(const SpectralImage &cube) {
    Image2D img(cube.n_x, cube.n_y, cube.pixel_pitch_um);
    for (std::uint32_t y = 0; y < cube.n_y; ++y)
        for (std::uint32_t x = 0; x < cube.n_x; ++x) {
            std::uint64_t s = 0;
            for (std::uint32_t b = 0; b < cube.n_bins; ++b) s += cube.at(x, y, b);
            img.at(x, y) = static_cast<double>(s);
        }
    return img;
}

PixelPoint find_psf_center(const Image2D &image) {
    const auto nx = static_cast<std::int64_t>(image.n_x);
    const auto ny = static_cast<std::int64_t>(image.n_y);
    auto raw = [&](std::int64_t x, std::int64_t y) {
        if (x < 0 || y < 0 || x >= nx || y >= ny) return 0.0;
        const std::size_t i = static_cast<std::size_t>(y * nx + x);
        return image.valid(i) ? image.values[i] : 0.0;
    };

    double best = 0.0;
    std::int64_t bx = -1, by = -1;
    for (std::int64_t y = 0; y < ny; ++y) {
        for (std::int64_t x = 0; x < nx; ++x) {
            double s = 0.0;
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) s += raw(x + dx, y + dy);
            s /= 9.0;
            if (s > best) {
                best = s;
                bx = x;
                by = y;
            }
        }
    }
    if (bx < 0) throw AnalysisError(AnalysisError::Kind::NoPeak, "find_psf_center: image has no positive peak");

    double w = 0.0, mx = 0.0, my = 0.0;
    for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
            const double v = std::max(0.0, raw(bx + dx, by + dy));
            w += v;
            mx += v * static_cast<double>(bx + dx);
            my += v * static_cast<double>(by + dy);
        }
    }
    if (!(w > 0.0)) return {static_cast<double>(bx), static_cast<double>(by)};
    return {mx / w, my / w};
}

std::pair<PsfProfile, PsfProfile> extract_arm_profiles(const Image2D &image, PixelPoint center) {
    const long cx = std::lround(center.x);
    const long cy = std::lround(center.y);
    if (cx < 1 || cy < 1 || cx + 1 >= static_cast<long>(image.n_x) ||
        cy + 1 >= static_cast<long>(image.n_y))
        throw AnalysisError(AnalysisError::Kind::EdgeTooClose,
                            "extract_arm_profiles: centre within one pixel of the image edge");
    const double pitch = image.pitch_mm();

    auto band_mean = [&](std::uint32_t along, bool horizontal) {
        double s = 0.0;
        int n = 0;
        for (long d = -1; d <= 1; ++d) {
            const std::uint32_t x = horizontal ? along : static_cast<std::uint32_t>(cx + d);
            const std::uint32_t y = horizontal ? static_cast<std::uint32_t>(cy + d) : along;
            const std::size_t i = static_cast<std::size_t>(y) * image.n_x + x;
            if (!image.valid(i)) continue;
            s += image.values[i];
            ++n;
        }
        return n ? s / n : 0.0;
    };

    PsfProfile h, v;
    h.axis = ProfileAxis::Horizontal;
    v.axis = ProfileAxis::Vertical;
    for (std::uint32_t x = 0; x < image.n_x; ++x) {
        h.positions_mm.push_back((static_cast<double>(x) - center.x) * pitch);
        h.intensities.push_back(band_mean(x, true));
    }
    for (std::uint32_t y = 0; y < image.n_y; ++y) {
        v.positions_mm.push_back((static_cast<double>(y) - center.y) * pitch);
        v.intensities.push_back(band_mean(y, false));
    }
    return {std::move(h), std::move(v)};
}

double profile_background(const PsfProfile &profile) {
    const auto &v = profile.intensities;
    const std::size_t k = std::max<std::size_t>(1, v.size() / 10);
    std::vector<double> outer;
    for (std::size_t i = 0; i < k && i < v.size(); ++i) outer.push_back(v[i]);
    for (std::size_t i = v.size() > k ? v.size() - k : 0; i < v.size(); ++i) outer.push_back(v[i]);
    return median(std::move(outer));
}

double fwhm(const PsfProfile &profile) {
    const auto &x = profile.positions_mm;
    const auto &v = profile.intensities;
    if (v.size() < 3) throw AnalysisError(AnalysisError::Kind::NoPeak, "fwhm: profile too short");
    const double bg = profile_background(profile);
    const std::size_t peak = static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
    if (!(v[peak] > bg)) throw AnalysisError(AnalysisError::Kind::NoPeak, "fwhm: no peak above background");

    double top = v[peak];
    if (peak > 0 && peak + 1 < v.size()) {
        const double a = v[peak - 1], c = v[peak + 1], curv = a - 2.0 * top + c;
        if (curv < 0.0) top -= (c - a) * (c - a) / (8.0 * curv);
    }
    const double half = bg + 0.5 * (top - bg);

    // Crossing between samples lo and lo + 1.
    auto crossing = [&](std::size_t lo) {
        const double linear = lerp_crossing(x[lo], v[lo], x[lo + 1], v[lo + 1], half);
        if (lo == 0 || lo + 2 >= v.size()) return linear;
        const double xs[4] = {x[lo - 1], x[lo], x[lo + 1], x[lo + 2]};
        const double vs[4] = {v[lo - 1], v[lo], v[lo + 1], v[lo + 2]};
        auto cubic = [&](double t) {
            double s = 0.0;
            for (int j = 0; j < 4; ++j) {
                double l = vs[j];
                for (int k = 0; k < 4; ++k)
                    if (k != j) l *= (t - xs[k]) / (xs[j] - xs[k]);
                s += l;
            }
            return s - half;
        };
        double a = xs[1], b = xs[2], fa = cubic(a);
        if (fa * cubic(b) > 0.0) return linear;
        for (int it = 0; it < 100 && b - a > 1e-12 * (1.0 + std::abs(a)); ++it) {
            const double m = 0.5 * (a + b), fm = cubic(m);
            if ((fm < 0.0) == (fa < 0.0)) {
                a = m;
                fa = fm;
            } else {
                b = m;
            }
        }
        return 0.5 * (a + b);
    };

    std::optional<double> left, right;
    for (std::size_t i = peak; i-- > 0;) {
        if (v[i] < half) {
            left = crossing(i);
            break;
        }
    }
    for (std::size_t i = peak + 1; i < v.size(); ++i) {
        if (v[i] < half) {
            right = crossing(i - 1);
            break;
        }
    }
    if (!left || !right)
        throw AnalysisError(AnalysisError::Kind::OneSided, "fwhm: half-maximum crossing missing on one side");
    return *right - *left;
}

double arm_extent(const PsfProfile &profile, double central_exclusion_mm, double fraction) {
    const auto &x = profile.positions_mm;
    const auto &v = profile.intensities;
    const double bg = profile_background(profile);

    auto side = [&](bool positive) {
        double peak = 0.0;
        for (std::size_t i = 0; i < v.size(); ++i) {
            const bool on_side = positive ? x[i] >= central_exclusion_mm : x[i] <= -central_exclusion_mm;
            if (on_side) peak = std::max(peak, v[i] - bg);
        }
        if (!(peak > 0.0))
            throw AnalysisError(AnalysisError::Kind::NoPeak, "arm_extent: no arm signal on one side");
        const double level = fraction * peak;
        if (positive) {
            for (std::size_t i = v.size(); i-- > 0;) {
                if (x[i] < central_exclusion_mm) break;
                if (v[i] - bg >= level) {
                    if (i + 1 == v.size()) return x[i];
                    return lerp_crossing(x[i], v[i] - bg, x[i + 1], v[i + 1] - bg, level);
                }
            }
        } else {
            for (std::size_t i = 0; i < v.size(); ++i) {
                if (x[i] > -central_exclusion_mm) break;
                if (v[i] - bg >= level) {
                    if (i == 0) return -x[i];
                    return -lerp_crossing(x[i - 1], v[i - 1] - bg, x[i], v[i] - bg, level);
                }
            }
        }
        return central_exclusion_mm;
    };
    return 0.5 * (side(true) + side(false));
}

double expected_arm_half_length(double energy_kev, const Material &coating, double ls_mm,
                                double li_mm) {
    const double theta = critical_angle_deg(energy_kev, coating) * std::numbers::pi / 180.0;
    return std::tan(theta) * (ls_mm + li_mm);
}

double expected_direct_half_width(const MpoGeometry &geometry, double ls_mm, double li_mm) {
    return geometry.pore_width_um / (geometry.thickness_mm * 1000.0) * (ls_mm + li_mm);
}

Image2D gaussian_window(const Image2D &image, double sigma_mm, PixelPoint center) {
    if (!(sigma_mm > 0.0)) throw std::invalid_argument("gaussian_window: sigma must be > 0");
    Image2D out = image;
    const double p = image.pitch_mm();
    const double inv = 1.0 / (2.0 * sigma_mm * sigma_mm);
    for (std::uint32_t y = 0; y < image.n_y; ++y) {
        const double dy = (static_cast<double>(y) - center.y) * p;
        for (std::uint32_t x = 0; x < image.n_x; ++x) {
            const double dx = (static_cast<double>(x) - center.x) * p;
            out.at(x, y) *= std::exp(-(dx * dx + dy * dy) * inv);
        }
    }
    return out;
}

Atf atf(const Image2D &image) {
    const std::size_t n = image.size();
    auto buf = make_buffer(n);
    for (std::size_t i = 0; i < n; ++i) {
        buf[i][0] = image.valid(i) ? image.values[i] : 0.0;
        buf[i][1] = 0.0;
    }
    dft2d(buf.get(), image.n_x, image.n_y, FFTW_FORWARD);
    Atf a;
    a.n_x = image.n_x;
    a.n_y = image.n_y;
    a.pitch_um = image.pitch_um;
    a.amplitude.resize(n);
    for (std::size_t i = 0; i < n; ++i) a.amplitude[i] = std::hypot(buf[i][0], buf[i][1]);
    return a;
}

Atf average_atf(std::span<const Atf> atfs) {
    if (atfs.empty()) throw std::invalid_argument("average_atf: nothing to average");
    Atf out = atfs.front();
    out.source_count = 0;
    std::fill(out.amplitude.begin(), out.amplitude.end(), 0.0);
    for (const auto &a : atfs) {
        if (a.n_x != out.n_x || a.n_y != out.n_y)
            throw AnalysisError(AnalysisError::Kind::DimensionMismatch, "average_atf: ATF sizes differ");
        for (std::size_t i = 0; i < out.amplitude.size(); ++i) out.amplitude[i] += a.amplitude[i];
        out.source_count += a.source_count;
    }
    const double k = static_cast<double>(atfs.size());
    for (auto &v : out.amplitude) v /= k;
    return out;
}

IdealizedPsf idealized_psf(const Atf &a) {
    const std::size_t n = a.amplitude.size();
    auto buf = make_buffer(n);
    for (std::size_t i = 0; i < n; ++i) {
        buf[i][0] = a.amplitude[i];
        buf[i][1] = 0.0;
    }
    dft2d(buf.get(), a.n_x, a.n_y, FFTW_BACKWARD);

    IdealizedPsf out;
    out.image = Image2D(a.n_x, a.n_y, a.pitch_um);
    const double scale = 1.0 / static_cast<double>(n);
    for (std::uint32_t y = 0; y < a.n_y; ++y) {
        const std::uint32_t sy = (y + a.n_y / 2) % a.n_y;
        for (std::uint32_t x = 0; x < a.n_x; ++x) {
            const std::uint32_t sx = (x + a.n_x / 2) % a.n_x;
            out.image.at(sx, sy) = buf[static_cast<std::size_t>(y) * a.n_x + x][0] * scale;
        }
    }
    out.peak = out.image.max();
    if (!(out.peak > 0.0))
        throw AnalysisError(AnalysisError::Kind::NoPeak, "idealized_psf: amplitude spectrum is empty");
    for (auto &v : out.image.values) v /= out.peak;
    return out;
}

std::vector<double> radial_profile(const Atf &a, double *bin_width) {
    const double p = a.pitch_um / 1000.0;
    const double df = std::min(1.0 / (a.n_x * p), 1.0 / (a.n_y * p));
    const double nyquist = 0.5 / p;
    const std::size_t n_bins = static_cast<std::size_t>(std::floor(nyquist / df)) + 1;
    std::vector<double> sum(n_bins, 0.0);
    std::vector<std::size_t> count(n_bins, 0);
    for (std::uint32_t ky = 0; ky < a.n_y; ++ky) {
        const double fy = a.freq_y(ky);
        for (std::uint32_t kx = 0; kx < a.n_x; ++kx) {
            const double fx = a.freq_x(kx);
            const auto bin = static_cast<std::size_t>(std::lround(std::hypot(fx, fy) / df));
            if (bin >= n_bins) continue;
            sum[bin] += a.at(kx, ky);
            ++count[bin];
        }
    }
    for (std::size_t i = 0; i < n_bins; ++i) sum[i] = count[i] ? sum[i] / static_cast<double>(count[i]) : 0.0;
    if (bin_width) *bin_width = df;
    return sum;
}

Resolution resolution_lp_per_mm(const Atf &a, double threshold) {
    if (!(threshold > 0.0 && threshold < 1.0))
        throw std::invalid_argument("resolution_lp_per_mm: threshold must lie in (0, 1)");
    Resolution r;
    r.threshold = threshold;
    double df = 0.0;
    const auto radial = radial_profile(a, &df);
    const double level = threshold * a.dc();
    for (std::size_t k = 1; k + 1 < radial.size(); ++k) {
        if (radial[k] < level && radial[k + 1] < level) {
            r.lp_per_mm = lerp_crossing(static_cast<double>(k - 1) * df, radial[k - 1],
                                        static_cast<double>(k) * df, radial[k], level);
            break;
        }
    }
    return r;
}

double background_level(const Image2D &image, double exclusion_radius_mm, PixelPoint center,
                        double arm_band_half_width_mm) {
    const double p = image.pitch_mm();
    if (exclusion_radius_mm >= 0.5 * std::min(image.n_x, image.n_y) * p)
        throw AnalysisError(AnalysisError::Kind::EmptyRegion,
                            "background_level: exclusion radius exceeds half the image");
    double sum = 0.0;
    std::size_t n = 0;
    const double r2 = exclusion_radius_mm * exclusion_radius_mm;
    for (std::uint32_t y = 0; y < image.n_y; ++y) {
        const double dy = (static_cast<double>(y) - center.y) * p;
        for (std::uint32_t x = 0; x < image.n_x; ++x) {
            const double dx = (static_cast<double>(x) - center.x) * p;
            const std::size_t i = static_cast<std::size_t>(y) * image.n_x + x;
            if (!image.valid(i)) continue;
            if (dx * dx + dy * dy <= r2) continue;
            if (arm_band_half_width_mm > 0.0 &&
                (std::abs(dx) <= arm_band_half_width_mm || std::abs(dy) <= arm_band_half_width_mm))
                continue;
            sum += image.values[i];
            ++n;
        }
    }
    if (n == 0) throw AnalysisError(AnalysisError::Kind::EmptyRegion, "background_level: no pixels left");
    return sum / static_cast<double>(n);
}

} // namespace mpoxrf
