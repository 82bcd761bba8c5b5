#pragma once

#include "mpoxrf/optics.h"
#include "mpoxrf/sim.h"

#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

namespace mpoxrf {

// Real-valued image. Pixel (x, y) is stored at y * n_x + x. An empty mask
// means every pixel is valid; otherwise mask[i] == 0 marks an invalid pixel.
struct Image2D {
    std::uint32_t n_x = 0, n_y = 0;
    double pitch_um = 55.0;
    std::vector<double> values;
    std::vector<std::uint8_t> mask;

    Image2D() = default;
    Image2D(std::uint32_t nx, std::uint32_t ny, double pitch, double fill = 0.0)
        : n_x(nx), n_y(ny), pitch_um(pitch),
          values(static_cast<std::size_t>(nx) * ny, fill) {}

    double pitch_mm() const { return pitch_um / 1000.0; }
    std::size_t size() const { return values.size(); }
    double &at(std::uint32_t x, std::uint32_t y) { return values[static_cast<std::size_t>(y) * n_x + x]; }
    double at(std::uint32_t x, std::uint32_t y) const {
        return values[static_cast<std::size_t>(y) * n_x + x];
    }
    bool valid(std::size_t i) const { return mask.empty() || mask[i] != 0; }
    double max() const;
    double sum() const;
};

// Sub-pixel position in pixel-index coordinates (pixel i spans [i-0.5, i+0.5]).
struct PixelPoint {
    double x = 0.0;
    double y = 0.0;
};

enum class ProfileAxis { Horizontal, Vertical };

struct PsfProfile {
    ProfileAxis axis = ProfileAxis::Horizontal;
    std::vector<double> positions_mm; // relative to the PSF centre, increasing
    std::vector<double> intensities;
    int rows_averaged = 3;
};

/*
 * Amplitude transfer function: |DFT| of an image with the phase discarded.
 * Stored in FFT order, so the DC term sits at index (0, 0) and index k along
 * an axis of length n maps to frequency k/(n*pitch) for k < n/2 and
 * (k-n)/(n*pitch) otherwise, in line pairs per mm.
 */
struct Atf {
    std::uint32_t n_x = 0, n_y = 0;
    double pitch_um = 55.0;
    std::vector<double> amplitude;
    std::uint32_t source_count = 1;

    double dc() const { return amplitude.empty() ? 0.0 : amplitude[0]; }
    double freq_x(std::uint32_t k) const;
    double freq_y(std::uint32_t k) const;
    double at(std::uint32_t kx, std::uint32_t ky) const {
        return amplitude[static_cast<std::size_t>(ky) * n_x + kx];
    }
};

// out = image / (flat / mean(flat)). Pixels where flat < 1e-3 * mean(flat)
// are set to 0 and masked. Throws AnalysisError on a size mismatch.
Image2D flat_field_correct(const Image2D &image, const Image2D &flat);

struct WindowImage {
    Image2D image;
    bool outside_range = false; // no bin centre fell inside the window
};

// Sum of bins whose centres lie in [e_lo, e_hi).
WindowImage energy_window(const SpectralImage &cube, double e_lo_kev, double e_hi_kev);
Image2D full_window(const SpectralImage &cube);

// Global maximum of the 3x3 box-smoothed image (ties: lowest y, then x),
// refined by the intensity centroid of the raw 3x3 neighbourhood.
PixelPoint find_psf_center(const Image2D &image);

// Mean of the three rows (columns) nearest the centre, positions in mm
// relative to the centre.
std::pair<PsfProfile, PsfProfile> extract_arm_profiles(const Image2D &image, PixelPoint center);

// Median of the outer 20 % of samples (10 % per side) used as the profile baseline.
double profile_background(const PsfProfile &profile);

// Full width at half maximum above the baseline. The maximum is refined by a
// parabola through the top three samples and the crossings nearest the peak
// by cubic interpolation through four samples.
double fwhm(const PsfProfile &profile);

// Reach of a cross arm: for each side, the outermost position where the
// baseline-subtracted profile is still at or above `fraction` of that side's
// arm peak (the maximum beyond `central_exclusion_mm`). Returns the mean over
// both sides. Throws AnalysisError when either side has no arm signal.
double arm_extent(const PsfProfile &profile, double central_exclusion_mm, double fraction = 0.1);

// tan(theta_c(E)) * (L_s + L_i): furthest landing offset of photons that keep
// their direction after an even number (>= 2) of bounces.
double expected_arm_half_length(double energy_kev, const Material &coating, double ls_mm,
                                double li_mm);

// (w / t) * (L_s + L_i): furthest landing offset of unreflected photons.
double expected_direct_half_width(const MpoGeometry &geometry, double ls_mm, double li_mm);

// Multiply by exp(-r^2 / 2 sigma^2) about center.
Image2D gaussian_window(const Image2D &image, double sigma_mm, PixelPoint center);

Atf atf(const Image2D &image);
Atf average_atf(std::span<const Atf> atfs);

struct IdealizedPsf {
    Image2D image; // unit peak, centred at (n_x/2, n_y/2)
    double peak = 0.0; // peak of the unnormalised inverse transform
};

// Inverse DFT of the amplitude spectrum with zero phase, shifted so the
// origin lands at (n_x/2, n_y/2), real part, scaled to unit peak. The
// unnormalised image is image * peak.
IdealizedPsf idealized_psf(const Atf &atf);

struct Resolution {
    std::optional<double> lp_per_mm; // nullopt: above threshold up to Nyquist
    double threshold = 0.1;
};

// Radially averaged amplitude (bins of 1/(n*pitch)) relative to DC. Reports the
// interpolated frequency where it first drops below threshold and the next
// bin stays below.
Resolution resolution_lp_per_mm(const Atf &atf, double threshold = 0.1);
std::vector<double> radial_profile(const Atf &atf, double *bin_width_lp_per_mm = nullptr);

// Mean over valid pixels outside the exclusion disc and outside the two cross
// bands of half-width arm_band_half_width_mm through the centre.
double background_level(const Image2D &image, double exclusion_radius_mm, PixelPoint center,
                        double arm_band_half_width_mm = 0.0);

} // namespace mpoxrf
