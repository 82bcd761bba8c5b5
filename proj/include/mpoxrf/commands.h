#pragma once

#include "mpoxrf/analysis.h"
#include "mpoxrf/config.h"
#include "mpoxrf/events.h"

#include <exception>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace mpoxrf {

// Process exit status of the command-line tool.
enum ExitCode : int {
    kExitOk = 0,
    kExitUsage = 1,
    kExitConfig = 2,
    kExitIo = 3,
    kExitAnalysis = 4,
    kExitInternal = 5,
};

class UsageError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

int exit_code_for(const std::exception &e);

// "lo:hi" in keV.
std::pair<double, double> parse_window(const std::string &text);
// "Ti:4.51,Fe:6.40,..."; an empty string gives LineSet::standard().
LineSet parse_line_set(const std::string &text);

// A SIC cube (energy-windowed when a window is given, otherwise summed over
// all bins) or an image CSV written by write_image_csv.
Image2D load_image(const std::string &path, std::optional<std::pair<double, double>> window,
                   double csv_pitch_um = 55.0);

struct PsfReport {
    PixelPoint center;
    PsfProfile horizontal, vertical;
    std::optional<double> fwhm_h_mm, fwhm_v_mm;
    std::optional<double> arm_extent_h_mm, arm_extent_v_mm;
};

// Centre, arm profiles, FWHM and arm extents. Missing FWHM or arm values are
// left empty; a missing peak throws AnalysisError.
PsfReport characterize_psf(const Image2D &image, const AnalysisSettings &settings);

struct CleanReport {
    Atf averaged;
    IdealizedPsf idealized;
    Resolution resolution;
    double raw_background = 0.0;   // mean over inputs, each scaled to unit peak
    double ideal_background = 0.0; // idealized image, unit peak
};

// gaussian_window about each PSF centre -> atf -> average_atf -> idealized_psf.
CleanReport clean_psfs(const std::vector<Image2D> &images, const AnalysisSettings &settings);

// n_x * n_y pixels with gain and offset drawn uniformly from the given ranges.
PixelResponse random_pixel_response(std::uint32_t n_x, std::uint32_t n_y, double gain_lo,
                                    double gain_hi, double offset_lo, double offset_hi,
                                    std::uint64_t seed);

struct SimulateArgs {
    std::string config;
    std::optional<std::uint64_t> photons;
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> jobs;
    std::string out;
    std::string class_prefix; // non-empty: per-class hit maps as CSV
};

struct FlatfieldArgs {
    std::string image;
    std::string flat;
    std::optional<std::pair<double, double>> window;
    std::string out_prefix;
};

struct WindowArgs {
    std::string cube;
    std::vector<std::pair<double, double>> windows;
    std::string out_prefix;
};

struct PsfArgs {
    std::string image;
    std::optional<std::pair<double, double>> window;
    std::string config; // optional: geometry and distances for the model extents
    std::optional<double> energy_kev;
    std::string out_prefix;
};

struct AtfArgs {
    std::string image;
    std::optional<std::pair<double, double>> window;
    std::string config;
    std::string out;
};

struct CleanArgs {
    std::vector<std::string> images;
    std::optional<std::pair<double, double>> window;
    std::string config;
    std::string out_prefix;
};

struct CalibrateArgs {
    std::vector<std::pair<std::string, std::string>> events; // element -> TPXE path
    std::string lines;
    std::string out;
};

struct ApplyCalArgs {
    std::string events;
    std::string cal;
    std::string config; // optional: detector energy binning
    std::string out;
};

struct SynthEventsArgs {
    double energy_kev = 8.05;
    std::uint32_t n_x = 64, n_y = 64;
    std::uint32_t per_pixel = 1000;
    double gain_lo = 0.04, gain_hi = 0.06;
    double offset_lo = 0.0, offset_hi = 0.0;
    double fwhm_kev = 1.12;
    std::uint64_t truth_seed = 7;
    std::uint64_t seed = 1;
    std::string out;
    std::string truth_out; // optional CSV of the true gains
};

// Each command writes its report to `out` and throws on failure.
void cmd_simulate(const SimulateArgs &args, std::ostream &out);
void cmd_flatfield(const FlatfieldArgs &args, std::ostream &out);
void cmd_window(const WindowArgs &args, std::ostream &out);
void cmd_psf(const PsfArgs &args, std::ostream &out);
void cmd_atf(const AtfArgs &args, std::ostream &out);
void cmd_clean(const CleanArgs &args, std::ostream &out);
void cmd_calibrate(const CalibrateArgs &args, std::ostream &out);
void cmd_apply_cal(const ApplyCalArgs &args, std::ostream &out);
void cmd_synth_events(const SynthEventsArgs &args, std::ostream &out);

} // namespace mpoxrf
