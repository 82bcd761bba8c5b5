#pragma once

#include "mpoxrf/sim.h"

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace mpoxrf {

struct PixelEvent {
    std::uint16_t x = 0;
    std::uint16_t y = 0;
    std::uint16_t tot = 0; // time over threshold, detector units
    std::uint64_t toa = 0; // time of arrival, ticks
    bool operator==(const PixelEvent &) const = default;
};

struct EventStream {
    std::uint32_t n_x = 256;
    std::uint32_t n_y = 256;
    std::vector<PixelEvent> events;
    bool operator==(const EventStream &) const = default;
};

/*
 * TPXE event files, all little-endian:
 *
 *   offset  size  field
 *   0       4     magic "TPXE"
 *   4       4     u32 version (= 1)
 *   8       4     u32 n_x
 *   12      4     u32 n_y
 *   16      8     u64 record count
 *   24      16*n  records: u16 x, u16 y, u16 tot, u16 reserved (0), u64 toa
 */
inline constexpr std::uint32_t kTpxeVersion = 1;
inline constexpr std::size_t kTpxeHeaderSize = 24;
inline constexpr std::size_t kTpxeRecordSize = 16;

std::vector<std::byte> encode_events(const EventStream &stream);
// Throws ParseError naming the failing byte offset.
EventStream parse_events(std::span<const std::byte> bytes);

void write_events(const std::string &path, const EventStream &stream);
EventStream read_events(const std::string &path);

// Calibration fluorescence line.
struct CalibrationLine {
    std::string element;
    double energy_kev = 0.0;
};

// Lines in strictly increasing energy, at least two.
struct LineSet {
    std::vector<CalibrationLine> lines;

    void validate() const;
    // Ti, Fe, Cu, Zr, Ag K-alpha.
    static LineSet standard();
};

// True per-pixel response E = gain * ToT + offset, row-major n_x * n_y.
struct PixelResponse {
    std::uint32_t n_x = 0, n_y = 0;
    std::vector<double> gain;
    std::vector<double> offset;
};

// n_per_pixel events per pixel in rows [row_begin, row_end) with ToT =
// round((E_measured - offset) / gain). Events whose ToT would fall outside
// [1, 65535] are not emitted. toa counts up from toa_start.
std::vector<PixelEvent> synthesize_line_events(double line_kev, const PixelResponse &truth,
                                               std::uint32_t n_per_pixel, double fwhm_kev,
                                               Rng &rng, std::uint32_t row_begin = 0,
                                               std::uint32_t row_end = UINT32_MAX,
                                               std::uint64_t toa_start = 0);

// Centroid of the connected run of bins at or above half the maximum that
// contains the (first) maximum. nullopt for an empty histogram.
std::optional<double> find_line_peak(std::span<const std::uint64_t> histogram);

// Per-pixel ToT histogram peaks for one event stream, row-major.
std::vector<std::optional<double>> pixel_peaks(const EventStream &stream);

struct PixelCalibration {
    double gain = 0.0;     // keV per ToT unit
    double offset = 0.0;   // keV
    double residual = 0.0; // fit RMS, keV
    bool dead = true;
};

struct CalibrationMap {
    std::uint32_t n_x = 0, n_y = 0;
    std::vector<PixelCalibration> pixels; // row-major

    const PixelCalibration &at(std::uint32_t x, std::uint32_t y) const {
        return pixels[static_cast<std::size_t>(y) * n_x + x];
    }
    std::size_t dead_count() const;
};

// peaks[line][pixel]: peak ToT of each calibration line, nullopt when not
// found. Pixels with fewer than two peaks or a singular fit are marked dead.
CalibrationMap fit_calibration(const LineSet &lines,
                               const std::vector<std::vector<std::optional<double>>> &peaks,
                               std::uint32_t n_x, std::uint32_t n_y);

// CSV with header x,y,gain,offset,residual,dead. Dead pixels write nan.
void write_calibration_csv(std::ostream &out, const CalibrationMap &map);
CalibrationMap read_calibration_csv(std::istream &in);

// Histogram calibrated events into a cube with the detector binning. Events
// on dead pixels are counted in SpectralImage::dropped, events outside the
// energy range in SpectralImage::out_of_range.
SpectralImage apply_calibration(const EventStream &stream, const CalibrationMap &map,
                                const DetectorSpec &binning);

} // namespace mpoxrf
