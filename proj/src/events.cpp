#include "mpoxrf/events.h"

#include "mpoxrf/error.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <iterator>
#include <limits>
#include <ostream>
#include <sstream>

namespace mpoxrf {

namespace {

template <typename T> void put_le(std::vector<std::byte> &out, T value) {
    for (std::size_t i = 0; i < sizeof(T); ++i)
        out.push_back(static_cast<std::byte>((static_cast<std::uint64_t>(value) >> (8 * i)) & 0xff));
}

template <typename T> T get_le(const std::byte *p) {
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= std::to_integer<std::uint64_t>(p[i]) << (8 * i);
    return static_cast<T>(v);
}

} // namespace

std::vector<std::byte> encode_events(const EventStream &stream) {
    std::vector<std::byte> out;
    out.reserve(kTpxeHeaderSize + kTpxeRecordSize * stream.events.size());
    for (char c : {'T', 'P', 'X', 'E'}) out.push_back(static_cast<std::byte>(c));
    put_le<std::uint32_t>(out, kTpxeVersion);
    put_le<std::uint32_t>(out, stream.n_x);
    put_le<std::uint32_t>(out, stream.n_y);
    put_le<std::uint64_t>(out, stream.events.size());
    for (const auto &e : stream.events) {
        put_le<std::uint16_t>(out, e.x);
        put_le<std::uint16_t>(out, e.y);
        put_le<std::uint16_t>(out, e.tot);
        put_le<std::uint16_t>(out, 0);
        put_le<std::uint64_t>(out, e.toa);
    }
    return out;
}

EventStream parse_events(std::span<const std::byte> bytes) {
    using K = ParseError::Kind;
    if (bytes.size() < 4) throw ParseError(K::Truncated, bytes.size(), "TPXE: stream shorter than magic");
    if (!(bytes[0] == std::byte{'T'} && bytes[1] == std::byte{'P'} && bytes[2] == std::byte{'X'} &&
          bytes[3] == std::byte{'E'}))
        throw ParseError(K::BadMagic, 0, "TPXE: bad magic");
    if (bytes.size() < kTpxeHeaderSize)
        throw ParseError(K::Truncated, bytes.size(), "TPXE: truncated header");
    const auto version = get_le<std::uint32_t>(bytes.data() + 4);
    if (version != kTpxeVersion)
        throw ParseError(K::VersionMismatch, 4, "TPXE: unsupported version " + std::to_string(version));

    EventStream s;
    s.n_x = get_le<std::uint32_t>(bytes.data() + 8);
    s.n_y = get_le<std::uint32_t>(bytes.data() + 12);
    const auto count = get_le<std::uint64_t>(bytes.data() + 16);
    const std::uint64_t available = (bytes.size() - kTpxeHeaderSize) / kTpxeRecordSize;
    if (count > available) {
        const std::uint64_t bad = kTpxeHeaderSize + available * kTpxeRecordSize;
        throw ParseError(K::Truncated, bad,
                         "TPXE: truncated in record " + std::to_string(available) + " of " +
                             std::to_string(count));
    }
    if (bytes.size() != kTpxeHeaderSize + count * kTpxeRecordSize)
        throw ParseError(K::BadLength, kTpxeHeaderSize + count * kTpxeRecordSize,
                         "TPXE: trailing bytes after last record");

    s.events.resize(count);
    for (std::uint64_t i = 0; i < count; ++i) {
        const std::uint64_t off = kTpxeHeaderSize + i * kTpxeRecordSize;
        const std::byte *p = bytes.data() + off;
        PixelEvent &e = s.events[i];
        e.x = get_le<std::uint16_t>(p);
        e.y = get_le<std::uint16_t>(p + 2);
        e.tot = get_le<std::uint16_t>(p + 4);
        e.toa = get_le<std::uint64_t>(p + 8);
        if (e.x >= s.n_x || e.y >= s.n_y)
            throw ParseError(K::PixelOutOfRange, off,
                             "TPXE: pixel (" + std::to_string(e.x) + ", " + std::to_string(e.y) +
                                 ") outside " + std::to_string(s.n_x) + "x" + std::to_string(s.n_y));
    }
    return s;
}

void write_events(const std::string &path, const EventStream &stream) {
    const auto bytes = encode_events(stream);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path + " for writing");
    f.write(reinterpret_cast<const char *>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw IoError("write failed: " + path);
}

EventStream read_events(const std::string &path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path);
    std::vector<char> raw((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return parse_events(std::as_bytes(std::span(raw)));
}

void LineSet::validate() const {
    if (lines.size() < 2) throw ConfigError("line set needs at least two lines");
    for (std::size_t i = 1; i < lines.size(); ++i)
        if (!(lines[i].energy_kev > lines[i - 1].energy_kev))
            throw ConfigError("line energies must be strictly increasing");
}

LineSet LineSet::standard() {
    return {{{"Ti", 4.51}, {"Fe", 6.40}, {"Cu", 8.05}, {"Zr", 15.78}, {"Ag", 22.16}}};
}

std::vector<PixelEvent> synthesize_line_events(double line_kev, const PixelResponse &truth,
                                               std::uint32_t n_per_pixel, double fwhm_kev,
                                               Rng &rng, std::uint32_t row_begin,
                                               std::uint32_t row_end, std::uint64_t toa_start) {
    row_end = std::min(row_end, truth.n_y);
    std::vector<PixelEvent> out;
    if (row_begin >= row_end) return out;
    out.reserve(static_cast<std::size_t>(row_end - row_begin) * truth.n_x * n_per_pixel);
    std::uint64_t toa = toa_start;
    for (std::uint32_t y = row_begin; y < row_end; ++y) {
        for (std::uint32_t x = 0; x < truth.n_x; ++x) {
            const std::size_t p = static_cast<std::size_t>(y) * truth.n_x + x;
            const double a = truth.gain[p];
            const double b = truth.offset[p];
            for (std::uint32_t k = 0; k < n_per_pixel; ++k) {
                const double e = smear_energy(line_kev, fwhm_kev, rng);
                const double tot = std::round((e - b) / a);
                ++toa;
                if (!(tot >= 1.0 && tot <= 65535.0)) continue;
                out.push_back({static_cast<std::uint16_t>(x), static_cast<std::uint16_t>(y),
                               static_cast<std::uint16_t>(tot), toa});
            }
        }
    }
    return out;
}

std::optional<double> find_line_peak(std::span<const std::uint64_t> histogram) {
    if (histogram.empty()) return std::nullopt;
    const auto max_it = std::max_element(histogram.begin(), histogram.end());
    if (*max_it == 0) return std::nullopt;
    const std::size_t peak = static_cast<std::size_t>(max_it - histogram.begin());
    const double half = 0.5 * static_cast<double>(*max_it);
    std::size_t lo = peak, hi = peak;
    while (lo > 0 && static_cast<double>(histogram[lo - 1]) >= half) --lo;
    while (hi + 1 < histogram.size() && static_cast<double>(histogram[hi + 1]) >= half) ++hi;
    double sum = 0.0, moment = 0.0;
    for (std::size_t i = lo; i <= hi; ++i) {
        sum += static_cast<double>(histogram[i]);
        moment += static_cast<double>(histogram[i]) * static_cast<double>(i);
    }
    return moment / sum;
}

std::vector<std::optional<double>> pixel_peaks(const EventStream &stream) {
    const std::size_t n_pixels = static_cast<std::size_t>(stream.n_x) * stream.n_y;
    // Group ToT values by pixel with a counting sort.
    std::vector<std::size_t> start(n_pixels + 1, 0);
    for (const auto &e : stream.events) ++start[static_cast<std::size_t>(e.y) * stream.n_x + e.x + 1];
    for (std::size_t i = 0; i < n_pixels; ++i) start[i + 1] += start[i];
    std::vector<std::uint16_t> tots(stream.events.size());
    {
        std::vector<std::size_t> fill(start.begin(), start.end() - 1);
        for (const auto &e : stream.events)
            tots[fill[static_cast<std::size_t>(e.y) * stream.n_x + e.x]++] = e.tot;
    }

    std::vector<std::optional<double>> peaks(n_pixels);
    std::vector<std::uint64_t> hist;
    for (std::size_t p = 0; p < n_pixels; ++p) {
        if (start[p] == start[p + 1]) continue;
        const auto first = tots.begin() + static_cast<std::ptrdiff_t>(start[p]);
        const auto last = tots.begin() + static_cast<std::ptrdiff_t>(start[p + 1]);
        const std::uint16_t max_tot = *std::max_element(first, last);
        hist.assign(static_cast<std::size_t>(max_tot) + 1, 0);
        for (auto it = first; it != last; ++it) ++hist[*it];
        peaks[p] = find_line_peak(hist);
    }
    return peaks;
}

std::size_t CalibrationMap::dead_count() const {
    return static_cast<std::size_t>(
        std::count_if(pixels.begin(), pixels.end(), [](const PixelCalibration &p) { return p.dead; }));
}

CalibrationMap fit_calibration(const LineSet &lines,
                               const std::vector<std::vector<std::optional<double>>> &peaks,
                               std::uint32_t n_x, std::uint32_t n_y) {
    lines.validate();
    if (peaks.size() != lines.lines.size())
        throw ConfigError("fit_calibration: one peak table per line required");
    const std::size_t n_pixels = static_cast<std::size_t>(n_x) * n_y;
    for (const auto &table : peaks)
        if (table.size() != n_pixels) throw ConfigError("fit_calibration: peak table size mismatch");

    CalibrationMap map;
    map.n_x = n_x;
    map.n_y = n_y;
    map.pixels.resize(n_pixels);
    std::vector<double> tot, energy;
    for (std::size_t p = 0; p < n_pixels; ++p) {
        tot.clear();
        energy.clear();
        for (std::size_t l = 0; l < lines.lines.size(); ++l) {
            if (peaks[l][p]) {
                tot.push_back(*peaks[l][p]);
                energy.push_back(lines.lines[l].energy_kev);
            }
        }
        PixelCalibration &out = map.pixels[p];
        out = {};
        if (tot.size() < 2) continue;
        const double n = static_cast<double>(tot.size());
        double mt = 0.0, me = 0.0;
        for (std::size_t i = 0; i < tot.size(); ++i) {
            mt += tot[i];
            me += energy[i];
        }
        mt /= n;
        me /= n;
        double sxx = 0.0, sxy = 0.0;
        for (std::size_t i = 0; i < tot.size(); ++i) {
            sxx += (tot[i] - mt) * (tot[i] - mt);
            sxy += (tot[i] - mt) * (energy[i] - me);
        }
        if (!(sxx > 1e-12 * (1.0 + mt * mt))) continue; // all peaks at one ToT
        const double a = sxy / sxx;
        if (!(a > 0.0)) continue;
        const double b = me - a * mt;
        double ss = 0.0;
        for (std::size_t i = 0; i < tot.size(); ++i) {
            const double r = energy[i] - (a * tot[i] + b);
            ss += r * r;
        }
        out.gain = a;
        out.offset = b;
        out.residual = std::sqrt(ss / n);
        out.dead = false;
    }
    return map;
}

void write_calibration_csv(std::ostream &out, const CalibrationMap &map) {
    out << "x,y,gain,offset,residual,dead\n";
    out << std::setprecision(17);
    for (std::uint32_t y = 0; y < map.n_y; ++y) {
        for (std::uint32_t x = 0; x < map.n_x; ++x) {
            const auto &p = map.at(x, y);
            out << x << ',' << y << ',';
            if (p.dead)
                out << "nan,nan,nan,1\n";
            else
                out << p.gain << ',' << p.offset << ',' << p.residual << ",0\n";
        }
    }
}

CalibrationMap read_calibration_csv(std::istream &in) {
    std::string line;
    if (!std::getline(in, line) || line != "x,y,gain,offset,residual,dead")
        throw IoError("calibration CSV: missing header x,y,gain,offset,residual,dead");
    struct Row {
        std::uint32_t x, y;
        PixelCalibration cal;
    };
    std::vector<Row> rows;
    std::uint32_t max_x = 0, max_y = 0;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::replace(line.begin(), line.end(), ',', ' ');
        std::istringstream ss(line);
        Row r{};
        std::string g, o, res;
        int dead = 0;
        if (!(ss >> r.x >> r.y >> g >> o >> res >> dead))
            throw IoError("calibration CSV: malformed line " + std::to_string(line_no));
        r.cal.dead = dead != 0;
        if (!r.cal.dead) {
            r.cal.gain = std::stod(g);
            r.cal.offset = std::stod(o);
            r.cal.residual = std::stod(res);
        }
        max_x = std::max(max_x, r.x);
        max_y = std::max(max_y, r.y);
        rows.push_back(r);
    }
    CalibrationMap map;
    if (rows.empty()) return map;
    map.n_x = max_x + 1;
    map.n_y = max_y + 1;
    map.pixels.assign(static_cast<std::size_t>(map.n_x) * map.n_y, PixelCalibration{});
    for (const auto &r : rows) map.pixels[static_cast<std::size_t>(r.y) * map.n_x + r.x] = r.cal;
    return map;
}

SpectralImage apply_calibration(const EventStream &stream, const CalibrationMap &map,
                                const DetectorSpec &binning) {
    if (stream.n_x != map.n_x || stream.n_y != map.n_y)
        throw ConfigError("apply_calibration: calibration map is " + std::to_string(map.n_x) + "x" +
                          std::to_string(map.n_y) + ", events are " + std::to_string(stream.n_x) +
                          "x" + std::to_string(stream.n_y));
    DetectorSpec det = binning;
    det.n_x = stream.n_x;
    det.n_y = stream.n_y;
    SpectralImage cube = SpectralImage::empty_like(det);
    cube.photons = stream.events.size();
    for (const auto &e : stream.events) {
        const auto &cal = map.at(e.x, e.y);
        if (cal.dead) {
            ++cube.dropped;
            continue;
        }
        const std::int64_t bin = det.energy_bin(cal.gain * e.tot + cal.offset);
        if (bin < 0) {
            ++cube.out_of_range;
            continue;
        }
        ++cube.at(e.x, e.y, static_cast<std::uint32_t>(bin));
    }
    return cube;
}

} // namespace mpoxrf
