#include "mpoxrf/image_io.h"

#include "mpoxrf/error.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

namespace mpoxrf {

namespace {

double percentile(std::vector<double> sorted, double q) {
    if (sorted.empty()) return 0.0;
    std::sort(sorted.begin(), sorted.end());
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto i = static_cast<std::size_t>(std::floor(pos));
    const std::size_t j = std::min(i + 1, sorted.size() - 1);
    return sorted[i] + (pos - static_cast<double>(i)) * (sorted[j] - sorted[i]);
}

} // namespace

void write_pgm(std::ostream &out, const Image2D &image) {
    std::vector<double> valid;
    valid.reserve(image.size());
    for (std::size_t i = 0; i < image.size(); ++i)
        if (image.valid(i)) valid.push_back(image.values[i]);
    double lo = percentile(valid, 0.01);
    double hi = percentile(valid, 0.99);
    if (!(hi > lo)) {
        // Sparse images: fall back to the full range.
        if (!valid.empty()) {
            lo = *std::min_element(valid.begin(), valid.end());
            hi = *std::max_element(valid.begin(), valid.end());
        }
    }
    out << "P2\n" << image.n_x << ' ' << image.n_y << "\n65535\n";
    for (std::uint32_t y = 0; y < image.n_y; ++y) {
        for (std::uint32_t x = 0; x < image.n_x; ++x) {
            const std::size_t i = static_cast<std::size_t>(y) * image.n_x + x;
            long level = 0;
            if (image.valid(i) && hi > lo) {
                const double t = std::clamp((image.values[i] - lo) / (hi - lo), 0.0, 1.0);
                level = std::lround(t * 65535.0);
            }
            out << level << (x + 1 == image.n_x ? '\n' : ' ');
        }
    }
}

void write_image_csv(std::ostream &out, const Image2D &image) {
    out << std::setprecision(17);
    for (std::uint32_t y = 0; y < image.n_y; ++y) {
        for (std::uint32_t x = 0; x < image.n_x; ++x) {
            const std::size_t i = static_cast<std::size_t>(y) * image.n_x + x;
            if (x) out << ',';
            if (image.valid(i))
                out << image.values[i];
            else
                out << "nan";
        }
        out << '\n';
    }
}

Image2D read_image_csv(std::istream &in, double pitch_um) {
    std::vector<double> values;
    std::vector<std::uint8_t> mask;
    std::uint32_t n_x = 0, n_y = 0;
    bool any_masked = false;
    std::string line, cell;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream row(line);
        std::uint32_t count = 0;
        while (std::getline(row, cell, ',')) {
            double v = 0.0;
            try {
                v = std::stod(cell);
            } catch (const std::exception &) {
                throw IoError("image CSV: bad value '" + cell + "' in row " + std::to_string(n_y + 1));
            }
            const bool ok = std::isfinite(v);
            any_masked |= !ok;
            values.push_back(ok ? v : 0.0);
            mask.push_back(ok ? 1 : 0);
            ++count;
        }
        if (n_y == 0) n_x = count;
        if (count != n_x) throw IoError("image CSV: ragged row " + std::to_string(n_y + 1));
        ++n_y;
    }
    if (n_x == 0 || n_y == 0) throw IoError("image CSV: no data");
    Image2D img(n_x, n_y, pitch_um);
    img.values = std::move(values);
    if (any_masked) img.mask = std::move(mask);
    return img;
}

void write_profile_csv(std::ostream &out, const PsfProfile &profile) {
    out << "position_mm,intensity\n" << std::setprecision(17);
    for (std::size_t i = 0; i < profile.positions_mm.size(); ++i)
        out << profile.positions_mm[i] << ',' << profile.intensities[i] << '\n';
}

void write_atf_csv(std::ostream &out, const Atf &atf) {
    auto order = [](std::uint32_t n) {
        std::vector<std::uint32_t> idx(n);
        for (std::uint32_t i = 0; i < n; ++i) idx[i] = (i + (n + 1) / 2) % n; // negative first
        return idx;
    };
    const auto xs = order(atf.n_x);
    const auto ys = order(atf.n_y);
    out << std::setprecision(17) << "fy\\fx";
    for (auto kx : xs) out << ',' << atf.freq_x(kx);
    out << '\n';
    for (auto ky : ys) {
        out << atf.freq_y(ky);
        for (auto kx : xs) out << ',' << atf.at(kx, ky);
        out << '\n';
    }
}

void save_text(const std::string &path, const std::string &content) {
    std::ofstream f(path);
    if (!f) throw IoError("cannot open " + path + " for writing");
    f << content;
    if (!f) throw IoError("write failed: " + path);
}

} // namespace mpoxrf
