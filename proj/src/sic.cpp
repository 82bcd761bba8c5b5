#include "mpoxrf/sic.h"

#include "mpoxrf/error.h"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace mpoxrf {

namespace {

void put_u32(std::vector<std::byte> &out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::byte>((v >> (8 * i)) & 0xff));
}

void put_u64(std::vector<std::byte> &out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::byte>((v >> (8 * i)) & 0xff));
}

void put_f64(std::vector<std::byte> &out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

std::uint64_t get_u64(const std::byte *p, int n = 8) {
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= std::to_integer<std::uint64_t>(p[i]) << (8 * i);
    return v;
}

} // namespace

std::vector<std::byte> encode_sic(const SpectralImage &cube) {
    std::vector<std::byte> out;
    out.reserve(kSicHeaderSize + 8 * cube.counts.size());
    for (char c : {'S', 'I', 'C', '1'}) out.push_back(static_cast<std::byte>(c));
    put_u32(out, cube.n_x);
    put_u32(out, cube.n_y);
    put_u32(out, cube.n_bins);
    put_f64(out, cube.e_min_kev);
    put_f64(out, cube.e_bin_width_kev);
    put_f64(out, cube.pixel_pitch_um);
    put_u64(out, cube.seed);
    put_u64(out, cube.photons);
    for (auto c : cube.counts) put_u64(out, c);
    return out;
}

SpectralImage decode_sic(std::span<const std::byte> bytes) {
    using K = ParseError::Kind;
    if (bytes.size() < 4) throw ParseError(K::Truncated, bytes.size(), "SIC: stream shorter than magic");
    if (std::memcmp(bytes.data(), "SIC1", 4) != 0) throw ParseError(K::BadMagic, 0, "SIC: bad magic");
    if (bytes.size() < kSicHeaderSize) throw ParseError(K::Truncated, bytes.size(), "SIC: truncated header");
    SpectralImage c;
    const std::byte *p = bytes.data();
    c.n_x = static_cast<std::uint32_t>(get_u64(p + 4, 4));
    c.n_y = static_cast<std::uint32_t>(get_u64(p + 8, 4));
    c.n_bins = static_cast<std::uint32_t>(get_u64(p + 12, 4));
    c.e_min_kev = std::bit_cast<double>(get_u64(p + 16));
    c.e_bin_width_kev = std::bit_cast<double>(get_u64(p + 24));
    c.pixel_pitch_um = std::bit_cast<double>(get_u64(p + 32));
    c.seed = get_u64(p + 40);
    c.photons = get_u64(p + 48);
    const std::uint64_t n = static_cast<std::uint64_t>(c.n_x) * c.n_y * c.n_bins;
    const std::uint64_t expected = kSicHeaderSize + 8 * n;
    if (bytes.size() < expected)
        throw ParseError(K::Truncated, bytes.size(),
                         "SIC: expected " + std::to_string(expected) + " bytes");
    if (bytes.size() > expected) throw ParseError(K::BadLength, expected, "SIC: trailing bytes");
    c.counts.resize(n);
    for (std::uint64_t i = 0; i < n; ++i) c.counts[i] = get_u64(p + kSicHeaderSize + 8 * i);
    return c;
}

void write_sic(const std::string &path, const SpectralImage &cube) {
    const auto bytes = encode_sic(cube);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path + " for writing");
    f.write(reinterpret_cast<const char *>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw IoError("write failed: " + path);
}

SpectralImage read_sic(const std::string &path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path);
    std::vector<char> raw((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return decode_sic(std::as_bytes(std::span(raw)));
}

} // namespace mpoxrf
