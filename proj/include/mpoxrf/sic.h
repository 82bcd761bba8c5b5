#pragma once

#include "mpoxrf/sim.h"

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace mpoxrf {

/*
 * Spectral Image Cube file, little-endian:
 *
 *   offset  size  field
 *   0       4     magic "SIC1"
 *   4       4     u32 n_x
 *   8       4     u32 n_y
 *   12      4     u32 n_bins
 *   16      8     f64 e_min (keV)
 *   24      8     f64 e_bin_width (keV)
 *   32      8     f64 pixel pitch (um)
 *   40      8     u64 seed
 *   48      8     u64 photons
 *   56      8*N   u64 counts, index ((y * n_x) + x) * n_bins + bin
 */
inline constexpr std::size_t kSicHeaderSize = 56;

std::vector<std::byte> encode_sic(const SpectralImage &cube);
// Only the fields stored in the file are restored.
SpectralImage decode_sic(std::span<const std::byte> bytes);

void write_sic(const std::string &path, const SpectralImage &cube);
SpectralImage read_sic(const std::string &path);

} // namespace mpoxrf
