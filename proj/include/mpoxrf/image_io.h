#pragma once

#include "mpoxrf/analysis.h"

#include <iosfwd>
#include <string>

namespace mpoxrf {

// ASCII PGM (P2), maxval 65535, linearly scaled between the 1st and 99th
// percentile of the valid pixels and clamped. Row 0 is written first.
void write_pgm(std::ostream &out, const Image2D &image);

// One CSV row per image row, full precision; masked pixels are written as nan.
void write_image_csv(std::ostream &out, const Image2D &image);
// Inverse of write_image_csv. The pitch is not part of the file.
Image2D read_image_csv(std::istream &in, double pitch_um);

// Header position_mm,intensity.
void write_profile_csv(std::ostream &out, const PsfProfile &profile);

// Frequency grid in ascending order (DC in the middle). First row:
// "fy\fx" followed by the x frequencies; each following row starts with its
// y frequency. Units are lp/mm.
void write_atf_csv(std::ostream &out, const Atf &atf);

void save_text(const std::string &path, const std::string &content);

} // namespace mpoxrf
