#pragma once

#include <string>
#include <vector>

#include "avdepth/common.hpp"

namespace avdepth {

/// 16-bit binary PGM (P5, maxval 65535, big-endian samples per the format).
/// Values are scaled by 65535/max_value; the caller records max_value in a
/// sidecar so readers can recover meters.
void write_pgm16(const std::string& path, const std::vector<double>& values, int w, int h,
                 double max_value);
std::vector<double> read_pgm16(const std::string& path, int& w, int& h, double max_value);

/// 8-bit binary PGM heatmap (P5, maxval 255) of values already in [0,1].
void write_pgm8(const std::string& path, const std::vector<double>& values01, int w, int h);

/// Binary PPM (P6, maxval 255) from a channel-first [0,1] float image.
void write_ppm(const std::string& path, const std::vector<float>& rgb, int w, int h);

} // namespace avdepth
