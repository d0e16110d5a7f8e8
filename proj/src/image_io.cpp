#include "avdepth/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace avdepth {

namespace {

void write_file(const std::string& path, const std::string& buf) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path);
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw IoError("write failed: " + path);
}

} // namespace

void write_pgm16(const std::string& path, const std::vector<double>& values, int w, int h,
                 double max_value) {
    if (w < 1 || h < 1 || values.size() != static_cast<size_t>(w) * h)
        throw ArgumentError("write_pgm16: value count does not match dimensions");
    if (!(max_value > 0.0)) throw ArgumentError("write_pgm16: max_value must be positive");
    std::string buf = "P5\n" + std::to_string(w) + " " + std::to_string(h) + "\n65535\n";
    for (double v : values) {
        const double scaled = std::clamp(v / max_value, 0.0, 1.0) * 65535.0;
        const auto q = static_cast<uint16_t>(std::lround(scaled));
        buf.push_back(static_cast<char>(q >> 8)); // PGM stores MSB first
        buf.push_back(static_cast<char>(q & 0xff));
    }
    write_file(path, buf);
}

std::vector<double> read_pgm16(const std::string& path, int& w, int& h, double max_value) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + path);
    std::string magic;
    int maxval = 0;
    in >> magic >> w >> h >> maxval;
    if (magic != "P5" || maxval != 65535) throw FormatError("expected 16-bit P5 PGM: " + path);
    in.get(); // single whitespace after the header
    std::vector<double> out(static_cast<size_t>(w) * h);
    for (auto& v : out) {
        const int hi = in.get(), lo = in.get();
        if (hi < 0 || lo < 0) throw FormatError("truncated PGM payload: " + path);
        v = static_cast<double>((hi << 8) | lo) / 65535.0 * max_value;
    }
    return out;
}

void write_pgm8(const std::string& path, const std::vector<double>& values01, int w, int h) {
    if (w < 1 || h < 1 || values01.size() != static_cast<size_t>(w) * h)
        throw ArgumentError("write_pgm8: value count does not match dimensions");
    std::string buf = "P5\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
    for (double v : values01)
        buf.push_back(static_cast<char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)));
    write_file(path, buf);
}

void write_ppm(const std::string& path, const std::vector<float>& rgb, int w, int h) {
    const size_t plane = static_cast<size_t>(w) * h;
    if (w < 1 || h < 1 || rgb.size() != 3 * plane)
        throw ArgumentError("write_ppm: value count does not match dimensions");
    std::string buf = "P6\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
    for (size_t p = 0; p < plane; ++p)
        for (int c = 0; c < 3; ++c) {
            const double v = std::clamp(static_cast<double>(rgb[c * plane + p]), 0.0, 1.0);
            buf.push_back(static_cast<char>(std::lround(v * 255.0)));
        }
    write_file(path, buf);
}

} // namespace avdepth
