#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "stresslab/fem.hpp"

namespace stresslab {

/// Writes the field as raw little-endian f32, row-major, no header.
inline void write_raw_f32(const StressField& field, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail("io-error", "cannot open '" + path + "' for writing");
  for (double v : field.values) {
    float f = static_cast<float>(v);
    out.write(reinterpret_cast<const char*>(&f), sizeof(f));
  }
  if (!out) fail("io-error", "short write to '" + path + "'");
}

/// Writes an 8-bit binary portable graymap normalized to the field maximum,
/// pixel = round(255 * v / max), plus a sidecar text file (<path>.max.txt)
/// recording the maximum in MPa so images can be de-normalized.
inline void write_pgm(const StressField& field, const std::string& path) {
  const double vmax = field.max();
  std::ofstream out(path, std::ios::binary);
  if (!out) fail("io-error", "cannot open '" + path + "' for writing");
  out << "P5\n" << field.width << " " << field.height << "\n255\n";
  for (double v : field.values) {
    uint8_t px = vmax > 0.0
        ? static_cast<uint8_t>(std::lround(255.0 * v / vmax)) : 0;
    out.write(reinterpret_cast<const char*>(&px), 1);
  }
  if (!out) fail("io-error", "short write to '" + path + "'");

  std::ofstream side(path + ".max.txt");
  if (!side) fail("io-error", "cannot open sidecar for '" + path + "'");
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g\n", vmax);
  side << buf;
}

}  // namespace stresslab
