#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include "orthoseis/grid.hpp"

namespace orthoseis {

// Renders a single-channel section as an 8-bit grayscale PGM (P5). The
// amplitude axis is clipped symmetrically at the 99th percentile of |value|,
// zero maps to mid-gray 128, and the clip magnitude maps to 255 (positive)
// or 0 (negative). An all-zero section renders as uniform 128.
template <class T>
void export_section_image(const std::string& path, const RealGrid<T>& section) {
  require(section.c() == 1, "export_section_image: sections are single-channel");
  require(section.h() > 0 && section.w() > 0, "export_section_image: empty section");

  std::vector<double> magnitudes(static_cast<std::size_t>(section.size()));
  for (std::int64_t i = 0; i < section.size(); ++i) {
    magnitudes[static_cast<std::size_t>(i)] = std::abs(static_cast<double>(section[i]));
  }
  std::sort(magnitudes.begin(), magnitudes.end());
  const std::size_t rank =
      static_cast<std::size_t>(std::floor(0.99 * static_cast<double>(magnitudes.size() - 1)));
  const double clip = magnitudes[rank];

  std::ofstream os(path, std::ios::binary);
  require(static_cast<bool>(os), "export_section_image: cannot open " + path);
  os << "P5\n" << section.w() << " " << section.h() << "\n255\n";
  std::vector<unsigned char> row(static_cast<std::size_t>(section.w()));
  for (int y = 0; y < section.h(); ++y) {
    for (int x = 0; x < section.w(); ++x) {
      double v = clip > 0.0 ? static_cast<double>(section.at(y, x, 0)) / clip : 0.0;
      v = std::clamp(v, -1.0, 1.0);
      row[static_cast<std::size_t>(x)] = static_cast<unsigned char>(std::lround((v + 1.0) * 127.5));
    }
    os.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
  }
  require(static_cast<bool>(os), "export_section_image: write failed for " + path);
}

}  // namespace orthoseis
