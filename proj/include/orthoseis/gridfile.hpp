#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>

#include "orthoseis/grid.hpp"

namespace orthoseis {

static_assert(std::endian::native == std::endian::little,
              "grid format assumes a little-endian host");

// Simple binary section container:
//   "OSGD" | u32 version=1 | u32 time | u32 trace | u32 channel |
//   u32 dt_us | f32 payload, row-major with channel fastest.
template <class T>
struct GridFile {
  RealGrid<T> data;
  std::uint32_t dt_us = 1000;
};

template <class T>
void write_grid(const std::string& path, const RealGrid<T>& grid, std::uint32_t dt_us) {
  std::ofstream os(path, std::ios::binary);
  require(static_cast<bool>(os), "write_grid: cannot open " + path);
  os.write("OSGD", 4);
  auto put_u32 = [&os](std::uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); };
  put_u32(1);
  put_u32(static_cast<std::uint32_t>(grid.h()));
  put_u32(static_cast<std::uint32_t>(grid.w()));
  put_u32(static_cast<std::uint32_t>(grid.c()));
  put_u32(dt_us);
  for (std::int64_t i = 0; i < grid.size(); ++i) {
    const float v = static_cast<float>(grid[i]);
    os.write(reinterpret_cast<const char*>(&v), 4);
  }
  require(static_cast<bool>(os), "write_grid: write failed for " + path);
}

template <class T>
GridFile<T> read_grid(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  require(static_cast<bool>(is), "read_grid: cannot open " + path);
  char magic[4] = {};
  is.read(magic, 4);
  require(static_cast<bool>(is) && std::memcmp(magic, "OSGD", 4) == 0,
          "read_grid: bad magic in " + path);
  auto get_u32 = [&is, &path](const char* what) {
    std::uint32_t v = 0;
    is.read(reinterpret_cast<char*>(&v), 4);
    require(static_cast<bool>(is), "read_grid: truncated " + std::string(what) + " in " + path);
    return v;
  };
  const std::uint32_t version = get_u32("version");
  require(version == 1, "read_grid: unsupported version " + std::to_string(version));
  const std::uint32_t h = get_u32("time dim");
  const std::uint32_t w = get_u32("trace dim");
  const std::uint32_t c = get_u32("channel dim");
  GridFile<T> out;
  out.dt_us = get_u32("dt");
  require(h <= (1u << 20) && w <= (1u << 20) && c <= (1u << 16), "read_grid: unreasonable dims");
  out.data = RealGrid<T>(static_cast<int>(h), static_cast<int>(w), static_cast<int>(c));
  for (std::int64_t i = 0; i < out.data.size(); ++i) {
    float v = 0.0f;
    is.read(reinterpret_cast<char*>(&v), 4);
    require(static_cast<bool>(is), "read_grid: truncated payload in " + path);
    out.data[i] = static_cast<T>(v);
  }
  return out;
}

}  // namespace orthoseis
