#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "orthoseis/grid.hpp"

namespace orthoseis {

// Minimal SEG-Y rev 1 subset: 3200-byte text header, 400-byte big-endian
// binary header, then fixed-length traces with 240-byte headers. Sample
// formats 1 (IBM single) and 5 (IEEE single) are supported.

struct SegyTraceRecord {
  std::int32_t inline_number = 0;
  std::int32_t crossline_number = 0;
  std::uint16_t samples_per_trace = 0;
  std::uint16_t dt_us = 0;
  std::vector<float> samples;
};

struct SegyFile {
  int format_code = 5;
  std::uint16_t dt_us = 0;
  std::uint16_t samples_per_trace = 0;
  std::string text_header;  // 3200 bytes, as stored
  std::vector<SegyTraceRecord> traces;
};

// IBM System/360 single precision: sign bit, 7-bit hexadecimal exponent
// biased by 64, 24-bit fraction in [0, 1):
//   value = (1 - 2s) * 16^(exponent - 64) * fraction / 2^24.
// Every step is a power-of-two scaling of a 24-bit integer, so the double
// result is exact.
inline double ibm32_to_real(std::uint32_t word) {
  const std::uint32_t fraction = word & 0x00FFFFFFu;
  if (fraction == 0) return 0.0;
  const int sign = (word & 0x80000000u) ? -1 : 1;
  const int exponent = static_cast<int>((word >> 24) & 0x7Fu) - 64;
  return sign * std::ldexp(static_cast<double>(fraction), 4 * exponent - 24);
}

namespace detail {

inline std::uint16_t load_be16(const unsigned char* p) {
  return static_cast<std::uint16_t>((p[0] << 8) | p[1]);
}

inline std::uint32_t load_be32(const unsigned char* p) {
  return (static_cast<std::uint32_t>(p[0]) << 24) | (static_cast<std::uint32_t>(p[1]) << 16) |
         (static_cast<std::uint32_t>(p[2]) << 8) | static_cast<std::uint32_t>(p[3]);
}

inline void store_be16(unsigned char* p, std::uint16_t v) {
  p[0] = static_cast<unsigned char>(v >> 8);
  p[1] = static_cast<unsigned char>(v & 0xFF);
}

inline void store_be32(unsigned char* p, std::uint32_t v) {
  p[0] = static_cast<unsigned char>(v >> 24);
  p[1] = static_cast<unsigned char>((v >> 16) & 0xFF);
  p[2] = static_cast<unsigned char>((v >> 8) & 0xFF);
  p[3] = static_cast<unsigned char>(v & 0xFF);
}

}  // namespace detail

// Binary header byte positions (1-based, per the rev 1 layout):
//   3217-3218 sample interval, 3221-3222 samples per trace, 3225-3226 format.
// Trace header byte positions: 115-116 sample count, 117-118 interval,
//   189-192 inline number, 193-196 crossline number.
inline SegyFile read_segy(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  require(static_cast<bool>(is), "read_segy: cannot open " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(is)),
                                   std::istreambuf_iterator<char>());
  require(bytes.size() >= 3600,
          "read_segy: file is " + std::to_string(bytes.size()) + " bytes, shorter than the 3600-byte headers");

  SegyFile out;
  out.text_header.assign(reinterpret_cast<const char*>(bytes.data()), 3200);
  const unsigned char* bin = bytes.data() + 3200;
  out.dt_us = detail::load_be16(bin + 16);
  out.samples_per_trace = detail::load_be16(bin + 20);
  out.format_code = detail::load_be16(bin + 24);
  require(out.format_code == 1 || out.format_code == 5,
          "read_segy: unsupported format code " + std::to_string(out.format_code));

  std::size_t offset = 3600;
  while (offset < bytes.size()) {
    require(offset + 240 <= bytes.size(),
            "read_segy: truncated trace header at byte " + std::to_string(offset));
    const unsigned char* th = bytes.data() + offset;
    SegyTraceRecord trace;
    trace.samples_per_trace = detail::load_be16(th + 114);
    trace.dt_us = detail::load_be16(th + 116);
    trace.inline_number = static_cast<std::int32_t>(detail::load_be32(th + 188));
    trace.crossline_number = static_cast<std::int32_t>(detail::load_be32(th + 192));
    const std::uint16_t ns = trace.samples_per_trace != 0 ? trace.samples_per_trace
                                                          : out.samples_per_trace;
    require(ns > 0, "read_segy: trace at byte " + std::to_string(offset) + " has no sample count");
    offset += 240;
    require(offset + 4ull * ns <= bytes.size(),
            "read_segy: truncated trace payload at byte " + std::to_string(offset));
    trace.samples.resize(ns);
    for (std::uint16_t i = 0; i < ns; ++i) {
      const std::uint32_t word = detail::load_be32(bytes.data() + offset + 4ull * i);
      if (out.format_code == 1) {
        trace.samples[i] = static_cast<float>(ibm32_to_real(word));
      } else {
        float f = 0.0f;
        std::memcpy(&f, &word, 4);
        trace.samples[i] = f;
      }
    }
    offset += 4ull * ns;
    out.traces.push_back(std::move(trace));
  }
  return out;
}

// Writes a single-channel (time x trace) section as IEEE (format 5) SEG-Y
// with one inline; crossline numbers count traces from 1.
template <class T>
void write_segy(const std::string& path, const RealGrid<T>& section, std::uint16_t dt_us,
                std::int32_t inline_number = 1) {
  require(section.c() == 1, "write_segy: sections are single-channel");
  require(section.h() > 0 && section.h() <= 0xFFFF, "write_segy: sample count out of range");
  std::ofstream os(path, std::ios::binary);
  require(static_cast<bool>(os), "write_segy: cannot open " + path);

  std::string text(3200, ' ');
  const std::string banner = "C 1 SYNTHETIC SECTION, IEEE SAMPLES, ONE INLINE";
  std::memcpy(text.data(), banner.data(), banner.size());
  os.write(text.data(), 3200);

  std::vector<unsigned char> bin(400, 0);
  detail::store_be16(bin.data() + 16, dt_us);
  detail::store_be16(bin.data() + 20, static_cast<std::uint16_t>(section.h()));
  detail::store_be16(bin.data() + 24, 5);
  os.write(reinterpret_cast<const char*>(bin.data()), 400);

  std::vector<unsigned char> th(240, 0);
  for (int x = 0; x < section.w(); ++x) {
    std::fill(th.begin(), th.end(), 0);
    detail::store_be16(th.data() + 114, static_cast<std::uint16_t>(section.h()));
    detail::store_be16(th.data() + 116, dt_us);
    detail::store_be32(th.data() + 188, static_cast<std::uint32_t>(inline_number));
    detail::store_be32(th.data() + 192, static_cast<std::uint32_t>(x + 1));
    os.write(reinterpret_cast<const char*>(th.data()), 240);
    for (int t = 0; t < section.h(); ++t) {
      const float v = static_cast<float>(section.at(t, x, 0));
      std::uint32_t word = 0;
      std::memcpy(&word, &v, 4);
      unsigned char be[4];
      detail::store_be32(be, word);
      os.write(reinterpret_cast<const char*>(be), 4);
    }
  }
  require(static_cast<bool>(os), "write_segy: write failed for " + path);
}

// Converts a fixed-length SEG-Y file to a (time x trace) grid.
template <class T>
RealGrid<T> segy_to_grid(const SegyFile& f) {
  require(!f.traces.empty(), "segy_to_grid: no traces");
  const std::size_t ns = f.traces.front().samples.size();
  for (const auto& t : f.traces) {
    require(t.samples.size() == ns, "segy_to_grid: traces have differing lengths");
  }
  RealGrid<T> grid(static_cast<int>(ns), static_cast<int>(f.traces.size()), 1);
  for (int x = 0; x < grid.w(); ++x) {
    for (int t = 0; t < grid.h(); ++t) {
      grid.at(t, x, 0) = static_cast<T>(f.traces[x].samples[t]);
    }
  }
  return grid;
}

}  // namespace orthoseis
