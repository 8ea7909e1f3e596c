#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "orthoseis/grid.hpp"

namespace orthoseis {

struct PatchPosition {
  int y0 = 0;
  int x0 = 0;
};

// Tiling of a section by fixed-size windows. Offsets advance by the stride;
// a final offset flush with the far edge is always included so the tiling
// covers every sample even when the stride does not divide evenly.
struct PatchIndex {
  int section_h = 0;
  int section_w = 0;
  int patch_h = 0;
  int patch_w = 0;
  std::vector<PatchPosition> positions;
};

namespace detail {

inline std::vector<int> patch_offsets(int extent, int window, int stride) {
  std::vector<int> offsets;
  for (int o = 0; o + window <= extent; o += stride) offsets.push_back(o);
  if (offsets.empty() || offsets.back() + window < extent) offsets.push_back(extent - window);
  return offsets;
}

}  // namespace detail

template <class T>
std::pair<std::vector<RealGrid<T>>, PatchIndex> extract_patches(const RealGrid<T>& section,
                                                                int patch_h, int patch_w,
                                                                int stride) {
  require(patch_h >= 1 && patch_w >= 1, "extract_patches: patch dims must be positive");
  require(stride >= 1, "extract_patches: stride must be positive");
  require(patch_h <= section.h() && patch_w <= section.w(),
          "extract_patches: patch " + std::to_string(patch_h) + "x" + std::to_string(patch_w) +
              " exceeds section " + section.shape().str());
  PatchIndex index;
  index.section_h = section.h();
  index.section_w = section.w();
  index.patch_h = patch_h;
  index.patch_w = patch_w;
  const std::vector<int> ys = detail::patch_offsets(section.h(), patch_h, stride);
  const std::vector<int> xs = detail::patch_offsets(section.w(), patch_w, stride);
  std::vector<RealGrid<T>> patches;
  patches.reserve(ys.size() * xs.size());
  for (int y0 : ys) {
    for (int x0 : xs) {
      RealGrid<T> p(patch_h, patch_w, section.c());
      for (int y = 0; y < patch_h; ++y) {
        for (int x = 0; x < patch_w; ++x) {
          for (int ch = 0; ch < section.c(); ++ch) {
            p.at(y, x, ch) = section.at(y0 + y, x0 + x, ch);
          }
        }
      }
      patches.push_back(std::move(p));
      index.positions.push_back({y0, x0});
    }
  }
  return {std::move(patches), std::move(index)};
}

// Reassembles a section from patches; overlapping samples average. Feeding
// back unmodified extracted patches reconstructs the section exactly.
template <class T>
RealGrid<T> stitch_patches(const std::vector<RealGrid<T>>& patches, const PatchIndex& index) {
  require(patches.size() == index.positions.size(),
          "stitch_patches: patch count does not match index");
  require(!patches.empty(), "stitch_patches: no patches");
  const int c = patches.front().c();
  RealGrid<T> sum(index.section_h, index.section_w, c);
  RealGrid<T> count(index.section_h, index.section_w, c);
  for (std::size_t i = 0; i < patches.size(); ++i) {
    const RealGrid<T>& p = patches[i];
    require(p.h() == index.patch_h && p.w() == index.patch_w && p.c() == c,
            "stitch_patches: patch " + std::to_string(i) + " has shape " + p.shape().str());
    const PatchPosition pos = index.positions[i];
    for (int y = 0; y < p.h(); ++y) {
      for (int x = 0; x < p.w(); ++x) {
        for (int ch = 0; ch < c; ++ch) {
          sum.at(pos.y0 + y, pos.x0 + x, ch) += p.at(y, x, ch);
          count.at(pos.y0 + y, pos.x0 + x, ch) += T(1);
        }
      }
    }
  }
  require((count.data() > T(0)).all(), "stitch_patches: tiling leaves uncovered samples");
  sum.data() /= count.data();
  return sum;
}

enum class NormMode { kMinMaxSym, kZScore };

// Reversible affine map applied during normalization:
//   normalized = (x - offset) * scale,  original = normalized / scale + offset.
// Constant grids cannot be scaled; they come back as all zeros with the
// degenerate flag set, and denormalization still restores them exactly.
struct NormStats {
  NormMode mode = NormMode::kMinMaxSym;
  double offset = 0.0;
  double scale = 1.0;
  bool degenerate = false;
};

// minmax_sym divides by the peak magnitude, mapping into [-1, 1] with zero
// fixed; zscore centers on the mean and divides by the standard deviation.
template <class T>
std::pair<RealGrid<T>, NormStats> normalize(const RealGrid<T>& g, NormMode mode) {
  require(g.size() > 0, "normalize: empty grid");
  NormStats stats;
  stats.mode = mode;
  if (mode == NormMode::kMinMaxSym) {
    if (g.data().maxCoeff() == g.data().minCoeff()) {
      stats.offset = static_cast<double>(g[0]);
      stats.degenerate = true;
    } else {
      stats.scale = 1.0 / static_cast<double>(g.data().abs().maxCoeff());
    }
  } else {
    const double mean = g.data().template cast<double>().mean();
    const double var = (g.data().template cast<double>() - mean).square().mean();
    const double sd = std::sqrt(var);
    stats.offset = mean;
    if (sd > 0.0) {
      stats.scale = 1.0 / sd;
    } else {
      stats.degenerate = true;
    }
  }
  RealGrid<T> out(g.shape());
  out.data() = (g.data() - static_cast<T>(stats.offset)) * static_cast<T>(stats.scale);
  return {std::move(out), stats};
}

template <class T>
RealGrid<T> denormalize(const RealGrid<T>& g, const NormStats& stats) {
  require(stats.scale != 0.0, "denormalize: zero scale");
  RealGrid<T> out(g.shape());
  out.data() = g.data() / static_cast<T>(stats.scale) + static_cast<T>(stats.offset);
  return out;
}

}  // namespace orthoseis
