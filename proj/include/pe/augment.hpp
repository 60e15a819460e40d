#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "pe/common.hpp"

namespace pe {

// Parameters follow the training recipe: contrast/shift/scale limits 0.2,
// rotation limit 45 degrees, 2 cutout holes of at most 0.4 * dim per side,
// all applied with probability 1.
struct AugmentSpec {
  double contrast_limit = 0.2;
  double shift_limit = 0.2;
  double scale_limit = 0.2;
  double rotate_limit_deg = 45.0;
  int cutout_holes = 2;
  double cutout_max_frac = 0.4;
  uint64_t seed = 0;
};

// One 9-channel slab stored channel-major, values in [0,1].
struct Slab {
  std::vector<double>* data;
  int channels, h, w;
};

inline void random_contrast(std::vector<double>& slab, int channels, int h, int w,
                            double alpha) {
  const size_t plane = static_cast<size_t>(h) * w;
  for (int c = 0; c < channels; ++c) {
    double* p = slab.data() + c * plane;
    double mean = 0.0;
    for (size_t i = 0; i < plane; ++i) mean += p[i];
    mean /= static_cast<double>(plane);
    for (size_t i = 0; i < plane; ++i)
      p[i] = std::clamp(mean + (p[i] - mean) * (1.0 + alpha), 0.0, 1.0);
  }
}

// Single affine compose: rotate theta about the image center, scale 1+s,
// translate (dx*W, dy*H). Bilinear sampling, zero fill outside; the same
// transform is applied to every channel.
inline void shift_scale_rotate(std::vector<double>& slab, int channels, int h, int w,
                               double dx, double dy, double s, double theta_deg) {
  const size_t plane = static_cast<size_t>(h) * w;
  const double theta = theta_deg * M_PI / 180.0;
  const double scale = 1.0 + s;
  const double cx = (w - 1) * 0.5;
  const double cy = (h - 1) * 0.5;
  const double tx = dx * w;
  const double ty = dy * h;
  // forward: dst = R*S*(src - c) + c + t  =>  src = (R*S)^-1 * (dst - c - t) + c
  const double ca = std::cos(theta), sa = std::sin(theta);
  const double inv = 1.0 / scale;
  // (R*S)^-1 = S^-1 * R^-1
  const double a00 = ca * inv, a01 = sa * inv;
  const double a10 = -sa * inv, a11 = ca * inv;

  std::vector<double> out(slab.size(), 0.0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double rx = x - cx - tx;
      const double ry = y - cy - ty;
      const double sx = a00 * rx + a01 * ry + cx;
      const double sy = a10 * rx + a11 * ry + cy;
      if (sx < -0.5 || sx > w - 0.5 || sy < -0.5 || sy > h - 0.5) continue;
      const int x0 = static_cast<int>(std::floor(sx));
      const int y0 = static_cast<int>(std::floor(sy));
      const double wx = sx - x0;
      const double wy = sy - y0;
      for (int c = 0; c < channels; ++c) {
        const double* p = slab.data() + c * plane;
        auto sample = [&](int yy, int xx) -> double {
          if (yy < 0 || yy >= h || xx < 0 || xx >= w) return 0.0;
          return p[static_cast<size_t>(yy) * w + xx];
        };
        const double v = (1 - wy) * ((1 - wx) * sample(y0, x0) + wx * sample(y0, x0 + 1)) +
                         wy * ((1 - wx) * sample(y0 + 1, x0) + wx * sample(y0 + 1, x0 + 1));
        out[c * plane + static_cast<size_t>(y) * w + x] = v;
      }
    }
  }
  slab = std::move(out);
}

struct CutoutHole {
  int cy, cx, hh, hw;  // center and full side lengths
};

inline void cutout(std::vector<double>& slab, int channels, int h, int w,
                   const std::vector<CutoutHole>& holes) {
  const size_t plane = static_cast<size_t>(h) * w;
  for (const auto& hole : holes) {
    const int y0 = std::max(0, hole.cy - hole.hh / 2);
    const int y1 = std::min(h, hole.cy - hole.hh / 2 + hole.hh);
    const int x0 = std::max(0, hole.cx - hole.hw / 2);
    const int x1 = std::min(w, hole.cx - hole.hw / 2 + hole.hw);
    for (int c = 0; c < channels; ++c)
      for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x)
          slab[c * plane + static_cast<size_t>(y) * w + x] = 0.0;
  }
}

// Draw order from the counter RNG: contrast alpha; then dx, dy, s, theta;
// then per hole (cy, cx, side_h, side_w). Identical seed, spec and slab
// give a bit-identical result.
inline void compose_augment(const AugmentSpec& spec, std::vector<double>& slab,
                            int channels, int h, int w, uint64_t seed) {
  CounterRng rng(seed);
  const double alpha = rng.uniform(-spec.contrast_limit, spec.contrast_limit);
  random_contrast(slab, channels, h, w, alpha);

  const double dx = rng.uniform(-spec.shift_limit, spec.shift_limit);
  const double dy = rng.uniform(-spec.shift_limit, spec.shift_limit);
  const double s = rng.uniform(-spec.scale_limit, spec.scale_limit);
  const double theta = rng.uniform(-spec.rotate_limit_deg, spec.rotate_limit_deg);
  shift_scale_rotate(slab, channels, h, w, dx, dy, s, theta);

  std::vector<CutoutHole> holes;
  const int max_h = static_cast<int>(spec.cutout_max_frac * h);
  const int max_w = static_cast<int>(spec.cutout_max_frac * w);
  for (int i = 0; i < spec.cutout_holes; ++i) {
    CutoutHole hole;
    hole.cy = static_cast<int>(rng.uniform_int(0, h - 1));
    hole.cx = static_cast<int>(rng.uniform_int(0, w - 1));
    hole.hh = max_h >= 1 ? static_cast<int>(rng.uniform_int(1, max_h)) : 0;
    hole.hw = max_w >= 1 ? static_cast<int>(rng.uniform_int(1, max_w)) : 0;
    holes.push_back(hole);
  }
  cutout(slab, channels, h, w, holes);
}

}  // namespace pe
