#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "pe/augment.hpp"
#include "pe/common.hpp"

using namespace pe;

namespace {

std::vector<double> random_slab(CounterRng& rng, int c, int h, int w) {
  std::vector<double> s(static_cast<size_t>(c) * h * w);
  for (auto& v : s) v = rng.next_unit();
  return s;
}

}  // namespace

TEST(Contrast, ZeroAlphaIsIdentity) {
  CounterRng rng(1);
  auto slab = random_slab(rng, 2, 6, 6);
  auto orig = slab;
  random_contrast(slab, 2, 6, 6, 0.0);
  EXPECT_EQ(slab, orig);
}

TEST(Contrast, ScalesAboutChannelMean) {
  std::vector<double> slab{0.2, 0.4, 0.2, 0.4};  // one 2x2 channel, mean 0.3
  random_contrast(slab, 1, 2, 2, 0.5);
  EXPECT_NEAR(slab[0], 0.3 + (0.2 - 0.3) * 1.5, 1e-12);
  EXPECT_NEAR(slab[1], 0.3 + (0.4 - 0.3) * 1.5, 1e-12);
}

TEST(Contrast, ClampsToUnitInterval) {
  std::vector<double> slab{0.0, 1.0, 0.0, 1.0};
  random_contrast(slab, 1, 2, 2, 0.2);
  for (double v : slab) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(Affine, IdentityParamsAreExact) {
  CounterRng rng(2);
  auto slab = random_slab(rng, 9, 8, 8);
  auto orig = slab;
  shift_scale_rotate(slab, 9, 8, 8, 0.0, 0.0, 0.0, 0.0);
  for (size_t i = 0; i < slab.size(); ++i) ASSERT_NEAR(slab[i], orig[i], 1e-12);
}

TEST(Affine, QuarterTurnMatchesIndexRotation) {
  // 90-degree rotation of a square image lands exactly on pixel centers
  const int n = 6;
  CounterRng rng(3);
  auto slab = random_slab(rng, 1, n, n);
  auto orig = slab;
  shift_scale_rotate(slab, 1, n, n, 0.0, 0.0, 0.0, 90.0);
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      // forward map sends src (sx,sy) to (-(sy-c)+c, (sx-c)+c), so the
      // content of dst pixel (x,y) comes from src (y, n-1-x)
      const double expected = orig[static_cast<size_t>(n - 1 - x) * n + y];
      ASSERT_NEAR(slab[static_cast<size_t>(y) * n + x], expected, 1e-9)
          << "(" << x << "," << y << ")";
    }
}

TEST(Affine, PureShiftMovesContent) {
  const int n = 8;
  std::vector<double> slab(n * n, 0.0);
  slab[3 * n + 3] = 1.0;
  shift_scale_rotate(slab, 1, n, n, 2.0 / n, 1.0 / n, 0.0, 0.0);  // dx=2px, dy=1px
  EXPECT_NEAR(slab[4 * n + 5], 1.0, 1e-9);
  EXPECT_NEAR(slab[3 * n + 3], 0.0, 1e-9);
}

TEST(Affine, SameTransformOnEveryChannel) {
  CounterRng rng(4);
  const int h = 8, w = 8;
  auto base = random_slab(rng, 1, h, w);
  std::vector<double> slab;
  for (int c = 0; c < 3; ++c) slab.insert(slab.end(), base.begin(), base.end());
  shift_scale_rotate(slab, 3, h, w, 0.05, -0.07, 0.1, 17.0);
  const size_t plane = static_cast<size_t>(h) * w;
  for (size_t i = 0; i < plane; ++i) {
    ASSERT_DOUBLE_EQ(slab[i], slab[plane + i]);
    ASSERT_DOUBLE_EQ(slab[i], slab[2 * plane + i]);
  }
}

TEST(Cutout, ZeroesExactClippedRectangles) {
  const int h = 8, w = 8;
  std::vector<double> slab(2 * h * w, 1.0);
  cutout(slab, 2, h, w, {{1, 1, 4, 4}, {7, 7, 2, 2}});
  const size_t plane = static_cast<size_t>(h) * w;
  int zeros = 0;
  for (int c = 0; c < 2; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        // hole 1: rows/cols [-1,3) clipped to [0,3); hole 2: [6,8)
        const bool in1 = y < 3 && x < 3;
        const bool in2 = y >= 6 && x >= 6;
        const double v = slab[c * plane + static_cast<size_t>(y) * w + x];
        ASSERT_DOUBLE_EQ(v, (in1 || in2) ? 0.0 : 1.0) << x << "," << y;
        zeros += v == 0.0;
      }
  EXPECT_EQ(zeros, 2 * (9 + 4));
}

TEST(Compose, SeedReproducibleAndSeedSensitive) {
  AugmentSpec spec;
  spec.seed = 99;
  CounterRng rng(5);
  auto slab = random_slab(rng, 9, 16, 16);
  auto a = slab, b = slab, c = slab;
  compose_augment(spec, a, 9, 16, 16, 1234);
  compose_augment(spec, b, 9, 16, 16, 1234);
  compose_augment(spec, c, 9, 16, 16, 1235);
  EXPECT_EQ(a, b);  // bit-identical under the same seed
  EXPECT_NE(a, c);
}

TEST(Compose, DrawsRespectSpecBounds) {
  // replicate the documented draw order and check every value over many
  // seeds; this pins the parameter ranges of the recipe
  AugmentSpec spec;
  const int h = 32, w = 32;
  for (uint64_t seed = 0; seed < 1000; ++seed) {
    CounterRng rng(seed);
    const double alpha = rng.uniform(-spec.contrast_limit, spec.contrast_limit);
    const double dx = rng.uniform(-spec.shift_limit, spec.shift_limit);
    const double dy = rng.uniform(-spec.shift_limit, spec.shift_limit);
    const double s = rng.uniform(-spec.scale_limit, spec.scale_limit);
    const double theta = rng.uniform(-spec.rotate_limit_deg, spec.rotate_limit_deg);
    ASSERT_LE(std::fabs(alpha), 0.2);
    ASSERT_LE(std::fabs(dx), 0.2);
    ASSERT_LE(std::fabs(dy), 0.2);
    ASSERT_LE(std::fabs(s), 0.2);
    ASSERT_LE(std::fabs(theta), 45.0);
    for (int i = 0; i < spec.cutout_holes; ++i) {
      const int cy = static_cast<int>(rng.uniform_int(0, h - 1));
      const int cx = static_cast<int>(rng.uniform_int(0, w - 1));
      const int hh = static_cast<int>(rng.uniform_int(1, static_cast<int>(0.4 * h)));
      const int hw = static_cast<int>(rng.uniform_int(1, static_cast<int>(0.4 * w)));
      ASSERT_TRUE(cy >= 0 && cy < h && cx >= 0 && cx < w);
      ASSERT_TRUE(hh >= 1 && hh <= static_cast<int>(0.4 * h));
      ASSERT_TRUE(hw >= 1 && hw <= static_cast<int>(0.4 * w));
    }
  }
}

TEST(Compose, CutoutAreaBoundHolds) {
  // after the full compose, the number of zeroed-by-cutout pixels cannot
  // exceed holes * (0.4*h) * (0.4*w)
  AugmentSpec spec;
  const int h = 32, w = 32;
  const int max_area = spec.cutout_holes * static_cast<int>(0.4 * h) *
                       static_cast<int>(0.4 * w);
  for (uint64_t seed = 0; seed < 200; ++seed) {
    std::vector<double> slab(static_cast<size_t>(h) * w, 1.0);
    // isolate cutout: contrast keeps constant image constant (mean scaling),
    // affine of a constant image is constant inside the footprint
    CounterRng rng(seed);
    rng.uniform(0, 1);  // alpha
    rng.uniform(0, 1);
    rng.uniform(0, 1);
    rng.uniform(0, 1);
    rng.uniform(0, 1);  // dx dy s theta
    std::vector<CutoutHole> holes;
    for (int i = 0; i < spec.cutout_holes; ++i) {
      CutoutHole hole;
      hole.cy = static_cast<int>(rng.uniform_int(0, h - 1));
      hole.cx = static_cast<int>(rng.uniform_int(0, w - 1));
      hole.hh = static_cast<int>(rng.uniform_int(1, static_cast<int>(0.4 * h)));
      hole.hw = static_cast<int>(rng.uniform_int(1, static_cast<int>(0.4 * w)));
      holes.push_back(hole);
    }
    cutout(slab, 1, h, w, holes);
    int zeros = 0;
    for (double v : slab) zeros += v == 0.0;
    ASSERT_LE(zeros, max_area) << "seed " << seed;
  }
}

TEST(Compose, OutputStaysInUnitInterval) {
  AugmentSpec spec;
  CounterRng rng(6);
  for (uint64_t seed = 0; seed < 50; ++seed) {
    auto slab = random_slab(rng, 9, 16, 16);
    compose_augment(spec, slab, 9, 16, 16, seed);
    for (double v : slab) {
      ASSERT_GE(v, 0.0);
      ASSERT_LE(v, 1.0);
    }
  }
}
