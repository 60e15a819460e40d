#include <gtest/gtest.h>

#include "pe/synth.hpp"

using namespace pe;

TEST(Synth, DeterministicPerSeedAndIndex) {
  SyntheticStudySpec spec;
  auto a = generate_study(spec, 3, 42);
  auto b = generate_study(spec, 3, 42);
  EXPECT_EQ(a.volume.voxels, b.volume.voxels);
  EXPECT_EQ(a.lung.bits, b.lung.bits);
  EXPECT_EQ(a.slice_labels, b.slice_labels);
  auto c = generate_study(spec, 4, 42);
  EXPECT_NE(a.volume.voxels, c.volume.voxels);
  auto d = generate_study(spec, 3, 43);
  EXPECT_NE(a.volume.voxels, d.volume.voxels);
}

TEST(Synth, HuValuesPlausible) {
  SyntheticStudySpec spec;
  for (int i = 0; i < 5; ++i) {
    auto st = generate_study(spec, i, 7);
    for (int16_t v : st.volume.voxels) {
      ASSERT_GE(v, kHuMin);
      ASSERT_LE(v, kHuMax);
    }
  }
}

TEST(Synth, LesionsConfinedToLungMask) {
  // lesion voxels carry HU 600; every one must sit inside the lung mask
  SyntheticStudySpec spec;
  for (int i = 0; i < 10; ++i) {
    auto st = generate_study(spec, i, 11);
    for (size_t j = 0; j < st.volume.voxels.size(); ++j)
      if (st.volume.voxels[j] == 600) ASSERT_EQ(st.lung.bits[j], 1) << "study " << i;
  }
}

TEST(Synth, SliceLabelsMatchLesionVoxels) {
  SyntheticStudySpec spec;
  for (int i = 0; i < 10; ++i) {
    auto st = generate_study(spec, i, 13);
    const size_t plane = static_cast<size_t>(spec.h) * spec.w;
    for (int z = 0; z < spec.d; ++z) {
      bool has_lesion = false;
      for (size_t j = 0; j < plane; ++j)
        has_lesion |= st.volume.voxels[z * plane + j] == 600;
      ASSERT_EQ(st.slice_labels[z], has_lesion ? 1 : 0) << "study " << i << " z " << z;
    }
  }
}

TEST(Synth, ProducesBothClasses) {
  SyntheticStudySpec spec;
  int pos = 0, neg = 0;
  for (int i = 0; i < 20; ++i) {
    auto st = generate_study(spec, i, 17);
    bool any = false;
    for (int l : st.slice_labels) any |= l != 0;
    (any ? pos : neg)++;
  }
  EXPECT_GT(pos, 0);
  EXPECT_GT(neg, 0);
}

TEST(Synth, EmptyMaskStudiesAreLesionFree) {
  SyntheticStudySpec spec;
  spec.n_empty_masks = 2;
  for (int i = 0; i < 2; ++i) {
    auto st = generate_study(spec, i, 19);
    EXPECT_EQ(st.lung.count(), 0u);
    EXPECT_EQ(st.heart.count(), 0u);
    for (int l : st.slice_labels) EXPECT_EQ(l, 0);
  }
  // later studies still get organs
  EXPECT_GT(generate_study(spec, 2, 19).lung.count(), 0u);
}

TEST(Synth, LandmarksInsideVolumeAndPresent) {
  SyntheticStudySpec spec;
  spec.landmarks = 8;
  for (int i = 0; i < 5; ++i) {
    auto st = generate_study(spec, i, 23);
    ASSERT_EQ(st.landmarks.size(), 8u);
    for (const auto& lm : st.landmarks) {
      EXPECT_TRUE(lm.present);
      EXPECT_GE(lm.x, 0.0);
      EXPECT_LT(lm.x, spec.w);
      EXPECT_GE(lm.y, 0.0);
      EXPECT_LT(lm.y, spec.h);
      EXPECT_GE(lm.z, 0.0);
      EXPECT_LE(lm.z, spec.d - 1.0);
    }
  }
}
