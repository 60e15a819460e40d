#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "pe/common.hpp"
#include "pe/hopnet.hpp"
#include "pe/roi.hpp"
#include "pe/volume.hpp"

namespace pe {

// Desk-scale stand-in for real CTPA studies plus the external organ
// segmentation and landmark models: ellipsoid lungs and heart, bright
// ellipsoid lesions confined to the lung mask, analytically placed
// landmarks.
struct SyntheticStudySpec {
  int d = 16, h = 64, w = 64;
  int max_lesions = 3;
  int landmarks = 4;
  int n_empty_masks = 0;          // that many studies get all-zero organ masks
  double lesion_free_fraction = 0.35;  // approximate rate of negative studies
};

struct SyntheticStudy {
  CtVolume volume;
  OrganMask lung, heart;
  std::vector<VoxelLandmark> landmarks;
  std::vector<int> slice_labels;  // 1 exactly on slices intersecting a lesion
};

namespace synth_detail {

struct Ellipsoid {
  double cx, cy, cz, rx, ry, rz;
  bool contains(double x, double y, double z) const {
    const double u = (x - cx) / rx, v = (y - cy) / ry, t = (z - cz) / rz;
    return u * u + v * v + t * t <= 1.0;
  }
};

}  // namespace synth_detail

inline SyntheticStudy generate_study(const SyntheticStudySpec& spec, int study_index,
                                     uint64_t seed) {
  using synth_detail::Ellipsoid;
  CounterRng rng(derive_seed(seed, static_cast<uint64_t>(study_index)));
  SyntheticStudy study;
  auto& vol = study.volume;
  vol.study_id = "study" + std::to_string(study_index);
  vol.d = spec.d;
  vol.h = spec.h;
  vol.w = spec.w;
  vol.spacing = {3.0, 1.0, 1.0};
  vol.voxels.assign(vol.size(), -1000);

  const double jx = rng.uniform(-0.03, 0.03);
  const double jy = rng.uniform(-0.03, 0.03);
  const double rscale = rng.uniform(0.9, 1.1);

  Ellipsoid body{(0.5 + jx) * spec.w, (0.5 + jy) * spec.h, 0.5 * spec.d,
                 0.45 * spec.w, 0.42 * spec.h, 0.48 * spec.d};
  Ellipsoid lung_l{(0.32 + jx) * spec.w, (0.45 + jy) * spec.h, 0.5 * spec.d,
                   0.16 * spec.w * rscale, 0.24 * spec.h * rscale, 0.38 * spec.d};
  Ellipsoid lung_r{(0.68 + jx) * spec.w, (0.45 + jy) * spec.h, 0.5 * spec.d,
                   0.16 * spec.w * rscale, 0.24 * spec.h * rscale, 0.38 * spec.d};
  Ellipsoid heart{(0.52 + jx) * spec.w, (0.62 + jy) * spec.h, 0.48 * spec.d,
                  0.13 * spec.w, 0.15 * spec.h, 0.25 * spec.d};

  const bool empty_masks = study_index < spec.n_empty_masks;
  study.lung = OrganMask{{}, spec.d, spec.h, spec.w, Organ::Lung};
  study.lung.bits.assign(vol.size(), 0);
  study.heart = OrganMask{{}, spec.d, spec.h, spec.w, Organ::Heart};
  study.heart.bits.assign(vol.size(), 0);

  for (int z = 0; z < spec.d; ++z)
    for (int y = 0; y < spec.h; ++y)
      for (int x = 0; x < spec.w; ++x) {
        const size_t i = vol.index(z, y, x);
        int16_t hu = -1000;
        if (body.contains(x, y, z)) hu = static_cast<int16_t>(40 + rng.uniform_int(-15, 15));
        const bool in_lung = lung_l.contains(x, y, z) || lung_r.contains(x, y, z);
        if (in_lung) hu = static_cast<int16_t>(-700 + rng.uniform_int(-30, 30));
        if (heart.contains(x, y, z)) hu = static_cast<int16_t>(120 + rng.uniform_int(-20, 20));
        vol.voxels[i] = hu;
        if (!empty_masks) {
          if (in_lung) study.lung.bits[i] = 1;
          if (heart.contains(x, y, z)) study.heart.bits[i] = 1;
        }
      }

  // lesions: bright blobs entirely inside the lung mask
  study.slice_labels.assign(spec.d, 0);
  const bool lesion_free = empty_masks || rng.next_unit() < spec.lesion_free_fraction;
  const int n_lesions =
      lesion_free ? 0 : static_cast<int>(rng.uniform_int(1, std::max(1, spec.max_lesions)));
  for (int l = 0; l < n_lesions; ++l) {
    const Ellipsoid& lung = (rng.next_unit() < 0.5) ? lung_l : lung_r;
    const double phi = rng.uniform(0.0, 2.0 * M_PI);
    const double rad = rng.uniform(0.0, 0.5);
    const double lcx = lung.cx + rad * lung.rx * std::cos(phi);
    const double lcy = lung.cy + rad * lung.ry * std::sin(phi);
    const double lcz = lung.cz + rng.uniform(-0.4, 0.4) * lung.rz;
    const double lr = rng.uniform(1.5, 3.0);
    Ellipsoid lesion{lcx, lcy, lcz, lr, lr, std::max(1.0, lr * 0.6)};
    for (int z = 0; z < spec.d; ++z)
      for (int y = 0; y < spec.h; ++y)
        for (int x = 0; x < spec.w; ++x) {
          const size_t i = vol.index(z, y, x);
          if (!lesion.contains(x, y, z)) continue;
          if (!study.lung.bits.empty() &&
              !(lung_l.contains(x, y, z) || lung_r.contains(x, y, z)))
            continue;  // keep lesion voxels inside the lung
          vol.voxels[i] = 600;
          study.slice_labels[z] = 1;
        }
  }

  // analytic landmarks spread over the organ geometry
  const double cz = 0.5 * spec.d;
  std::vector<VoxelLandmark> anchors = {
      {lung_l.cx, lung_l.cy - lung_l.ry * 0.9, std::floor(cz), true},  // left lung top
      {lung_r.cx, lung_r.cy - lung_r.ry * 0.9, std::floor(cz), true},  // right lung top
      {heart.cx, heart.cy, std::floor(heart.cz), true},                // heart center
      {0.5 * spec.w + jx * spec.w, 0.45 * spec.h + jy * spec.h, std::floor(cz * 0.8),
       true},  // carina stand-in
  };
  for (int k = 0; k < spec.landmarks; ++k) {
    if (k < static_cast<int>(anchors.size())) {
      study.landmarks.push_back(anchors[k]);
    } else {
      const double t = 2.0 * M_PI * k / spec.landmarks;
      VoxelLandmark lm;
      lm.x = body.cx + 0.3 * body.rx * std::cos(t);
      lm.y = body.cy + 0.3 * body.ry * std::sin(t);
      lm.z = std::floor(std::clamp(cz + 0.3 * body.rz * std::sin(2 * t), 0.0, spec.d - 1.0));
      lm.present = true;
      study.landmarks.push_back(lm);
    }
  }
  return study;
}

}  // namespace pe
