#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "pe/common.hpp"
#include "pe/volume.hpp"

namespace pe {

enum class Organ { Lung, Heart, Combined };

struct OrganMask {
  std::vector<uint8_t> bits;  // 0/1, dims match paired volume
  int d = 0, h = 0, w = 0;
  Organ organ = Organ::Combined;

  size_t index(int z, int y, int x) const {
    return static_cast<size_t>(z) * h * w + static_cast<size_t>(y) * w + x;
  }
  uint8_t at(int z, int y, int x) const { return bits[index(z, y, x)]; }
  uint8_t& at(int z, int y, int x) { return bits[index(z, y, x)]; }
  size_t size() const { return static_cast<size_t>(d) * h * w; }
  size_t count() const {
    size_t n = 0;
    for (uint8_t b : bits) n += b;
    return n;
  }
};

// Half-open voxel ranges [z0,z1) x [y0,y1) x [x0,x1).
struct BBox {
  int z0 = 0, z1 = 0, y0 = 0, y1 = 0, x0 = 0, x1 = 0;
  int64_t volume() const {
    return static_cast<int64_t>(z1 - z0) * (y1 - y0) * (x1 - x0);
  }
};

struct RoiCrop {
  std::string study_id;
  OrganMask hull_mask;
  BBox bbox;
  WindowedVolume cropped;
  double crop_ratio = 0.0;
};

inline OrganMask union_masks(const OrganMask& lung, const OrganMask& heart) {
  if (lung.d != heart.d || lung.h != heart.h || lung.w != heart.w)
    throw DimMismatch("organ mask dims differ");
  OrganMask out;
  out.d = lung.d;
  out.h = lung.h;
  out.w = lung.w;
  out.organ = Organ::Combined;
  out.bits.resize(lung.bits.size());
  for (size_t i = 0; i < lung.bits.size(); ++i)
    out.bits[i] = (lung.bits[i] || heart.bits[i]) ? 1 : 0;
  return out;
}

namespace hull_detail {

struct Pt {
  int64_t x, y;
};

inline int64_t cross(const Pt& o, const Pt& a, const Pt& b) {
  return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

// Andrew monotone chain; returns CCW hull, collinear points dropped.
// Degenerate inputs (single point, collinear set) return 1 or 2 points.
inline std::vector<Pt> monotone_chain(std::vector<Pt> pts) {
  std::sort(pts.begin(), pts.end(), [](const Pt& a, const Pt& b) {
    return a.x != b.x ? a.x < b.x : a.y < b.y;
  });
  pts.erase(std::unique(pts.begin(), pts.end(),
                        [](const Pt& a, const Pt& b) { return a.x == b.x && a.y == b.y; }),
            pts.end());
  const size_t n = pts.size();
  if (n <= 2) return pts;
  std::vector<Pt> hull(2 * n);
  size_t k = 0;
  for (size_t i = 0; i < n; ++i) {
    while (k >= 2 && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
    hull[k++] = pts[i];
  }
  const size_t lower = k + 1;
  for (size_t i = n - 1; i-- > 0;) {
    while (k >= lower && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
    hull[k++] = pts[i];
  }
  hull.resize(k - 1);
  if (hull.size() == 2 && hull[0].x == hull[1].x && hull[0].y == hull[1].y)
    hull.resize(1);
  return hull;
}

// Exact integer test: pixel center inside or on the hull polygon.
inline bool inside_hull(const std::vector<Pt>& hull, const Pt& p) {
  const size_t n = hull.size();
  if (n == 0) return false;
  if (n == 1) return p.x == hull[0].x && p.y == hull[0].y;
  if (n == 2) {
    // on segment
    if (cross(hull[0], hull[1], p) != 0) return false;
    return p.x >= std::min(hull[0].x, hull[1].x) && p.x <= std::max(hull[0].x, hull[1].x) &&
           p.y >= std::min(hull[0].y, hull[1].y) && p.y <= std::max(hull[0].y, hull[1].y);
  }
  for (size_t i = 0; i < n; ++i) {
    const Pt& a = hull[i];
    const Pt& b = hull[(i + 1) % n];
    if (cross(a, b, p) < 0) return false;  // CCW: inside means left of every edge
  }
  return true;
}

}  // namespace hull_detail

// Filled convex hull of the set pixels of one slice, pixel-center geometry.
// Empty input maps to empty output; collinear inputs fill the pixels whose
// centers lie exactly on the connecting segment.
inline std::vector<uint8_t> convex_hull_slice(const std::vector<uint8_t>& mask_slice,
                                              int h, int w) {
  using hull_detail::Pt;
  std::vector<Pt> pts;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (mask_slice[static_cast<size_t>(y) * w + x]) pts.push_back({x, y});
  std::vector<uint8_t> out(static_cast<size_t>(h) * w, 0);
  if (pts.empty()) return out;
  auto hull = hull_detail::monotone_chain(pts);
  int64_t xmin = hull[0].x, xmax = hull[0].x, ymin = hull[0].y, ymax = hull[0].y;
  for (const auto& p : hull) {
    xmin = std::min(xmin, p.x);
    xmax = std::max(xmax, p.x);
    ymin = std::min(ymin, p.y);
    ymax = std::max(ymax, p.y);
  }
  for (int64_t y = ymin; y <= ymax; ++y)
    for (int64_t x = xmin; x <= xmax; ++x)
      if (hull_detail::inside_hull(hull, {x, y}))
        out[static_cast<size_t>(y) * w + x] = 1;
  return out;
}

// Per-slice hull of a 3D mask (each slice treated independently).
inline OrganMask convex_hull_mask(const OrganMask& mask) {
  OrganMask out = mask;
  const size_t plane = static_cast<size_t>(mask.h) * mask.w;
  for (int z = 0; z < mask.d; ++z) {
    std::vector<uint8_t> slice(mask.bits.begin() + z * plane,
                               mask.bits.begin() + (z + 1) * plane);
    auto filled = convex_hull_slice(slice, mask.h, mask.w);
    std::copy(filled.begin(), filled.end(), out.bits.begin() + z * plane);
  }
  return out;
}

inline BBox roi_bounding_box(const OrganMask& hull) {
  BBox box{hull.d, 0, hull.h, 0, hull.w, 0};
  bool any = false;
  for (int z = 0; z < hull.d; ++z)
    for (int y = 0; y < hull.h; ++y)
      for (int x = 0; x < hull.w; ++x)
        if (hull.at(z, y, x)) {
          any = true;
          box.z0 = std::min(box.z0, z);
          box.z1 = std::max(box.z1, z + 1);
          box.y0 = std::min(box.y0, y);
          box.y1 = std::max(box.y1, y + 1);
          box.x0 = std::min(box.x0, x);
          box.x1 = std::max(box.x1, x + 1);
        }
  if (!any) throw EmptyMask("mask has no set voxel");
  return box;
}

// Bilinear resize with half-pixel centers, no corner alignment.
// Samples clamp at the crop edges.
inline WindowedVolume crop_and_resize(const WindowedVolume& wvol, const BBox& box,
                                      int target_h, int target_w) {
  if (box.z0 < 0 || box.z1 > wvol.d || box.y0 < 0 || box.y1 > wvol.h || box.x0 < 0 ||
      box.x1 > wvol.w || box.z0 >= box.z1 || box.y0 >= box.y1 || box.x0 >= box.x1)
    throw BoxOutOfRange("crop box outside volume");
  if (target_h < 2 || target_w < 2) throw ConfigInvalid("target dims must be >= 2");
  const int ch = box.y1 - box.y0;
  const int cw = box.x1 - box.x0;
  WindowedVolume out;
  out.windows = wvol.windows;
  out.d = box.z1 - box.z0;
  out.h = target_h;
  out.w = target_w;
  out.values.resize(3ull * out.d * target_h * target_w);
  const double sy = static_cast<double>(ch) / target_h;
  const double sx = static_cast<double>(cw) / target_w;
  for (int win = 0; win < 3; ++win) {
    for (int z = 0; z < out.d; ++z) {
      for (int ty = 0; ty < target_h; ++ty) {
        double fy = (ty + 0.5) * sy - 0.5;
        int y0 = static_cast<int>(std::floor(fy));
        double wy = fy - y0;
        int ya = std::clamp(y0, 0, ch - 1);
        int yb = std::clamp(y0 + 1, 0, ch - 1);
        for (int tx = 0; tx < target_w; ++tx) {
          double fx = (tx + 0.5) * sx - 0.5;
          int x0 = static_cast<int>(std::floor(fx));
          double wx = fx - x0;
          int xa = std::clamp(x0, 0, cw - 1);
          int xb = std::clamp(x0 + 1, 0, cw - 1);
          double v00 = wvol.at(win, box.z0 + z, box.y0 + ya, box.x0 + xa);
          double v01 = wvol.at(win, box.z0 + z, box.y0 + ya, box.x0 + xb);
          double v10 = wvol.at(win, box.z0 + z, box.y0 + yb, box.x0 + xa);
          double v11 = wvol.at(win, box.z0 + z, box.y0 + yb, box.x0 + xb);
          out.at(win, z, ty, tx) = (1 - wy) * ((1 - wx) * v00 + wx * v01) +
                                   wy * ((1 - wx) * v10 + wx * v11);
        }
      }
    }
  }
  return out;
}

// Full phase-1 pipeline for one study. Returns nullopt when the combined
// mask is empty (the study is excluded, not an error).
inline std::optional<RoiCrop> crop_study(const CtVolume& vol, const OrganMask& lung,
                                         const OrganMask& heart,
                                         const std::array<WindowSpec, 3>& windows,
                                         int target_h, int target_w) {
  if (lung.d != vol.d || lung.h != vol.h || lung.w != vol.w)
    throw DimMismatch("mask dims do not match volume");
  OrganMask combined = union_masks(lung, heart);
  if (combined.count() == 0) return std::nullopt;
  RoiCrop crop;
  crop.study_id = vol.study_id;
  crop.hull_mask = convex_hull_mask(combined);
  crop.bbox = roi_bounding_box(crop.hull_mask);
  crop.crop_ratio = static_cast<double>(crop.bbox.volume()) /
                    static_cast<double>(vol.size());
  WindowedVolume wvol = apply_windows(vol, windows);
  crop.cropped = crop_and_resize(wvol, crop.bbox, target_h, target_w);
  return crop;
}

struct CropStats {
  double mean = 0.0, min = 0.0, max = 0.0;
  std::vector<int> histogram;  // 10 bins over (0, 1]
};

inline CropStats crop_ratio_stats(const std::vector<double>& ratios) {
  if (ratios.empty()) throw EmptyInput("no crop ratios");
  CropStats st;
  st.histogram.assign(10, 0);
  st.min = ratios[0];
  st.max = ratios[0];
  double sum = 0.0;
  for (double r : ratios) {
    sum += r;
    st.min = std::min(st.min, r);
    st.max = std::max(st.max, r);
    int bin = std::clamp(static_cast<int>(r * 10.0), 0, 9);
    ++st.histogram[bin];
  }
  st.mean = sum / static_cast<double>(ratios.size());
  return st;
}

// ---- Mask file pair (dtype u8), same layout as the volume pair -------------

inline OrganMask load_mask(const std::filesystem::path& base, Organ organ) {
  auto j = detail::read_header(base.string() + ".json");
  if (j.value("dtype", "") != "u8")
    throw HeaderMismatch("expected dtype u8 in " + base.string() + ".json");
  OrganMask m;
  m.organ = organ;
  auto dims = j.at("dims").get<std::vector<int>>();
  if (dims.size() != 3) throw HeaderMismatch("bad dims in " + base.string() + ".json");
  m.d = dims[0];
  m.h = dims[1];
  m.w = dims[2];
  auto bytes = detail::read_payload(base.string() + ".raw");
  if (bytes.size() != m.size())
    throw HeaderMismatch("payload byte count does not match dims for " + base.string());
  m.bits.resize(m.size());
  std::memcpy(m.bits.data(), bytes.data(), bytes.size());
  for (uint8_t b : m.bits)
    if (b > 1) throw HeaderMismatch("mask values must be 0/1 in " + base.string());
  return m;
}

inline void save_mask(const OrganMask& m, const std::string& study_id,
                      const std::filesystem::path& base) {
  nlohmann::json j;
  j["study_id"] = study_id;
  j["dims"] = {m.d, m.h, m.w};
  j["dtype"] = "u8";
  j["byte_order"] = "little-endian";
  j["layout"] = "z-major,row-major";
  std::ofstream hdr(base.string() + ".json");
  if (!hdr) throw IoError("cannot write " + base.string() + ".json");
  hdr << j.dump(2) << "\n";
  std::ofstream raw(base.string() + ".raw", std::ios::binary);
  if (!raw) throw IoError("cannot write " + base.string() + ".raw");
  raw.write(reinterpret_cast<const char*>(m.bits.data()),
            static_cast<std::streamsize>(m.bits.size()));
}

}  // namespace pe
