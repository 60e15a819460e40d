#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "pe/common.hpp"

namespace pe {

constexpr int16_t kHuMin = -2048;
constexpr int16_t kHuMax = 4096;

// Raw CT study: signed HU voxels, z-major row-major layout.
struct CtVolume {
  std::vector<int16_t> voxels;
  int d = 0, h = 0, w = 0;
  std::array<double, 3> spacing = {1.0, 1.0, 1.0};  // dz, dy, dx in mm
  std::string study_id;

  size_t index(int z, int y, int x) const {
    return static_cast<size_t>(z) * h * w + static_cast<size_t>(y) * w + x;
  }
  int16_t at(int z, int y, int x) const { return voxels[index(z, y, x)]; }
  int16_t& at(int z, int y, int x) { return voxels[index(z, y, x)]; }
  size_t size() const { return static_cast<size_t>(d) * h * w; }
};

struct WindowSpec {
  double center = 0.0;
  double width = 1.0;
  std::string name;
};

// Default window triple: lung, PE-specific, mediastinal (soft tissue).
inline std::array<WindowSpec, 3> default_windows() {
  return {WindowSpec{-600.0, 1500.0, "lung"}, WindowSpec{100.0, 700.0, "pe"},
          WindowSpec{40.0, 400.0, "mediastinal"}};
}

// (3, D, H, W) normalized volume, one channel per HU window.
struct WindowedVolume {
  std::vector<double> values;
  std::array<WindowSpec, 3> windows;
  int d = 0, h = 0, w = 0;

  size_t index(int win, int z, int y, int x) const {
    return ((static_cast<size_t>(win) * d + z) * h + y) * w + x;
  }
  double at(int win, int z, int y, int x) const { return values[index(win, z, y, x)]; }
  double& at(int win, int z, int y, int x) { return values[index(win, z, y, x)]; }
};

// Per-slice 9-channel network inputs. Channel order is window-major,
// slice-minor: channel 3w + s holds window w of slice clamp(i + s - 1).
struct SlabSeries {
  std::vector<std::vector<double>> slabs;  // each (9, H, W)
  std::vector<int> center_index;
  int h = 0, w = 0;
  static constexpr int kChannels = 9;
};

inline double apply_window_value(double v, const WindowSpec& ws) {
  return std::clamp((v - ws.center) / ws.width + 0.5, 0.0, 1.0);
}

inline WindowedVolume apply_windows(const CtVolume& vol,
                                    const std::array<WindowSpec, 3>& windows) {
  for (const auto& ws : windows)
    if (!(ws.width > 0.0)) throw ConfigInvalid("window width must be > 0");
  WindowedVolume out;
  out.windows = windows;
  out.d = vol.d;
  out.h = vol.h;
  out.w = vol.w;
  out.values.resize(3 * vol.size());
  const size_t n = vol.size();
  for (int win = 0; win < 3; ++win) {
    const WindowSpec& ws = windows[win];
    for (size_t i = 0; i < n; ++i)
      out.values[win * n + i] = apply_window_value(vol.voxels[i], ws);
  }
  return out;
}

inline SlabSeries assemble_slabs(const WindowedVolume& wvol) {
  SlabSeries series;
  series.h = wvol.h;
  series.w = wvol.w;
  const int d = wvol.d;
  const size_t plane = static_cast<size_t>(wvol.h) * wvol.w;
  series.slabs.reserve(d);
  series.center_index.reserve(d);
  for (int i = 0; i < d; ++i) {
    std::vector<double> slab(9 * plane);
    for (int win = 0; win < 3; ++win) {
      for (int s = 0; s < 3; ++s) {
        int z = std::clamp(i + s - 1, 0, d - 1);
        const double* src = wvol.values.data() + wvol.index(win, z, 0, 0);
        std::copy(src, src + plane, slab.data() + (3 * win + s) * plane);
      }
    }
    series.slabs.push_back(std::move(slab));
    series.center_index.push_back(i);
  }
  return series;
}

// ---- Volume file pair: <id>.json header + <id>.raw payload -----------------

namespace detail {

inline nlohmann::json read_header(const std::filesystem::path& json_path) {
  std::ifstream in(json_path);
  if (!in) throw MissingFile("missing header file: " + json_path.string());
  nlohmann::json j;
  in >> j;
  return j;
}

inline std::vector<char> read_payload(const std::filesystem::path& raw_path) {
  std::ifstream in(raw_path, std::ios::binary);
  if (!in) throw MissingFile("missing raw file: " + raw_path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)),
                          std::istreambuf_iterator<char>());
  return bytes;
}

}  // namespace detail

// `base` is the path without extension; reads base.json + base.raw.
inline CtVolume load_volume(const std::filesystem::path& base) {
  auto j = detail::read_header(base.string() + ".json");
  if (j.value("dtype", "") != "i16")
    throw HeaderMismatch("expected dtype i16 in " + base.string() + ".json");
  CtVolume vol;
  vol.study_id = j.value("study_id", base.filename().string());
  auto dims = j.at("dims").get<std::vector<int>>();
  if (dims.size() != 3 || dims[0] < 1 || dims[1] < 1 || dims[2] < 1)
    throw HeaderMismatch("bad dims in " + base.string() + ".json");
  vol.d = dims[0];
  vol.h = dims[1];
  vol.w = dims[2];
  if (j.contains("spacing")) {
    auto sp = j.at("spacing").get<std::vector<double>>();
    if (sp.size() != 3) throw HeaderMismatch("bad spacing");
    vol.spacing = {sp[0], sp[1], sp[2]};
  }
  auto bytes = detail::read_payload(base.string() + ".raw");
  if (bytes.size() != vol.size() * sizeof(int16_t))
    throw HeaderMismatch("payload byte count does not match dims for " + base.string());
  vol.voxels.resize(vol.size());
  std::memcpy(vol.voxels.data(), bytes.data(), bytes.size());
  for (int16_t v : vol.voxels)
    if (v < kHuMin || v > kHuMax)
      throw HuRangeViolation("HU value out of [-2048, 4096] in " + base.string());
  return vol;
}

inline void save_volume(const CtVolume& vol, const std::filesystem::path& base) {
  nlohmann::json j;
  j["study_id"] = vol.study_id;
  j["dims"] = {vol.d, vol.h, vol.w};
  j["spacing"] = {vol.spacing[0], vol.spacing[1], vol.spacing[2]};
  j["dtype"] = "i16";
  j["byte_order"] = "little-endian";
  j["layout"] = "z-major,row-major";
  std::ofstream hdr(base.string() + ".json");
  if (!hdr) throw IoError("cannot write " + base.string() + ".json");
  hdr << j.dump(2) << "\n";
  std::ofstream raw(base.string() + ".raw", std::ios::binary);
  if (!raw) throw IoError("cannot write " + base.string() + ".raw");
  raw.write(reinterpret_cast<const char*>(vol.voxels.data()),
            static_cast<std::streamsize>(vol.voxels.size() * sizeof(int16_t)));
}

}  // namespace pe
