#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <vector>

#include "json.hpp"
#include "pe/common.hpp"
#include "pe/hopnet.hpp"

namespace pe {

// Checkpoint pair: <base>.json manifest [{name, shape, offset}] plus
// <base>.bin, a little-endian 32-bit float flat payload. Offsets count
// elements, not bytes.
inline void save_checkpoint(const std::vector<StateEntry>& entries,
                            const std::filesystem::path& base) {
  nlohmann::json manifest = nlohmann::json::array();
  std::vector<float> payload;
  for (const auto& e : entries) {
    nlohmann::json item;
    item["name"] = e.name;
    item["shape"] = e.shape;
    item["offset"] = payload.size();
    manifest.push_back(item);
    for (double v : *e.data) payload.push_back(static_cast<float>(v));
  }
  std::ofstream hdr(base.string() + ".json");
  if (!hdr) throw IoError("cannot write " + base.string() + ".json");
  hdr << manifest.dump(2) << "\n";
  std::ofstream bin(base.string() + ".bin", std::ios::binary);
  if (!bin) throw IoError("cannot write " + base.string() + ".bin");
  bin.write(reinterpret_cast<const char*>(payload.data()),
            static_cast<std::streamsize>(payload.size() * sizeof(float)));
}

inline void load_checkpoint(const std::vector<StateEntry>& entries,
                            const std::filesystem::path& base) {
  std::ifstream hdr(base.string() + ".json");
  if (!hdr) throw MissingFile("missing checkpoint manifest: " + base.string() + ".json");
  nlohmann::json manifest;
  hdr >> manifest;
  std::ifstream bin(base.string() + ".bin", std::ios::binary);
  if (!bin) throw MissingFile("missing checkpoint payload: " + base.string() + ".bin");
  std::vector<char> bytes((std::istreambuf_iterator<char>(bin)),
                          std::istreambuf_iterator<char>());
  const float* payload = reinterpret_cast<const float*>(bytes.data());
  const size_t n_floats = bytes.size() / sizeof(float);

  std::unordered_map<std::string, const nlohmann::json*> by_name;
  for (const auto& item : manifest) by_name[item.at("name")] = &item;

  for (const auto& e : entries) {
    auto it = by_name.find(e.name);
    if (it == by_name.end())
      throw HeaderMismatch("checkpoint missing entry: " + e.name);
    const auto& item = *it->second;
    auto shape = item.at("shape").get<std::vector<int>>();
    if (shape != e.shape) throw HeaderMismatch("checkpoint shape mismatch for " + e.name);
    const size_t offset = item.at("offset").get<size_t>();
    if (offset + e.data->size() > n_floats)
      throw HeaderMismatch("checkpoint payload too short for " + e.name);
    for (size_t i = 0; i < e.data->size(); ++i)
      (*e.data)[i] = static_cast<double>(payload[offset + i]);
  }
}

}  // namespace pe
