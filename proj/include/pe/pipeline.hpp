#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "pe/checkpoint.hpp"
#include "pe/common.hpp"
#include "pe/decision.hpp"
#include "pe/hopnet.hpp"
#include "pe/roi.hpp"
#include "pe/synth.hpp"
#include "pe/train.hpp"
#include "pe/volume.hpp"

namespace pe {

struct PipelineConfig {
  std::array<WindowSpec, 3> windows = default_windows();
  int input_h = 64, input_w = 64;
  ArchConfig arch = desk_arch();
  TrainConfig train;          // classification training (hop loops)
  TrainConfig pretrain;       // landmark pretraining
  SyntheticStudySpec synth;
  uint64_t seed = 0;

  void validate() const {
    if (input_h % 64 != 0 || input_w % 64 != 0)
      throw ConfigInvalid("input_size must be divisible by 64");
    arch.validate();
  }
};

inline PipelineConfig default_config() {
  PipelineConfig cfg;
  cfg.train.optimizer = {"lars", 0.003, 50, 400, 0.001, 0.0, 0.9};
  cfg.train.batch_size = 8;
  cfg.pretrain.optimizer = {"sgd", 0.1, 50, 300, 0.001, 0.0, 0.9};
  cfg.pretrain.batch_size = 8;
  cfg.train.augment_enabled = false;
  return cfg;
}

namespace config_detail {

inline OptimizerConfig parse_optimizer(const nlohmann::json& j, OptimizerConfig base) {
  base.kind = j.value("kind", base.kind);
  base.lr = j.value("lr", base.lr);
  base.warmup_steps = j.value("warmup_steps", base.warmup_steps);
  base.total_steps = j.value("total_steps", base.total_steps);
  base.trust_coeff = j.value("trust_coeff", base.trust_coeff);
  base.weight_decay = j.value("weight_decay", base.weight_decay);
  base.momentum = j.value("momentum", base.momentum);
  return base;
}

inline AugmentSpec parse_augment(const nlohmann::json& j, AugmentSpec base) {
  base.contrast_limit = j.value("contrast_limit", base.contrast_limit);
  base.shift_limit = j.value("shift_limit", base.shift_limit);
  base.scale_limit = j.value("scale_limit", base.scale_limit);
  base.rotate_limit_deg = j.value("rotate_limit_deg", base.rotate_limit_deg);
  base.cutout_holes = j.value("cutout_holes", base.cutout_holes);
  base.cutout_max_frac = j.value("cutout_max_frac", base.cutout_max_frac);
  base.seed = j.value("seed", base.seed);
  return base;
}

}  // namespace config_detail

inline PipelineConfig parse_config(const nlohmann::json& j) {
  PipelineConfig cfg = default_config();
  if (j.contains("preset")) {
    const std::string preset = j.at("preset");
    if (preset == "paper")
      cfg.arch = paper_arch();
    else if (preset != "desk")
      throw ConfigInvalid("unknown preset: " + preset);
  }
  if (j.contains("windows")) {
    auto ws = j.at("windows");
    if (ws.size() != 3) throw ConfigInvalid("windows must list exactly 3 entries");
    for (int i = 0; i < 3; ++i) {
      cfg.windows[i].center = ws[i].at("center");
      cfg.windows[i].width = ws[i].at("width");
      cfg.windows[i].name = ws[i].value("name", cfg.windows[i].name);
    }
  }
  if (j.contains("input_size")) {
    cfg.input_h = j.at("input_size")[0];
    cfg.input_w = j.at("input_size")[1];
  }
  if (j.contains("arch")) {
    const auto& a = j.at("arch");
    if (a.contains("channels")) cfg.arch.channels = a.at("channels").get<std::vector<int>>();
    cfg.arch.hops = a.value("hops", cfg.arch.hops);
    cfg.arch.landmarks = a.value("landmarks", cfg.arch.landmarks);
  }
  cfg.arch.input_h = cfg.input_h;
  cfg.arch.input_w = cfg.input_w;
  if (j.contains("train")) {
    const auto& t = j.at("train");
    cfg.train.optimizer = config_detail::parse_optimizer(
        t.value("optimizer", nlohmann::json::object()), cfg.train.optimizer);
    cfg.train.batch_size = t.value("batch_size", cfg.train.batch_size);
    cfg.train.augment_enabled = t.value("augment", cfg.train.augment_enabled);
    cfg.train.augment = config_detail::parse_augment(
        t.value("augment_spec", nlohmann::json::object()), cfg.train.augment);
  }
  if (j.contains("pretrain")) {
    const auto& t = j.at("pretrain");
    cfg.pretrain.optimizer = config_detail::parse_optimizer(
        t.value("optimizer", nlohmann::json::object()), cfg.pretrain.optimizer);
    cfg.pretrain.batch_size = t.value("batch_size", cfg.pretrain.batch_size);
  }
  if (j.contains("synth")) {
    const auto& s = j.at("synth");
    cfg.synth.d = s.value("d", cfg.synth.d);
    cfg.synth.h = s.value("h", cfg.synth.h);
    cfg.synth.w = s.value("w", cfg.synth.w);
    cfg.synth.max_lesions = s.value("max_lesions", cfg.synth.max_lesions);
    cfg.synth.landmarks = s.value("landmarks", cfg.synth.landmarks);
    cfg.synth.n_empty_masks = s.value("n_empty_masks", cfg.synth.n_empty_masks);
    cfg.synth.lesion_free_fraction =
        s.value("lesion_free_fraction", cfg.synth.lesion_free_fraction);
  }
  cfg.seed = j.value("seed", cfg.seed);
  cfg.synth.landmarks = cfg.arch.landmarks;
  cfg.train.seed = cfg.seed;
  cfg.pretrain.seed = cfg.seed;
  cfg.train.augment.seed = cfg.train.augment.seed ? cfg.train.augment.seed : cfg.seed;
  cfg.validate();
  return cfg;
}

inline PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingFile("missing config file: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigInvalid(std::string("config parse error: ") + e.what());
  }
  return parse_config(j);
}

// ---- Dataset on disk ---------------------------------------------------------
//
// <dir>/dataset.json           {"studies": [ids...]}
// <dir>/<id>.json|.raw         HU volume pair
// <dir>/<id>.lung.json|.raw    lung mask pair (u8)
// <dir>/<id>.heart.json|.raw   heart mask pair (u8)
// <dir>/labels.json            {id: [slice labels]}
// <dir>/landmarks.json         {id: [{x,y,z,present}]}

inline void write_dataset(const std::filesystem::path& dir,
                          const std::vector<SyntheticStudy>& studies) {
  std::filesystem::create_directories(dir);
  nlohmann::json ids = nlohmann::json::array();
  nlohmann::json labels = nlohmann::json::object();
  nlohmann::json landmarks = nlohmann::json::object();
  for (const auto& st : studies) {
    const std::string& id = st.volume.study_id;
    ids.push_back(id);
    save_volume(st.volume, dir / id);
    save_mask(st.lung, id, dir / (id + ".lung"));
    save_mask(st.heart, id, dir / (id + ".heart"));
    labels[id] = st.slice_labels;
    nlohmann::json lms = nlohmann::json::array();
    for (const auto& lm : st.landmarks)
      lms.push_back({{"x", lm.x}, {"y", lm.y}, {"z", lm.z}, {"present", lm.present}});
    landmarks[id] = lms;
  }
  std::ofstream ds(dir / "dataset.json");
  ds << nlohmann::json{{"studies", ids}}.dump(2) << "\n";
  std::ofstream lb(dir / "labels.json");
  lb << labels.dump(2) << "\n";
  std::ofstream lm(dir / "landmarks.json");
  lm << landmarks.dump(2) << "\n";
}

inline std::vector<std::string> read_study_ids(const std::filesystem::path& dir) {
  std::ifstream in(dir / "dataset.json");
  if (!in) throw MissingFile("missing dataset.json in " + dir.string());
  nlohmann::json j;
  in >> j;
  return j.at("studies").get<std::vector<std::string>>();
}

inline std::map<std::string, std::vector<int>> read_labels(
    const std::filesystem::path& dir) {
  std::ifstream in(dir / "labels.json");
  if (!in) throw MissingFile("missing labels.json in " + dir.string());
  nlohmann::json j;
  in >> j;
  std::map<std::string, std::vector<int>> out;
  for (auto it = j.begin(); it != j.end(); ++it)
    out[it.key()] = it.value().get<std::vector<int>>();
  return out;
}

inline std::map<std::string, std::vector<VoxelLandmark>> read_landmarks(
    const std::filesystem::path& dir) {
  std::ifstream in(dir / "landmarks.json");
  if (!in) throw MissingFile("missing landmarks.json in " + dir.string());
  nlohmann::json j;
  in >> j;
  std::map<std::string, std::vector<VoxelLandmark>> out;
  for (auto it = j.begin(); it != j.end(); ++it) {
    std::vector<VoxelLandmark> lms;
    for (const auto& lj : it.value())
      lms.push_back({lj.at("x"), lj.at("y"), lj.at("z"), lj.at("present")});
    out[it.key()] = lms;
  }
  return out;
}

// ---- Preprocessed crops --------------------------------------------------------
//
// <out>/<id>.crop.json + <out>/<id>.crop.raw  (f32, dims [3,D,th,tw])
// <out>/crop_stats.json                       crop-ratio report + exclusions

inline void save_crop(const RoiCrop& crop, const std::filesystem::path& base) {
  nlohmann::json j;
  j["study_id"] = crop.study_id;
  j["dims"] = {3, crop.cropped.d, crop.cropped.h, crop.cropped.w};
  j["dtype"] = "f32";
  j["byte_order"] = "little-endian";
  j["bbox"] = {crop.bbox.z0, crop.bbox.z1, crop.bbox.y0,
               crop.bbox.y1, crop.bbox.x0, crop.bbox.x1};
  j["crop_ratio"] = crop.crop_ratio;
  std::ofstream hdr(base.string() + ".json");
  if (!hdr) throw IoError("cannot write " + base.string() + ".json");
  hdr << j.dump(2) << "\n";
  std::vector<float> payload(crop.cropped.values.begin(), crop.cropped.values.end());
  std::ofstream raw(base.string() + ".raw", std::ios::binary);
  if (!raw) throw IoError("cannot write " + base.string() + ".raw");
  raw.write(reinterpret_cast<const char*>(payload.data()),
            static_cast<std::streamsize>(payload.size() * sizeof(float)));
}

inline WindowedVolume load_crop(const std::filesystem::path& base,
                                const std::array<WindowSpec, 3>& windows) {
  auto j = detail::read_header(base.string() + ".json");
  if (j.value("dtype", "") != "f32")
    throw HeaderMismatch("expected dtype f32 in " + base.string() + ".json");
  auto dims = j.at("dims").get<std::vector<int>>();
  if (dims.size() != 4 || dims[0] != 3) throw HeaderMismatch("bad crop dims");
  WindowedVolume wvol;
  wvol.windows = windows;
  wvol.d = dims[1];
  wvol.h = dims[2];
  wvol.w = dims[3];
  auto bytes = detail::read_payload(base.string() + ".raw");
  const size_t n = 3ull * wvol.d * wvol.h * wvol.w;
  if (bytes.size() != n * sizeof(float))
    throw HeaderMismatch("crop payload size mismatch for " + base.string());
  const float* payload = reinterpret_cast<const float*>(bytes.data());
  wvol.values.assign(payload, payload + n);
  return wvol;
}

struct PreprocessReport {
  std::vector<std::pair<std::string, double>> per_study;  // id, crop_ratio
  std::vector<std::string> excluded;
  CropStats stats;
};

inline PreprocessReport preprocess_dataset(const std::filesystem::path& data_dir,
                                           const std::filesystem::path& out_dir,
                                           const PipelineConfig& cfg) {
  std::filesystem::create_directories(out_dir);
  PreprocessReport report;
  std::vector<double> ratios;
  for (const auto& id : read_study_ids(data_dir)) {
    CtVolume vol = load_volume(data_dir / id);
    OrganMask lung = load_mask(data_dir / (id + ".lung"), Organ::Lung);
    OrganMask heart = load_mask(data_dir / (id + ".heart"), Organ::Heart);
    auto crop = crop_study(vol, lung, heart, cfg.windows, cfg.input_h, cfg.input_w);
    if (!crop) {
      report.excluded.push_back(id);
      continue;
    }
    save_crop(*crop, out_dir / (id + ".crop"));
    report.per_study.push_back({id, crop->crop_ratio});
    ratios.push_back(crop->crop_ratio);
  }
  if (!ratios.empty()) report.stats = crop_ratio_stats(ratios);

  nlohmann::json j;
  nlohmann::json per = nlohmann::json::array();
  for (const auto& [id, ratio] : report.per_study)
    per.push_back({{"study_id", id}, {"crop_ratio", ratio}});
  j["per_study"] = per;
  j["excluded"] = report.excluded;
  if (!ratios.empty()) {
    j["mean"] = report.stats.mean;
    j["min"] = report.stats.min;
    j["max"] = report.stats.max;
    j["histogram"] = report.stats.histogram;
  }
  std::ofstream out(out_dir / "crop_stats.json");
  out << j.dump(2) << "\n";
  return report;
}

// Slab-level training set from preprocessed crops. The slab label is the
// slice label of the slab's center slice, offset by the crop's z origin.
inline SlabDataset build_slab_dataset(const std::filesystem::path& crop_dir,
                                      const std::filesystem::path& data_dir,
                                      const PipelineConfig& cfg,
                                      std::vector<std::pair<std::string, int>>* slab_index = nullptr) {
  SlabDataset ds;
  ds.h = cfg.input_h;
  ds.w = cfg.input_w;
  auto labels = read_labels(data_dir);
  for (const auto& id : read_study_ids(data_dir)) {
    const auto crop_base = crop_dir / (id + ".crop");
    if (!std::filesystem::exists(crop_base.string() + ".json")) continue;  // excluded
    auto hdr = detail::read_header(crop_base.string() + ".json");
    const auto bbox = hdr.at("bbox").get<std::vector<int>>();
    WindowedVolume wvol = load_crop(crop_base, cfg.windows);
    SlabSeries slabs = assemble_slabs(wvol);
    const auto& slice_labels = labels.at(id);
    for (size_t i = 0; i < slabs.slabs.size(); ++i) {
      SlabSample sample;
      sample.slab = std::move(slabs.slabs[i]);
      sample.label = slice_labels.at(bbox[0] + i);
      ds.samples.push_back(std::move(sample));
      if (slab_index) slab_index->push_back({id, static_cast<int>(bbox[0] + i)});
    }
  }
  return ds;
}

inline LandmarkDataset build_landmark_dataset(const std::filesystem::path& crop_dir,
                                              const std::filesystem::path& data_dir,
                                              const PipelineConfig& cfg) {
  LandmarkDataset ds;
  ds.h = cfg.input_h;
  ds.w = cfg.input_w;
  auto landmark_map = read_landmarks(data_dir);
  for (const auto& id : read_study_ids(data_dir)) {
    const auto crop_base = crop_dir / (id + ".crop");
    if (!std::filesystem::exists(crop_base.string() + ".json")) continue;
    auto hdr = detail::read_header(crop_base.string() + ".json");
    const auto bbox = hdr.at("bbox").get<std::vector<int>>();
    WindowedVolume wvol = load_crop(crop_base, cfg.windows);
    SlabSeries slabs = assemble_slabs(wvol);
    auto raw = landmark_map.at(id);
    if (static_cast<int>(raw.size()) > cfg.arch.landmarks) raw.resize(cfg.arch.landmarks);
    raw.resize(cfg.arch.landmarks);
    // landmark x/y live in original voxel coordinates; remap into the crop frame
    const double sy = static_cast<double>(cfg.input_h) / (bbox[3] - bbox[2]);
    const double sx = static_cast<double>(cfg.input_w) / (bbox[5] - bbox[4]);
    for (size_t i = 0; i < slabs.slabs.size(); ++i) {
      LandmarkSample sample;
      sample.slab = std::move(slabs.slabs[i]);
      std::vector<VoxelLandmark> mapped = raw;
      for (auto& lm : mapped) {
        if (!lm.present) continue;
        lm.x = std::clamp((lm.x - bbox[4]) * sx, 0.0, cfg.input_w - 1e-9);
        lm.y = std::clamp((lm.y - bbox[2]) * sy, 0.0, cfg.input_h - 1e-9);
        lm.z = lm.z - bbox[0];  // crop frame slices
      }
      sample.targets = encode_landmarks(mapped, static_cast<int>(i), cfg.input_h, cfg.input_w);
      ds.samples.push_back(std::move(sample));
    }
  }
  return ds;
}

// ---- Predictions CSV and evaluation report -------------------------------------

inline void write_predictions_csv(const std::filesystem::path& path,
                                  const std::vector<ProbabilitySeries>& series) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "study_id,slice_index,probability\n";
  out.precision(17);
  for (const auto& s : series)
    for (size_t i = 0; i < s.rho.size(); ++i)
      out << s.study_id << "," << i << "," << s.rho[i] << "\n";
}

inline std::vector<ProbabilitySeries> read_predictions_csv(
    const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingFile("missing predictions file: " + path.string());
  std::string line;
  std::getline(in, line);  // header
  std::map<std::string, ProbabilitySeries> by_id;
  std::vector<std::string> order;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto c1 = line.find(',');
    const auto c2 = line.find(',', c1 + 1);
    if (c1 == std::string::npos || c2 == std::string::npos)
      throw HeaderMismatch("bad predictions row: " + line);
    const std::string id = line.substr(0, c1);
    if (!by_id.count(id)) {
      by_id[id].study_id = id;
      order.push_back(id);
    }
    by_id[id].rho.push_back(std::stod(line.substr(c2 + 1)));
  }
  std::vector<ProbabilitySeries> out;
  for (const auto& id : order) out.push_back(by_id[id]);
  return out;
}

inline nlohmann::json report_to_json(const EvaluationReport& report) {
  nlohmann::json j;
  j["params"] = {{"delta", report.params.delta_slice}, {"mu", report.params.mu_study}};
  nlohmann::json m;
  m["tp"] = report.metrics.tp;
  m["fp"] = report.metrics.fp;
  m["fn"] = report.metrics.fn;
  m["tn"] = report.metrics.tn;
  auto put = [&m](const char* key, const std::optional<double>& v) {
    if (v) m[key] = *v;
    else m[key] = nullptr;  // undefined ratios reported as absent, not 0
  };
  put("sensitivity", report.metrics.sensitivity);
  put("specificity", report.metrics.specificity);
  put("ppv", report.metrics.ppv);
  put("npv", report.metrics.npv);
  put("f1", report.metrics.f1);
  j["metrics"] = m;
  nlohmann::json verdicts = nlohmann::json::array();
  for (const auto& v : report.verdicts)
    verdicts.push_back({{"study_id", v.study_id},
                        {"prediction", v.prediction},
                        {"label", v.label}});
  j["verdicts"] = verdicts;
  j["excluded"] = report.excluded;
  j["exclusion_rate"] = report.exclusion_rate;
  return j;
}

// Study ground truth for synthetic data: OR over slice labels.
inline bool study_label(const std::vector<int>& slice_labels) {
  for (int l : slice_labels)
    if (l) return true;
  return false;
}

}  // namespace pe
