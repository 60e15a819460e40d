#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "pe/pipeline.hpp"

namespace fs = std::filesystem;
using namespace pe;

namespace {

fs::path temp_dir(const char* name) {
  fs::path dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// small synthetic dataset on disk, returns (data_dir, crops_dir)
std::pair<fs::path, fs::path> make_dataset(const char* name, const PipelineConfig& cfg,
                                           int n_studies) {
  fs::path dir = temp_dir(name);
  std::vector<SyntheticStudy> studies;
  for (int i = 0; i < n_studies; ++i)
    studies.push_back(generate_study(cfg.synth, i, cfg.seed));
  write_dataset(dir / "data", studies);
  preprocess_dataset(dir / "data", dir / "crops", cfg);
  return {dir / "data", dir / "crops"};
}

PipelineConfig small_config() {
  PipelineConfig cfg = default_config();
  cfg.synth.d = 8;
  cfg.seed = 5;
  cfg.train.seed = 5;
  cfg.pretrain.seed = 5;
  return cfg;
}

}  // namespace

TEST(Config, DefaultsValidate) {
  PipelineConfig cfg = default_config();
  EXPECT_NO_THROW(cfg.validate());
  EXPECT_EQ(cfg.train.optimizer.kind, "lars");
  EXPECT_DOUBLE_EQ(cfg.train.optimizer.lr, 0.003);
  EXPECT_EQ(cfg.pretrain.optimizer.kind, "sgd");
  EXPECT_DOUBLE_EQ(cfg.pretrain.optimizer.lr, 0.1);
}

TEST(Config, ParseOverridesAndPreset) {
  nlohmann::json j;
  j["preset"] = "desk";
  j["seed"] = 99;
  j["input_size"] = {128, 64};
  j["train"] = {{"optimizer", {{"kind", "sgd"}, {"lr", 0.5}, {"total_steps", 7}}},
                {"batch_size", 3},
                {"augment", true}};
  j["arch"] = {{"hops", 2}, {"landmarks", 6}};
  auto cfg = parse_config(j);
  EXPECT_EQ(cfg.input_h, 128);
  EXPECT_EQ(cfg.input_w, 64);
  EXPECT_EQ(cfg.seed, 99u);
  EXPECT_EQ(cfg.train.seed, 99u);
  EXPECT_EQ(cfg.train.optimizer.kind, "sgd");
  EXPECT_DOUBLE_EQ(cfg.train.optimizer.lr, 0.5);
  EXPECT_EQ(cfg.train.batch_size, 3);
  EXPECT_TRUE(cfg.train.augment_enabled);
  EXPECT_EQ(cfg.arch.landmarks, 6);
  EXPECT_EQ(cfg.synth.landmarks, 6);  // synthetic landmarks follow the arch

  nlohmann::json bad = {{"preset", "gpu"}};
  EXPECT_THROW(parse_config(bad), ConfigInvalid);
  nlohmann::json bad_size = {{"input_size", {60, 64}}};
  EXPECT_THROW(parse_config(bad_size), ConfigInvalid);
}

TEST(Config, LoadRejectsMalformedJson) {
  fs::path dir = temp_dir("pe_test_cfg");
  std::ofstream(dir / "bad.json") << "{ not json";
  EXPECT_THROW(load_config(dir / "bad.json"), ConfigInvalid);
  EXPECT_THROW(load_config(dir / "missing.json"), MissingFile);
}

TEST(Dataset, WriteReadRoundTrip) {
  PipelineConfig cfg = small_config();
  fs::path dir = temp_dir("pe_test_ds");
  std::vector<SyntheticStudy> studies;
  for (int i = 0; i < 3; ++i) studies.push_back(generate_study(cfg.synth, i, 1));
  write_dataset(dir, studies);
  auto ids = read_study_ids(dir);
  ASSERT_EQ(ids.size(), 3u);
  EXPECT_EQ(ids[0], "study0");
  auto labels = read_labels(dir);
  EXPECT_EQ(labels.at("study1"), studies[1].slice_labels);
  auto lms = read_landmarks(dir);
  ASSERT_EQ(lms.at("study2").size(), studies[2].landmarks.size());
  EXPECT_DOUBLE_EQ(lms.at("study2")[0].x, studies[2].landmarks[0].x);
  CtVolume v = load_volume(dir / "study0");
  EXPECT_EQ(v.voxels, studies[0].volume.voxels);
  OrganMask m = load_mask(dir / "study0.lung", Organ::Lung);
  EXPECT_EQ(m.bits, studies[0].lung.bits);
}

TEST(Preprocess, WritesCropsAndStats) {
  PipelineConfig cfg = small_config();
  cfg.synth.n_empty_masks = 1;  // study0 must be excluded
  auto [data, crops] = make_dataset("pe_test_pre", cfg, 4);
  ASSERT_TRUE(fs::exists(crops / "crop_stats.json"));
  EXPECT_FALSE(fs::exists(crops / "study0.crop.json"));
  EXPECT_TRUE(fs::exists(crops / "study1.crop.json"));
  nlohmann::json st;
  std::ifstream(crops / "crop_stats.json") >> st;
  EXPECT_EQ(st.at("excluded"), (std::vector<std::string>{"study0"}));
  EXPECT_EQ(st.at("per_study").size(), 3u);
  EXPECT_TRUE(st.contains("mean") && st.contains("min") && st.contains("max"));
  EXPECT_GE(st.at("min").get<double>(), 0.0);
  EXPECT_LE(st.at("max").get<double>(), 1.0);
  // crop payload round-trips through the f32 pair
  WindowedVolume wv = load_crop(crops / "study1.crop", cfg.windows);
  EXPECT_EQ(wv.h, cfg.input_h);
  EXPECT_EQ(wv.w, cfg.input_w);
  for (double v : wv.values) {
    ASSERT_GE(v, 0.0);
    ASSERT_LE(v, 1.0);
  }
}

TEST(Preprocess, SlabDatasetLabelsFollowCropOffset) {
  PipelineConfig cfg = small_config();
  auto [data, crops] = make_dataset("pe_test_slabds", cfg, 3);
  std::vector<std::pair<std::string, int>> index;
  SlabDataset ds = build_slab_dataset(crops, data, cfg, &index);
  ASSERT_EQ(ds.samples.size(), index.size());
  ASSERT_GT(ds.samples.size(), 0u);
  auto labels = read_labels(data);
  for (size_t i = 0; i < ds.samples.size(); ++i) {
    const auto& [id, slice] = index[i];
    ASSERT_EQ(ds.samples[i].label, labels.at(id).at(slice));
    ASSERT_EQ(ds.samples[i].slab.size(),
              static_cast<size_t>(9) * cfg.input_h * cfg.input_w);
  }
}

TEST(Predictions, CsvRoundTrip) {
  fs::path dir = temp_dir("pe_test_csv");
  std::vector<ProbabilitySeries> series{{"a", {0.125, 0.99999999999999}},
                                        {"b", {1.0 / 3.0}}};
  write_predictions_csv(dir / "p.csv", series);
  auto back = read_predictions_csv(dir / "p.csv");
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].study_id, "a");
  ASSERT_EQ(back[0].rho.size(), 2u);
  EXPECT_DOUBLE_EQ(back[0].rho[0], 0.125);
  EXPECT_DOUBLE_EQ(back[0].rho[1], 0.99999999999999);
  EXPECT_DOUBLE_EQ(back[1].rho[0], 1.0 / 3.0);  // precision 17 is lossless
  std::ifstream in(dir / "p.csv");
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "study_id,slice_index,probability");
}

TEST(Report, JsonEncodesUndefinedAsNull) {
  std::vector<ProbabilitySeries> series{{"n1", {0.1}}, {"n2", {0.2}}};
  auto report = evaluate_studies(series, {false, false}, {0.5, 1});
  auto j = report_to_json(report);
  EXPECT_TRUE(j.at("metrics").at("sensitivity").is_null());
  EXPECT_TRUE(j.at("metrics").at("f1").is_null());
  EXPECT_DOUBLE_EQ(j.at("metrics").at("specificity").get<double>(), 1.0);
  EXPECT_EQ(j.at("verdicts").size(), 2u);
}

TEST(Train, LossDecreasesAndFrozenHopStaysBitIdentical) {
  PipelineConfig cfg = small_config();
  auto [data, crops] = make_dataset("pe_test_train", cfg, 2);
  SlabDataset ds = build_slab_dataset(crops, data, cfg);
  HopPipeline p = make_pipeline(cfg.arch, 5);

  TrainConfig tc;
  tc.optimizer = {"sgd", 0.05, 2, 12, 0.001, 0.0, 0.9};
  tc.batch_size = 4;
  tc.seed = 5;
  auto r1 = train_hop(p, ds, tc, 1);
  ASSERT_EQ(r1.loss_trace.size(), 12u);

  // snapshot every hop-1 value (params and running stats)
  std::vector<std::vector<double>> before;
  std::vector<StateEntry> hop1_state;
  p.encoders[0].state(hop1_state);
  for (const auto& e : hop1_state) before.push_back(*e.data);

  auto r2 = train_hop(p, ds, tc, 2);
  ASSERT_EQ(r2.loss_trace.size(), 12u);
  for (size_t i = 0; i < hop1_state.size(); ++i)
    ASSERT_EQ(*hop1_state[i].data, before[i]) << hop1_state[i].name;
}

TEST(Train, AugmentationPathIsDeterministic) {
  PipelineConfig cfg = small_config();
  auto [data, crops] = make_dataset("pe_test_trainaug", cfg, 2);
  SlabDataset ds = build_slab_dataset(crops, data, cfg);
  TrainConfig tc;
  tc.optimizer = {"lars", 0.01, 1, 5, 0.001, 0.0, 0.9};
  tc.batch_size = 4;
  tc.seed = 9;
  tc.augment_enabled = true;
  tc.augment.seed = 9;
  HopPipeline a = make_pipeline(cfg.arch, 5);
  HopPipeline b = make_pipeline(cfg.arch, 5);
  auto ra = train_hop(a, ds, tc, 1);
  auto rb = train_hop(b, ds, tc, 1);
  EXPECT_EQ(ra.loss_trace, rb.loss_trace);
}

TEST(Pretrain, MaskedLandmarkLossDecreases) {
  PipelineConfig cfg = small_config();
  auto [data, crops] = make_dataset("pe_test_pretrain", cfg, 2);
  LandmarkDataset ds = build_landmark_dataset(crops, data, cfg);
  ASSERT_GT(ds.samples.size(), 0u);
  CounterRng rng(5);
  TapEncoder enc(cfg.arch, ArchConfig::kSlabChannels, rng, "enc");
  LandmarkHead head(cfg.arch, rng, "head");
  TrainConfig tc;
  tc.optimizer = {"sgd", 0.1, 5, 40, 0.001, 0.0, 0.9};
  tc.batch_size = 8;
  tc.seed = 5;
  auto r = pretrain_landmarks(enc, head, ds, tc);
  EXPECT_LT(r.loss_trace.back(), r.loss_trace.front());

  // a dataset with no present landmark anywhere is rejected
  LandmarkDataset none = ds;
  for (auto& s : none.samples) std::fill(s.targets.present.begin(),
                                         s.targets.present.end(), 0);
  EXPECT_THROW(pretrain_landmarks(enc, head, none, tc), NoPresentLandmarks);
}

TEST(Infer, EvalModeIsDeterministic) {
  PipelineConfig cfg = small_config();
  auto [data, crops] = make_dataset("pe_test_infer", cfg, 1);
  WindowedVolume wv = load_crop(crops / "study0.crop", cfg.windows);
  SlabSeries slabs = assemble_slabs(wv);
  HopPipeline p = make_pipeline(cfg.arch, 5);
  auto s1 = infer_study(p, "study0", slabs.slabs, slabs.h, slabs.w);
  auto s2 = infer_study(p, "study0", slabs.slabs, slabs.h, slabs.w);
  EXPECT_EQ(s1.rho, s2.rho);
  ASSERT_EQ(s1.rho.size(), slabs.slabs.size());
  for (double r : s1.rho) {
    EXPECT_GT(r, 0.0);
    EXPECT_LT(r, 1.0);
  }
}
