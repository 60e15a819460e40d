// Command-line surface for the PE-detection pipeline: synthetic data,
// preprocessing, pretraining, hop training, inference, threshold tuning,
// evaluation and the gradient-check harness.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "pe/gradcheck.hpp"
#include "pe/pipeline.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitMissingPrerequisite = 3;
constexpr int kExitVerificationFailure = 4;

struct CommonOpts {
  std::string config_path;
  uint64_t seed = 0;
  bool seed_set = false;
  std::string preset;
};

pe::PipelineConfig resolve_config(const CommonOpts& opts) {
  pe::PipelineConfig cfg;
  if (!opts.config_path.empty()) {
    cfg = pe::load_config(opts.config_path);
  } else {
    cfg = pe::default_config();
  }
  if (!opts.preset.empty()) {
    if (opts.preset == "paper") {
      cfg.arch = pe::paper_arch();
      cfg.input_h = cfg.arch.input_h;
      cfg.input_w = cfg.arch.input_w;
    } else if (opts.preset != "desk") {
      throw pe::ConfigInvalid("unknown preset: " + opts.preset);
    }
  }
  if (opts.seed_set) {
    cfg.seed = opts.seed;
    cfg.train.seed = opts.seed;
    cfg.pretrain.seed = opts.seed;
    cfg.train.augment.seed = opts.seed;
  }
  cfg.synth.landmarks = cfg.arch.landmarks;
  cfg.validate();
  return cfg;
}

std::vector<pe::StateEntry> pipeline_state_upto(pe::HopPipeline& p, int hop) {
  std::vector<pe::StateEntry> out;
  for (int k = 1; k <= hop; ++k) p.encoders[k - 1].state(out);
  for (int k = 1; k < hop; ++k) p.aggregators[k - 1].state(out);
  return out;
}

void require_file(const fs::path& path, const std::string& what) {
  if (!fs::exists(path))
    throw pe::MissingPrerequisite(what + " not found: " + path.string());
}

int cmd_synth(const CommonOpts& opts, const std::string& out_dir, int n_studies) {
  pe::PipelineConfig cfg = resolve_config(opts);
  std::vector<pe::SyntheticStudy> studies;
  for (int i = 0; i < n_studies; ++i)
    studies.push_back(pe::generate_study(cfg.synth, i, cfg.seed));
  pe::write_dataset(out_dir, studies);
  std::cout << "wrote " << n_studies << " studies to " << out_dir << "\n";
  return kExitOk;
}

int cmd_preprocess(const CommonOpts& opts, const std::string& data_dir,
                   const std::string& out_dir) {
  pe::PipelineConfig cfg = resolve_config(opts);
  require_file(fs::path(data_dir) / "dataset.json", "dataset");
  auto report = pe::preprocess_dataset(data_dir, out_dir, cfg);
  std::cout << "cropped " << report.per_study.size() << " studies, excluded "
            << report.excluded.size() << "\n";
  if (!report.per_study.empty())
    std::cout << "crop ratio mean " << report.stats.mean << " min " << report.stats.min
              << " max " << report.stats.max << "\n";
  return kExitOk;
}

int cmd_pretrain(const CommonOpts& opts, const std::string& data_dir,
                 const std::string& crops_dir, const std::string& out_base) {
  pe::PipelineConfig cfg = resolve_config(opts);
  require_file(fs::path(crops_dir) / "crop_stats.json", "preprocessed crops");
  auto ds = pe::build_landmark_dataset(crops_dir, data_dir, cfg);
  pe::CounterRng rng(cfg.seed);
  pe::TapEncoder enc(cfg.arch, pe::ArchConfig::kSlabChannels, rng, "enc1");
  pe::LandmarkHead head(cfg.arch, rng, "lmhead");
  auto result = pe::pretrain_landmarks(enc, head, ds, cfg.pretrain);
  std::vector<pe::StateEntry> state;
  enc.state(state);
  head.state(state);
  pe::save_checkpoint(state, out_base);
  nlohmann::json trace;
  trace["loss_trace"] = result.loss_trace;
  std::ofstream tf(out_base + "_trace.json");
  tf << trace.dump(2) << "\n";
  std::cout << "pretrain final loss " << result.loss_trace.back() << "\n";
  return kExitOk;
}

int cmd_train(const CommonOpts& opts, const std::string& data_dir,
              const std::string& crops_dir, const std::string& out_dir, int hop,
              const std::string& init_ckpt) {
  pe::PipelineConfig cfg = resolve_config(opts);
  if (hop < 1 || hop > cfg.arch.hops) throw pe::ConfigInvalid("--hop out of range");
  require_file(fs::path(crops_dir) / "crop_stats.json", "preprocessed crops");
  fs::create_directories(out_dir);

  auto ds = pe::build_slab_dataset(crops_dir, data_dir, cfg);
  pe::HopPipeline pipeline = pe::make_pipeline(cfg.arch, cfg.seed);

  if (hop >= 2) {
    const fs::path prev = fs::path(out_dir) / ("hop" + std::to_string(hop - 1));
    require_file(prev.string() + ".json", "hop-" + std::to_string(hop - 1) + " checkpoint");
    pe::load_checkpoint(pipeline_state_upto(pipeline, hop - 1), prev);
    pe::warm_init_encoder(pipeline.encoders[hop - 2], pipeline.encoders[hop - 1]);
  } else if (!init_ckpt.empty()) {
    require_file(init_ckpt + ".json", "init checkpoint");
    std::vector<pe::StateEntry> enc_state;
    pipeline.encoders[0].state(enc_state);
    pe::load_checkpoint(enc_state, init_ckpt);
  }

  auto result = pe::train_hop(pipeline, ds, cfg.train, hop);

  const fs::path ckpt = fs::path(out_dir) / ("hop" + std::to_string(hop));
  pe::save_checkpoint(pipeline_state_upto(pipeline, hop), ckpt);
  // round-trip the weights so recorded probabilities match later inference
  pe::load_checkpoint(pipeline_state_upto(pipeline, hop), ckpt);

  std::vector<double> final_probs;
  for (const auto& sample : ds.samples) {
    pe::Tensor x = pe::Tensor::from_data({pe::ArchConfig::kSlabChannels, ds.h, ds.w},
                                         sample.slab);
    final_probs.push_back(pipeline.hop_forward(x)[hop - 1][0]);
  }
  nlohmann::json trace;
  trace["hop"] = hop;
  trace["loss_trace"] = result.loss_trace;
  trace["final_probabilities"] = final_probs;
  std::ofstream tf((fs::path(out_dir) / ("hop" + std::to_string(hop) + "_trace.json")));
  tf << trace.dump(2) << "\n";
  std::cout << "hop " << hop << " final loss " << result.loss_trace.back() << "\n";
  return kExitOk;
}

int cmd_infer(const CommonOpts& opts, const std::string& data_dir,
              const std::string& crops_dir, const std::string& model_base, int hop,
              const std::string& out_csv) {
  pe::PipelineConfig cfg = resolve_config(opts);
  require_file(model_base + ".json", "model checkpoint");
  pe::ArchConfig arch = cfg.arch;
  arch.hops = hop;
  pe::HopPipeline pipeline = pe::make_pipeline(arch, cfg.seed);
  pe::load_checkpoint(pipeline_state_upto(pipeline, hop), model_base);

  std::vector<pe::ProbabilitySeries> series;
  for (const auto& id : pe::read_study_ids(data_dir)) {
    const fs::path crop_base = fs::path(crops_dir) / (id + ".crop");
    if (!fs::exists(crop_base.string() + ".json")) continue;  // excluded study
    pe::WindowedVolume wvol = pe::load_crop(crop_base, cfg.windows);
    pe::SlabSeries slabs = pe::assemble_slabs(wvol);
    series.push_back(pe::infer_study(pipeline, id, slabs.slabs, slabs.h, slabs.w));
  }
  pe::write_predictions_csv(out_csv, series);
  std::cout << "wrote predictions for " << series.size() << " studies\n";
  return kExitOk;
}

std::vector<bool> study_labels_for(const std::vector<pe::ProbabilitySeries>& series,
                                   const std::string& data_dir) {
  auto labels = pe::read_labels(data_dir);
  std::vector<bool> out;
  for (const auto& s : series) out.push_back(pe::study_label(labels.at(s.study_id)));
  return out;
}

int cmd_tune(const CommonOpts&, const std::string& pred_csv, const std::string& data_dir,
             const std::string& out_json) {
  require_file(pred_csv, "predictions CSV");
  auto series = pe::read_predictions_csv(pred_csv);
  auto labels = study_labels_for(series, data_dir);
  auto tuned = pe::tune_thresholds(series, labels);
  nlohmann::json j;
  j["delta"] = tuned.params.delta_slice;
  j["mu"] = tuned.params.mu_study;
  j["f1"] = tuned.f1;
  std::ofstream out(out_json);
  out << j.dump(2) << "\n";
  std::cout << "tuned delta " << tuned.params.delta_slice << " mu "
            << tuned.params.mu_study << " f1 " << tuned.f1 << "\n";
  return kExitOk;
}

int cmd_eval(const CommonOpts&, const std::string& pred_csv, const std::string& data_dir,
             const std::string& crops_dir, const std::string& params_json,
             const std::string& out_json) {
  require_file(pred_csv, "predictions CSV");
  require_file(params_json, "voting params");
  auto series = pe::read_predictions_csv(pred_csv);
  auto labels = study_labels_for(series, data_dir);
  std::ifstream pf(params_json);
  nlohmann::json pj;
  pf >> pj;
  pe::VotingParams params{pj.at("delta"), pj.at("mu")};

  std::vector<std::string> excluded;
  const fs::path stats_path = fs::path(crops_dir) / "crop_stats.json";
  if (fs::exists(stats_path)) {
    std::ifstream sf(stats_path);
    nlohmann::json sj;
    sf >> sj;
    excluded = sj.value("excluded", std::vector<std::string>{});
  }
  auto report = pe::evaluate_studies(series, labels, params, excluded);
  std::ofstream out(out_json);
  out << pe::report_to_json(report).dump(2) << "\n";
  if (report.metrics.f1)
    std::cout << "f1 " << *report.metrics.f1 << "\n";
  std::cout << "excluded " << excluded.size() << " (rate " << report.exclusion_rate
            << ")\n";
  return kExitOk;
}

int cmd_gradcheck() {
  bool ok = true;
  for (const auto& r : pe::run_gradcheck(20)) {
    const bool pass = r.passed();
    ok = ok && pass;
    std::printf("%-22s max rel err %.3e (tol %.0e) %s\n", r.op.c_str(), r.max_rel_error,
                r.tolerance, pass ? "PASS" : "FAIL");
  }
  return ok ? kExitOk : kExitVerificationFailure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pulmonary-embolism detection pipeline"};
  app.require_subcommand(1);

  CommonOpts opts;
  std::string data_dir, crops_dir, out_path, pred_csv, params_json, model_base, init_ckpt;
  int n_studies = 20;
  int hop = 1;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", opts.config_path, "pipeline config JSON");
    sub->add_option("--seed", opts.seed, "RNG seed")->each([&](const std::string&) {
      opts.seed_set = true;
    });
    sub->add_option("--preset", opts.preset, "desk|paper");
  };

  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  add_common(synth);
  synth->add_option("--out", out_path, "output directory")->required();
  synth->add_option("--n", n_studies, "number of studies");

  auto* preprocess = app.add_subcommand("preprocess", "mask, hull, crop and window");
  add_common(preprocess);
  preprocess->add_option("--data", data_dir, "dataset directory")->required();
  preprocess->add_option("--out", out_path, "output directory")->required();

  auto* pretrain = app.add_subcommand("pretrain", "landmark-regression pretraining");
  add_common(pretrain);
  pretrain->add_option("--data", data_dir)->required();
  pretrain->add_option("--crops", crops_dir)->required();
  pretrain->add_option("--out", out_path, "checkpoint base path")->required();

  auto* train = app.add_subcommand("train", "train one hop");
  add_common(train);
  train->add_option("--data", data_dir)->required();
  train->add_option("--crops", crops_dir)->required();
  train->add_option("--out", out_path, "model directory")->required();
  train->add_option("--hop", hop, "hop index (1-based)")->required();
  train->add_option("--init", init_ckpt, "pretrained encoder checkpoint");

  auto* infer = app.add_subcommand("infer", "per-slice probabilities");
  add_common(infer);
  infer->add_option("--data", data_dir)->required();
  infer->add_option("--crops", crops_dir)->required();
  infer->add_option("--model", model_base, "checkpoint base path")->required();
  infer->add_option("--hop", hop, "hop count of the checkpoint")->required();
  infer->add_option("--out", out_path, "predictions CSV")->required();

  auto* tune = app.add_subcommand("tune", "grid-search voting thresholds");
  add_common(tune);
  tune->add_option("--pred", pred_csv)->required();
  tune->add_option("--data", data_dir)->required();
  tune->add_option("--out", out_path)->required();

  auto* eval = app.add_subcommand("eval", "study-level evaluation report");
  add_common(eval);
  eval->add_option("--pred", pred_csv)->required();
  eval->add_option("--data", data_dir)->required();
  eval->add_option("--crops", crops_dir);
  eval->add_option("--params", params_json)->required();
  eval->add_option("--out", out_path)->required();

  auto* gradcheck = app.add_subcommand("gradcheck", "verify analytic gradients");
  add_common(gradcheck);

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) return cmd_synth(opts, out_path, n_studies);
    if (preprocess->parsed()) return cmd_preprocess(opts, data_dir, out_path);
    if (pretrain->parsed()) return cmd_pretrain(opts, data_dir, crops_dir, out_path);
    if (train->parsed())
      return cmd_train(opts, data_dir, crops_dir, out_path, hop, init_ckpt);
    if (infer->parsed())
      return cmd_infer(opts, data_dir, crops_dir, model_base, hop, out_path);
    if (tune->parsed()) return cmd_tune(opts, pred_csv, data_dir, out_path);
    if (eval->parsed())
      return cmd_eval(opts, pred_csv, data_dir, crops_dir, params_json, out_path);
    if (gradcheck->parsed()) return cmd_gradcheck();
  } catch (const pe::ConfigInvalid& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const pe::MissingPrerequisite& e) {
    std::cerr << "missing prerequisite: " << e.what() << "\n";
    return kExitMissingPrerequisite;
  } catch (const pe::MissingFile& e) {
    std::cerr << "missing prerequisite: " << e.what() << "\n";
    return kExitMissingPrerequisite;
  } catch (const pe::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitVerificationFailure;
  }
  return kExitOk;
}
