#pragma once

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "pe/common.hpp"
#include "pe/ops.hpp"
#include "pe/optim.hpp"
#include "pe/tensor.hpp"

namespace pe {

// Named entry of model state: parameters plus batchnorm running buffers.
struct StateEntry {
  std::string name;
  std::vector<int> shape;
  std::vector<double>* data;
};

struct ArchConfig {
  std::vector<int> channels;  // tap channels, shallow to deep, 6 stages
  int hops = 2;
  int input_h = 64, input_w = 64;
  int landmarks = 4;  // K
  static constexpr int kStages = 6;
  static constexpr int kSlabChannels = 9;

  void validate() const {
    if (channels.size() != kStages) throw ConfigInvalid("channels must list 6 stages");
    if (hops < 1) throw ConfigInvalid("hops must be >= 1");
    if (input_h % 64 != 0 || input_w % 64 != 0)
      throw ConfigInvalid("input size must be divisible by 64");
    if (landmarks < 1 || landmarks > 20)
      throw ConfigInvalid("landmark count must be in 1..20");
  }
};

inline ArchConfig desk_arch() {
  ArchConfig cfg;
  cfg.channels = {16, 24, 32, 48, 64, 64};
  return cfg;
}

inline ArchConfig paper_arch() {
  ArchConfig cfg;
  cfg.channels = {32, 64, 96, 224, 1280, 1280};
  cfg.input_h = 576;
  cfg.input_w = 576;
  cfg.landmarks = 20;
  return cfg;
}

// ---- Layers -----------------------------------------------------------------

struct Conv2dLayer {
  Parameter weight, bias;
  int stride = 1;

  Conv2dLayer() = default;
  Conv2dLayer(int c_in, int c_out, int stride_, CounterRng& rng, const std::string& name)
      : stride(stride_) {
    weight.tensor = Tensor({c_out, c_in, 3, 3}, true);
    weight.name = name + ".weight";
    const double std_dev = std::sqrt(2.0 / (c_in * 9.0));  // He init
    for (auto& v : weight.tensor.data()) v = rng.next_gaussian() * std_dev;
    bias.tensor = Tensor({c_out}, true);
    bias.name = name + ".bias";
  }

  Tensor forward(const Tensor& x) const { return conv2d(x, weight.tensor, bias.tensor, stride); }

  void collect(ParamList& out) {
    out.push_back(&weight);
    out.push_back(&bias);
  }
  void state(std::vector<StateEntry>& out) {
    out.push_back({weight.name, weight.tensor.shape(), &weight.tensor.data()});
    out.push_back({bias.name, bias.tensor.shape(), &bias.tensor.data()});
  }
};

struct BatchNorm2dLayer {
  Parameter gamma, beta;
  std::vector<double> running_mean, running_var;
  std::string name;

  BatchNorm2dLayer() = default;
  BatchNorm2dLayer(int c, const std::string& name_) : name(name_) {
    gamma.tensor = Tensor({c}, true);
    std::fill(gamma.tensor.data().begin(), gamma.tensor.data().end(), 1.0);
    gamma.name = name + ".gamma";
    beta.tensor = Tensor({c}, true);
    beta.name = name + ".beta";
    running_mean.assign(c, 0.0);
    running_var.assign(c, 1.0);
  }

  Tensor forward(const Tensor& x, bool training) {
    return batch_norm2d(x, gamma.tensor, beta.tensor, running_mean, running_var, training);
  }

  void collect(ParamList& out) {
    out.push_back(&gamma);
    out.push_back(&beta);
  }
  void state(std::vector<StateEntry>& out) {
    out.push_back({gamma.name, gamma.tensor.shape(), &gamma.tensor.data()});
    out.push_back({beta.name, beta.tensor.shape(), &beta.tensor.data()});
    int c = gamma.tensor.shape()[0];
    out.push_back({name + ".running_mean", {c}, &running_mean});
    out.push_back({name + ".running_var", {c}, &running_var});
  }
};

struct LinearLayer {
  Parameter weight, bias;

  LinearLayer() = default;
  LinearLayer(int in, int out, CounterRng& rng, const std::string& name) {
    weight.tensor = Tensor({out, in}, true);
    weight.name = name + ".weight";
    const double std_dev = std::sqrt(2.0 / in);
    for (auto& v : weight.tensor.data()) v = rng.next_gaussian() * std_dev;
    bias.tensor = Tensor({out}, true);
    bias.name = name + ".bias";
  }

  Tensor forward(const Tensor& x) const { return linear(x, weight.tensor, bias.tensor); }

  void collect(ParamList& out) {
    out.push_back(&weight);
    out.push_back(&bias);
  }
  void state(std::vector<StateEntry>& out) {
    out.push_back({weight.name, weight.tensor.shape(), &weight.tensor.data()});
    out.push_back({bias.name, bias.tensor.shape(), &bias.tensor.data()});
  }
};

struct ConvBnRelu {
  Conv2dLayer conv;
  BatchNorm2dLayer bn;

  ConvBnRelu() = default;
  ConvBnRelu(int c_in, int c_out, int stride, CounterRng& rng, const std::string& name)
      : conv(c_in, c_out, stride, rng, name + ".conv"), bn(c_out, name + ".bn") {}

  Tensor forward(const Tensor& x, bool training) {
    return relu(bn.forward(conv.forward(x), training));
  }

  void collect(ParamList& out) {
    conv.collect(out);
    bn.collect(out);
  }
  void state(std::vector<StateEntry>& out) {
    conv.state(out);
    bn.state(out);
  }
};

// ---- Encoder (Theta): 6 strided stages emitting taps, GAP head -> 2 logits --

struct TapEncoder {
  int in_channels = 9;
  std::vector<ConvBnRelu> stages;
  LinearLayer head;

  struct Out {
    Tensor logits;                // (2) or (N,2)
    std::vector<Tensor> taps;     // 6 maps, H/2 .. H/64
  };

  TapEncoder() = default;
  TapEncoder(const ArchConfig& cfg, int in_ch, CounterRng& rng, const std::string& name)
      : in_channels(in_ch) {
    int prev = in_ch;
    for (int i = 0; i < ArchConfig::kStages; ++i) {
      stages.emplace_back(prev, cfg.channels[i], 2, rng,
                          name + ".stage" + std::to_string(i + 1));
      prev = cfg.channels[i];
    }
    head = LinearLayer(cfg.channels.back(), 2, rng, name + ".head");
  }

  Out forward(const Tensor& slab, bool training) {
    const auto& sh = slab.shape();
    const int c = sh.size() == 4 ? sh[1] : sh[0];
    const int h = sh.size() == 4 ? sh[2] : sh[1];
    const int w = sh.size() == 4 ? sh[3] : sh[2];
    if (c != in_channels) throw ShapeMismatch("encoder: unexpected channel count");
    if (h % 64 != 0 || w % 64 != 0)
      throw ShapeMismatch("encoder: H and W must be divisible by 64");
    Out out;
    Tensor x = slab;
    for (auto& stage : stages) {
      x = stage.forward(x, training);
      out.taps.push_back(x);
    }
    out.logits = head.forward(global_avg_pool(x));
    return out;
  }

  void collect(ParamList& out) {
    for (auto& s : stages) s.collect(out);
    head.collect(out);
  }
  void state(std::vector<StateEntry>& out) {
    for (auto& s : stages) s.state(out);
    head.state(out);
  }
};

// ---- Aggregator (Phi): 6 upsample blocks with skip concats ------------------
//
// Block = conv3x3 -> BN -> ReLU -> conv3x3 -> BN -> ReLU -> upsample2x.
// After each upsample the result is concatenated with the matching
// shallower tap; the shallowest partner is the 9-channel input slab.
// A final 3x3 conv projects to 9 channels at full resolution.

struct UpsampleBlock {
  ConvBnRelu a, b;

  UpsampleBlock() = default;
  UpsampleBlock(int c_in, int c_out, CounterRng& rng, const std::string& name)
      : a(c_in, c_out, 1, rng, name + ".a"), b(c_out, c_out, 1, rng, name + ".b") {}

  Tensor forward(const Tensor& x, bool training) {
    return bilinear_upsample2x(b.forward(a.forward(x, training), training));
  }

  void collect(ParamList& out) {
    a.collect(out);
    b.collect(out);
  }
  void state(std::vector<StateEntry>& out) {
    a.state(out);
    b.state(out);
  }
};

struct Aggregator {
  std::vector<UpsampleBlock> blocks;  // 6
  Conv2dLayer out_conv;               // (c1 + 9) -> 9

  Aggregator() = default;
  Aggregator(const ArchConfig& cfg, CounterRng& rng, const std::string& name) {
    const auto& c = cfg.channels;
    // block j consumes the concat of the previous block output with the
    // tap at its input resolution; block 1 consumes the deepest tap alone.
    int in = c[5];
    for (int j = 0; j < ArchConfig::kStages; ++j) {
      const int out_ch = j < 5 ? c[4 - j] : c[0];
      blocks.emplace_back(in, out_ch, rng, name + ".block" + std::to_string(j + 1));
      if (j < 5)
        in = out_ch + c[4 - j];  // concat with tap at the new resolution
      else
        in = out_ch + ArchConfig::kSlabChannels;
    }
    out_conv = Conv2dLayer(in, ArchConfig::kSlabChannels, 1, rng, name + ".out");
  }

  Tensor forward(const std::vector<Tensor>& taps, const Tensor& input_slab, bool training) {
    if (taps.size() != ArchConfig::kStages)
      throw ShapeMismatch("aggregator: expected 6 taps");
    Tensor x = taps[5];
    for (int j = 0; j < ArchConfig::kStages; ++j) {
      x = blocks[j].forward(x, training);
      x = concat_channels(x, j < 5 ? taps[4 - j] : input_slab);
    }
    return out_conv.forward(x);
  }

  void collect(ParamList& out) {
    for (auto& b : blocks) b.collect(out);
    out_conv.collect(out);
  }
  void state(std::vector<StateEntry>& out) {
    for (auto& b : blocks) b.state(out);
    out_conv.state(out);
  }
};

// ---- Hop pipeline ------------------------------------------------------------

struct HopPipeline {
  ArchConfig cfg;
  std::vector<TapEncoder> encoders;    // hop k -> encoders[k-1]
  std::vector<Aggregator> aggregators; // Phi_k -> aggregators[k-1]

  struct HopOut {
    std::vector<Tensor> logits;      // per hop
    std::vector<Tensor> aggregated;  // psi_agg per hop >= 2
  };

  // Runs hops 1..upto (all when upto <= 0). Hop k >= 2 consumes
  // concat(slab, psi_agg_k), an 18-channel input.
  HopOut forward(const Tensor& slab, bool training, int upto = -1,
                 const std::vector<bool>* hop_train_mode = nullptr) {
    const int n_hops = upto <= 0 ? static_cast<int>(encoders.size()) : upto;
    HopOut out;
    auto mode = [&](int hop) {
      if (!training) return false;
      if (hop_train_mode) return (*hop_train_mode)[hop - 1];
      return true;
    };
    TapEncoder::Out enc = encoders[0].forward(slab, mode(1));
    out.logits.push_back(enc.logits);
    for (int k = 2; k <= n_hops; ++k) {
      Tensor psi_agg = aggregators[k - 2].forward(enc.taps, slab, mode(k));
      out.aggregated.push_back(psi_agg);
      Tensor hop_input = concat_channels(slab, psi_agg);
      enc = encoders[k - 1].forward(hop_input, mode(k));
      out.logits.push_back(enc.logits);
    }
    return out;
  }

  // Per-hop PE probabilities (softmax component for class 1) for one slab
  // or a batch; result indexed [hop][sample].
  std::vector<std::vector<double>> hop_forward(const Tensor& slab) {
    HopOut out = forward(slab, false);
    std::vector<std::vector<double>> probs;
    for (const auto& logits : out.logits) {
      auto sm = softmax_values(logits);
      const int n = logits.dim() == 2 ? logits.shape()[0] : 1;
      std::vector<double> hop_probs(n);
      for (int b = 0; b < n; ++b) hop_probs[b] = sm[static_cast<size_t>(b) * 2 + 1];
      probs.push_back(std::move(hop_probs));
    }
    return probs;
  }

  ParamList encoder_params(int hop) {
    ParamList out;
    encoders.at(hop - 1).collect(out);
    return out;
  }
  ParamList aggregator_params(int k) {
    ParamList out;
    aggregators.at(k - 1).collect(out);
    return out;
  }
  ParamList params() {
    ParamList out;
    for (auto& e : encoders) e.collect(out);
    for (auto& a : aggregators) a.collect(out);
    return out;
  }
  std::vector<StateEntry> state() {
    std::vector<StateEntry> out;
    for (auto& e : encoders) e.state(out);
    for (auto& a : aggregators) a.state(out);
    return out;
  }
};

inline HopPipeline make_pipeline(const ArchConfig& cfg, uint64_t seed) {
  cfg.validate();
  HopPipeline p;
  p.cfg = cfg;
  CounterRng rng(seed);
  for (int k = 1; k <= cfg.hops; ++k) {
    const int in_ch = k == 1 ? ArchConfig::kSlabChannels : 2 * ArchConfig::kSlabChannels;
    p.encoders.emplace_back(cfg, in_ch, rng, "enc" + std::to_string(k));
  }
  for (int k = 1; k < cfg.hops; ++k)
    p.aggregators.emplace_back(cfg, rng, "agg" + std::to_string(k));
  return p;
}

// Copies hop-1 weights into a later encoder. The first conv keeps the
// learned filters on the 9 slab channels and zeroes the 9 aggregated
// channels, so the warm-started hop reproduces hop 1 at step 0.
inline void warm_init_encoder(const TapEncoder& src, TapEncoder& dst) {
  for (size_t i = 0; i < src.stages.size(); ++i) {
    const auto& sw = src.stages[i].conv.weight.tensor;
    auto& dw = dst.stages[i].conv.weight.tensor;
    if (i == 0) {
      const int c_out = dw.shape()[0];
      const int c_in_src = sw.shape()[1];
      const int c_in_dst = dw.shape()[1];
      std::fill(dw.data().begin(), dw.data().end(), 0.0);
      for (int co = 0; co < c_out; ++co)
        for (int ci = 0; ci < c_in_src; ++ci)
          for (int k = 0; k < 9; ++k)
            dw.data()[(static_cast<size_t>(co) * c_in_dst + ci) * 9 + k] =
                sw.data()[(static_cast<size_t>(co) * c_in_src + ci) * 9 + k];
    } else {
      dw.data() = sw.data();
    }
    dst.stages[i].conv.bias.tensor.data() = src.stages[i].conv.bias.tensor.data();
    dst.stages[i].bn.gamma.tensor.data() = src.stages[i].bn.gamma.tensor.data();
    dst.stages[i].bn.beta.tensor.data() = src.stages[i].bn.beta.tensor.data();
    dst.stages[i].bn.running_mean = src.stages[i].bn.running_mean;
    dst.stages[i].bn.running_var = src.stages[i].bn.running_var;
  }
  dst.head.weight.tensor.data() = src.head.weight.tensor.data();
  dst.head.bias.tensor.data() = src.head.bias.tensor.data();
}

// ---- Landmark pretraining targets -------------------------------------------

// Per landmark: (x/W, y/H, z01) with z01 = (z - z_center)/1200 + 0.5,
// i.e. the relative slice distance divided by 600 then shifted to [0,1].
struct LandmarkTargets {
  std::vector<double> coords;    // 3K, encoded
  std::vector<uint8_t> present;  // K
};

struct VoxelLandmark {
  double x = 0, y = 0, z = 0;
  bool present = false;
};

constexpr double kLandmarkZRange = 600.0;

inline LandmarkTargets encode_landmarks(const std::vector<VoxelLandmark>& raw,
                                        int center_slice, int h, int w) {
  LandmarkTargets t;
  t.coords.assign(raw.size() * 3, 0.0);
  t.present.assign(raw.size(), 0);
  for (size_t i = 0; i < raw.size(); ++i) {
    if (!raw[i].present) continue;
    if (raw[i].x < 0 || raw[i].x >= w || raw[i].y < 0 || raw[i].y >= h)
      throw OutOfEncodableRange("landmark x/y outside volume");
    const double dz = raw[i].z - center_slice;
    if (std::fabs(dz) > kLandmarkZRange)
      throw OutOfEncodableRange("landmark slice offset exceeds 600");
    t.coords[3 * i + 0] = raw[i].x / w;
    t.coords[3 * i + 1] = raw[i].y / h;
    t.coords[3 * i + 2] = dz / kLandmarkZRange / 2.0 + 0.5;
    t.present[i] = 1;
  }
  return t;
}

inline std::vector<VoxelLandmark> decode_landmarks(const LandmarkTargets& t,
                                                   int center_slice, int h, int w) {
  std::vector<VoxelLandmark> out(t.present.size());
  for (size_t i = 0; i < t.present.size(); ++i) {
    if (!t.present[i]) continue;
    out[i].present = true;
    out[i].x = t.coords[3 * i + 0] * w;
    out[i].y = t.coords[3 * i + 1] * h;
    out[i].z = (t.coords[3 * i + 2] - 0.5) * 2.0 * kLandmarkZRange + center_slice;
  }
  return out;
}

// Small residual conv head over the deepest unpooled tap, then GAP and a
// linear map to 3K regression outputs.
struct LandmarkHead {
  ConvBnRelu c1;
  Conv2dLayer c2;
  BatchNorm2dLayer bn2;
  LinearLayer fc;

  LandmarkHead() = default;
  LandmarkHead(const ArchConfig& cfg, CounterRng& rng, const std::string& name) {
    const int c = cfg.channels.back();
    c1 = ConvBnRelu(c, c, 1, rng, name + ".c1");
    c2 = Conv2dLayer(c, c, 1, rng, name + ".c2");
    bn2 = BatchNorm2dLayer(c, name + ".bn2");
    fc = LinearLayer(c, 3 * cfg.landmarks, rng, name + ".fc");
  }

  Tensor forward(const Tensor& deepest_tap, bool training) {
    Tensor y = bn2.forward(c2.forward(c1.forward(deepest_tap, training)), training);
    return fc.forward(global_avg_pool(relu(add(y, deepest_tap))));
  }

  void collect(ParamList& out) {
    c1.collect(out);
    c2.collect(out);
    bn2.collect(out);
    fc.collect(out);
  }
  void state(std::vector<StateEntry>& out) {
    c1.state(out);
    c2.state(out);
    bn2.state(out);
    fc.state(out);
  }
};

}  // namespace pe
