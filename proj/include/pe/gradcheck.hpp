#pragma once

#include <string>
#include <utility>
#include <vector>

#include "pe/common.hpp"
#include "pe/ops.hpp"
#include "pe/optim.hpp"

namespace pe {

struct GradCheckResult {
  std::string op;
  double max_rel_error = 0.0;
  double tolerance = 1e-4;
  bool passed() const { return max_rel_error < tolerance; }
};

namespace gradcheck_detail {

inline Tensor random_tensor(std::vector<int> shape, CounterRng& rng, double lo = -1.0,
                            double hi = 1.0) {
  Tensor t(std::move(shape), true);
  for (auto& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

// keeps inputs away from the relu kink
inline Tensor random_tensor_away_from_zero(std::vector<int> shape, CounterRng& rng) {
  Tensor t(std::move(shape), true);
  for (auto& v : t.data()) {
    double x = rng.uniform(-1.0, 1.0);
    v = x >= 0.0 ? x + 1e-2 : x - 1e-2;
  }
  return t;
}

inline Tensor sum_all(const Tensor& x) {
  // weighted sum so gradient structure is nontrivial
  Tensor w = Tensor::from_data(x.shape(), std::vector<double>(x.size()));
  for (size_t i = 0; i < x.size(); ++i)
    w.data()[i] = 0.3 + 0.01 * static_cast<double>(i % 17);
  Tensor out = autodiff_detail::make_result({1}, {x});
  double s = 0.0;
  for (size_t i = 0; i < x.size(); ++i) s += x.data()[i] * w.data()[i];
  out.data()[0] = s;
  auto self = out.impl().get();
  auto xp = x.impl();
  auto wd = w.data();
  out.impl()->backprop = [self, xp, wd]() {
    for (size_t i = 0; i < xp->grad.size(); ++i) xp->grad[i] += self->grad[0] * wd[i];
  };
  return out;
}

}  // namespace gradcheck_detail

// Finite-difference verification of every differentiable op over `seeds`
// random configurations each. Tolerance 1e-4 per op (1e-6 for the exactly
// linear ones), as enforced by the acceptance suite.
inline std::vector<GradCheckResult> run_gradcheck(int seeds = 20) {
  using namespace gradcheck_detail;
  std::vector<GradCheckResult> results;
  auto record = [&results](const std::string& op, double err, double tol) {
    for (auto& r : results)
      if (r.op == op) {
        r.max_rel_error = std::max(r.max_rel_error, err);
        return;
      }
    results.push_back({op, err, tol});
  };

  for (int seed = 0; seed < seeds; ++seed) {
    CounterRng rng(1000 + seed);
    const int h = 4 + static_cast<int>(rng.uniform_int(0, 3));
    const int w = 4 + static_cast<int>(rng.uniform_int(0, 3));
    const int cin = 1 + static_cast<int>(rng.uniform_int(0, 2));
    const int cout = 1 + static_cast<int>(rng.uniform_int(0, 2));

    {  // conv2d, stride 1 and 2
      for (int stride : {1, 2}) {
        Tensor x = random_tensor({cin, h, w}, rng);
        Tensor wgt = random_tensor({cout, cin, 3, 3}, rng);
        Tensor b = random_tensor({cout}, rng);
        auto loss = [&]() { return sum_all(conv2d(x, wgt, b, stride)); };
        record("conv2d", finite_difference_check(loss, {x, wgt, b}), 1e-4);
      }
    }
    {  // batch_norm2d (train mode)
      Tensor x = random_tensor({2, cin, h, w}, rng);
      Tensor gamma = random_tensor({cin}, rng, 0.5, 1.5);
      Tensor beta = random_tensor({cin}, rng);
      std::vector<double> rm(cin, 0.0), rv(cin, 1.0);
      auto loss = [&]() {
        auto rm2 = rm;
        auto rv2 = rv;  // keep stats fixed across fd evaluations
        return sum_all(batch_norm2d(x, gamma, beta, rm2, rv2, true));
      };
      record("batch_norm2d", finite_difference_check(loss, {x, gamma, beta}), 1e-4);
    }
    {  // relu probed away from the kink
      Tensor x = random_tensor_away_from_zero({cin, h, w}, rng);
      auto loss = [&]() { return sum_all(relu(x)); };
      record("relu", finite_difference_check(loss, {x}), 1e-6);
    }
    {  // linear (exactly linear in all arguments)
      Tensor x = random_tensor({6}, rng);
      Tensor wgt = random_tensor({3, 6}, rng);
      Tensor b = random_tensor({3}, rng);
      auto loss = [&]() { return sum_all(linear(x, wgt, b)); };
      record("linear", finite_difference_check(loss, {x, wgt, b}), 1e-6);
    }
    {  // concat_channels
      Tensor a = random_tensor({cin, h, w}, rng);
      Tensor b = random_tensor({cout, h, w}, rng);
      auto loss = [&]() { return sum_all(concat_channels(a, b)); };
      record("concat_channels", finite_difference_check(loss, {a, b}), 1e-6);
    }
    {  // global_avg_pool
      Tensor x = random_tensor({cin, h, w}, rng);
      auto loss = [&]() { return sum_all(global_avg_pool(x)); };
      record("global_avg_pool", finite_difference_check(loss, {x}), 1e-6);
    }
    {  // bilinear_upsample2x
      Tensor x = random_tensor({cin, h, w}, rng);
      auto loss = [&]() { return sum_all(bilinear_upsample2x(x)); };
      record("bilinear_upsample2x", finite_difference_check(loss, {x}), 1e-6);
    }
    {  // softmax_cross_entropy
      Tensor logits = random_tensor({4}, rng, -2.0, 2.0);
      const int label = static_cast<int>(rng.uniform_int(0, 3));
      auto loss = [&]() { return softmax_cross_entropy(logits, label); };
      record("softmax_cross_entropy", finite_difference_check(loss, {logits}), 1e-4);
    }
    {  // mse_loss
      Tensor pred = random_tensor({8}, rng);
      Tensor target = random_tensor({8}, rng);
      auto loss = [&]() { return mse_loss(pred, target); };
      record("mse_loss", finite_difference_check(loss, {pred, target}), 1e-4);
    }
    {  // masked_mse_loss
      Tensor pred = random_tensor({9}, rng);
      Tensor target = random_tensor({9}, rng);
      std::vector<double> mask(9, 0.0);
      for (int i = 0; i < 9; ++i) mask[i] = rng.next_unit() < 0.5 ? 1.0 : 0.0;
      mask[0] = 1.0;
      auto loss = [&]() { return masked_mse_loss(pred, target, mask); };
      record("masked_mse_loss", finite_difference_check(loss, {pred, target}), 1e-4);
    }
    {  // composed 3-layer net end to end
      Tensor x = random_tensor({cin, 8, 8}, rng);
      Tensor w1 = random_tensor({3, cin, 3, 3}, rng);
      Tensor b1 = random_tensor({3}, rng);
      Tensor w2 = random_tensor({4, 3, 3, 3}, rng);
      Tensor b2 = random_tensor({4}, rng);
      Tensor w3 = random_tensor({2, 4}, rng);
      Tensor b3 = random_tensor({2}, rng);
      auto loss = [&]() {
        Tensor y = relu(conv2d(x, w1, b1, 2));
        y = relu(conv2d(y, w2, b2, 1));
        return softmax_cross_entropy(linear(global_avg_pool(y), w3, b3), 1);
      };
      record("composed_net",
             finite_difference_check(loss, {x, w1, b1, w2, b2, w3, b3}), 1e-4);
    }
  }
  return results;
}

}  // namespace pe
