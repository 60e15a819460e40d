#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "pe/tensor.hpp"

namespace pe {

struct Parameter {
  Tensor tensor;
  std::string name;
  bool frozen = false;
};

using ParamList = std::vector<Parameter*>;

inline void sgd_step(const ParamList& params, double lr) {
  if (!(lr > 0.0)) throw ConfigInvalid("sgd_step: lr must be > 0");
  for (Parameter* p : params) {
    if (p->frozen) continue;
    auto& data = p->tensor.data();
    const auto& grad = p->tensor.grad();
    if (grad.size() != data.size()) continue;  // no grad computed this step
    for (size_t i = 0; i < data.size(); ++i) data[i] -= lr * grad[i];
  }
}

// Layer-wise adaptive rate scaling. The local rate for a layer is
// trust_coeff * ||p|| / (||g|| + weight_decay * ||p|| + 1e-9).
class Lars {
 public:
  explicit Lars(double lr, double trust_coeff = 0.001, double weight_decay = 0.0,
                double momentum = 0.9)
      : lr_(lr), trust_(trust_coeff), wd_(weight_decay), momentum_(momentum) {
    if (!(lr > 0.0)) throw ConfigInvalid("lars: lr must be > 0");
  }

  void set_lr(double lr) { lr_ = lr; }

  void step(const ParamList& params) {
    for (Parameter* p : params) {
      if (p->frozen) continue;
      auto& data = p->tensor.data();
      const auto& grad = p->tensor.grad();
      if (grad.size() != data.size()) continue;
      double pn = 0.0, gn = 0.0;
      for (size_t i = 0; i < data.size(); ++i) {
        pn += data[i] * data[i];
        gn += grad[i] * grad[i];
      }
      pn = std::sqrt(pn);
      gn = std::sqrt(gn);
      const double local_lr = trust_ * pn / (gn + wd_ * pn + 1e-9);
      auto& vel = velocity_[p->tensor.impl().get()];
      if (vel.size() != data.size()) vel.assign(data.size(), 0.0);
      for (size_t i = 0; i < data.size(); ++i) {
        vel[i] = momentum_ * vel[i] + lr_ * local_lr * (grad[i] + wd_ * data[i]);
        data[i] -= vel[i];
      }
    }
  }

 private:
  double lr_, trust_, wd_, momentum_;
  std::unordered_map<TensorImpl*, std::vector<double>> velocity_;
};

// Linear warmup from 0 to base_lr over warmup_steps, then linear decay
// to 0 at total_steps.
inline double lr_schedule(int step, double base_lr, int warmup_steps, int total_steps) {
  if (warmup_steps > 0 && step < warmup_steps)
    return base_lr * static_cast<double>(step + 1) / static_cast<double>(warmup_steps);
  if (total_steps <= warmup_steps) return base_lr;
  double t = static_cast<double>(step - warmup_steps) /
             static_cast<double>(total_steps - warmup_steps);
  return base_lr * std::max(0.0, 1.0 - t);
}

// Central-difference verification of analytic gradients. `loss_fn` must
// rebuild the graph from the current contents of `inputs` on every call.
// Returns the max relative error with denominator max(|a|,|n|,1e-8).
inline double finite_difference_check(const std::function<Tensor()>& loss_fn,
                                      const std::vector<Tensor>& inputs,
                                      double eps = 1e-5) {
  Tensor loss = loss_fn();
  backward(loss);
  std::vector<std::vector<double>> analytic;
  analytic.reserve(inputs.size());
  for (const auto& t : inputs) analytic.push_back(t.grad());

  double max_rel = 0.0;
  for (size_t k = 0; k < inputs.size(); ++k) {
    Tensor t = inputs[k];
    for (size_t i = 0; i < t.size(); ++i) {
      const double orig = t.data()[i];
      t.data()[i] = orig + eps;
      const double fp = loss_fn().item();
      t.data()[i] = orig - eps;
      const double fm = loss_fn().item();
      t.data()[i] = orig;
      const double numeric = (fp - fm) / (2.0 * eps);
      const double a = analytic[k].empty() ? 0.0 : analytic[k][i];
      const double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-8});
      max_rel = std::max(max_rel, std::fabs(a - numeric) / denom);
    }
  }
  return max_rel;
}

// Same check restricted to a subset of elements of each input, for large nets.
inline double finite_difference_spot_check(const std::function<Tensor()>& loss_fn,
                                           const std::vector<Tensor>& inputs,
                                           const std::vector<std::pair<size_t, size_t>>& probes,
                                           double eps = 1e-5) {
  Tensor loss = loss_fn();
  backward(loss);
  std::vector<std::vector<double>> analytic;
  analytic.reserve(inputs.size());
  for (const auto& t : inputs) analytic.push_back(t.grad());

  double max_rel = 0.0;
  for (const auto& [k, i] : probes) {
    Tensor t = inputs[k];
    const double orig = t.data()[i];
    t.data()[i] = orig + eps;
    const double fp = loss_fn().item();
    t.data()[i] = orig - eps;
    const double fm = loss_fn().item();
    t.data()[i] = orig;
    const double numeric = (fp - fm) / (2.0 * eps);
    // inputs not reachable from the loss have no grad vector at all
    const double a = i < analytic[k].size() ? analytic[k][i] : 0.0;
    const double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-8});
    max_rel = std::max(max_rel, std::fabs(a - numeric) / denom);
  }
  return max_rel;
}

}  // namespace pe
