#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "pe/common.hpp"

namespace pe {

struct ProbabilitySeries {
  std::string study_id;
  std::vector<double> rho;  // per-slice PE probabilities in [0,1]
};

struct VotingParams {
  double delta_slice = 0.5;
  int mu_study = 1;
};

struct Metrics {
  long tp = 0, fp = 0, fn = 0, tn = 0;
  std::optional<double> sensitivity, specificity, ppv, npv, f1;
};

// Positive iff strictly more than delta on at least mu slices:
// |{i : rho_i > delta}| >= mu.
inline bool vote(const ProbabilitySeries& series, const VotingParams& params) {
  long count = 0;
  for (double p : series.rho)
    if (p > params.delta_slice) ++count;
  return count >= params.mu_study;
}

inline Metrics compute_metrics(const std::vector<bool>& predictions,
                               const std::vector<bool>& labels) {
  if (predictions.size() != labels.size() || predictions.empty())
    throw LengthMismatch("compute_metrics: prediction/label lengths");
  Metrics m;
  for (size_t i = 0; i < predictions.size(); ++i) {
    if (predictions[i] && labels[i]) ++m.tp;
    else if (predictions[i] && !labels[i]) ++m.fp;
    else if (!predictions[i] && labels[i]) ++m.fn;
    else ++m.tn;
  }
  auto ratio = [](long num, long denom) -> std::optional<double> {
    if (denom == 0) return std::nullopt;
    return static_cast<double>(num) / static_cast<double>(denom);
  };
  m.sensitivity = ratio(m.tp, m.tp + m.fn);
  m.specificity = ratio(m.tn, m.tn + m.fp);
  m.ppv = ratio(m.tp, m.tp + m.fp);
  m.npv = ratio(m.tn, m.tn + m.fn);
  if (m.ppv && m.sensitivity && (*m.ppv + *m.sensitivity) > 0.0)
    m.f1 = 2.0 * *m.ppv * *m.sensitivity / (*m.ppv + *m.sensitivity);
  return m;
}

// F1 from ppv and sensitivity directly (table arithmetic).
inline double f1_from(double ppv, double sensitivity) {
  return 2.0 * ppv * sensitivity / (ppv + sensitivity);
}

namespace decision_detail {

// 2*tp/(2*tp+fp+fn); 0 when the model predicts no true positive.
inline double f1_counts(long tp, long fp, long fn) {
  const long denom = 2 * tp + fp + fn;
  return denom == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
}

inline double evaluate_pair(const std::vector<ProbabilitySeries>& series,
                            const std::vector<bool>& labels, double delta, int mu) {
  long tp = 0, fp = 0, fn = 0;
  VotingParams vp{delta, mu};
  for (size_t i = 0; i < series.size(); ++i) {
    const bool pred = vote(series[i], vp);
    if (pred && labels[i]) ++tp;
    else if (pred && !labels[i]) ++fp;
    else if (!pred && labels[i]) ++fn;
  }
  return f1_counts(tp, fp, fn);
}

}  // namespace decision_detail

struct TunedParams {
  VotingParams params;
  double f1 = 0.0;
};

// Exhaustive grid search maximizing validation F1. Delta candidates are
// the midpoints between consecutive distinct observed probabilities plus
// the extremes; mu ranges over 1..max series length. Ties break toward
// the largest delta, then the largest mu.
inline TunedParams tune_thresholds(const std::vector<ProbabilitySeries>& series,
                                   const std::vector<bool>& labels) {
  if (series.size() != labels.size())
    throw LengthMismatch("tune_thresholds: series/label lengths");
  bool any_pos = false, any_neg = false;
  for (bool l : labels) (l ? any_pos : any_neg) = true;
  if (!any_pos || !any_neg)
    throw DegenerateValidationSet("need at least one positive and one negative study");

  std::vector<double> observed;
  size_t max_len = 0;
  for (const auto& s : series) {
    observed.insert(observed.end(), s.rho.begin(), s.rho.end());
    max_len = std::max(max_len, s.rho.size());
  }
  std::sort(observed.begin(), observed.end());
  observed.erase(std::unique(observed.begin(), observed.end()), observed.end());

  std::vector<double> candidates;
  if (!observed.empty()) {
    candidates.push_back(std::max(0.0, observed.front() * 0.5));
    for (size_t i = 0; i + 1 < observed.size(); ++i)
      candidates.push_back(0.5 * (observed[i] + observed[i + 1]));
    candidates.push_back(std::min(1.0, 0.5 * (observed.back() + 1.0)));
  }
  if (candidates.empty()) candidates.push_back(0.5);

  TunedParams best;
  best.f1 = -1.0;
  for (double delta : candidates) {
    if (!(delta > 0.0 && delta < 1.0)) continue;
    for (int mu = 1; mu <= static_cast<int>(max_len); ++mu) {
      const double f1 = decision_detail::evaluate_pair(series, labels, delta, mu);
      const bool better =
          f1 > best.f1 + 1e-12 ||
          (std::fabs(f1 - best.f1) <= 1e-12 &&
           (delta > best.params.delta_slice + 1e-12 ||
            (std::fabs(delta - best.params.delta_slice) <= 1e-12 && mu > best.params.mu_study)));
      if (better) {
        best.f1 = f1;
        best.params = {delta, mu};
      }
    }
  }
  return best;
}

struct StudyVerdict {
  std::string study_id;
  bool prediction = false;
  bool label = false;
};

struct EvaluationReport {
  VotingParams params;
  Metrics metrics;
  std::vector<StudyVerdict> verdicts;
  std::vector<std::string> excluded;
  double exclusion_rate = 0.0;
};

inline EvaluationReport evaluate_studies(const std::vector<ProbabilitySeries>& series,
                                         const std::vector<bool>& labels,
                                         const VotingParams& params,
                                         const std::vector<std::string>& excluded = {}) {
  if (series.size() != labels.size())
    throw LengthMismatch("evaluate_studies: series/label lengths");
  EvaluationReport report;
  report.params = params;
  report.excluded = excluded;
  const size_t total = series.size() + excluded.size();
  report.exclusion_rate =
      total == 0 ? 0.0 : static_cast<double>(excluded.size()) / static_cast<double>(total);
  std::vector<bool> preds;
  preds.reserve(series.size());
  for (size_t i = 0; i < series.size(); ++i) {
    bool pred = vote(series[i], params);
    preds.push_back(pred);
    report.verdicts.push_back({series[i].study_id, pred, labels[i]});
  }
  if (!preds.empty()) report.metrics = compute_metrics(preds, labels);
  return report;
}

}  // namespace pe
