#pragma once

// Decision Margin, Option Frequency, KL to the label distribution, and
// transition-point detection.

#include <cmath>
#include <optional>
#include <span>
#include <vector>

#include "prunelens/numerics.hpp"
#include "prunelens/probes.hpp"
#include "prunelens/tasks.hpp"

namespace prunelens {

inline constexpr double kDefaultKlSmoothing = 1e-6;

// Score of the correct option minus the strongest distractor.
inline double sample_margin(std::span<const double> z, std::size_t correct) {
  if (z.size() < 2) throw DataError("decision margin: need at least 2 options");
  if (correct >= z.size()) throw DataError("decision margin: correct index out of range");
  double best_other = -INFINITY;
  for (std::size_t j = 0; j < z.size(); ++j) {
    if (j != correct) best_other = std::max(best_other, z[j]);
  }
  return z[correct] - best_other;
}

// DM = (1/N) sum_i (z_ic - max_{j != c} z_ij) over rows of an N x M score matrix.
inline double decision_margin(const Tensor2& scores, std::span<const std::size_t> correct) {
  if (scores.rows() == 0) throw ArgumentError("decision margin: no samples");
  if (correct.size() != scores.rows()) throw ArgumentError("decision margin: labels not aligned");
  double total = 0.0;
  for (std::size_t i = 0; i < scores.rows(); ++i) total += sample_margin(scores.row(i), correct[i]);
  return total / static_cast<double>(scores.rows());
}

inline double decision_margin(const DecisionTrace& trace, std::size_t local_layer) {
  return decision_margin(trace.scores.at(local_layer), trace.correct);
}

// OF(j) = fraction of rows whose argmax is j (lowest index wins ties).
inline std::vector<double> option_frequency(const Tensor2& scores) {
  if (scores.rows() == 0) throw ArgumentError("option frequency: no samples");
  std::vector<double> of(scores.cols(), 0.0);
  for (std::size_t i = 0; i < scores.rows(); ++i) of[argmax(scores.row(i))] += 1.0;
  for (double& v : of) v /= static_cast<double>(scores.rows());
  return of;
}

inline std::vector<double> option_frequency(const DecisionTrace& trace, std::size_t local_layer) {
  return option_frequency(trace.scores.at(local_layer));
}

inline double trace_accuracy(const Tensor2& scores, std::span<const std::size_t> correct) {
  if (scores.rows() == 0) throw ArgumentError("accuracy: no samples");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < scores.rows(); ++i) {
    if (argmax(scores.row(i)) == correct[i]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(scores.rows());
}

// KL(p || q) after adding alpha to every entry of both and renormalizing.
inline double kl_to_labels(std::span<const double> of, std::span<const double> labels,
                           double alpha = kDefaultKlSmoothing) {
  if (of.size() != labels.size()) throw ArgumentError("kl: length mismatch");
  if (of.empty()) throw ArgumentError("kl: empty distributions");
  if (alpha < 0.0) throw ArgumentError("kl: smoothing must be nonnegative");
  auto smooth = [&](std::span<const double> v) {
    std::vector<double> s(v.size());
    double total = 0.0;
    for (std::size_t j = 0; j < v.size(); ++j) {
      if (v[j] < 0.0) throw ArgumentError("kl: negative probability");
      s[j] = v[j] + alpha;
      total += s[j];
    }
    for (double& x : s) x /= total;
    return s;
  };
  const auto p = smooth(of), q = smooth(labels);
  double kl = 0.0;
  for (std::size_t j = 0; j < p.size(); ++j) {
    if (p[j] == 0.0) continue;
    if (q[j] == 0.0) return INFINITY;
    kl += p[j] * std::log(p[j] / q[j]);
  }
  return std::max(0.0, kl);
}

struct DensePoint {
  std::size_t dense_layer = 0;
  double value = 0.0;
  friend bool operator==(const DensePoint&, const DensePoint&) = default;
};

struct TransitionReport {
  std::optional<std::size_t> layer;  // dense axis
  std::optional<std::size_t> sustain;  // nullopt: positivity sustained to the final layer
  std::vector<DensePoint> profile;
};

// First layer from which DM stays strictly positive: through the end of the
// profile by default, or for `sustain` consecutive layers (windows truncated
// at the end of the profile count as sustained).
inline TransitionReport detect_transition(std::vector<DensePoint> profile,
                                          std::optional<std::size_t> sustain = std::nullopt) {
  if (sustain && *sustain == 0) throw ArgumentError("detect_transition: sustain window must be >= 1");
  TransitionReport rep;
  rep.sustain = sustain;
  const std::size_t n = profile.size();
  for (std::size_t i = 0; i < n && !rep.layer; ++i) {
    const std::size_t end = sustain ? std::min(n, i + *sustain) : n;
    bool ok = true;
    for (std::size_t k = i; k < end && ok; ++k) ok = profile[k].value > 0.0;
    if (ok) rep.layer = profile[i].dense_layer;
  }
  rep.profile = std::move(profile);
  return rep;
}

inline std::vector<DensePoint> dm_profile(const DecisionTrace& trace) {
  std::vector<DensePoint> out;
  for (std::size_t k = 0; k < trace.layer_count(); ++k) {
    out.push_back({trace.dense_index(k), decision_margin(trace, k)});
  }
  return out;
}

struct LayerMetricsRow {
  std::size_t local_layer = 0;
  std::size_t dense_layer = 0;
  double dm = 0.0;
  std::vector<double> of;
  double kl = 0.0;
  double accuracy = 0.0;
};

inline std::vector<LayerMetricsRow> layer_metrics(const DecisionTrace& trace, const LabelDistribution& labels,
                                                  double alpha = kDefaultKlSmoothing) {
  trace.validate();
  std::vector<LayerMetricsRow> rows;
  for (std::size_t k = 0; k < trace.layer_count(); ++k) {
    LayerMetricsRow r;
    r.local_layer = k;
    r.dense_layer = trace.dense_index(k);
    r.dm = decision_margin(trace, k);
    r.of = option_frequency(trace, k);
    r.kl = kl_to_labels(r.of, labels.p, alpha);
    r.accuracy = trace_accuracy(trace.scores[k], trace.correct);
    rows.push_back(std::move(r));
  }
  return rows;
}

inline LabelDistribution label_distribution(std::span<const std::size_t> correct, std::size_t m) {
  LabelDistribution d;
  d.p.assign(m, 0.0);
  for (std::size_t c : correct) {
    if (c >= m) throw DataError("label index out of range");
    d.p[c] += 1.0;
  }
  for (double& v : d.p) v /= static_cast<double>(std::max<std::size_t>(1, correct.size()));
  return d;
}

}  // namespace prunelens
