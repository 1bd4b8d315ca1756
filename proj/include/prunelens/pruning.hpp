#pragma once

// Block Influence scoring, greedy Iterative Pruning with SKIP-Prun restart,
// and targeted layer ablation.

#include <algorithm>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <vector>

#include "prunelens/metrics.hpp"
#include "prunelens/model.hpp"
#include "prunelens/probes.hpp"
#include "prunelens/rng.hpp"

namespace prunelens {

struct BIScores {
  std::vector<std::size_t> dense_layers;
  std::vector<double> bi;
  std::size_t batch = 0;
  std::size_t tokens = 0;  // total positions over the batch (B x S for equal lengths)

  double mean(std::size_t local) const { return tokens ? bi.at(local) / static_cast<double>(tokens) : 0.0; }
};

// BI_l = sum_b sum_s (1 - clip01(cos(h_in, h_out))) for every executed block.
inline BIScores block_influence(const HiddenTrace& trace) {
  if (trace.layer_count() == 0 || trace.batch_size() == 0) throw ArgumentError("block_influence: empty trace");
  BIScores out;
  out.dense_layers = trace.topology.retained();
  out.batch = trace.batch_size();
  for (const auto& x : trace.states[0]) out.tokens += x.rows();
  out.bi.assign(trace.layer_count(), 0.0);
  for (std::size_t k = 0; k < trace.layer_count(); ++k) {
    double total = 0.0;
    for (std::size_t b = 0; b < trace.batch_size(); ++b) {
      const Tensor2& in = trace.states[k][b];
      const Tensor2& out_state = trace.states[k + 1][b];
      for (std::size_t s = 0; s < in.rows(); ++s) {
        total += 1.0 - std::clamp(cosine(in.row(s), out_state.row(s)), 0.0, 1.0);
      }
    }
    out.bi[k] = total;
  }
  return out;
}

// Dense index of the minimum-BI layer; ties go to the shallowest layer.
inline std::size_t select_layer(const BIScores& scores) {
  if (scores.bi.empty()) throw ArgumentError("select_layer: no scores");
  const std::size_t k = argmin(scores.bi);
  return scores.dense_layers.empty() ? k : scores.dense_layers.at(k);
}

enum class RestartMode { dense_global, best_state };

inline const char* to_string(RestartMode m) { return m == RestartMode::dense_global ? "dense-global" : "best-state"; }

struct IPConfig {
  std::size_t target_depth = 1;
  double tau = 0.05;
  std::size_t calibration_samples = 256;  // prompts used for BI
  std::uint64_t seed = 0;
  RestartMode restart = RestartMode::dense_global;

  void validate(std::size_t dense_depth) const {
    if (target_depth < 1 || target_depth >= dense_depth) {
      throw ConfigError("ip: target depth must be in [1, " + std::to_string(dense_depth) + ")");
    }
    if (!(tau >= 0.0)) throw ConfigError("ip: tau must be >= 0");
    if (calibration_samples < 1) throw ConfigError("ip: calibration sample count must be >= 1");
  }
};

struct StepEvaluation {
  double accuracy = 0.0;
  std::vector<DensePoint> dm_profile;
  std::vector<double> option_frequency;  // final retained layer
};

using Evaluator = std::function<StepEvaluation(const Topology&)>;

inline StepEvaluation evaluate_trace(const DecisionTrace& trace) {
  StepEvaluation e;
  const std::size_t last = trace.layer_count() - 1;
  e.accuracy = trace_accuracy(trace.scores[last], trace.correct);
  e.dm_profile = dm_profile(trace);
  e.option_frequency = option_frequency(trace, last);
  return e;
}

inline Evaluator make_evaluator(const TransformerModel& model, const std::vector<MCQSample>& samples,
                                const ScoringOptions& scoring = {}, unsigned threads = 1) {
  return [&model, &samples, scoring, threads](const Topology& t) {
    CaptureOptions co;
    co.scoring = scoring;
    co.threads = threads;
    return evaluate_trace(capture(model, t, samples, co).decision);
  };
}

struct TrajectoryStep {
  std::size_t step = 0;
  std::optional<std::size_t> removed;  // dense index chosen by the greedy step
  Topology topology;                   // state after the step (after restart if one fired)
  double accuracy = 0.0;
  std::vector<DensePoint> dm_profile;
  std::vector<double> option_frequency;
  bool restart = false;
  std::size_t anchor = 0;
};

struct IPResult {
  std::size_t dense_depth = 0;
  std::vector<TrajectoryStep> steps;  // steps[0] is the dense baseline
};

// Subset of prompts used for BI: all of them when the task is small enough,
// otherwise a seeded sample kept in task order.
inline std::vector<TokenSequence> calibration_prompts(const std::vector<MCQSample>& samples, std::size_t count,
                                                      std::uint64_t seed) {
  std::vector<std::size_t> idx(samples.size());
  std::iota(idx.begin(), idx.end(), 0);
  if (count < samples.size()) {
    rng::Sequence r(rng::derive(seed, "ip-calibration"));
    r.shuffle(idx);
    idx.resize(count);
    std::sort(idx.begin(), idx.end());
  }
  std::vector<TokenSequence> out;
  for (std::size_t i : idx) out.push_back(samples[i].prompt);
  return out;
}

inline BIScores topology_bi(const TransformerModel& model, const Topology& t, const std::vector<TokenSequence>& batch,
                            unsigned threads) {
  ForwardOptions fo;
  fo.threads = threads;
  fo.compute_logits = false;
  return block_influence(forward(model, t, batch, fo).trace);
}

// Dense topology with the `count` lowest-BI dense layers removed in one shot.
inline Topology one_shot_prune(const BIScores& dense_bi, std::size_t n_layers, std::size_t count) {
  std::vector<std::size_t> order(dense_bi.bi.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return dense_bi.bi[a] < dense_bi.bi[b]; });
  std::vector<std::size_t> removed;
  for (std::size_t i = 0; i < count; ++i) removed.push_back(dense_bi.dense_layers[order[i]]);
  return Topology::without(n_layers, removed);
}

// Iterative Pruning: recompute BI on the current topology, drop the argmin,
// evaluate; a drop of more than tau against the previous accuracy sets the
// anchor to the post-removal depth and restarts from a reconstructed state of
// that depth.
inline IPResult run_ip(const TransformerModel& model, const std::vector<MCQSample>& calibration,
                       const IPConfig& config, const Evaluator& evaluate, unsigned threads = 1) {
  const std::size_t L_dense = model.config.n_layers;
  config.validate(L_dense);
  if (calibration.empty()) throw ArgumentError("ip: empty calibration set");
  const auto bi_batch = calibration_prompts(calibration, config.calibration_samples, config.seed);

  Topology current = Topology::dense(L_dense);
  std::size_t anchor = L_dense;
  std::optional<BIScores> dense_bi;
  auto get_dense_bi = [&]() -> const BIScores& {
    if (!dense_bi) dense_bi = topology_bi(model, Topology::dense(L_dense), bi_batch, threads);
    return *dense_bi;
  };
  // Every evaluated topology, in evaluation order.
  std::vector<std::pair<Topology, StepEvaluation>> seen;
  auto eval = [&](const Topology& t) {
    StepEvaluation e = evaluate(t);
    seen.emplace_back(t, e);
    return e;
  };

  IPResult result;
  result.dense_depth = L_dense;
  StepEvaluation prev = eval(current);
  result.steps.push_back({0, std::nullopt, current, prev.accuracy, prev.dm_profile, prev.option_frequency, false, anchor});

  std::set<std::size_t> restart_depths;
  std::size_t step = 0;
  while (current.size() > config.target_depth) {
    ++step;
    const BIScores bi = topology_bi(model, current, bi_batch, threads);
    const std::size_t victim = select_layer(bi);
    const Topology candidate = current.remove(victim);
    const StepEvaluation cur = eval(candidate);

    TrajectoryStep rec;
    rec.step = step;
    rec.removed = victim;
    if (prev.accuracy - cur.accuracy > config.tau) {
      anchor = candidate.size();
      if (!restart_depths.insert(anchor).second) {
        throw CollapseError("ip: collapse re-triggered at depth " + std::to_string(anchor) +
                            " after a restart already anchored there");
      }
      const Topology rebuilt = one_shot_prune(get_dense_bi(), L_dense, L_dense - anchor);
      Topology chosen = rebuilt;
      StepEvaluation chosen_eval = eval(rebuilt);
      if (config.restart == RestartMode::best_state) {
        for (const auto& [t, e] : seen) {
          if (t.size() == anchor && e.accuracy > chosen_eval.accuracy) {
            chosen = t;
            chosen_eval = e;
          }
        }
      }
      current = chosen;
      prev = chosen_eval;
      rec.restart = true;
    } else {
      current = candidate;
      prev = cur;
    }
    rec.topology = current;
    rec.accuracy = prev.accuracy;
    rec.dm_profile = prev.dm_profile;
    rec.option_frequency = prev.option_frequency;
    rec.anchor = anchor;
    result.steps.push_back(std::move(rec));
  }
  return result;
}

inline IPResult run_ip(const TransformerModel& model, const std::vector<MCQSample>& calibration,
                       const IPConfig& config, const ScoringOptions& scoring = {}, unsigned threads = 1) {
  return run_ip(model, calibration, config, make_evaluator(model, calibration, scoring, threads), threads);
}

inline double pruning_ratio(std::size_t depth, std::size_t dense_depth) {
  return static_cast<double>(dense_depth - depth) / static_cast<double>(dense_depth);
}

// Largest pruning ratio reached before accuracy first falls more than tau
// below the dense baseline.
inline double critical_pruning_threshold(const IPResult& r, double tau) {
  if (r.steps.empty()) throw ArgumentError("critical threshold: empty trajectory");
  const double dense_acc = r.steps.front().accuracy;
  double best = 0.0;
  for (const auto& s : r.steps) {
    if (dense_acc - s.accuracy > tau) break;
    best = std::max(best, pruning_ratio(s.topology.size(), r.dense_depth));
  }
  return best;
}

struct AblationResult {
  Topology topology;
  double accuracy = 0.0;
  std::vector<LayerMetricsRow> rows;
  TransitionReport transition;
};

inline AblationResult ablate(const TransformerModel& model, const std::vector<MCQSample>& samples,
                             const std::vector<std::size_t>& layers, const ScoringOptions& scoring = {},
                             std::optional<std::size_t> sustain = std::nullopt, unsigned threads = 1) {
  const std::size_t L = model.config.n_layers;
  for (std::size_t l : layers) {
    if (l >= L) throw ArgumentError("ablate: layer " + std::to_string(l) + " out of range");
  }
  const Topology t = Topology::without(L, layers);
  if (t.size() == 0) throw ArgumentError("ablate: cannot remove every layer");
  CaptureOptions co;
  co.scoring = scoring;
  co.threads = threads;
  const auto traces = capture(model, t, samples, co);
  AblationResult r;
  r.topology = t;
  r.rows = layer_metrics(traces.decision, label_distribution(samples));
  r.accuracy = r.rows.back().accuracy;
  r.transition = detect_transition(dm_profile(traces.decision), sustain);
  return r;
}

}  // namespace prunelens
