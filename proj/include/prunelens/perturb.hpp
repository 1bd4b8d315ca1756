#pragma once

// Standardized Gaussian noise injected into layer outputs:
//   h' = h + sqrt(v) * sigma(h_l) * z,   z ~ N(0, I)
// sigma(h_l) is the scalar standard deviation of layer l's clean activations
// over the whole evaluation batch. Draws are keyed by
// (seed, trial, layer, sample, position) so they never depend on scheduling.

#include <cmath>
#include <set>
#include <string>
#include <vector>

#include "prunelens/metrics.hpp"
#include "prunelens/probes.hpp"
#include "prunelens/rng.hpp"

namespace prunelens {

struct NoiseConfig {
  std::vector<std::size_t> layers;  // dense indices
  double variance = 0.0;
  std::uint64_t seed = 0;
  std::size_t trials = 1;

  void validate(const Topology& t) const {
    if (variance < 0.0 || !std::isfinite(variance)) throw ArgumentError("noise: variance must be >= 0");
    if (trials < 1) throw ArgumentError("noise: trials must be >= 1");
    for (std::size_t l : layers) {
      if (!t.contains(l)) throw ArgumentError("noise: layer " + std::to_string(l) + " is not in the topology");
    }
  }
};

// Scalar std over every element of each layer output, per local layer.
inline std::vector<double> activation_scales(const TransformerModel& model, const Topology& t,
                                             const std::vector<MCQSample>& samples, unsigned threads = 1) {
  std::vector<TokenSequence> batch;
  for (const auto& s : samples) batch.push_back(s.prompt);
  ForwardOptions fo;
  fo.threads = threads;
  fo.compute_logits = false;
  const auto fr = forward(model, t, batch, fo);
  std::vector<double> out(t.size(), 0.0);
  for (std::size_t k = 0; k < t.size(); ++k) {
    double sum = 0.0, count = 0.0;
    for (const auto& x : fr.trace.states[k + 1]) {
      for (double v : x.data()) sum += v;
      count += static_cast<double>(x.size());
    }
    const double mean = sum / count;
    double sq = 0.0;
    for (const auto& x : fr.trace.states[k + 1]) {
      for (double v : x.data()) sq += (v - mean) * (v - mean);
    }
    out[k] = std::sqrt(sq / count);
  }
  return out;
}

inline rng::CounterStream noise_stream(std::uint64_t seed, std::size_t trial, std::size_t layer, std::size_t sample,
                                       std::size_t position) {
  return rng::CounterStream(rng::mix(rng::derive(seed, "noise"), {trial, layer, sample, position}));
}

// State hook adding standardized noise to the targeted layers for one trial.
inline StateHook noise_hook(const Topology& t, const std::vector<double>& scales, const NoiseConfig& cfg,
                            std::size_t trial) {
  const std::set<std::size_t> targets(cfg.layers.begin(), cfg.layers.end());
  const double amp = std::sqrt(cfg.variance);
  return [targets, scales, amp, trial, seed = cfg.seed](std::size_t k, std::size_t layer, std::size_t sample,
                                                         Tensor2& x) {
    if (amp == 0.0 || !targets.count(layer)) return;
    const double mult = amp * scales.at(k);
    if (mult == 0.0) return;
    for (std::size_t s = 0; s < x.rows(); ++s) {
      const auto stream = noise_stream(seed, trial, layer, sample, s);
      auto row = x.row(s);
      for (std::size_t c = 0; c < row.size(); ++c) row[c] += mult * stream.normal(c);
    }
  };
}

struct NoiseResult {
  std::vector<DensePoint> clean;
  std::vector<std::vector<DensePoint>> trials;
  std::vector<double> mean;    // per local layer across trials
  std::vector<double> stddev;  // population std across trials
};

inline NoiseResult inject(const TransformerModel& model, const Topology& topology,
                          const std::vector<MCQSample>& samples, const NoiseConfig& cfg,
                          const ScoringOptions& scoring = {}, unsigned threads = 1) {
  topology.validate(model.config.n_layers);
  cfg.validate(topology);
  CaptureOptions co;
  co.scoring = scoring;
  co.threads = threads;
  NoiseResult r;
  r.clean = dm_profile(capture(model, topology, samples, co).decision);
  const auto scales = activation_scales(model, topology, samples, threads);
  for (std::size_t trial = 0; trial < cfg.trials; ++trial) {
    co.hook = noise_hook(topology, scales, cfg, trial);
    r.trials.push_back(dm_profile(capture(model, topology, samples, co).decision));
  }
  const std::size_t L = topology.size();
  r.mean.assign(L, 0.0);
  r.stddev.assign(L, 0.0);
  const double n = static_cast<double>(cfg.trials);
  for (std::size_t k = 0; k < L; ++k) {
    for (const auto& p : r.trials) r.mean[k] += p[k].value;
    r.mean[k] /= n;
    for (const auto& p : r.trials) r.stddev[k] += (p[k].value - r.mean[k]) * (p[k].value - r.mean[k]);
    r.stddev[k] = std::sqrt(r.stddev[k] / n);
  }
  return r;
}

enum class Phase { silent, decisive };

inline const char* to_string(Phase p) { return p == Phase::silent ? "silent" : "decisive"; }

struct SweepRow {
  Phase phase = Phase::silent;
  double variance = 0.0;
  std::size_t trial = 0;
  double final_dm = 0.0;
  double dm_drop = 0.0;  // clean final DM minus noisy final DM
};

struct SweepSummary {
  Phase phase = Phase::silent;
  double variance = 0.0;
  double mean_drop = 0.0;
};

struct SweepResult {
  double clean_final_dm = 0.0;
  std::vector<SweepRow> rows;
  std::vector<SweepSummary> summary;
};

// Whole-phase joint injection: layers below `split` form the silent phase,
// the rest the decisive phase. Both phases share seeds per variance.
inline SweepResult sweep(const TransformerModel& model, const Topology& topology,
                         const std::vector<MCQSample>& samples, const std::vector<double>& variances,
                         std::size_t split, std::size_t trials, std::uint64_t seed,
                         const ScoringOptions& scoring = {}, unsigned threads = 1) {
  topology.validate(model.config.n_layers);
  std::vector<std::size_t> silent, decisive;
  for (std::size_t l : topology.retained()) (l < split ? silent : decisive).push_back(l);
  if (silent.empty() || decisive.empty()) {
    throw ArgumentError("sweep: split " + std::to_string(split) + " leaves a phase without layers");
  }
  SweepResult out;
  CaptureOptions co;
  co.scoring = scoring;
  co.threads = threads;
  const auto clean = dm_profile(capture(model, topology, samples, co).decision);
  out.clean_final_dm = clean.back().value;
  const auto scales = activation_scales(model, topology, samples, threads);
  for (std::size_t vi = 0; vi < variances.size(); ++vi) {
    if (variances[vi] < 0.0) throw ArgumentError("sweep: negative variance");
    for (Phase phase : {Phase::silent, Phase::decisive}) {
      NoiseConfig cfg{phase == Phase::silent ? silent : decisive, variances[vi], rng::mix(seed, {vi}), trials};
      double total = 0.0;
      for (std::size_t trial = 0; trial < trials; ++trial) {
        co.hook = noise_hook(topology, scales, cfg, trial);
        const double dm = dm_profile(capture(model, topology, samples, co).decision).back().value;
        const double drop = out.clean_final_dm - dm;
        out.rows.push_back({phase, variances[vi], trial, dm, drop});
        total += drop;
      }
      out.summary.push_back({phase, variances[vi], total / static_cast<double>(trials)});
    }
  }
  return out;
}

}  // namespace prunelens
