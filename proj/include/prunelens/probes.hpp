#pragma once

// Logit-lens readout at the decision position and representation capture.

#include <optional>
#include <string>
#include <vector>

#include "prunelens/model.hpp"
#include "prunelens/tasks.hpp"

namespace prunelens {

// Per retained layer: decision-position states (N x d) and lensed option
// scores (N x M). `topology` names the dense index of each layer.
struct DecisionTrace {
  Topology topology;
  std::size_t dense_layers = 0;  // depth of the dense model the indices refer to
  std::vector<std::string> sample_ids;
  std::vector<std::size_t> correct;
  std::vector<Tensor2> states;
  std::vector<Tensor2> scores;

  std::size_t layer_count() const { return states.size(); }
  std::size_t sample_count() const { return sample_ids.size(); }
  std::size_t option_count() const { return scores.empty() ? 0 : scores.front().cols(); }
  std::size_t dense_index(std::size_t local) const { return topology[local]; }

  void validate() const {
    const std::size_t L = topology.size(), N = sample_ids.size();
    if (states.size() != L || scores.size() != L) throw DataError("decision trace: layer count mismatch");
    if (correct.size() != N) throw DataError("decision trace: label count mismatch");
    for (std::size_t k = 0; k < L; ++k) {
      if (states[k].rows() != N || scores[k].rows() != N) throw DataError("decision trace: sample count mismatch");
      if (scores[k].cols() != option_count() || states[k].cols() != states.front().cols()) {
        throw DataError("decision trace: inconsistent widths across layers");
      }
    }
    for (std::size_t c : correct) {
      if (c >= option_count()) throw DataError("decision trace: correct index out of range");
    }
  }
};

// Per retained layer: sequence-mean-pooled states (N x d).
struct PooledTrace {
  std::vector<Tensor2> states;
};

struct CapturedTraces {
  DecisionTrace decision;
  std::optional<PooledTrace> pooled;
};

struct CaptureOptions {
  ScoringOptions scoring;
  unsigned threads = 1;
  StateHook hook;  // forwarded to the model (perturbation experiments)
};

// One forward per sample fills both traces. States are indexed by sample
// position in `samples`; hooks see that index as the sequence id.
inline CapturedTraces capture(const TransformerModel& model, const Topology& topology,
                              const std::vector<MCQSample>& samples, const CaptureOptions& opts = {}) {
  if (samples.empty()) throw ArgumentError("capture: no samples");
  topology.validate(model.config.n_layers);
  const std::size_t N = samples.size(), L = topology.size(), d = model.config.d_model;
  const std::size_t M = samples.front().option_count();
  for (const auto& s : samples) {
    if (s.option_count() != M) throw DataError("capture: samples must share one option count");
  }

  CapturedTraces out;
  DecisionTrace& dt = out.decision;
  dt.topology = topology;
  dt.dense_layers = model.config.n_layers;
  dt.states.assign(L, Tensor2(N, d));
  dt.scores.assign(L, Tensor2(N, M));
  PooledTrace pooled;
  pooled.states.assign(L, Tensor2(N, d));
  for (const auto& s : samples) {
    dt.sample_ids.push_back(s.id);
    dt.correct.push_back(s.correct);
  }

  parallel_for(N, opts.threads, [&](std::size_t i) {
    const MCQSample& s = samples[i];
    ForwardOptions fo;
    fo.compute_logits = false;
    if (opts.hook) {
      fo.hook = [&, i](std::size_t k, std::size_t layer, std::size_t, Tensor2& x) { opts.hook(k, layer, i, x); };
    }
    const auto fr = forward(model, topology, {s.prompt}, fo);
    const std::size_t pos = s.prompt.size() - 1;
    for (std::size_t k = 0; k < L; ++k) {
      const Tensor2& x = fr.trace.output(k, 0);
      auto dst = dt.states[k].row(i);
      std::copy(x.row(pos).begin(), x.row(pos).end(), dst.begin());
      auto pool = pooled.states[k].row(i);
      for (std::size_t t = 0; t < x.rows(); ++t) {
        for (std::size_t c = 0; c < d; ++c) pool[c] += x(t, c);
      }
      for (double& v : pool) v /= static_cast<double>(x.rows());
    }
    // Length-normalized scoring needs its own teacher-forced passes; the
    // label-token path reuses this forward.
    const auto z = opts.scoring.mode == ScoringMode::label_token
                       ? option_scores_all_layers(model, topology, s, opts.scoring, &fr.trace)
                       : option_scores_all_layers(model, topology, s, opts.scoring);
    for (std::size_t k = 0; k < L; ++k) {
      std::copy(z[k].begin(), z[k].end(), dt.scores[k].row(i).begin());
    }
  });
  out.pooled = std::move(pooled);
  return out;
}

}  // namespace prunelens
