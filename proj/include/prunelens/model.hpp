#pragma once

// Minimal pre-norm decoder-only transformer whose residual blocks can be
// skipped independently. Skipping a block is exactly the identity map on the
// residual stream, so a pruned forward equals the dense forward of a model
// whose skipped blocks have zeroed output projections.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "prunelens/checksum.hpp"
#include "prunelens/error.hpp"
#include "prunelens/numerics.hpp"
#include "prunelens/parallel.hpp"
#include "prunelens/rng.hpp"

namespace prunelens {

struct ModelConfig {
  std::size_t n_layers = 6;
  std::size_t d_model = 32;
  std::size_t n_heads = 4;
  std::size_t d_ff = 64;
  std::size_t vocab_size = 260;
  std::size_t max_seq = 256;
  NormKind norm = NormKind::rms();
  std::uint64_t seed = 0;

  std::size_t head_dim() const { return d_model / n_heads; }

  void validate() const {
    if (n_layers < 1 || d_model < 1 || n_heads < 1 || d_ff < 1 || vocab_size < 1 || max_seq < 1) {
      throw ConfigError("model config: all counts must be >= 1");
    }
    if (d_model % n_heads != 0) {
      throw ConfigError("model config: d_model " + std::to_string(d_model) +
                        " not divisible by n_heads " + std::to_string(n_heads));
    }
    if (!(norm.epsilon > 0.0)) throw ConfigError("model config: norm epsilon must be positive");
  }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// Linear maps are stored as (out x in).
struct BlockWeights {
  std::vector<double> attn_norm;
  Tensor2 wq, wk, wv, wo;
  std::vector<double> ffn_norm;
  Tensor2 w_gate, w_up, w_down;
};

struct TransformerModel {
  ModelConfig config;
  Tensor2 token_embedding;     // vocab x d
  Tensor2 position_embedding;  // max_seq x d (learned absolute positions)
  std::vector<BlockWeights> blocks;
  std::vector<double> final_norm;
  Tensor2 lm_head;  // vocab x d
};

struct TensorShape {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t numel() const { return rows * cols; }
  friend bool operator==(const TensorShape&, const TensorShape&) = default;
};

// Visits every parameter tensor in a fixed canonical order. Vectors are
// reported as 1 x n.
template <class Model, class Fn>
void for_each_tensor(Model& model, Fn&& fn) {
  auto mat = [&](const std::string& name, auto& t) { fn(name, TensorShape{t.rows(), t.cols()}, std::span(t.data())); };
  auto vec = [&](const std::string& name, auto& v) { fn(name, TensorShape{1, v.size()}, std::span(v)); };
  mat("token_embedding", model.token_embedding);
  mat("position_embedding", model.position_embedding);
  for (std::size_t i = 0; i < model.blocks.size(); ++i) {
    auto& b = model.blocks[i];
    const std::string p = "blocks." + std::to_string(i) + ".";
    vec(p + "attn_norm", b.attn_norm);
    mat(p + "wq", b.wq);
    mat(p + "wk", b.wk);
    mat(p + "wv", b.wv);
    mat(p + "wo", b.wo);
    vec(p + "ffn_norm", b.ffn_norm);
    mat(p + "w_gate", b.w_gate);
    mat(p + "w_up", b.w_up);
    mat(p + "w_down", b.w_down);
  }
  vec("final_norm", model.final_norm);
  mat("lm_head", model.lm_head);
}

// Expected shape of every tensor for a config, canonical order.
inline std::vector<std::pair<std::string, TensorShape>> expected_tensors(const ModelConfig& c) {
  std::vector<std::pair<std::string, TensorShape>> out;
  const std::size_t d = c.d_model;
  out.push_back({"token_embedding", {c.vocab_size, d}});
  out.push_back({"position_embedding", {c.max_seq, d}});
  for (std::size_t i = 0; i < c.n_layers; ++i) {
    const std::string p = "blocks." + std::to_string(i) + ".";
    out.push_back({p + "attn_norm", {1, d}});
    out.push_back({p + "wq", {d, d}});
    out.push_back({p + "wk", {d, d}});
    out.push_back({p + "wv", {d, d}});
    out.push_back({p + "wo", {d, d}});
    out.push_back({p + "ffn_norm", {1, d}});
    out.push_back({p + "w_gate", {c.d_ff, d}});
    out.push_back({p + "w_up", {c.d_ff, d}});
    out.push_back({p + "w_down", {d, c.d_ff}});
  }
  out.push_back({"final_norm", {1, d}});
  out.push_back({"lm_head", {c.vocab_size, d}});
  return out;
}

// Allocates a model with every tensor at its configured shape, zero-filled
// (norm gains set to 1).
inline TransformerModel allocate_model(const ModelConfig& config) {
  config.validate();
  const std::size_t d = config.d_model;
  TransformerModel m;
  m.config = config;
  m.token_embedding = Tensor2(config.vocab_size, d);
  m.position_embedding = Tensor2(config.max_seq, d);
  m.blocks.resize(config.n_layers);
  for (auto& b : m.blocks) {
    b.attn_norm.assign(d, 1.0);
    b.ffn_norm.assign(d, 1.0);
    b.wq = b.wk = b.wv = b.wo = Tensor2(d, d);
    b.w_gate = b.w_up = Tensor2(config.d_ff, d);
    b.w_down = Tensor2(d, config.d_ff);
  }
  m.final_norm.assign(d, 1.0);
  m.lm_head = Tensor2(config.vocab_size, d);
  return m;
}

// CRC32 over the float32 little-endian image of every tensor, in canonical order.
inline std::string weights_checksum(const TransformerModel& model) {
  Crc32 crc;
  for_each_tensor(model, [&](const std::string&, TensorShape, std::span<const double> v) {
    crc.update(to_f32_bytes(v));
  });
  return crc.hex();
}

// Weights are drawn uniform(-a, a) per tensor from a stream keyed by
// (seed, tensor name), with a = 1/sqrt(fan_in) for linear maps. Values are
// rounded to float32 so saved bundles reload bit-identically.
inline TransformerModel build_synthetic(const ModelConfig& config) {
  TransformerModel m = allocate_model(config);
  for_each_tensor(m, [&](const std::string& name, TensorShape shape, std::span<double> v) {
    double scale;
    if (name.ends_with("norm")) return;  // gains stay at 1
    if (name == "token_embedding") {
      scale = 1.0;
    } else if (name == "position_embedding") {
      scale = 0.1;
    } else {
      scale = 1.0 / std::sqrt(static_cast<double>(shape.cols));
    }
    const rng::CounterStream stream(rng::mix(config.seed, {rng::fnv1a(name)}));
    for (std::size_t i = 0; i < v.size(); ++i) {
      v[i] = static_cast<float>(stream.uniform(i, -scale, scale));
    }
  });
  return m;
}

// Zeroes the residual-branch outputs of one block so that it acts as identity.
inline void make_identity_block(TransformerModel& model, std::size_t layer) {
  if (layer >= model.blocks.size()) throw ArgumentError("make_identity_block: layer out of range");
  auto& b = model.blocks[layer];
  std::fill(b.wo.data().begin(), b.wo.data().end(), 0.0);
  std::fill(b.w_down.data().begin(), b.w_down.data().end(), 0.0);
}

class Topology {
 public:
  Topology() = default;
  explicit Topology(std::vector<std::size_t> retained) : retained_(std::move(retained)) {}

  static Topology dense(std::size_t n_layers) {
    std::vector<std::size_t> r(n_layers);
    for (std::size_t i = 0; i < n_layers; ++i) r[i] = i;
    return Topology(std::move(r));
  }

  // Dense topology with `removed` taken out.
  static Topology without(std::size_t n_layers, std::span<const std::size_t> removed) {
    std::vector<std::size_t> r;
    for (std::size_t i = 0; i < n_layers; ++i) {
      if (std::find(removed.begin(), removed.end(), i) == removed.end()) r.push_back(i);
    }
    return Topology(std::move(r));
  }

  const std::vector<std::size_t>& retained() const noexcept { return retained_; }
  std::size_t size() const noexcept { return retained_.size(); }
  std::size_t operator[](std::size_t local) const { return retained_.at(local); }

  bool contains(std::size_t dense_layer) const {
    return std::binary_search(retained_.begin(), retained_.end(), dense_layer);
  }

  Topology remove(std::size_t dense_layer) const {
    if (!contains(dense_layer)) {
      throw ArgumentError("topology: layer " + std::to_string(dense_layer) + " is not retained");
    }
    std::vector<std::size_t> r;
    for (std::size_t l : retained_) {
      if (l != dense_layer) r.push_back(l);
    }
    return Topology(std::move(r));
  }

  // Original indices missing relative to a dense model of n_layers.
  std::vector<std::size_t> removed(std::size_t n_layers) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < n_layers; ++i) {
      if (!contains(i)) out.push_back(i);
    }
    return out;
  }

  void validate(std::size_t n_layers) const {
    if (retained_.empty()) throw ArgumentError("topology: must retain at least one layer");
    for (std::size_t i = 0; i < retained_.size(); ++i) {
      if (retained_[i] >= n_layers) {
        throw ArgumentError("topology: layer " + std::to_string(retained_[i]) + " out of range [0, " +
                            std::to_string(n_layers) + ")");
      }
      if (i > 0 && retained_[i] <= retained_[i - 1]) {
        throw ArgumentError("topology: indices must be strictly increasing");
      }
    }
  }

  std::string to_string() const {
    std::string s = "[";
    for (std::size_t i = 0; i < retained_.size(); ++i) {
      if (i) s += ", ";
      s += std::to_string(retained_[i]);
    }
    return s + "]";
  }

  friend bool operator==(const Topology&, const Topology&) = default;
  friend auto operator<=>(const Topology&, const Topology&) = default;

 private:
  std::vector<std::size_t> retained_;
};

using TokenSequence = std::vector<std::uint32_t>;

// Residual-stream states for a batch. states[0] is the post-embedding state;
// states[k + 1] is the state after executing retained layer k.
struct HiddenTrace {
  Topology topology;
  std::vector<std::vector<Tensor2>> states;  // [boundary][sequence] -> (S_b x d)

  std::size_t layer_count() const { return states.empty() ? 0 : states.size() - 1; }
  std::size_t batch_size() const { return states.empty() ? 0 : states.front().size(); }
  const Tensor2& input(std::size_t seq) const { return states.at(0).at(seq); }
  const Tensor2& output(std::size_t local_layer, std::size_t seq) const {
    return states.at(local_layer + 1).at(seq);
  }
};

// Invoked after each executed block with the state of one sequence; may
// modify the state in place (noise injection).
using StateHook =
    std::function<void(std::size_t local_layer, std::size_t dense_layer, std::size_t sequence, Tensor2& state)>;

struct ForwardOptions {
  unsigned threads = 1;
  bool record_trace = true;
  bool compute_logits = true;
  StateHook hook;
};

struct ForwardResult {
  std::vector<Tensor2> logits;  // per sequence, S_b x vocab
  HiddenTrace trace;
};

namespace detail {

inline double silu(double x) { return x / (1.0 + std::exp(-x)); }

// out = W x for W (rows x cols).
inline void matvec(const Tensor2& w, std::span<const double> x, std::span<double> out) {
  for (std::size_t r = 0; r < w.rows(); ++r) out[r] = dot(w.row(r), x);
}

inline void check_tokens(const ModelConfig& c, const TokenSequence& seq) {
  if (seq.empty()) throw ArgumentError("forward: empty sequence");
  if (seq.size() > c.max_seq) {
    throw DataError("forward: sequence length " + std::to_string(seq.size()) + " exceeds max_seq " +
                    std::to_string(c.max_seq));
  }
  for (std::uint32_t t : seq) {
    if (t >= c.vocab_size) {
      throw DataError("forward: token id " + std::to_string(t) + " out of range for vocab " +
                      std::to_string(c.vocab_size));
    }
  }
}

}  // namespace detail

inline Tensor2 embed(const TransformerModel& model, const TokenSequence& seq) {
  const std::size_t d = model.config.d_model;
  Tensor2 x(seq.size(), d);
  for (std::size_t s = 0; s < seq.size(); ++s) {
    auto te = model.token_embedding.row(seq[s]);
    auto pe = model.position_embedding.row(s);
    for (std::size_t i = 0; i < d; ++i) x(s, i) = te[i] + pe[i];
  }
  return x;
}

// Applies one pre-norm block in place: x += attn(norm(x)); x += ffn(norm(x)).
inline void apply_block(const TransformerModel& model, const BlockWeights& b, Tensor2& x) {
  const ModelConfig& c = model.config;
  const std::size_t S = x.rows(), d = c.d_model, hd = c.head_dim(), ff = c.d_ff;
  Tensor2 q(S, d), k(S, d), v(S, d);
  std::vector<double> normed(d);
  for (std::size_t s = 0; s < S; ++s) {
    normalize_into(x.row(s), b.attn_norm, c.norm, normed);
    detail::matvec(b.wq, normed, q.row(s));
    detail::matvec(b.wk, normed, k.row(s));
    detail::matvec(b.wv, normed, v.row(s));
  }
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
  std::vector<double> ctx(d), attn(d), scores(S);
  for (std::size_t s = 0; s < S; ++s) {
    for (std::size_t h = 0; h < c.n_heads; ++h) {
      const std::size_t off = h * hd;
      double peak = -INFINITY;
      for (std::size_t t = 0; t <= s; ++t) {
        scores[t] = dot(q.row(s).subspan(off, hd), k.row(t).subspan(off, hd)) * scale;
        peak = std::max(peak, scores[t]);
      }
      double total = 0.0;
      for (std::size_t t = 0; t <= s; ++t) {
        scores[t] = std::exp(scores[t] - peak);
        total += scores[t];
      }
      for (std::size_t i = 0; i < hd; ++i) ctx[off + i] = 0.0;
      for (std::size_t t = 0; t <= s; ++t) {
        const double p = scores[t] / total;
        const double* vt = &v(t, off);
        for (std::size_t i = 0; i < hd; ++i) ctx[off + i] += p * vt[i];
      }
    }
    detail::matvec(b.wo, ctx, attn);
    for (std::size_t i = 0; i < d; ++i) x(s, i) += attn[i];
  }
  std::vector<double> gate(ff), up(ff), out(d);
  for (std::size_t s = 0; s < S; ++s) {
    normalize_into(x.row(s), b.ffn_norm, c.norm, normed);
    detail::matvec(b.w_gate, normed, gate);
    detail::matvec(b.w_up, normed, up);
    for (std::size_t j = 0; j < ff; ++j) gate[j] = detail::silu(gate[j]) * up[j];
    detail::matvec(b.w_down, gate, out);
    for (std::size_t i = 0; i < d; ++i) x(s, i) += out[i];
  }
}

// Logit lens: LM-head(final_norm(state)). The same path produces final logits.
inline std::vector<double> lens(const TransformerModel& model, std::span<const double> state) {
  if (state.size() != model.config.d_model) {
    throw ArgumentError("lens: state length " + std::to_string(state.size()) + " != d_model " +
                        std::to_string(model.config.d_model));
  }
  const auto normed = normalize(state, model.final_norm, model.config.norm);
  std::vector<double> logits(model.config.vocab_size);
  detail::matvec(model.lm_head, normed, logits);
  return logits;
}

// Lensed logits restricted to a subset of vocabulary rows.
inline std::vector<double> lens_rows(const TransformerModel& model, std::span<const double> state,
                                     std::span<const std::uint32_t> rows) {
  if (state.size() != model.config.d_model) throw ArgumentError("lens: dimension mismatch");
  const auto normed = normalize(state, model.final_norm, model.config.norm);
  std::vector<double> out(rows.size());
  for (std::size_t j = 0; j < rows.size(); ++j) {
    if (rows[j] >= model.config.vocab_size) throw ArgumentError("lens: token row out of range");
    out[j] = dot(model.lm_head.row(rows[j]), normed);
  }
  return out;
}

inline ForwardResult forward(const TransformerModel& model, const Topology& topology,
                             const std::vector<TokenSequence>& batch, const ForwardOptions& opts = {}) {
  if (batch.empty()) throw ArgumentError("forward: empty batch");
  topology.validate(model.config.n_layers);
  for (const auto& seq : batch) detail::check_tokens(model.config, seq);

  const std::size_t B = batch.size(), L = topology.size();
  ForwardResult result;
  result.trace.topology = topology;
  if (opts.record_trace) result.trace.states.assign(L + 1, std::vector<Tensor2>(B));
  if (opts.compute_logits) result.logits.resize(B);

  parallel_for(B, opts.threads, [&](std::size_t b) {
    Tensor2 x = embed(model, batch[b]);
    if (opts.record_trace) result.trace.states[0][b] = x;
    for (std::size_t k = 0; k < L; ++k) {
      const std::size_t layer = topology[k];
      apply_block(model, model.blocks[layer], x);
      if (opts.hook) opts.hook(k, layer, b, x);
      if (opts.record_trace) result.trace.states[k + 1][b] = x;
    }
    if (opts.compute_logits) {
      Tensor2 logits(x.rows(), model.config.vocab_size);
      for (std::size_t s = 0; s < x.rows(); ++s) {
        const auto row = lens(model, x.row(s));
        std::copy(row.begin(), row.end(), logits.row(s).begin());
      }
      result.logits[b] = std::move(logits);
    }
  });
  return result;
}

}  // namespace prunelens
