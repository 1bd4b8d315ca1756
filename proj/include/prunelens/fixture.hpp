#pragma once

// Staged fixture: a hand-wired model whose dense Decision Margin profile is
// negative before a chosen layer and positive from it onward on the bundled
// fixture task, plus the generator for that task.
//
// Residual-stream layout for M options (d_model must leave >= 4 spare dims):
//   [0, M)      readout dims, read by the LM-head rows of the label tokens
//   [M, 2M)     evidence dims, filled by silent-phase attention
//   [2M, 3M)    carrier dims, set by the label-letter token embeddings
//   3M          decision marker, set by the ':' embedding
//   3M + 1      constant dim, set to 1 in every token embedding
//   [3M+2, +4)  output-feature dims, written by the last block
//   rest        random token content
//
// Silent blocks attend uniformly over the prefix, accumulate per-letter
// evidence (the correct letter occurs twice in every fixture prompt, the
// others once), and at the decision position write the negated evidence into
// the readout dims. Decisive blocks read the evidence back with a larger,
// positive gain. The final block also writes a token-level feature at every
// non-decision position, which keeps pooled representations of pruned models
// anchored to the dense final layer.

#include <nlohmann/json.hpp>

#include <set>
#include <string>

#include "prunelens/model.hpp"
#include "prunelens/rng.hpp"
#include "prunelens/tasks.hpp"

namespace prunelens {

struct StagedFixtureParams {
  double evidence_gain = 4.0;   // silent attention: carrier -> evidence
  double silent_gain = 1.0;     // silent FFN: -evidence -> readout
  double decisive_gain = 6.0;   // decisive FFN: +evidence -> readout, per silent layer
  double marker_gate = 4.0;
  double constant_gate = 6.0;
  double carrier_magnitude = 4.0;
  double marker_magnitude = 4.0;
  double content_scale = 0.5;
  double head_gain = 4.0;
  double feature_gain = 3.0;
};

inline constexpr std::size_t kFeatureDims = 4;

inline ModelConfig staged_config(std::size_t n_layers = 8, std::uint64_t seed = 7) {
  ModelConfig c;
  c.n_layers = n_layers;
  c.d_model = 32;
  c.n_heads = 4;
  c.d_ff = 32;
  c.vocab_size = ByteTokenizer::kVocabSize;
  c.max_seq = 256;
  c.norm = NormKind::rms();
  c.seed = seed;
  return c;
}

inline TransformerModel plant_staged_fixture(const ModelConfig& config, std::size_t transition_at,
                                             const std::vector<std::uint32_t>& label_tokens,
                                             const StagedFixtureParams& prm = {}) {
  config.validate();
  if (transition_at == 0 || transition_at >= config.n_layers) {
    throw ArgumentError("staged fixture: transition_at " + std::to_string(transition_at) + " outside (0, " +
                        std::to_string(config.n_layers) + ")");
  }
  const std::size_t M = label_tokens.size();
  if (M < 2) throw ArgumentError("staged fixture: need at least 2 label tokens");
  if (std::set<std::uint32_t>(label_tokens.begin(), label_tokens.end()).size() != M) {
    throw ArgumentError("staged fixture: duplicate label tokens");
  }
  for (std::uint32_t t : label_tokens) {
    if (t >= config.vocab_size || t == kDecisionToken) throw ArgumentError("staged fixture: bad label token");
  }
  if (kDecisionToken >= config.vocab_size) throw ConfigError("staged fixture: vocab too small for ':'");
  const std::size_t d = config.d_model;
  const std::size_t kReadout = 0, kEvidence = M, kCarrier = 2 * M, kMarker = 3 * M, kConstant = 3 * M + 1,
                    kFeature = 3 * M + 2, kContent = kFeature + kFeatureDims;
  if (kContent + 4 > d) throw ConfigError("staged fixture: d_model too small for " + std::to_string(M) + " options");
  if (config.head_dim() < M) throw ConfigError("staged fixture: head_dim must be >= option count");
  if (config.d_ff < M + kFeatureDims) throw ConfigError("staged fixture: d_ff too small");
  auto f = [](double v) { return static_cast<double>(static_cast<float>(v)); };

  TransformerModel m = allocate_model(config);
  const rng::CounterStream content(rng::mix(config.seed, {rng::fnv1a("staged.content")}));
  for (std::size_t t = 0; t < config.vocab_size; ++t) {
    auto row = m.token_embedding.row(t);
    row[kConstant] = 1.0;
    if (t == kDecisionToken) {
      row[kMarker] = prm.marker_magnitude;
      continue;  // no content: the output feature vanishes at the decision position
    }
    for (std::size_t i = kContent; i < d; ++i) {
      row[i] = f(content.uniform(t * d + i, -prm.content_scale, prm.content_scale));
    }
  }
  for (std::size_t j = 0; j < M; ++j) m.token_embedding(label_tokens[j], kCarrier + j) = prm.carrier_magnitude;

  for (std::size_t j = 0; j < M; ++j) m.lm_head(label_tokens[j], kReadout + j) = prm.head_gain;
  const rng::CounterStream head(rng::mix(config.seed, {rng::fnv1a("staged.head")}));
  for (std::size_t t = 0; t < config.vocab_size; ++t) {
    if (std::find(label_tokens.begin(), label_tokens.end(), t) != label_tokens.end()) continue;
    for (std::size_t i = kContent; i < d; ++i) m.lm_head(t, i) = f(head.uniform(t * d + i, -0.3, 0.3));
  }

  for (std::size_t l = 0; l < config.n_layers; ++l) {
    BlockWeights& b = m.blocks[l];
    const bool silent = l < transition_at;
    if (silent) {
      for (std::size_t j = 0; j < M; ++j) {
        b.wv(j, kCarrier + j) = 1.0;  // head 0, channel j
        b.wo(kEvidence + j, j) = prm.evidence_gain;
      }
    }
    // Answer units, gated open only at the decision marker.
    for (std::size_t j = 0; j < M; ++j) {
      b.w_gate(j, kMarker) = prm.marker_gate;
      b.w_gate(j, kConstant) = -prm.constant_gate;
      b.w_up(j, kEvidence + j) = 1.0;
      b.w_down(kReadout + j, j) =
          silent ? -prm.silent_gain : prm.decisive_gain * static_cast<double>(transition_at);
    }
    if (l + 1 == config.n_layers) {
      const rng::CounterStream feat(rng::mix(config.seed, {rng::fnv1a("staged.feature")}));
      for (std::size_t p = 0; p < kFeatureDims; ++p) {
        const std::size_t unit = M + p;
        for (std::size_t i = kContent; i < d; ++i) {
          b.w_gate(unit, i) = f(feat.uniform((2 * p) * d + i, -1.0, 1.0));
          b.w_up(unit, i) = f(feat.uniform((2 * p + 1) * d + i, -1.0, 1.0));
        }
        b.w_down(kFeature + p, unit) = prm.feature_gain;
      }
    }
  }
  return m;
}

inline std::vector<std::uint32_t> default_label_tokens(std::size_t m = 4) {
  std::vector<std::uint32_t> out;
  for (std::size_t j = 0; j < m; ++j) out.push_back(option_label_token(j));
  return out;
}

// Bundled fixture task as JSON lines. Every question names the correct letter
// once; option texts are lowercase and free of ':'.
inline std::string fixture_task_jsonl(std::size_t n_samples = 64, std::uint64_t seed = 2024, std::size_t m = 4) {
  static const char* kWords[] = {"amber", "birch", "cobalt", "dune",   "ember", "fjord", "grove",  "harbor",
                                 "iris",  "jade",  "kelp",   "lumen",  "moss",  "nectar", "onyx",  "pine",
                                 "quartz", "reef", "slate",  "tundra", "umber", "vale",  "willow", "yarrow"};
  constexpr std::size_t kNumWords = sizeof(kWords) / sizeof(kWords[0]);
  rng::Sequence r(rng::derive(seed, "fixture-task"));
  std::string out;
  for (std::size_t i = 0; i < n_samples; ++i) {
    const std::size_t answer = static_cast<std::size_t>(r.below(m));
    std::vector<std::string> options;
    for (std::size_t j = 0; j < m; ++j) {
      const std::size_t words = 1 + static_cast<std::size_t>(r.below(3));
      std::string o;
      for (std::size_t w = 0; w < words; ++w) {
        if (w) o += ' ';
        o += kWords[r.below(kNumWords)];
      }
      options.push_back(o);
    }
    const std::string question = "item " + std::to_string(i) + ", which choice is marked? the mark is on (" +
                                 std::string(1, static_cast<char>('A' + answer)) + ")";
    nlohmann::json rec = {{"id", "fixture-" + std::to_string(i)},
                          {"question", question},
                          {"options", options},
                          {"answer_idx", answer}};
    out += rec.dump() + "\n";
  }
  return out;
}

inline Task fixture_task(std::size_t n_samples = 64, std::uint64_t seed = 2024) {
  std::istringstream in(fixture_task_jsonl(n_samples, seed));
  return parse_mcq(in, "<fixture>");
}

}  // namespace prunelens
