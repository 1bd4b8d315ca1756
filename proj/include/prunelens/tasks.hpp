#pragma once

// Multiple-choice tasks: ingestion, byte-level tokenization, option scoring
// through the logit lens, and accuracy.

#include <nlohmann/json.hpp>

#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "prunelens/io_util.hpp"
#include "prunelens/model.hpp"

namespace prunelens {

// Byte-level tokenizer: ids 0..255 are raw bytes, followed by reserved ids.
struct ByteTokenizer {
  static constexpr std::uint32_t kBos = 256;
  static constexpr std::uint32_t kEos = 257;
  static constexpr std::uint32_t kPad = 258;
  static constexpr std::uint32_t kSep = 259;
  static constexpr std::size_t kVocabSize = 260;

  static TokenSequence encode(std::string_view text, bool bos = false) {
    TokenSequence out;
    out.reserve(text.size() + 1);
    if (bos) out.push_back(kBos);
    for (unsigned char c : text) out.push_back(c);
    return out;
  }

  static std::string decode(const TokenSequence& tokens) {
    std::string s;
    for (std::uint32_t t : tokens) {
      if (t < 256) s.push_back(static_cast<char>(t));
    }
    return s;
  }
};

inline constexpr std::size_t kMaxOptions = 26;
// The prompt ends with this byte, so it is the decision position's token.
inline constexpr std::uint32_t kDecisionToken = ':';

inline std::uint32_t option_label_token(std::size_t j) { return static_cast<std::uint32_t>('A' + j); }

// "{question}\n(A) {option 0}\n(B) {option 1}\n...\nanswer:"
inline std::string format_prompt(const std::string& question, const std::vector<std::string>& options) {
  std::string p = question;
  for (std::size_t j = 0; j < options.size(); ++j) {
    p += "\n(";
    p += static_cast<char>('A' + j);
    p += ") ";
    p += options[j];
  }
  p += "\nanswer:";
  return p;
}

struct MCQSample {
  std::string id;
  TokenSequence prompt;
  std::vector<TokenSequence> options;       // continuation tokens per option
  std::vector<std::uint32_t> label_tokens;  // single label token per option
  std::size_t correct = 0;

  std::size_t option_count() const { return options.size(); }
};

struct LabelDistribution {
  std::vector<double> p;
};

struct Task {
  std::vector<MCQSample> samples;
  LabelDistribution labels;
};

inline MCQSample make_sample(std::string id, const std::string& question, const std::vector<std::string>& options,
                             std::size_t answer) {
  MCQSample s;
  s.id = std::move(id);
  s.prompt = ByteTokenizer::encode(format_prompt(question, options), true);
  for (std::size_t j = 0; j < options.size(); ++j) {
    s.options.push_back(ByteTokenizer::encode(" " + options[j]));
    s.label_tokens.push_back(option_label_token(j));
  }
  s.correct = answer;
  return s;
}

inline LabelDistribution label_distribution(const std::vector<MCQSample>& samples) {
  std::size_t m = 0;
  for (const auto& s : samples) m = std::max(m, s.option_count());
  LabelDistribution d;
  d.p.assign(m, 0.0);
  if (samples.empty()) return d;
  for (const auto& s : samples) d.p[s.correct] += 1.0;
  for (double& v : d.p) v /= static_cast<double>(samples.size());
  return d;
}

inline Task parse_mcq(std::istream& in, const std::string& origin = "<input>") {
  Task task;
  std::string line;
  std::size_t line_no = 0;
  auto fail = [&](const std::string& why) {
    throw DataError(origin + ":" + std::to_string(line_no) + ": " + why);
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception&) {
      fail("malformed record");
    }
    if (!rec.is_object() || !rec.contains("question") || !rec.contains("options") || !rec.contains("answer_idx")) {
      fail("record needs question, options, answer_idx");
    }
    if (!rec["question"].is_string() || !rec["options"].is_array() || !rec["answer_idx"].is_number_integer()) {
      fail("field has wrong type");
    }
    std::vector<std::string> options;
    for (const auto& o : rec["options"]) {
      if (!o.is_string() || o.get<std::string>().empty()) fail("options must be nonempty strings");
      options.push_back(o.get<std::string>());
    }
    if (options.empty()) fail("empty options");
    if (options.size() < 2) fail("need at least 2 options");
    if (options.size() > kMaxOptions) fail("more than 26 options");
    const auto answer = rec["answer_idx"].get<long long>();
    if (answer < 0 || static_cast<std::size_t>(answer) >= options.size()) {
      fail("answer_idx " + std::to_string(answer) + " out of range for " + std::to_string(options.size()) + " options");
    }
    std::string id = rec.contains("id") && rec["id"].is_string() ? rec["id"].get<std::string>()
                                                                 : "line-" + std::to_string(line_no);
    task.samples.push_back(make_sample(std::move(id), rec["question"].get<std::string>(), options,
                                       static_cast<std::size_t>(answer)));
  }
  task.labels = label_distribution(task.samples);
  return task;
}

inline Task load_mcq(const io::fs::path& path) {
  std::istringstream in(io::read_text(path));
  return parse_mcq(in, path.string());
}

enum class ScoringMode { label_token, length_normalized };
enum class ScoreScale { logit, log_prob };

inline const char* to_string(ScoringMode m) {
  return m == ScoringMode::label_token ? "label-token" : "length-normalized";
}

struct ScoringOptions {
  ScoringMode mode = ScoringMode::label_token;
  // Label-token mode only: raw lensed logits or log-softmax over the vocabulary.
  ScoreScale scale = ScoreScale::logit;
};

struct OptionScores {
  std::vector<double> z;
  ScoringMode mode = ScoringMode::label_token;
};

// Layer selector on the dense axis; nullopt means the final retained layer.
using LayerSelector = std::optional<std::size_t>;

inline void check_label_tokens(const MCQSample& s) {
  std::set<std::uint32_t> seen(s.label_tokens.begin(), s.label_tokens.end());
  if (seen.size() != s.label_tokens.size() || s.label_tokens.size() != s.options.size()) {
    throw ConfigError("sample '" + s.id + "': label tokens collide across options");
  }
}

// Label-token scores read from one hidden state at the decision position.
inline std::vector<double> label_scores(const TransformerModel& model, std::span<const double> state,
                                        const MCQSample& s, ScoreScale scale) {
  if (scale == ScoreScale::logit) return lens_rows(model, state, s.label_tokens);
  const auto lp = log_softmax(lens(model, state));
  std::vector<double> z(s.label_tokens.size());
  for (std::size_t j = 0; j < z.size(); ++j) z[j] = lp.at(s.label_tokens[j]);
  return z;
}

// Scores for every retained layer, [local layer][option]. Label-token mode
// uses the supplied trace of the prompt forward when given.
inline std::vector<std::vector<double>> option_scores_all_layers(const TransformerModel& model,
                                                                 const Topology& topology, const MCQSample& s,
                                                                 const ScoringOptions& opts,
                                                                 const HiddenTrace* prompt_trace = nullptr) {
  const std::size_t L = topology.size();
  std::vector<std::vector<double>> out(L);
  if (opts.mode == ScoringMode::label_token) {
    check_label_tokens(s);
    ForwardResult fr;
    if (!prompt_trace) {
      ForwardOptions fo;
      fo.compute_logits = false;
      fr = forward(model, topology, {s.prompt}, fo);
      prompt_trace = &fr.trace;
    }
    const std::size_t pos = s.prompt.size() - 1;
    for (std::size_t k = 0; k < L; ++k) {
      out[k] = label_scores(model, prompt_trace->output(k, 0).row(pos), s, opts.scale);
    }
    return out;
  }
  for (auto& row : out) row.assign(s.options.size(), 0.0);
  for (std::size_t j = 0; j < s.options.size(); ++j) {
    TokenSequence seq = s.prompt;
    seq.insert(seq.end(), s.options[j].begin(), s.options[j].end());
    ForwardOptions fo;
    fo.compute_logits = false;
    const auto fr = forward(model, topology, {seq}, fo);
    const std::size_t start = s.prompt.size();
    for (std::size_t k = 0; k < L; ++k) {
      double total = 0.0;
      for (std::size_t t = start; t < seq.size(); ++t) {
        const auto lp = log_softmax(lens(model, fr.trace.output(k, 0).row(t - 1)));
        total += lp[seq[t]];
      }
      out[k][j] = total / static_cast<double>(seq.size() - start);
    }
  }
  return out;
}

inline std::size_t resolve_layer(const Topology& topology, LayerSelector layer) {
  if (!layer) return topology.size() - 1;
  for (std::size_t k = 0; k < topology.size(); ++k) {
    if (topology[k] == *layer) return k;
  }
  throw ArgumentError("layer " + std::to_string(*layer) + " is not in topology " + topology.to_string());
}

inline OptionScores score_options(const TransformerModel& model, const Topology& topology, const MCQSample& s,
                                  LayerSelector layer = std::nullopt, const ScoringOptions& opts = {}) {
  topology.validate(model.config.n_layers);
  const std::size_t k = resolve_layer(topology, layer);
  auto all = option_scores_all_layers(model, topology, s, opts);
  return {std::move(all[k]), opts.mode};
}

inline double accuracy(const std::vector<OptionScores>& scores, const std::vector<MCQSample>& samples) {
  if (scores.empty()) throw ArgumentError("accuracy: empty input");
  if (scores.size() != samples.size()) throw ArgumentError("accuracy: scores and samples not aligned");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (argmax(scores[i].z) == samples[i].correct) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(scores.size());
}

}  // namespace prunelens
