#include <sstream>

#include "support.hpp"

using namespace prunelens;

namespace {

std::string record(std::size_t answer, std::size_t m = 4) {
  nlohmann::json opts = nlohmann::json::array();
  for (std::size_t j = 0; j < m; ++j) opts.push_back("opt" + std::to_string(j));
  return nlohmann::json{{"question", "q?"}, {"options", opts}, {"answer_idx", answer}}.dump() + "\n";
}

Task parse(const std::string& text) {
  std::istringstream in(text);
  return parse_mcq(in, "task.jsonl");
}

std::string error_of(const std::string& text) {
  try {
    parse(text);
  } catch (const DataError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(LoadMcq, LabelDistributionFromAnswers) {
  const auto t = parse(record(0) + record(0) + record(1) + record(2));
  ASSERT_EQ(t.samples.size(), 4u);
  EXPECT_EQ(t.labels.p, (std::vector<double>{0.5, 0.25, 0.25, 0.0}));
}

TEST(LoadMcq, DegenerateDistribution) {
  const auto t = parse(record(1, 3) + record(1, 3) + record(1, 3));
  EXPECT_EQ(t.labels.p, (std::vector<double>{0.0, 1.0, 0.0}));
}

TEST(LoadMcq, ErrorsNameTheLine) {
  EXPECT_NE(error_of(record(0) + "{not json\n").find("task.jsonl:2:"), std::string::npos);
  EXPECT_NE(error_of(record(0) + record(1) + record(4)).find("task.jsonl:3:"), std::string::npos);
  EXPECT_NE(error_of(R"({"question":"q","options":[],"answer_idx":0})").find(":1:"), std::string::npos);
  EXPECT_NE(error_of(R"({"question":"q","options":["a",""],"answer_idx":0})").find(":1:"), std::string::npos);
  EXPECT_NE(error_of(R"({"question":"q","options":["a"],"answer_idx":0})").find(":1:"), std::string::npos);
  EXPECT_NE(error_of(R"({"question":"q","answer_idx":0})").find(":1:"), std::string::npos);
  EXPECT_NE(error_of(R"({"question":"q","options":["a","b"],"answer_idx":-1})").find(":1:"), std::string::npos);
}

TEST(LoadMcq, BlankLinesSkippedAndIdsKept) {
  const auto t = parse("\n" + record(1) + "   \n" +
                       R"({"id":"x7","question":"q","options":["a","b"],"answer_idx":0})" + "\n");
  ASSERT_EQ(t.samples.size(), 2u);
  EXPECT_EQ(t.samples[0].id, "line-2");
  EXPECT_EQ(t.samples[1].id, "x7");
}

TEST(LoadMcq, FileRoundTrip) {
  const auto dir = support::scratch_dir("mcq");
  io::write_text(dir / "t.jsonl", record(2) + record(3));
  const auto t = load_mcq(dir / "t.jsonl");
  EXPECT_EQ(t.samples[1].correct, 3u);
  EXPECT_THROW(load_mcq(dir / "missing.jsonl"), IoError);
}

TEST(LoadMcq, LabelDistributionIsADistribution) {
  const auto t = fixture_task();
  double total = 0.0;
  for (double v : t.labels.p) {
    EXPECT_GE(v, 0.0);
    total += v;
  }
  EXPECT_NEAR(total, 1.0, 1e-9);
}

TEST(Tokenizer, PromptEndsAtDecisionToken) {
  const auto s = make_sample("s", "which?", {"red", "blue"}, 1);
  EXPECT_EQ(s.prompt.front(), ByteTokenizer::kBos);
  EXPECT_EQ(s.prompt.back(), kDecisionToken);
  EXPECT_EQ(ByteTokenizer::decode(s.prompt), "which?\n(A) red\n(B) blue\nanswer:");
  EXPECT_EQ(s.label_tokens, (std::vector<std::uint32_t>{'A', 'B'}));
  EXPECT_EQ(ByteTokenizer::decode(s.options[1]), " blue");
}

TEST(BundledTask, FileMatchesGenerator) {
  const auto on_disk = io::read_text(std::filesystem::path(PRUNELENS_SOURCE_DIR) / "data" / "fixture_task.jsonl");
  EXPECT_EQ(on_disk, fixture_task_jsonl());
}

TEST(ScoreOptions, EqualHeadRowsGiveEqualScores) {
  auto m = build_synthetic(support::small_config(2));
  for (std::size_t i = 0; i < m.config.d_model; ++i) m.lm_head('B', i) = m.lm_head('A', i);
  const auto s = make_sample("s", "pick", {"x", "y"}, 0);
  const auto z = score_options(m, Topology::dense(2), s);
  EXPECT_EQ(z.z[0], z.z[1]);
  EXPECT_EQ(z.mode, ScoringMode::label_token);
}

TEST(ScoreOptions, StagedFixtureFinalLayerAlwaysCorrect) {
  const auto task = fixture_task();
  const auto m = plant_staged_fixture(staged_config(), 4, default_label_tokens());
  for (const auto& s : task.samples) {
    const auto z = score_options(m, Topology::dense(8), s);
    EXPECT_EQ(argmax(z.z), s.correct) << s.id;
  }
}

TEST(ScoreOptions, MatchesFinalLogitsOracle) {
  auto c = support::small_config(1, 3);
  const auto m = build_synthetic(c);
  const auto s = make_sample("toy", "2+2", {"four", "five"}, 0);
  const auto fr = forward(m, Topology::dense(1), {s.prompt});
  const auto last = fr.logits[0].row(s.prompt.size() - 1);
  const auto z = score_options(m, Topology::dense(1), s, 0);
  EXPECT_NEAR(z.z[0], last['A'], 1e-9);
  EXPECT_NEAR(z.z[1], last['B'], 1e-9);

  ScoringOptions lp;
  lp.scale = ScoreScale::log_prob;
  const auto zl = score_options(m, Topology::dense(1), s, std::nullopt, lp);
  const auto full = log_softmax(last);
  EXPECT_NEAR(zl.z[0], full['A'], 1e-9);
  EXPECT_NEAR(zl.z[1], full['B'], 1e-9);
}

TEST(ScoreOptions, LengthNormalizedTeacherForcing) {
  const auto m = build_synthetic(support::small_config(2, 6));
  const auto s = make_sample("toy", "color", {"red", "green"}, 1);
  ScoringOptions opts;
  opts.mode = ScoringMode::length_normalized;
  const auto z = score_options(m, Topology::dense(2), s, std::nullopt, opts);
  EXPECT_EQ(z.mode, ScoringMode::length_normalized);
  for (std::size_t j = 0; j < 2; ++j) {
    TokenSequence seq = s.prompt;
    seq.insert(seq.end(), s.options[j].begin(), s.options[j].end());
    const auto fr = forward(m, Topology::dense(2), {seq});
    double total = 0.0;
    for (std::size_t t = s.prompt.size(); t < seq.size(); ++t) total += log_softmax(fr.logits[0].row(t - 1))[seq[t]];
    EXPECT_NEAR(z.z[j], total / static_cast<double>(s.options[j].size()), 1e-9);
  }
}

TEST(ScoreOptions, LabelCollisionIsConfigError) {
  const auto m = build_synthetic(support::small_config(1));
  auto s = make_sample("s", "q", {"a", "b"}, 0);
  s.label_tokens = {'A', 'A'};
  EXPECT_THROW(score_options(m, Topology::dense(1), s), ConfigError);
}

TEST(ScoreOptions, LayerSelector) {
  const auto m = build_synthetic(support::small_config(4));
  const auto s = make_sample("s", "q", {"a", "b", "c"}, 2);
  const Topology t({0, 2, 3});
  const auto all = option_scores_all_layers(m, t, s, {});
  EXPECT_EQ(score_options(m, t, s, 2).z, all[1]);
  EXPECT_EQ(score_options(m, t, s).z, all[2]);
  EXPECT_THROW(score_options(m, t, s, 1), ArgumentError);
}

TEST(ScoreOptions, DependsOnlyOnDecisionPosition) {
  const auto m = build_synthetic(support::small_config(3));
  const auto s = make_sample("s", "which one", {"a", "b", "c"}, 1);
  ForwardOptions fo;
  fo.compute_logits = false;
  auto fr = forward(m, Topology::dense(3), {s.prompt}, fo);
  const auto clean = option_scores_all_layers(m, Topology::dense(3), s, {}, &fr.trace);
  for (auto& layer : fr.trace.states) {
    Tensor2& x = layer[0];
    for (std::size_t p = 0; p + 1 < x.rows(); ++p) {
      for (double& v : x.row(p)) v += 5.0;
    }
  }
  EXPECT_EQ(option_scores_all_layers(m, Topology::dense(3), s, {}, &fr.trace), clean);
}

TEST(Accuracy, Definition) {
  std::vector<MCQSample> samples(2);
  samples[0].correct = 1;
  samples[1].correct = 0;
  EXPECT_EQ(accuracy({{{0.0, 2.0}}, {{3.0, 1.0}}}, samples), 1.0);
  samples[0].correct = 0;
  EXPECT_EQ(accuracy({{{1.0, 1.0}}, {{1.0, 1.0}}}, samples), 1.0);
  EXPECT_EQ(accuracy({{{0.0, 2.0}}, {{3.0, 1.0}}}, samples), 0.5);
  EXPECT_THROW(accuracy({}, {}), ArgumentError);
  EXPECT_THROW(accuracy({{{1.0}}}, samples), ArgumentError);
}

TEST(Accuracy, InvariantUnderIncreasingTransforms) {
  std::vector<MCQSample> samples(50);
  std::vector<OptionScores> raw, transformed;
  for (std::size_t i = 0; i < 50; ++i) {
    samples[i].correct = i % 4;
    auto z = support::random_vector(4, i, -2, 2);
    raw.push_back({z});
    for (double& v : z) v = std::exp(3.0 * v) + static_cast<double>(i);
    transformed.push_back({z});
  }
  EXPECT_EQ(accuracy(raw, samples), accuracy(transformed, samples));
}
