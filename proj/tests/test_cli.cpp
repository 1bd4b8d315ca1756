#include <cstdio>
#include <map>
#include <sys/wait.h>

#include "support.hpp"

using namespace prunelens;

namespace {

struct Run {
  int code = -1;
  std::string output;
};

Run run(const std::string& args, const std::string& env = "") {
  const std::string cmd = env + (env.empty() ? "" : " ") + "'" PRUNELENS_CLI "' " + args + " 2>&1";
  Run r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  char buf[4096];
  std::size_t n;
  while ((n = fread(buf, 1, sizeof buf, pipe)) > 0) r.output.append(buf, n);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::map<std::string, std::vector<std::uint8_t>> snapshot(const io::fs::path& dir) {
  std::map<std::string, std::vector<std::uint8_t>> out;
  for (const auto& e : io::fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) out[io::fs::relative(e.path(), dir).string()] = io::read_bytes(e.path());
  }
  return out;
}

std::size_t line_count(const std::string& s) {
  std::size_t n = 0;
  for (char c : s) n += c == '\n';
  return n;
}

// One fresh directory per test so tests can run in parallel.
std::string scratch() {
  const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
  static std::map<std::string, std::string> dirs;
  auto& dir = dirs[info->name()];
  if (dir.empty()) dir = support::scratch_dir(std::string("cli-") + info->name()).string();
  return dir;
}

}  // namespace

TEST(Cli, AnalyzeReportsPlantedLayer) {
  const auto out = scratch() + "/analyze";
  const auto r = run("analyze --staged 3 --out " + out);
  ASSERT_EQ(r.code, 0) << r.output;
  const auto csv = io::read_text(out + "/transition.csv");
  EXPECT_EQ(csv.substr(0, csv.find(',', csv.find('\n'))), "transition_layer,sustain,final_dm\n3");
  const auto manifest = nlohmann::json::parse(io::read_text(out + "/run.json"));
  EXPECT_EQ(manifest["command"], "analyze");
  EXPECT_EQ(manifest["inputs"]["task"]["path"], "<bundled fixture>");
  EXPECT_EQ(manifest["artifacts"].size(), 2u);
}

TEST(Cli, AnalyzeDeterministicAcrossRunsAndThreads) {
  const auto a = scratch() + "/det-a", b = scratch() + "/det-b", c = scratch() + "/det-c";
  ASSERT_EQ(run("analyze --synthetic --seed 5 --export-trace --out " + a).code, 0);
  ASSERT_EQ(run("analyze --synthetic --seed 5 --export-trace --out " + b).code, 0);
  ASSERT_EQ(run("analyze --synthetic --seed 5 --export-trace --threads 3 --out " + c).code, 0);
  const auto sa = snapshot(a);
  EXPECT_TRUE(sa.count("trace/manifest.json"));
  EXPECT_EQ(sa, snapshot(b));
  EXPECT_EQ(sa, snapshot(c));
}

TEST(Cli, PruneDeterministicAcrossThreads) {
  const auto a = scratch() + "/prune-a", b = scratch() + "/prune-b";
  ASSERT_EQ(run("prune --staged 4 --target 5 --samples 24 --out " + a).code, 0);
  ASSERT_EQ(run("prune --staged 4 --target 5 --samples 24 --threads 3 --out " + b).code, 0);
  const auto sa = snapshot(a);
  EXPECT_EQ(sa.size(), 4u);
  EXPECT_EQ(sa, snapshot(b));
}

TEST(Cli, UsageErrorsExitTwo) {
  for (const std::string args : {"", "analyze --bogus --out x", "analyze --staged nope --out x",
                                 "analyze --staged 3 --synthetic --out x", "ablate --staged 3 --out x"}) {
    const auto r = run(args);
    EXPECT_EQ(r.code, 2) << args << "\n" << r.output;
    EXPECT_EQ(r.output.rfind("error: ", 0), 0u) << r.output;
    EXPECT_EQ(line_count(r.output), 1u) << r.output;
  }
  const auto r = run("analyze --staged 3", "PRUNELENS_OUT=");
  EXPECT_EQ(r.code, 2) << r.output;
}

TEST(Cli, RuntimeErrorsExitOneAndLeaveNothing) {
  const auto out = scratch() + "/missing-weights";
  const auto r = run("analyze --weights " + scratch() + "/no-such-model --out " + out);
  EXPECT_EQ(r.code, 1);
  EXPECT_EQ(r.output.rfind("error: io: ", 0), 0u) << r.output;
  EXPECT_EQ(line_count(r.output), 1u);
  EXPECT_FALSE(io::fs::exists(out));
  EXPECT_FALSE(io::fs::exists(out + ".partial"));

  const auto bad = scratch() + "/bad.jsonl";
  io::write_text(bad, "{\"question\":\"q\",\"options\":[\"a\"],\"answer_idx\":0}\n");
  const auto d = run("analyze --staged 3 --task " + bad + " --out " + out);
  EXPECT_EQ(d.code, 1);
  EXPECT_EQ(d.output.rfind("error: data: ", 0), 0u) << d.output;
  EXPECT_FALSE(io::fs::exists(out));
}

TEST(Cli, FailedRunKeepsPreviousOutputsUntouched) {
  const auto out = scratch() + "/keep";
  ASSERT_EQ(run("analyze --staged 3 --out " + out).code, 0);
  const auto before = snapshot(out);
  EXPECT_EQ(run("ablate --staged 3 --remove 99 --out " + out).code, 1);
  EXPECT_EQ(snapshot(out), before);
  EXPECT_FALSE(io::fs::exists(out + ".partial"));
}

TEST(Cli, RefusesForeignOutputDirectory) {
  const auto out = scratch() + "/foreign";
  io::ensure_dir(out);
  io::write_text(out + "/notes.txt", "mine");
  const auto r = run("analyze --staged 3 --out " + out);
  EXPECT_EQ(r.code, 1);
  EXPECT_EQ(io::read_text(out + "/notes.txt"), "mine");
}

TEST(Cli, OutputFromEnvironment) {
  const auto base = scratch() + "/env";
  ASSERT_EQ(run("analyze --staged 2", "PRUNELENS_OUT=" + base).code, 0);
  EXPECT_TRUE(io::fs::exists(base + "/analyze/transition.csv"));
}

TEST(Cli, ConfigFileWithFlagOverride) {
  const auto cfg = scratch() + "/run.ini";
  io::write_text(cfg, "[analyze]\nstaged=3\nsustain=2\n");
  const auto a = scratch() + "/cfg-a", b = scratch() + "/cfg-b";
  ASSERT_EQ(run("--config " + cfg + " analyze --out " + a).code, 0);
  ASSERT_EQ(run("--config " + cfg + " analyze --staged 5 --out " + b).code, 0);
  EXPECT_EQ(io::read_text(a + "/transition.csv").substr(34, 4), "3,2,");
  EXPECT_EQ(io::read_text(b + "/transition.csv").substr(34, 4), "5,2,");
}

TEST(Cli, FixtureRoundTripsThroughWeights) {
  const auto fx = scratch() + "/fixture", a = scratch() + "/fx-a", b = scratch() + "/fx-b";
  ASSERT_EQ(run("fixture --transition 4 --out " + fx).code, 0);
  ASSERT_EQ(run("analyze --weights " + fx + "/model --task " + fx + "/task.jsonl --out " + a).code, 0);
  ASSERT_EQ(run("analyze --staged 4 --out " + b).code, 0);
  EXPECT_EQ(io::read_text(a + "/layers.csv"), io::read_text(b + "/layers.csv"));
}

TEST(Cli, TraceInputMatchesDirectAnalysis) {
  const auto a = scratch() + "/tr-a", b = scratch() + "/tr-b";
  ASSERT_EQ(run("analyze --staged 5 --export-trace --out " + a).code, 0);
  ASSERT_EQ(run("analyze --trace " + a + "/trace --out " + b).code, 0);
  EXPECT_EQ(io::read_text(b + "/transition.csv").substr(34, 2), "5,");
}

TEST(Cli, NoiseAlignCorrelateSmoke) {
  const auto n = scratch() + "/noise", al = scratch() + "/align", co = scratch() + "/corr";
  ASSERT_EQ(run("noise --staged 4 --samples 16 --out " + n).code, 0);
  EXPECT_TRUE(io::fs::exists(n + "/noise_summary.csv"));
  ASSERT_EQ(run("align --staged 4 --remove 4,5,6 --samples 16 --out " + al).code, 0);
  EXPECT_TRUE(io::fs::exists(al + "/cka_pooled.csv"));
  EXPECT_TRUE(io::fs::exists(al + "/best_match_decision.csv"));
  const auto pts = scratch() + "/points.csv";
  io::write_text(pts, "transition_layer,critical_threshold\n2,0.6\n3,0.5\n4,0.4\n5,0.3\n");
  ASSERT_EQ(run("correlate --points " + pts + " --out " + co).code, 0);
  const auto summary = io::read_text(co + "/correlation_summary.csv");
  EXPECT_NE(summary.find("\n4,-1,"), std::string::npos) << summary;
}

TEST(Cli, Version) {
  const auto r = run("--version");
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.output.find(kVersion), std::string::npos);
}
