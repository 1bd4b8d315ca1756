// prunelens command-line front end.
//
// Every command writes into a staging directory next to the requested output
// and renames it into place only after all artifacts and run.json exist, so
// a failed run leaves nothing behind. Errors print one line,
// "error: <kind>: <message>", and exit 1; usage errors exit 2.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <charconv>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "prunelens/prunelens.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace prunelens;

namespace {

class UsageError : public Error {
 public:
  explicit UsageError(const std::string& what) : Error("usage", what) {}
};

struct Options {
  bool synthetic = false;
  std::optional<std::size_t> staged;
  std::string weights;
  std::string trace;
  std::string reference;
  std::size_t layers = 0;  // 0: source default
  std::size_t d_model = 32, heads = 4, d_ff = 64, vocab = ByteTokenizer::kVocabSize;
  std::optional<std::uint64_t> model_seed;

  std::string task;
  std::size_t samples = 0;  // 0: all
  std::string out;
  std::uint64_t seed = 0;
  unsigned threads = 1;
  std::string scoring = "label-token";
  bool log_prob = false;
  std::size_t sustain = 0;  // 0: sustained to the final layer
  std::vector<std::size_t> remove;

  std::size_t target = 0;
  double tau = 0.05;
  std::size_t calibration = 256;
  std::string restart = "dense-global";

  std::vector<double> variances{0.02, 0.5};
  std::optional<std::size_t> split;
  std::size_t trials = 1;
  std::vector<std::size_t> noise_layers;

  std::size_t cka_samples = 256;
  std::string signal = "both";

  std::string points;
  std::size_t permutations = kDefaultPermutations;

  bool export_trace = false;
  std::size_t transition = 4;
  std::uint64_t task_seed = 2024;
};

// ---------------------------------------------------------------- inputs

std::string one_line(std::string s) {
  for (char& c : s) {
    if (c == '\n' || c == '\r') c = ' ';
  }
  return s;
}

struct LoadedTask {
  Task task;
  json description;
};

LoadedTask load_task(const Options& o) {
  LoadedTask t;
  std::string text;
  if (o.task.empty()) {
    text = fixture_task_jsonl();
    std::istringstream in(text);
    t.task = parse_mcq(in, "<bundled fixture>");
    t.description["path"] = "<bundled fixture>";
  } else {
    text = io::read_text(o.task);
    std::istringstream in(text);
    t.task = parse_mcq(in, o.task);
    t.description["path"] = o.task;
  }
  t.description["crc32"] = crc32_hex(std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
  if (t.task.samples.empty()) throw DataError("task has no samples");
  if (o.samples && o.samples < t.task.samples.size()) {
    t.task.samples.resize(o.samples);
    t.task.labels = label_distribution(t.task.samples);
  }
  t.description["samples"] = t.task.samples.size();
  return t;
}

int source_count(const Options& o) {
  return int(o.synthetic) + int(o.staged.has_value()) + int(!o.weights.empty()) + int(!o.trace.empty());
}

struct LoadedModel {
  TransformerModel model;
  json description;
};

LoadedModel load_model(const Options& o, const Task& task) {
  if (source_count(o) != 1) {
    throw UsageError("choose exactly one model source: --synthetic, --staged K, --weights DIR or --trace DIR");
  }
  if (!o.trace.empty()) throw UsageError("this command needs a model; --trace is accepted by analyze and align only");
  LoadedModel m;
  if (o.synthetic) {
    ModelConfig c;
    c.n_layers = o.layers ? o.layers : 6;
    c.d_model = o.d_model;
    c.n_heads = o.heads;
    c.d_ff = o.d_ff;
    c.vocab_size = o.vocab;
    c.seed = o.model_seed.value_or(0);
    m.model = build_synthetic(c);
    m.description["source"] = "synthetic";
  } else if (o.staged) {
    const ModelConfig c = staged_config(o.layers ? o.layers : 8, o.model_seed.value_or(7));
    m.model = plant_staged_fixture(c, *o.staged, default_label_tokens(task.samples.front().option_count()));
    m.description["source"] = "staged";
    m.description["transition_at"] = *o.staged;
  } else {
    m.model = load_weights(o.weights);
    m.description["source"] = "weights";
    m.description["path"] = o.weights;
  }
  m.description["config"] = config_to_json(m.model.config);
  m.description["weights_crc32"] = weights_checksum(m.model);
  return m;
}

ScoringOptions scoring(const Options& o) {
  ScoringOptions s;
  if (o.scoring == "label-token") {
    s.mode = ScoringMode::label_token;
  } else if (o.scoring == "length-normalized") {
    s.mode = ScoringMode::length_normalized;
  } else {
    throw UsageError("unknown scoring mode '" + o.scoring + "'");
  }
  s.scale = o.log_prob ? ScoreScale::log_prob : ScoreScale::logit;
  return s;
}

json scoring_json(const Options& o) {
  return {{"mode", o.scoring}, {"scale", o.log_prob ? "log-prob" : "logit"}};
}

std::optional<std::size_t> sustain(const Options& o) {
  return o.sustain ? std::optional<std::size_t>(o.sustain) : std::nullopt;
}

json optional_json(const std::optional<std::size_t>& v) { return v ? json(*v) : json(nullptr); }

Topology removal_topology(const TransformerModel& model, const std::vector<std::size_t>& remove) {
  for (std::size_t l : remove) {
    if (l >= model.config.n_layers) throw ArgumentError("layer " + std::to_string(l) + " out of range");
  }
  const Topology t = Topology::without(model.config.n_layers, remove);
  if (t.size() == 0) throw ArgumentError("cannot remove every layer");
  return t;
}

// ---------------------------------------------------------------- outputs

fs::path resolve_out(const Options& o, const std::string& command) {
  fs::path out;
  if (!o.out.empty()) {
    out = o.out;
  } else if (const char* root = std::getenv("PRUNELENS_OUT"); root && *root) {
    out = fs::path(root) / command;
  } else {
    throw UsageError("no output directory: pass --out or set PRUNELENS_OUT");
  }
  out = out.lexically_normal();
  if (!out.has_filename()) out = out.parent_path();
  return out;
}

class Staging {
 public:
  explicit Staging(fs::path final_dir) : final_(std::move(final_dir)) {
    tmp_ = final_;
    tmp_ += ".partial";
    std::error_code ec;
    fs::remove_all(tmp_, ec);
    io::ensure_dir(tmp_);
  }
  Staging(const Staging&) = delete;
  Staging& operator=(const Staging&) = delete;
  ~Staging() {
    if (!committed_) {
      std::error_code ec;
      fs::remove_all(tmp_, ec);
    }
  }

  const fs::path& dir() const { return tmp_; }

  void commit() {
    std::error_code ec;
    if (fs::exists(final_)) {
      const bool ours = fs::is_directory(final_) && (fs::is_empty(final_) || fs::exists(final_ / "run.json"));
      if (!ours) throw IoError("refusing to replace " + final_.string() + ": not a prunelens output directory");
      fs::remove_all(final_, ec);
      if (ec) throw IoError("cannot replace " + final_.string() + ": " + ec.message());
    }
    fs::rename(tmp_, final_, ec);
    if (ec) throw IoError("cannot move results into " + final_.string() + ": " + ec.message());
    committed_ = true;
  }

 private:
  fs::path final_;
  fs::path tmp_;
  bool committed_ = false;
};

json artifact_list(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) files.push_back(fs::relative(e.path(), dir));
  }
  std::sort(files.begin(), files.end());
  json out = json::array();
  for (const auto& f : files) {
    const auto bytes = io::read_bytes(dir / f);
    out.push_back({{"file", f.generic_string()}, {"bytes", bytes.size()}, {"crc32", crc32_hex(bytes)}});
  }
  return out;
}

// run.json records what is needed to reproduce the directory. The output
// location and thread count are left out: neither affects any artifact.
void finish(Staging& stage, const std::string& command, const Options& o, json inputs, json params, json results) {
  json run = {{"tool", "prunelens"},
              {"version", kVersion},
              {"command", command},
              {"seed", o.seed},
              {"inputs", std::move(inputs)},
              {"parameters", std::move(params)},
              {"results", std::move(results)},
              {"formats", {{"weights", kWeightsFormat}, {"trace", kTraceFormat}}},
              {"artifacts", artifact_list(stage.dir())}};
  io::write_text(stage.dir() / "run.json", run.dump(2) + "\n");
  stage.commit();
}

// ---------------------------------------------------------------- commands

void cmd_analyze(const Options& o) {
  const fs::path out = resolve_out(o, "analyze");
  CapturedTraces traces;
  LabelDistribution labels;
  json inputs, params = {{"sustain", o.sustain ? json(o.sustain) : json("end")}, {"kl_smoothing", kDefaultKlSmoothing}};
  BundleInfo info;
  if (!o.trace.empty()) {
    if (source_count(o) != 1) throw UsageError("choose exactly one model source");
    if (!o.remove.empty()) throw UsageError("--remove needs a model, not a trace bundle");
    TraceBundle b = read_bundle(o.trace);
    traces = std::move(b.traces);
    info = b.info;
    labels = label_distribution(traces.decision.correct, traces.decision.option_count());
    inputs["model"] = {{"source", "trace"}, {"path", o.trace}, {"model_name", info.model_name}};
  } else {
    const auto task = load_task(o);
    const auto model = load_model(o, task.task);
    const Topology topo = removal_topology(model.model, o.remove);
    CaptureOptions co;
    co.scoring = scoring(o);
    co.threads = o.threads;
    traces = capture(model.model, topo, task.task.samples, co);
    labels = task.task.labels;
    inputs = {{"model", model.description}, {"task", task.description}};
    params["removed"] = o.remove;
    params["scoring"] = scoring_json(o);
    info.model_name = model.description["source"].get<std::string>();
    info.norm = to_string(model.model.config.norm.type);
    info.scoring_mode = o.scoring;
  }
  const auto rows = layer_metrics(traces.decision, labels);
  const auto tr = detect_transition(dm_profile(traces.decision), sustain(o));

  Staging stage(out);
  layers_csv(rows).save(stage.dir() / "layers.csv");
  transition_csv(tr).save(stage.dir() / "transition.csv");
  if (o.export_trace) write_bundle(traces, stage.dir() / "trace", info);
  finish(stage, "analyze", o, inputs, params,
         {{"transition_layer", optional_json(tr.layer)},
          {"final_dm", rows.back().dm},
          {"final_accuracy", rows.back().accuracy},
          {"layers", traces.decision.topology.retained()}});
}

RestartMode restart_mode(const std::string& s) {
  if (s == "dense-global") return RestartMode::dense_global;
  if (s == "best-state") return RestartMode::best_state;
  throw UsageError("unknown restart mode '" + s + "'");
}

void cmd_prune(const Options& o) {
  const fs::path out = resolve_out(o, "prune");
  const auto task = load_task(o);
  const auto model = load_model(o, task.task);
  IPConfig cfg;
  const std::size_t L = model.model.config.n_layers;
  cfg.target_depth = o.target ? o.target : std::max<std::size_t>(1, L / 2);
  cfg.tau = o.tau;
  cfg.calibration_samples = o.calibration;
  cfg.seed = o.seed;
  cfg.restart = restart_mode(o.restart);
  const IPResult r = run_ip(model.model, task.task.samples, cfg, scoring(o), o.threads);

  std::size_t restarts = 0;
  for (const auto& s : r.steps) restarts += s.restart ? 1 : 0;
  Staging stage(out);
  trajectory_csv(r).save(stage.dir() / "trajectory.csv");
  trajectory_dm_csv(r).save(stage.dir() / "trajectory_dm.csv");
  io::write_text(stage.dir() / "removed_layers.txt", removed_layers_text(r));
  finish(stage, "prune", o, {{"model", model.description}, {"task", task.description}},
         {{"target_depth", cfg.target_depth},
          {"tau", cfg.tau},
          {"calibration_samples", cfg.calibration_samples},
          {"restart", to_string(cfg.restart)},
          {"scoring", scoring_json(o)}},
         {{"critical_pruning_threshold", critical_pruning_threshold(r, cfg.tau)},
          {"restarts", restarts},
          {"final_layers", r.steps.back().topology.retained()},
          {"final_accuracy", r.steps.back().accuracy}});
}

void cmd_ablate(const Options& o) {
  const fs::path out = resolve_out(o, "ablate");
  const auto task = load_task(o);
  const auto model = load_model(o, task.task);
  const AblationResult r = ablate(model.model, task.task.samples, o.remove, scoring(o), sustain(o), o.threads);

  Staging stage(out);
  layers_csv(r.rows).save(stage.dir() / "layers.csv");
  transition_csv(r.transition).save(stage.dir() / "transition.csv");
  finish(stage, "ablate", o, {{"model", model.description}, {"task", task.description}},
         {{"removed", o.remove}, {"sustain", o.sustain ? json(o.sustain) : json("end")}, {"scoring", scoring_json(o)}},
         {{"accuracy", r.accuracy},
          {"transition_layer", optional_json(r.transition.layer)},
          {"layers", r.topology.retained()}});
}

void cmd_noise(const Options& o) {
  const fs::path out = resolve_out(o, "noise");
  const auto task = load_task(o);
  const auto model = load_model(o, task.task);
  const Topology topo = removal_topology(model.model, o.remove);
  json params = {{"removed", o.remove}, {"trials", o.trials}, {"scoring", scoring_json(o)}};
  json results;
  Staging stage(out);
  if (!o.noise_layers.empty()) {
    if (o.variances.size() != 1) throw UsageError("--noise-layers takes exactly one --variances value");
    NoiseConfig cfg{o.noise_layers, o.variances.front(), o.seed, o.trials};
    const auto r = inject(model.model, topo, task.task.samples, cfg, scoring(o), o.threads);
    noise_layers_csv(r).save(stage.dir() / "noise_layers.csv");
    params["noise_layers"] = o.noise_layers;
    params["variance"] = cfg.variance;
    results["mean_final_dm"] = r.mean.back();
    results["clean_final_dm"] = r.clean.back().value;
  } else {
    std::size_t split;
    if (o.split) {
      split = *o.split;
    } else if (o.staged) {
      split = *o.staged;
    } else {
      throw UsageError("noise sweep needs --split (defaults to the planted layer only for --staged)");
    }
    const auto r = sweep(model.model, topo, task.task.samples, o.variances, split, o.trials, o.seed, scoring(o),
                         o.threads);
    noise_csv(r).save(stage.dir() / "noise.csv");
    noise_summary_csv(r).save(stage.dir() / "noise_summary.csv");
    params["variances"] = o.variances;
    params["split"] = split;
    results["clean_final_dm"] = r.clean_final_dm;
    json s = json::array();
    for (const auto& row : r.summary) {
      s.push_back({{"phase", to_string(row.phase)}, {"variance", row.variance}, {"mean_dm_drop", row.mean_drop}});
    }
    results["summary"] = s;
  }
  finish(stage, "noise", o, {{"model", model.description}, {"task", task.description}}, params, results);
}

std::vector<Signal> signals(const std::string& s) {
  if (s == "both") return {Signal::pooled, Signal::decision};
  if (s == "pooled") return {Signal::pooled};
  if (s == "decision") return {Signal::decision};
  throw UsageError("unknown signal '" + s + "'");
}

void cmd_align(const Options& o) {
  const fs::path out = resolve_out(o, "align");
  CapturedTraces rows, cols;
  json inputs, params = {{"signal", o.signal}};
  if (!o.trace.empty()) {
    if (source_count(o) != 1) throw UsageError("choose exactly one model source");
    if (o.reference.empty()) throw UsageError("--trace needs --reference DIR (the dense-model bundle)");
    rows = read_bundle(o.trace).traces;
    cols = read_bundle(o.reference).traces;
    inputs = {{"model", {{"source", "trace"}, {"path", o.trace}}}, {"reference", o.reference}};
  } else {
    auto task = load_task(o);
    if (o.cka_samples && o.cka_samples < task.task.samples.size()) task.task.samples.resize(o.cka_samples);
    const auto model = load_model(o, task.task);
    const Topology pruned = removal_topology(model.model, o.remove);
    CaptureOptions co;
    co.scoring = scoring(o);
    co.threads = o.threads;
    rows = capture(model.model, pruned, task.task.samples, co);
    cols = capture(model.model, Topology::dense(model.model.config.n_layers), task.task.samples, co);
    inputs = {{"model", model.description}, {"task", task.description}};
    params["removed"] = o.remove;
    params["cka_samples"] = task.task.samples.size();
    params["scoring"] = scoring_json(o);
  }
  Staging stage(out);
  json results;
  for (Signal s : signals(o.signal)) {
    const auto m = alignment_matrix(rows, cols, s, o.threads);
    const auto curve = best_match(m);
    const std::string tag = to_string(s);
    cka_csv(m).save(stage.dir() / ("cka_" + tag + ".csv"));
    best_match_csv(curve).save(stage.dir() / ("best_match_" + tag + ".csv"));
    results[tag] = {{"final_layer_best_match", curve.best_col.back()}, {"final_layer_cka", curve.best_value.back()}};
  }
  finish(stage, "align", o, inputs, params, results);
}

double parse_number(const std::string& cell, const std::string& where) {
  double v = 0.0;
  const char* b = cell.data();
  const char* e = b + cell.size();
  auto [ptr, ec] = std::from_chars(b, e, v);
  if (ec != std::errc{} || ptr != e || !std::isfinite(v)) throw DataError(where + ": '" + cell + "' is not a number");
  return v;
}

std::vector<CorrelationPoint> read_points(const std::string& path) {
  std::istringstream in(io::read_text(path));
  std::string line;
  auto split = [](const std::string& l) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream s(l);
    while (std::getline(s, cell, ',')) {
      while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
      while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
      cells.push_back(cell);
    }
    return cells;
  };
  if (!std::getline(in, line)) throw DataError(path + ": empty points file");
  const auto header = split(line);
  const auto col = [&](const std::string& name) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw DataError(path + ":1: missing column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t ct = col("transition_layer"), cc = col("critical_threshold");
  std::vector<CorrelationPoint> pts;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto cells = split(line);
    const std::string where = path + ":" + std::to_string(line_no);
    if (cells.size() != header.size()) throw DataError(where + ": expected " + std::to_string(header.size()) + " cells");
    pts.push_back({parse_number(cells[ct], where), parse_number(cells[cc], where)});
  }
  return pts;
}

void cmd_correlate(const Options& o) {
  const fs::path out = resolve_out(o, "correlate");
  if (o.points.empty()) throw UsageError("correlate needs --points FILE");
  const auto pts = read_points(o.points);
  const auto text = io::read_bytes(o.points);
  const auto rep = correlate(pts, o.permutations, o.seed);
  Staging stage(out);
  correlation_csv(rep).save(stage.dir() / "correlation.csv");
  correlation_summary_csv(rep).save(stage.dir() / "correlation_summary.csv");
  finish(stage, "correlate", o, {{"points", {{"path", o.points}, {"crc32", crc32_hex(text)}}}},
         {{"permutations", o.permutations}}, {{"n", pts.size()}, {"r", rep.r}, {"p", rep.p}});
}

void cmd_fixture(const Options& o) {
  const fs::path out = resolve_out(o, "fixture");
  if (source_count(o) != 0) throw UsageError("fixture takes no model source; use --transition");
  const std::size_t n = o.samples ? o.samples : 64;
  const std::string text = fixture_task_jsonl(n, o.task_seed);
  const ModelConfig c = staged_config(o.layers ? o.layers : 8, o.model_seed.value_or(7));
  const auto model = plant_staged_fixture(c, o.transition, default_label_tokens());
  Staging stage(out);
  save_weights(model, stage.dir() / "model");
  io::write_text(stage.dir() / "task.jsonl", text);
  finish(stage, "fixture", o, json::object(),
         {{"transition_at", o.transition}, {"config", config_to_json(c)}, {"samples", n}, {"task_seed", o.task_seed}},
         {{"weights_crc32", weights_checksum(model)}});
}

// ---------------------------------------------------------------- parsing

void add_model_source(CLI::App* sub, Options& o, bool allow_trace) {
  auto* g = sub->add_option_group("model source");
  g->add_flag("--synthetic", o.synthetic, "Seeded random model");
  g->add_option("--staged", o.staged, "Staged fixture with its transition at layer K");
  g->add_option("--weights", o.weights, "Weight bundle directory");
  if (allow_trace) g->add_option("--trace", o.trace, "Trace bundle directory");
  sub->add_option("--layers", o.layers, "Layer count for --synthetic/--staged (default 6/8)");
  sub->add_option("--d-model", o.d_model, "Width for --synthetic")->capture_default_str();
  sub->add_option("--heads", o.heads, "Attention heads for --synthetic")->capture_default_str();
  sub->add_option("--d-ff", o.d_ff, "Feed-forward width for --synthetic")->capture_default_str();
  sub->add_option("--vocab", o.vocab, "Vocabulary size for --synthetic")->capture_default_str();
  sub->add_option("--model-seed", o.model_seed, "Weight seed for --synthetic/--staged (default 0/7)");
}

void add_task(CLI::App* sub, Options& o) {
  sub->add_option("--task", o.task, "MCQ JSON-lines file (default: bundled fixture)");
  sub->add_option("--samples", o.samples, "Use only the first N samples");
  sub->add_option("--scoring", o.scoring, "label-token | length-normalized")->capture_default_str();
  sub->add_flag("--log-prob", o.log_prob, "Score label tokens by log-probability instead of raw logits");
}

void add_common(CLI::App* sub, Options& o) {
  sub->add_option("--out", o.out, "Output directory (default: $PRUNELENS_OUT/<command>)");
  sub->add_option("--seed", o.seed, "Top-level seed for randomized procedures")->capture_default_str();
  sub->add_option("--threads", o.threads, "Worker threads")->capture_default_str()->check(CLI::PositiveNumber);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Decision-centric analysis of layer-pruned transformers"};
  app.set_config("--config", "", "INI/TOML config file; command-line flags override it");
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  Options o;

  auto* analyze = app.add_subcommand("analyze", "Per-layer DM, OF, KL, accuracy and the transition layer");
  add_model_source(analyze, o, true);
  add_task(analyze, o);
  add_common(analyze, o);
  analyze->add_option("--remove", o.remove, "Dense layers to skip")->delimiter(',');
  analyze->add_option("--sustain", o.sustain, "Sustain window (default: to the final layer)");
  analyze->add_flag("--export-trace", o.export_trace, "Also write the captured trace bundle to <out>/trace");

  auto* prune = app.add_subcommand("prune", "Iterative pruning with restart");
  add_model_source(prune, o, false);
  add_task(prune, o);
  add_common(prune, o);
  prune->add_option("--target", o.target, "Target depth (default: half the dense depth)");
  prune->add_option("--tau", o.tau, "Collapse threshold on accuracy")->capture_default_str();
  prune->add_option("--calibration", o.calibration, "Prompts used for block influence")->capture_default_str();
  prune->add_option("--restart", o.restart, "dense-global | best-state")->capture_default_str();

  auto* abl = app.add_subcommand("ablate", "Evaluate with chosen layers removed");
  add_model_source(abl, o, false);
  add_task(abl, o);
  add_common(abl, o);
  abl->add_option("--remove", o.remove, "Dense layers to remove")->delimiter(',')->required();
  abl->add_option("--sustain", o.sustain, "Sustain window (default: to the final layer)");

  auto* noise = app.add_subcommand("noise", "Phase-wise noise injection sweep");
  add_model_source(noise, o, false);
  add_task(noise, o);
  add_common(noise, o);
  noise->add_option("--variances", o.variances, "Noise variances")->delimiter(',')->capture_default_str();
  noise->add_option("--split", o.split, "First decisive-phase layer (default: --staged K)");
  noise->add_option("--trials", o.trials, "Trials per variance")->capture_default_str();
  noise->add_option("--noise-layers", o.noise_layers, "Inject into these dense layers only")->delimiter(',');
  noise->add_option("--remove", o.remove, "Dense layers to skip")->delimiter(',');

  auto* align = app.add_subcommand("align", "CKA between a pruned and the dense model");
  add_model_source(align, o, true);
  add_task(align, o);
  add_common(align, o);
  align->add_option("--remove", o.remove, "Dense layers removed in the pruned model")->delimiter(',');
  align->add_option("--reference", o.reference, "Dense reference trace bundle (with --trace)");
  align->add_option("--cka-samples", o.cka_samples, "Samples used for CKA")->capture_default_str();
  align->add_option("--signal", o.signal, "pooled | decision | both")->capture_default_str();

  auto* corr = app.add_subcommand("correlate", "Pearson correlation of transition depth vs pruning threshold");
  add_common(corr, o);
  corr->add_option("--points", o.points, "CSV with transition_layer and critical_threshold columns");
  corr->add_option("--permutations", o.permutations, "Permutation count")->capture_default_str();

  auto* fix = app.add_subcommand("fixture", "Write the staged model and its task");
  add_common(fix, o);
  fix->add_option("--transition", o.transition, "Planted transition layer")->capture_default_str();
  fix->add_option("--layers", o.layers, "Layer count (default 8)");
  fix->add_option("--model-seed", o.model_seed, "Weight seed (default 7)");
  fix->add_option("--samples", o.samples, "Task samples (default 64)");
  fix->add_option("--task-seed", o.task_seed, "Task generator seed")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: usage: " << one_line(e.what()) << "\n";
    return 2;
  }

  try {
    if (analyze->parsed()) cmd_analyze(o);
    if (prune->parsed()) cmd_prune(o);
    if (abl->parsed()) cmd_ablate(o);
    if (noise->parsed()) cmd_noise(o);
    if (align->parsed()) cmd_align(o);
    if (corr->parsed()) cmd_correlate(o);
    if (fix->parsed()) cmd_fixture(o);
  } catch (const UsageError& e) {
    std::cerr << "error: usage: " << one_line(e.what()) << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.kind() << ": " << one_line(e.what()) << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: internal: " << one_line(e.what()) << "\n";
    return 1;
  }
  return 0;
}
