// Library walkthrough on the staged fixture: per-layer metrics, the
// transition layer, an iterative pruning run, and pooled vs decision CKA.
//
//   staged_walkthrough [transition_layer]

#include <cstdio>
#include <cstdlib>
#include <iostream>

#include "prunelens/prunelens.hpp"

using namespace prunelens;

int main(int argc, char** argv) {
  const std::size_t k = argc > 1 ? std::strtoul(argv[1], nullptr, 10) : 4;
  try {
    const Task task = fixture_task();
    const TransformerModel model = plant_staged_fixture(staged_config(), k, default_label_tokens());
    const Topology dense = Topology::dense(model.config.n_layers);

    const CapturedTraces traces = capture(model, dense, task.samples);
    std::cout << layers_csv(layer_metrics(traces.decision, task.labels)).str();
    const auto transition = detect_transition(dm_profile(traces.decision));
    std::cout << "transition layer: " << (transition.layer ? std::to_string(*transition.layer) : "none") << "\n\n";

    IPConfig ip;
    ip.target_depth = 2;
    const IPResult run = run_ip(model, task.samples, ip, ScoringOptions{});
    for (const auto& step : run.steps) {
      std::printf("depth %zu  acc %.3f  final dm %+.3f%s\n", step.topology.size(), step.accuracy,
                  step.dm_profile.back().value, step.restart ? "  (restart)" : "");
    }
    std::printf("critical pruning threshold: %.3f\n\n", critical_pruning_threshold(run, ip.tau));

    // Drop the decisive layers below the last one and ask which dense layer
    // each remaining layer resembles.
    std::vector<std::size_t> removed;
    for (std::size_t l = k; l + 1 < model.config.n_layers; ++l) removed.push_back(l);
    const auto pruned = capture(model, Topology::without(model.config.n_layers, removed), task.samples);
    for (Signal s : {Signal::pooled, Signal::decision}) {
      const auto curve = best_match(alignment_matrix(pruned, traces, s));
      std::printf("%-8s final layer best matches dense layer %zu (cka %.3f)\n", to_string(s),
                  curve.best_col.back(), curve.best_value.back());
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
