#pragma once

// Correlation analysis and plot-ready CSV emission.

#include <nlohmann/json.hpp>

#include <cmath>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "prunelens/alignment.hpp"
#include "prunelens/io_util.hpp"
#include "prunelens/metrics.hpp"
#include "prunelens/perturb.hpp"
#include "prunelens/pruning.hpp"
#include "prunelens/rng.hpp"

namespace prunelens {

inline constexpr std::size_t kDefaultPermutations = 10000;

struct CorrelationPoint {
  double transition_layer = 0.0;
  double critical_threshold = 0.0;
};

struct CorrelationReport {
  std::vector<CorrelationPoint> points;
  double r = 0.0;
  double p = 1.0;
  std::size_t permutations = 0;
};

// Pearson r with a two-sided permutation p-value, (hits + 1) / (perms + 1),
// where a permutation hits when |r_perm| >= |r|.
inline CorrelationReport correlate(const std::vector<CorrelationPoint>& points,
                                   std::size_t permutations = kDefaultPermutations, std::uint64_t seed = 0) {
  if (points.size() < 3) throw ArgumentError("correlate: need at least 3 points");
  if (permutations < 1) throw ArgumentError("correlate: permutations must be >= 1");
  std::vector<double> x, y;
  for (const auto& p : points) {
    x.push_back(p.transition_layer);
    y.push_back(p.critical_threshold);
  }
  CorrelationReport rep;
  rep.points = points;
  rep.permutations = permutations;
  rep.r = pearson(x, y);
  // Relative slack so permutations reproducing the observed pairing count
  // despite rounding in the summation order.
  const double bar = std::abs(rep.r) * (1.0 - 1e-12);
  rng::Sequence seq(rng::derive(seed, "permutation-test"));
  std::vector<double> shuffled = y;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < permutations; ++i) {
    seq.shuffle(shuffled);
    if (std::abs(pearson(x, shuffled)) >= bar) ++hits;
  }
  rep.p = static_cast<double>(hits + 1) / static_cast<double>(permutations + 1);
  return rep;
}

// Minimal CSV builder. Numbers use the shortest round-trip decimal form.
class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> header) : width_(header.size()) { line(header); }

  CsvWriter& cell(const std::string& s) {
    row_.push_back(s);
    return *this;
  }
  CsvWriter& cell(double v) { return cell(io::format_double(v)); }
  CsvWriter& cell(std::size_t v) { return cell(std::to_string(v)); }
  CsvWriter& cell(bool v) { return cell(std::string(v ? "1" : "0")); }
  CsvWriter& blank() { return cell(std::string()); }

  void end_row() {
    if (row_.size() != width_) {
      throw ArgumentError("csv: row has " + std::to_string(row_.size()) + " cells, header has " +
                          std::to_string(width_));
    }
    line(row_);
    row_.clear();
  }

  const std::string& str() const { return text_; }
  void save(const io::fs::path& path) const { io::write_text(path, text_); }

 private:
  void line(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) text_ += ',';
      text_ += cells[i];
    }
    text_ += '\n';
  }

  std::size_t width_;
  std::vector<std::string> row_;
  std::string text_;
};

inline CsvWriter layers_csv(const std::vector<LayerMetricsRow>& rows) {
  const std::size_t M = rows.empty() ? 0 : rows.front().of.size();
  std::vector<std::string> header = {"local_layer", "dense_layer", "dm"};
  for (std::size_t j = 0; j < M; ++j) header.push_back("of_" + std::to_string(j));
  header.insert(header.end(), {"kl", "acc"});
  CsvWriter w(header);
  for (const auto& r : rows) {
    w.cell(r.local_layer).cell(r.dense_layer).cell(r.dm);
    for (double v : r.of) w.cell(v);
    w.cell(r.kl).cell(r.accuracy).end_row();
  }
  return w;
}

inline CsvWriter transition_csv(const TransitionReport& t) {
  CsvWriter w({"transition_layer", "sustain", "final_dm"});
  t.layer ? w.cell(*t.layer) : w.cell(std::string("none"));
  t.sustain ? w.cell(*t.sustain) : w.cell(std::string("end"));
  t.profile.empty() ? w.blank() : w.cell(t.profile.back().value);
  w.end_row();
  return w;
}

inline CsvWriter trajectory_csv(const IPResult& r) {
  CsvWriter w({"step", "removed_layer", "remaining_depth", "pruning_ratio", "accuracy", "restart", "anchor"});
  for (const auto& s : r.steps) {
    w.cell(s.step);
    s.removed ? w.cell(*s.removed) : w.blank();
    w.cell(s.topology.size())
        .cell(pruning_ratio(s.topology.size(), r.dense_depth))
        .cell(s.accuracy)
        .cell(s.restart)
        .cell(s.anchor)
        .end_row();
  }
  return w;
}

// One line per step: "<depth>: [i, j, ...]" listing removed dense indices.
inline std::string removed_layers_text(const IPResult& r) {
  std::ostringstream out;
  out << "# remaining depth: 0-based dense layer indices removed\n";
  for (const auto& s : r.steps) {
    out << s.topology.size() << ": " << Topology(s.topology.removed(r.dense_depth)).to_string() << "\n";
  }
  return out.str();
}

inline CsvWriter trajectory_dm_csv(const IPResult& r) {
  CsvWriter w({"step", "dense_layer", "dm"});
  for (const auto& s : r.steps) {
    for (const auto& p : s.dm_profile) w.cell(s.step).cell(p.dense_layer).cell(p.value).end_row();
  }
  return w;
}

// Rows are the first trace's layers, header lists the second trace's layers.
inline CsvWriter cka_csv(const AlignmentMatrix& m) {
  std::vector<std::string> header = {"layer"};
  for (std::size_t c : m.col_layers) header.push_back(std::to_string(c));
  CsvWriter w(header);
  for (std::size_t r = 0; r < m.values.rows(); ++r) {
    w.cell(m.row_layers[r]);
    for (std::size_t c = 0; c < m.values.cols(); ++c) w.cell(m.values(r, c));
    w.end_row();
  }
  return w;
}

inline CsvWriter best_match_csv(const AlignmentCurve& c) {
  CsvWriter w({"layer", "best_layer", "cka"});
  for (std::size_t i = 0; i < c.row_layers.size(); ++i) {
    w.cell(c.row_layers[i]).cell(c.best_col[i]).cell(c.best_value[i]).end_row();
  }
  return w;
}

inline CsvWriter noise_csv(const SweepResult& s) {
  CsvWriter w({"phase", "variance", "trial", "final_dm", "dm_drop"});
  for (const auto& r : s.rows) {
    w.cell(std::string(to_string(r.phase))).cell(r.variance).cell(r.trial).cell(r.final_dm).cell(r.dm_drop).end_row();
  }
  return w;
}

inline CsvWriter noise_summary_csv(const SweepResult& s) {
  CsvWriter w({"phase", "variance", "mean_dm_drop", "clean_final_dm"});
  for (const auto& r : s.summary) {
    w.cell(std::string(to_string(r.phase))).cell(r.variance).cell(r.mean_drop).cell(s.clean_final_dm).end_row();
  }
  return w;
}

inline CsvWriter noise_layers_csv(const NoiseResult& n) {
  CsvWriter w({"trial", "dense_layer", "clean_dm", "dm"});
  for (std::size_t t = 0; t < n.trials.size(); ++t) {
    for (std::size_t k = 0; k < n.trials[t].size(); ++k) {
      w.cell(t).cell(n.trials[t][k].dense_layer).cell(n.clean[k].value).cell(n.trials[t][k].value).end_row();
    }
  }
  return w;
}

inline CsvWriter correlation_csv(const CorrelationReport& c) {
  CsvWriter w({"point", "transition_layer", "critical_threshold"});
  for (std::size_t i = 0; i < c.points.size(); ++i) {
    w.cell(i).cell(c.points[i].transition_layer).cell(c.points[i].critical_threshold).end_row();
  }
  return w;
}

inline CsvWriter correlation_summary_csv(const CorrelationReport& c) {
  CsvWriter w({"n", "r", "p", "permutations"});
  w.cell(c.points.size()).cell(c.r).cell(c.p).cell(c.permutations).end_row();
  return w;
}

}  // namespace prunelens
