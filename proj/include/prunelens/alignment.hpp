#pragma once

// Linear CKA between layer representations of two models.

#include <cmath>
#include <string>
#include <vector>

#include "prunelens/numerics.hpp"
#include "prunelens/probes.hpp"

namespace prunelens {

enum class Signal { pooled, decision };

inline const char* to_string(Signal s) { return s == Signal::pooled ? "pooled" : "decision"; }

namespace detail {

inline Tensor2 center_columns(const Tensor2& x) {
  Tensor2 c = x;
  const double n = static_cast<double>(x.rows());
  for (std::size_t j = 0; j < x.cols(); ++j) {
    double mean = 0.0;
    for (std::size_t i = 0; i < x.rows(); ++i) mean += x(i, j);
    mean /= n;
    for (std::size_t i = 0; i < x.rows(); ++i) c(i, j) -= mean;
  }
  return c;
}

// ||A^T B||_F^2 for A (N x p), B (N x q).
inline double cross_frobenius_sq(const Tensor2& a, const Tensor2& b) {
  double total = 0.0;
  for (std::size_t i = 0; i < a.cols(); ++i) {
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t n = 0; n < a.rows(); ++n) s += a(n, i) * b(n, j);
      total += s * s;
    }
  }
  return total;
}

}  // namespace detail

// ||Y^T X||_F^2 / (||X^T X||_F ||Y^T Y||_F) on column-centered inputs.
inline double linear_cka(const Tensor2& x, const Tensor2& y) {
  if (x.rows() != y.rows()) throw ArgumentError("linear_cka: sample counts differ");
  if (x.rows() < 2) throw ArgumentError("linear_cka: need at least 2 samples");
  const Tensor2 xc = detail::center_columns(x), yc = detail::center_columns(y);
  const double xx = detail::cross_frobenius_sq(xc, xc);
  const double yy = detail::cross_frobenius_sq(yc, yc);
  if (xx == 0.0 || yy == 0.0) return 0.0;
  const double xy = detail::cross_frobenius_sq(xc, yc);
  return xy / (std::sqrt(xx) * std::sqrt(yy));
}

struct AlignmentMatrix {
  Signal signal = Signal::pooled;
  std::vector<std::size_t> row_layers;  // dense indices of the first trace's layers
  std::vector<std::size_t> col_layers;  // dense indices of the second trace's layers
  Tensor2 values;
};

struct AlignmentCurve {
  std::vector<std::size_t> row_layers;
  std::vector<std::size_t> best_col;    // dense index of the best-matching column layer
  std::vector<double> best_value;
};

inline const std::vector<Tensor2>& signal_states(const CapturedTraces& t, Signal signal) {
  if (signal == Signal::decision) return t.decision.states;
  if (!t.pooled) throw ArgumentError("alignment: pooled signal absent from trace");
  return t.pooled->states;
}

inline AlignmentMatrix alignment_matrix(const CapturedTraces& a, const CapturedTraces& b, Signal signal,
                                        unsigned threads = 1) {
  if (a.decision.sample_ids != b.decision.sample_ids) {
    throw ArgumentError("alignment: traces cover different sample sets");
  }
  const auto& sa = signal_states(a, signal);
  const auto& sb = signal_states(b, signal);
  AlignmentMatrix m;
  m.signal = signal;
  m.row_layers = a.decision.topology.retained();
  m.col_layers = b.decision.topology.retained();
  m.values = Tensor2(sa.size(), sb.size());
  parallel_for(sa.size() * sb.size(), threads, [&](std::size_t idx) {
    const std::size_t r = idx / sb.size(), c = idx % sb.size();
    m.values(r, c) = linear_cka(sa[r], sb[c]);
  });
  return m;
}

// Lowest column wins ties.
inline AlignmentCurve best_match(const AlignmentMatrix& m) {
  if (m.values.rows() == 0 || m.values.cols() == 0) throw ArgumentError("best_match: empty matrix");
  AlignmentCurve c;
  c.row_layers = m.row_layers;
  for (std::size_t r = 0; r < m.values.rows(); ++r) {
    const std::size_t j = argmax(m.values.row(r));
    c.best_col.push_back(m.col_layers.empty() ? j : m.col_layers[j]);
    c.best_value.push_back(m.values(r, j));
  }
  return c;
}

}  // namespace prunelens
