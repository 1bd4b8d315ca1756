#pragma once

// Dense numeric kernels shared by the analysis modules. Every reduction runs
// in ascending index order so results are reproducible bit-for-bit.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "prunelens/error.hpp"

namespace prunelens {

// Row-major dense matrix of doubles.
class Tensor2 {
 public:
  Tensor2() = default;
  Tensor2(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Tensor2(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
      throw ArgumentError("Tensor2: data length " + std::to_string(data_.size()) +
                          " does not match shape " + std::to_string(rows_) + "x" +
                          std::to_string(cols_));
    }
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::vector<double>& data() noexcept { return data_; }
  const std::vector<double>& data() const noexcept { return data_; }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
  }

  friend bool operator==(const Tensor2&, const Tensor2&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

enum class NormType { rms, layer };

struct NormKind {
  NormType type = NormType::rms;
  double epsilon = 1e-6;

  static NormKind rms(double eps = 1e-6) { return {NormType::rms, eps}; }
  static NormKind layer(double eps = 1e-5) { return {NormType::layer, eps}; }

  friend bool operator==(const NormKind&, const NormKind&) = default;
};

inline const char* to_string(NormType t) { return t == NormType::rms ? "rms" : "layer"; }

// Four interleaved partial sums combined in a fixed order.
inline double dot(std::span<const double> a, std::span<const double> b) {
  const std::size_t n = a.size();
  const double* pa = a.data();
  const double* pb = b.data();
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += pa[i] * pb[i];
    s1 += pa[i + 1] * pb[i + 1];
    s2 += pa[i + 2] * pb[i + 2];
    s3 += pa[i + 3] * pb[i + 3];
  }
  for (; i < n; ++i) s0 += pa[i] * pb[i];
  return (s0 + s1) + (s2 + s3);
}

inline std::vector<double> softmax(std::span<const double> v) {
  if (v.empty()) throw ArgumentError("softmax: empty vector");
  const double peak = *std::max_element(v.begin(), v.end());
  std::vector<double> out(v.size());
  double total = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = std::exp(v[i] - peak);
    total += out[i];
  }
  for (double& x : out) x /= total;
  return out;
}

inline std::vector<double> log_softmax(std::span<const double> v) {
  if (v.empty()) throw ArgumentError("log_softmax: empty vector");
  const double peak = *std::max_element(v.begin(), v.end());
  double total = 0.0;
  for (double x : v) total += std::exp(x - peak);
  const double log_z = peak + std::log(total);
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] - log_z;
  return out;
}

// rms:   x * gain / sqrt(mean(x^2) + eps)
// layer: (x - mean) * gain / sqrt(var(x) + eps) + bias
inline void normalize_into(std::span<const double> x, std::span<const double> gain,
                           const NormKind& kind, std::span<double> out,
                           std::span<const double> bias = {}) {
  if (x.size() != gain.size() || out.size() != x.size()) {
    throw ArgumentError("normalize: length mismatch (x=" + std::to_string(x.size()) +
                        ", gain=" + std::to_string(gain.size()) + ")");
  }
  if (!bias.empty() && bias.size() != x.size()) throw ArgumentError("normalize: bias length mismatch");
  if (!(kind.epsilon > 0.0)) throw ArgumentError("normalize: epsilon must be positive");
  if (x.empty()) return;
  const double n = static_cast<double>(x.size());
  if (kind.type == NormType::rms) {
    double sq = 0.0;
    for (double v : x) sq += v * v;
    const double inv = 1.0 / std::sqrt(sq / n + kind.epsilon);
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * inv * gain[i];
  } else {
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= n;
    double var = 0.0;
    for (double v : x) var += (v - mean) * (v - mean);
    var /= n;
    const double inv = 1.0 / std::sqrt(var + kind.epsilon);
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = (x[i] - mean) * inv * gain[i];
  }
  if (!bias.empty()) {
    for (std::size_t i = 0; i < x.size(); ++i) out[i] += bias[i];
  }
}

inline std::vector<double> normalize(std::span<const double> x, std::span<const double> gain,
                                     const NormKind& kind, std::span<const double> bias = {}) {
  std::vector<double> out(x.size());
  normalize_into(x, gain, kind, out, bias);
  return out;
}

// Zero-norm inputs give 0.
inline double cosine(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ArgumentError("cosine: length mismatch");
  if (a.empty()) throw ArgumentError("cosine: empty vectors");
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  if (aa == 0.0 || bb == 0.0) return 0.0;
  // sqrt(aa*bb) rather than sqrt(aa)*sqrt(bb): identical inputs give exactly 1.
  const double c = ab / std::sqrt(aa * bb);
  return std::clamp(c, -1.0, 1.0);
}

inline double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ArgumentError("pearson: length mismatch");
  if (x.size() < 3) throw ArgumentError("pearson: need at least 3 points");
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw DegenerateDataError("pearson: constant input");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

// Lowest index wins ties.
inline std::size_t argmax(std::span<const double> v) {
  if (v.empty()) throw ArgumentError("argmax: empty vector");
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

inline std::size_t argmin(std::span<const double> v) {
  if (v.empty()) throw ArgumentError("argmin: empty vector");
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] < v[best]) best = i;
  }
  return best;
}

}  // namespace prunelens
