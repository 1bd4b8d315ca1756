#pragma once

#include <gtest/gtest.h>

#include <filesystem>
#include <string>
#include <vector>

#include "prunelens/prunelens.hpp"

namespace support {

using namespace prunelens;

inline Tensor2 random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed, double lo = -1.0,
                             double hi = 1.0) {
  rng::CounterStream s(rng::derive(seed, "test-matrix"));
  Tensor2 t(rows, cols);
  for (std::size_t i = 0; i < t.size(); ++i) t.data()[i] = s.uniform(i, lo, hi);
  return t;
}

inline std::vector<double> random_vector(std::size_t n, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  return random_matrix(1, n, seed, lo, hi).data();
}

inline ModelConfig small_config(std::size_t layers = 6, std::uint64_t seed = 1) {
  ModelConfig c;
  c.n_layers = layers;
  c.d_model = 16;
  c.n_heads = 2;
  c.d_ff = 24;
  c.vocab_size = 260;
  c.max_seq = 256;
  c.seed = seed;
  return c;
}

inline std::vector<TokenSequence> random_batch(std::size_t count, std::size_t len, std::size_t vocab,
                                               std::uint64_t seed) {
  rng::Sequence r(rng::derive(seed, "test-batch"));
  std::vector<TokenSequence> out(count);
  for (auto& seq : out) {
    for (std::size_t i = 0; i < len + r.below(3); ++i) seq.push_back(static_cast<std::uint32_t>(r.below(vocab)));
  }
  return out;
}

// Fresh, empty scratch directory under the system temp directory.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("prunelens-test-" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline double max_abs_diff(const Tensor2& a, const Tensor2& b) {
  EXPECT_EQ(a.rows(), b.rows());
  EXPECT_EQ(a.cols(), b.cols());
  double m = 0.0;
  for (std::size_t i = 0; i < a.size() && i < b.size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

}  // namespace support
