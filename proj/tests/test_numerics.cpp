#include <cmath>
#include <numbers>

#include "support.hpp"

using namespace prunelens;

TEST(Softmax, SpecExamples) {
  auto a = softmax(std::vector<double>{0.0, 0.0});
  EXPECT_DOUBLE_EQ(a[0], 0.5);
  EXPECT_DOUBLE_EQ(a[1], 0.5);
  auto b = softmax(std::vector<double>{1000.0, 1000.0, 1000.0});
  for (double v : b) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
  auto c = softmax(std::vector<double>{0.0, std::log(3.0)});
  EXPECT_NEAR(c[0], 0.25, 1e-15);
  EXPECT_NEAR(c[1], 0.75, 1e-15);
}

TEST(Softmax, EmptyIsArgumentError) { EXPECT_THROW(softmax(std::vector<double>{}), ArgumentError); }

TEST(Softmax, AlwaysADistribution) {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const auto v = support::random_vector(1 + seed % 17, seed, -500.0, 500.0);
    const auto p = softmax(v);
    double total = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      EXPECT_GE(p[i], 0.0);
      total += p[i];
      for (std::size_t j = 0; j < p.size(); ++j) {
        if (v[i] < v[j]) EXPECT_LE(p[i], p[j]);
      }
    }
    EXPECT_NEAR(total, 1.0, 1e-9);
  }
}

TEST(Normalize, SpecExamples) {
  const NormKind tiny{NormType::rms, 1e-300};
  auto a = normalize(std::vector<double>{1, 1, 1, 1}, std::vector<double>(4, 1.0), tiny);
  for (double v : a) EXPECT_DOUBLE_EQ(v, 1.0);
  auto b = normalize(std::vector<double>{2, 2}, std::vector<double>(2, 1.0), tiny);
  for (double v : b) EXPECT_DOUBLE_EQ(v, 1.0);
  auto c = normalize(std::vector<double>{0, 0}, std::vector<double>(2, 1.0), NormKind::rms(1e-5));
  for (double v : c) EXPECT_EQ(v, 0.0);
}

TEST(Normalize, LayerModeMatchesDirectFormula) {
  const auto x = support::random_vector(9, 3);
  const auto g = support::random_vector(9, 4, 0.5, 1.5);
  const auto kind = NormKind::layer();
  const auto out = normalize(x, g, kind);
  double mean = 0.0;
  for (double v : x) mean += v / 9.0;
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean) / 9.0;
  for (std::size_t i = 0; i < 9; ++i) EXPECT_NEAR(out[i], (x[i] - mean) * g[i] / std::sqrt(var + 1e-5), 1e-12);
}

TEST(Normalize, LayerModeBias) {
  const auto x = support::random_vector(5, 8);
  const std::vector<double> g(5, 1.0), bias{1, 2, 3, 4, 5};
  const auto plain = normalize(x, g, NormKind::layer());
  const auto shifted = normalize(x, g, NormKind::layer(), bias);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(shifted[i] - plain[i], bias[i], 1e-12);
}

TEST(Normalize, Errors) {
  EXPECT_THROW(normalize(std::vector<double>{1, 2}, std::vector<double>{1}, NormKind::rms()), ArgumentError);
  EXPECT_THROW(normalize(std::vector<double>{1}, std::vector<double>{1}, NormKind{NormType::rms, 0.0}), ArgumentError);
}

TEST(Normalize, RmsGainEquivariance) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto x = support::random_vector(12, seed);
    const auto g = support::random_vector(12, seed + 1000, 0.1, 2.0);
    const double c = 0.25 + static_cast<double>(seed) * 0.1;
    std::vector<double> cg(g);
    for (double& v : cg) v *= c;
    const auto a = normalize(x, cg, NormKind::rms());
    const auto b = normalize(x, g, NormKind::rms());
    for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(a[i], c * b[i], 1e-6);
  }
}

TEST(Cosine, SpecExamples) {
  EXPECT_EQ(cosine(std::vector<double>{1, 2, 3}, std::vector<double>{1, 2, 3}), 1.0);
  EXPECT_EQ(cosine(std::vector<double>{1, 0}, std::vector<double>{0, 1}), 0.0);
  EXPECT_DOUBLE_EQ(cosine(std::vector<double>{1, 1}, std::vector<double>{-1, -1}), -1.0);
}

TEST(Cosine, ZeroNormIsZeroAndMismatchThrows) {
  EXPECT_EQ(cosine(std::vector<double>{0, 0}, std::vector<double>{1, 2}), 0.0);
  EXPECT_THROW(cosine(std::vector<double>{1}, std::vector<double>{1, 2}), ArgumentError);
}

TEST(Cosine, IdenticalVectorsGiveExactlyOne) {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const auto a = support::random_vector(1 + seed % 40, seed, -10, 10);
    EXPECT_EQ(cosine(a, a), 1.0);
  }
}

TEST(Cosine, SymmetricAndScaleInvariant) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto a = support::random_vector(7, seed), b = support::random_vector(7, seed + 500);
    EXPECT_NEAR(cosine(a, b), cosine(b, a), 1e-15);
    std::vector<double> sa(a);
    for (double& v : sa) v *= 3.7 + static_cast<double>(seed);
    EXPECT_NEAR(cosine(sa, b), cosine(a, b), 1e-7);
  }
}

// Sample correlation written out from its covariance definition.
static double covariance_oracle(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i] / n;
    my += y[i] / n;
  }
  double cxy = 0, cxx = 0, cyy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    cxy += (x[i] - mx) * (y[i] - my) / (n - 1);
    cxx += (x[i] - mx) * (x[i] - mx) / (n - 1);
    cyy += (y[i] - my) * (y[i] - my) / (n - 1);
  }
  return cxy / std::sqrt(cxx) / std::sqrt(cyy);
}

TEST(Pearson, SpecExamples) {
  const std::vector<double> x{1, 4, 2, 8, 5};
  std::vector<double> neg, aff;
  for (double v : x) {
    neg.push_back(-v);
    aff.push_back(2 * v + 5);
  }
  EXPECT_DOUBLE_EQ(pearson(x, neg), -1.0);
  EXPECT_DOUBLE_EQ(pearson(x, aff), 1.0);
  const std::vector<double> a{1, 2, 3}, b{2, 1, 4};
  EXPECT_NEAR(pearson(a, b), covariance_oracle(a, b), 1e-12);
  EXPECT_NEAR(pearson(a, b), std::sqrt(3.0 / 7.0), 1e-12);
}

TEST(Pearson, MatchesOracleOnRandomData) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto x = support::random_vector(3 + seed % 20, seed), y = support::random_vector(3 + seed % 20, seed + 77);
    EXPECT_NEAR(pearson(x, y), covariance_oracle(x, y), 1e-12);
  }
}

TEST(Pearson, Errors) {
  EXPECT_THROW(pearson(std::vector<double>{1, 1, 1}, std::vector<double>{1, 2, 3}), DegenerateDataError);
  EXPECT_THROW(pearson(std::vector<double>{1, 2}, std::vector<double>{1, 2}), ArgumentError);
  EXPECT_THROW(pearson(std::vector<double>{1, 2, 3}, std::vector<double>{1, 2}), ArgumentError);
}

TEST(Pearson, PositiveAffineInvariance) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto x = support::random_vector(10, seed), y = support::random_vector(10, seed + 9);
    std::vector<double> tx;
    for (double v : x) tx.push_back(0.3 * v + 11.0);
    EXPECT_NEAR(pearson(tx, y), pearson(x, y), 1e-9);
  }
}

TEST(Argmax, LowestIndexWinsTies) {
  EXPECT_EQ(argmax(std::vector<double>{1, 3, 3}), 1u);
  EXPECT_EQ(argmin(std::vector<double>{2, 0, 0}), 1u);
  EXPECT_EQ(argmax(std::vector<double>{5, 5}), 0u);
}

TEST(Dot, MatchesNaiveSum) {
  for (std::size_t n = 0; n < 20; ++n) {
    const auto a = support::random_vector(n, n), b = support::random_vector(n, n + 40);
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
    EXPECT_NEAR(dot(a, b), s, 1e-13);
  }
}

TEST(Tensor2, ShapeChecked) {
  EXPECT_THROW(Tensor2(2, 2, std::vector<double>{1, 2, 3}), ArgumentError);
  Tensor2 t(2, 3, std::vector<double>{1, 2, 3, 4, 5, 6});
  EXPECT_EQ(t(1, 2), 6.0);
  EXPECT_EQ(t.row(1)[0], 4.0);
  EXPECT_TRUE(t.all_finite());
}
