#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <vector>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "rfmfg/kernels.hpp"

namespace rfmfg {
namespace {

std::vector<double> random_point(Rng& rng, std::size_t d, double scale) {
  std::vector<double> x(d);
  for (double& v : x) v = scale * rng.normal();
  return x;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

TEST(SampleFrequencies, VarianceMatchesInverseSigmaSquared) {
  const auto b = sample_frequencies({10.0, 1.0, 2}, 200000, 17);
  for (std::size_t k = 0; k < 2; ++k) {
    double mean = 0.0, sq = 0.0;
    const auto& w = b.frequencies();
    for (std::size_t j = 0; j < w.rows(); ++j) mean += w(j, k);
    mean /= static_cast<double>(w.rows());
    for (std::size_t j = 0; j < w.rows(); ++j) sq += (w(j, k) - mean) * (w(j, k) - mean);
    const double var = sq / static_cast<double>(w.rows() - 1);
    EXPECT_GE(var, 0.99);
    EXPECT_LE(var, 1.01);
  }
}

TEST(SampleFrequencies, LargeSigmaGivesTinyFrequencies) {
  const auto b = sample_frequencies({10.0, 1e6, 2}, 512, 3);
  double sq = 0.0;
  for (double w : b.frequencies().data()) {
    EXPECT_LT(std::abs(w), 1e-3);
    sq += w * w;
  }
  const double sd = std::sqrt(sq / static_cast<double>(b.frequencies().size()));
  EXPECT_NEAR(sd, 1e-6, 2e-7);
}

TEST(SampleFrequencies, RejectsOddOrTinyFeatureCounts) {
  EXPECT_THROW(sample_frequencies({10.0, 1.0, 2}, 513, 0), std::invalid_argument);
  EXPECT_THROW(sample_frequencies({10.0, 1.0, 2}, 0, 0), std::invalid_argument);
  EXPECT_THROW(sample_frequencies({10.0, 1.0, 0}, 8, 0), std::invalid_argument);
  EXPECT_THROW(sample_frequencies({-1.0, 1.0, 2}, 8, 0), std::invalid_argument);
}

TEST(SampleFrequencies, DeterministicAndPrefixNested) {
  const GaussianKernelSpec spec{10.0, 0.2, 3};
  EXPECT_EQ(sample_frequencies(spec, 64, 9), sample_frequencies(spec, 64, 9));
  EXPECT_NE(sample_frequencies(spec, 64, 9).frequencies(), sample_frequencies(spec, 64, 10).frequencies());
  const auto small = sample_frequencies(spec, 32, 9);
  const auto big = sample_frequencies(spec, 2048, 9);
  for (std::size_t j = 0; j < small.frequencies().rows(); ++j)
    for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(small.frequencies()(j, k), big.frequencies()(j, k));
}

TEST(EvalFeatures, OriginGivesAmplitudeAndZero) {
  const auto b = sample_frequencies({10.0, 0.5, 2}, 16, 1);
  const auto z = eval_features(b, std::vector<double>{0.0, 0.0, 4.0});
  for (std::size_t j = 0; j < 8; ++j) {
    EXPECT_DOUBLE_EQ(z[2 * j], b.amplitude());
    EXPECT_DOUBLE_EQ(z[2 * j + 1], 0.0);
  }
}

TEST(EvalFeatures, SingleFrequencyAnalytic) {
  Matrix w(1, 2);
  w(0, 0) = 1.0;
  const RandomFeatureBasis b(10.0, 1.0, 0, w);
  EXPECT_DOUBLE_EQ(b.amplitude(), std::sqrt(10.0));
  const auto z = eval_features(b, std::vector<double>{std::numbers::pi / 2, 0.0});
  EXPECT_NEAR(z[0], 0.0, 1e-15);
  EXPECT_NEAR(z[1], std::sqrt(10.0), 1e-14);
}

TEST(EvalFeatures, RejectsShortState) {
  const auto b = sample_frequencies({1.0, 1.0, 3}, 8, 1);
  EXPECT_THROW(eval_features(b, std::vector<double>{1.0, 2.0}), std::invalid_argument);
  EXPECT_THROW(eval_feature_gradient(b, std::vector<double>{1.0}), std::invalid_argument);
  EXPECT_THROW(kernel_approx(b, std::vector<double>{1.0, 2.0}, std::vector<double>{1.0, 2.0}),
               std::invalid_argument);
}

TEST(FeatureGradient, OriginRowsAndPaddedColumns) {
  const auto b = sample_frequencies({5.0, 0.7, 2}, 10, 4);
  const auto g = eval_feature_gradient(b, std::vector<double>{0.0, 0.0, 0.0, 0.0});
  ASSERT_EQ(g.rows(), 10u);
  ASSERT_EQ(g.cols(), 4u);
  for (std::size_t j = 0; j < 5; ++j)
    for (std::size_t k = 0; k < 4; ++k) {
      EXPECT_EQ(g(2 * j, k), 0.0);
      EXPECT_DOUBLE_EQ(g(2 * j + 1, k), k < 2 ? b.amplitude() * b.frequencies()(j, k) : 0.0);
    }
}

TEST(FeatureGradient, MatchesCentralDifferences) {
  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t d = 2 + trial % 4, di = 1 + trial % d;
    const auto b = sample_frequencies({3.0, 0.8, di}, 12, 100 + trial);
    const auto x = random_point(rng, d, 1.0);
    const Matrix g = eval_feature_gradient(b, x);
    for (std::size_t i = 0; i < b.feature_count(); ++i)
      for (std::size_t k = 0; k < d; ++k) {
        const double fd = testing::central_difference(
            [&](const std::vector<double>& y) { return eval_features(b, y)[i]; }, x, k, 1e-6);
        if (k >= di) {
          EXPECT_EQ(g(i, k), 0.0);
        } else {
          EXPECT_LT(testing::relative_error(g(i, k), fd, 1e-3), 1e-6) << "i=" << i << " k=" << k;
        }
      }
  }
}

TEST(FeatureGradient, TransposeProductMatchesExplicitJacobian) {
  Rng rng(6);
  const auto b = sample_frequencies({2.0, 0.4, 3}, 20, 8);
  const auto x = random_point(rng, 5, 1.0);
  const auto c = random_point(rng, 20, 1.0);
  std::vector<double> fused(5, 0.0);
  add_feature_gradient_transpose(b, x, c, 1.0, fused);
  const Matrix g = eval_feature_gradient(b, x);
  for (std::size_t k = 0; k < 5; ++k) {
    double s = 0.0;
    for (std::size_t i = 0; i < 20; ++i) s += g(i, k) * c[i];
    EXPECT_NEAR(fused[k], s, 1e-12 * (1.0 + std::abs(s)));
  }
}

TEST(KernelExact, AnalyticValues) {
  const std::vector<double> o{0.0, 0.0, 7.0};
  EXPECT_DOUBLE_EQ(kernel_exact({10.0, 0.2, 2}, o, o), 10.0);
  EXPECT_NEAR(kernel_exact({10.0, 0.2, 2}, std::vector<double>{0.2, 0.0, -3.0}, o), 6.0653, 1e-4);
  EXPECT_NEAR(kernel_exact({50.0, 1.0, 2}, std::vector<double>{3.0, 4.0}, std::vector<double>{0.0, 0.0}),
              1.8633e-4, 1e-8);
  EXPECT_THROW(kernel_exact({1.0, 1.0, 2}, o, std::vector<double>{0.0, 0.0}), std::invalid_argument);
}

TEST(KernelApprox, IdentitiesOnRandomPoints) {
  Rng rng(11);
  for (std::size_t d : {2u, 5u, 50u}) {
    const auto b = sample_frequencies({7.0, 0.6, d == 2 ? 2u : d / 2}, 256, d);
    for (int trial = 0; trial < 50; ++trial) {
      const auto x = random_point(rng, d, 1.5), y = random_point(rng, d, 1.5), s = random_point(rng, d, 3.0);
      const double kxy = kernel_approx(b, x, y);
      EXPECT_NEAR(squared_norm(eval_features(b, x)), 7.0, 7e-12);
      EXPECT_NEAR(kernel_approx(b, x, x), 7.0, 7e-12);
      EXPECT_LE(std::abs(kxy), 7.0 + 1e-12);
      EXPECT_NEAR(kxy, kernel_approx(b, y, x), 1e-12);
      std::vector<double> xs(d), ys(d);
      for (std::size_t k = 0; k < d; ++k) xs[k] = x[k] + s[k], ys[k] = y[k] + s[k];
      EXPECT_NEAR(kernel_approx(b, xs, ys), kxy, 1e-10);
      // The feature inner product and the cosine form agree.
      EXPECT_NEAR(dot(eval_features(b, x), eval_features(b, y)), kxy, 1e-11);
    }
  }
}

TEST(KernelApprox, MonteCarloMeanNearExactValue) {
  const GaussianKernelSpec spec{10.0, 0.2, 2};
  const std::vector<double> x{0.2, 0.0}, o{0.0, 0.0};
  double mean = 0.0;
  for (std::uint64_t seed = 0; seed < 200; ++seed) mean += kernel_approx(sample_frequencies(spec, 512, seed), x, o);
  mean /= 200.0;
  EXPECT_NEAR(mean, 6.0653, 0.3);
}

TEST(KernelApprox, UnbiasedWithinFourStandardErrors) {
  const GaussianKernelSpec spec{3.0, 0.9, 3};
  const std::vector<double> x{0.4, -0.3, 0.5}, y{-0.1, 0.2, 0.1};
  const double exact = kernel_exact(spec, x, y);
  std::vector<double> samples;
  for (std::uint64_t seed = 0; seed < 600; ++seed) samples.push_back(kernel_approx(sample_frequencies(spec, 16, seed), x, y));
  double mean = 0.0, var = 0.0;
  for (double s : samples) mean += s;
  mean /= samples.size();
  for (double s : samples) var += (s - mean) * (s - mean);
  var /= samples.size() - 1;
  EXPECT_LT(std::abs(mean - exact), 4.0 * std::sqrt(var / samples.size()));
}

TEST(ApproximationError, ZeroAtOriginAndRejectsEmptySet) {
  const GaussianKernelSpec spec{10.0, 0.2, 2};
  const auto b = sample_frequencies(spec, 64, 2);
  const auto e = approximation_error(spec, b, Matrix(1, 2));
  EXPECT_EQ(e.linf, 0.0);
  EXPECT_EQ(e.l2, 0.0);
  EXPECT_THROW(approximation_error(spec, b, Matrix(0, 2)), std::invalid_argument);
}

TEST(ApproximationError, LinfMonotoneUnderInclusion) {
  const GaussianKernelSpec spec{10.0, 0.3, 2};
  const auto b = sample_frequencies(spec, 32, 2);
  const Matrix grid = default_grid_2d();
  double prev = 0.0;
  for (std::size_t n : {1u, 10u, 100u, 1000u, 2601u}) {
    Matrix subset(n, 2);
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t k = 0; k < 2; ++k) subset(p, k) = grid(p, k);
    const double linf = approximation_error(spec, b, subset).linf;
    EXPECT_GE(linf, prev);
    prev = linf;
  }
}

TEST(ApproximationError, MedianL2ShrinksWithFeatureCount) {
  const GaussianKernelSpec spec{10.0, 0.2, 2};
  const Matrix grid = default_grid_2d();
  std::vector<double> small, large;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    small.push_back(approximation_error(spec, sample_frequencies(spec, 32, seed), grid).l2);
    large.push_back(approximation_error(spec, sample_frequencies(spec, 2048, seed), grid).l2);
  }
  EXPECT_LT(median(large), median(small));
}

TEST(Grid, DefaultGridShape) {
  const Matrix g = default_grid_2d();
  ASSERT_EQ(g.rows(), 51u * 51u);
  EXPECT_DOUBLE_EQ(g(0, 0), -2.5);
  EXPECT_DOUBLE_EQ(g(g.rows() - 1, 1), 2.5);
  EXPECT_NEAR(g(25 * 51 + 25, 0), 0.0, 1e-15);
}

TEST(BasisRecord, RoundTripIsBitExact) {
  for (std::uint64_t seed : {0ull, 1ull, 123456789012345ull}) {
    const auto b = sample_frequencies({12.5, 0.37, 3}, 24, seed);
    std::stringstream ss;
    write_basis(ss, b);
    EXPECT_EQ(read_basis(ss), b);
  }
  std::stringstream bad("not-a-basis");
  EXPECT_THROW(read_basis(bad), std::invalid_argument);
}

TEST(KernelErrorReport, CsvHeaderAndRows) {
  const GaussianKernelSpec spec{10.0, 0.2, 2};
  const std::vector<std::size_t> rs{8, 32};
  const auto rep = kernel_error_report(spec, rs, 3, default_grid_2d(), EvaluationSet::Grid);
  std::stringstream ss;
  rep.write_csv(ss);
  std::string line;
  std::getline(ss, line);
  EXPECT_EQ(line, "r,linf,l2");
  int rows = 0;
  while (std::getline(ss, line)) ++rows;
  EXPECT_EQ(rows, 2);
  for (double e : rep.l2_errors) EXPECT_GE(e, 0.0);
}

}  // namespace
}  // namespace rfmfg
