#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "rfmfg/transcription.hpp"

namespace rfmfg {
namespace {

Matrix random_matrix(Rng& rng, std::size_t r, std::size_t c, double scale) {
  Matrix m(r, c);
  for (double& x : m.data()) x = scale * rng.normal();
  return m;
}

ControlBatch random_controls(Rng& rng, std::size_t M, std::size_t N, std::size_t d, double scale) {
  ControlBatch v{Tensor3(M, N, d)};
  for (double& x : v.values.data()) x = scale * rng.normal();
  return v;
}

DualCoefficients random_duals(Rng& rng, std::size_t r, std::size_t N, double scale) {
  DualCoefficients a(r, N);
  for (double& x : a.data()) x = scale * rng.normal();
  return a;
}

TEST(Discretization, StepAndEndpoint) {
  const Discretization disc(50, 1.0);
  EXPECT_DOUBLE_EQ(disc.step() * 49, 1.0);
  EXPECT_EQ(disc.time(0), 0.0);
  EXPECT_EQ(disc.time(49), 1.0);
  EXPECT_THROW(Discretization(1, 1.0), std::invalid_argument);
}

TEST(Rollout, ZeroAndConstantControls) {
  Rng rng(1);
  const Matrix x0 = random_matrix(rng, 3, 2, 1.0);
  const Discretization disc(6, 2.0);
  const auto still = rollout(x0, ControlBatch{Tensor3(3, 6, 2)}, disc);
  for (std::size_t m = 0; m < 3; ++m)
    for (std::size_t l = 0; l < 6; ++l)
      for (std::size_t k = 0; k < 2; ++k) EXPECT_EQ(still.values(m, l, k), x0(m, k));
  ControlBatch c{Tensor3(3, 6, 2)};
  for (std::size_t m = 0; m < 3; ++m)
    for (std::size_t l = 0; l < 6; ++l) c.values(m, l, 0) = 1.5, c.values(m, l, 1) = -0.5;
  const auto moving = rollout(x0, c, disc);
  for (std::size_t m = 0; m < 3; ++m)
    for (std::size_t l = 0; l < 6; ++l) {
      EXPECT_NEAR(moving.values(m, l, 0), x0(m, 0) + l * disc.step() * 1.5, 1e-14);
      EXPECT_NEAR(moving.values(m, l, 1), x0(m, 1) - l * disc.step() * 0.5, 1e-14);
    }
}

TEST(Rollout, LastControlNeverMovesState) {
  Rng rng(2);
  const Matrix x0 = random_matrix(rng, 2, 3, 1.0);
  const Discretization disc(5, 1.0);
  auto v = random_controls(rng, 2, 5, 3, 1.0);
  const auto a = rollout(x0, v, disc);
  for (std::size_t m = 0; m < 2; ++m) v.values(m, 4, 1) += 100.0;
  EXPECT_EQ(rollout(x0, v, disc).values, a.values);
}

TEST(Rollout, AffineInControls) {
  Rng rng(3);
  const Matrix x0 = random_matrix(rng, 4, 3, 1.0);
  const Discretization disc(7, 1.0);
  const auto v1 = random_controls(rng, 4, 7, 3, 1.0), v2 = random_controls(rng, 4, 7, 3, 1.0);
  const double alpha = 0.7, beta = -1.3;
  ControlBatch mix{Tensor3(4, 7, 3)};
  for (std::size_t i = 0; i < mix.values.data().size(); ++i)
    mix.values.data()[i] = alpha * v1.values.data()[i] + beta * v2.values.data()[i];
  const auto z0 = rollout(x0, ControlBatch{Tensor3(4, 7, 3)}, disc).values.data();
  const auto z1 = rollout(x0, v1, disc).values.data(), z2 = rollout(x0, v2, disc).values.data();
  const auto zm = rollout(x0, mix, disc).values.data();
  for (std::size_t i = 0; i < zm.size(); ++i)
    EXPECT_NEAR(zm[i] - z0[i], alpha * (z1[i] - z0[i]) + beta * (z2[i] - z0[i]), 1e-12);
}

TEST(Rollout, ShapeMismatch) {
  const Discretization disc(5, 1.0);
  EXPECT_THROW(rollout(Matrix(2, 2), ControlBatch{Tensor3(3, 5, 2)}, disc), std::invalid_argument);
  EXPECT_THROW(rollout(Matrix(2, 2), ControlBatch{Tensor3(2, 4, 2)}, disc), std::invalid_argument);
}

TEST(AgentCost, VanishesAtRestOnTarget) {
  auto p = testing::small_problem('a', 2, 1.0, 0.5);
  p.terminal.target = {0.4, -0.2};
  const auto basis = sample_frequencies(p.kernel, 8, 1);
  const Discretization disc(5, 1.0);
  std::vector<double> z(10), v(10, 0.0);
  for (std::size_t l = 0; l < 5; ++l) z[2 * l] = 0.4, z[2 * l + 1] = -0.2;
  EXPECT_EQ(agent_cost(p, basis, DualCoefficients(8, 5), z, v, disc), 0.0);
}

TEST(AgentCost, ConstantControlClosedForm) {
  const auto p = testing::small_problem('a', 2, 1.0, 0.5);
  const auto basis = sample_frequencies(p.kernel, 8, 1);
  const std::size_t N = 9;
  const Discretization disc(N, 1.0);
  const double h = disc.step();
  Matrix x0(1, 2);
  x0(0, 0) = 0.8, x0(0, 1) = -0.3;
  ControlBatch v{Tensor3(1, N, 2)};
  for (std::size_t l = 0; l < N; ++l) v.values(0, l, 0) = -0.5, v.values(0, l, 1) = 0.25;
  const auto z = rollout(x0, v, disc);
  const double vv = 0.25 + 0.0625;
  const double ex = 0.8 - 0.5 * (N - 1) * h, ey = -0.3 + 0.25 * (N - 1) * h;
  const double expected = N * h * vv / 2.0 + 10.0 * (ex * ex + ey * ey);
  EXPECT_NEAR(agent_cost(p, basis, DualCoefficients(8, N), z.values.agent(0), v.values.agent(0), disc),
              expected, 1e-13);
}

TEST(AgentCost, MatchesIndependentReimplementation) {
  Rng rng(4);
  for (char kind : {'a', 'b', 'c'}) {
    const auto p = testing::small_problem(kind, 3, 2.0, 0.7);
    const auto basis = sample_frequencies(p.kernel, 16, 5);
    const Discretization disc(8, 1.0);
    const Matrix x0 = random_matrix(rng, 3, 3, 1.0);
    const auto v = random_controls(rng, 3, 8, 3, 1.0);
    const auto a = random_duals(rng, 16, 8, 1.0);
    const auto z = rollout(x0, v, disc);
    for (std::size_t m = 0; m < 3; ++m) {
      const double got = agent_cost(p, basis, a, z.values.agent(m), v.values.agent(m), disc);
      const double ref = testing::agent_cost_reference(p, basis, a, x0.row(m), v.values.agent(m), 8, 1.0);
      EXPECT_LT(testing::relative_error(got, ref), 1e-12) << kind;
    }
  }
}

TEST(AgentCost, ZeroDualsIgnoreBasis) {
  Rng rng(5);
  const auto p = testing::small_problem('b', 2, 2.0, 0.7);
  const Discretization disc(6, 1.0);
  const Matrix x0 = random_matrix(rng, 1, 2, 1.0);
  const auto v = random_controls(rng, 1, 6, 2, 1.0);
  const auto z = rollout(x0, v, disc);
  const double c1 = agent_cost(p, sample_frequencies(p.kernel, 8, 1), DualCoefficients(8, 6), z.values.agent(0),
                               v.values.agent(0), disc);
  const double c2 = agent_cost(p, sample_frequencies({9.0, 0.1, 2}, 32, 2), DualCoefficients(32, 6),
                               z.values.agent(0), v.values.agent(0), disc);
  EXPECT_EQ(c1, c2);
}

TEST(SaddleObjective, ZeroDualsIsMinusMeanCost) {
  Rng rng(6);
  const auto p = testing::small_problem('a', 2, 2.0, 0.7);
  const auto basis = sample_frequencies(p.kernel, 8, 1);
  const Discretization disc(5, 1.0);
  const Matrix x0 = random_matrix(rng, 4, 2, 1.0);
  const auto v = random_controls(rng, 4, 5, 2, 1.0);
  const DualCoefficients a(8, 5);
  const auto z = rollout(x0, v, disc);
  double mean = 0.0;
  for (std::size_t m = 0; m < 4; ++m) mean += agent_cost(p, basis, a, z.values.agent(m), v.values.agent(m), disc);
  EXPECT_NEAR(saddle_objective(p, basis, a, v, x0, disc), -mean / 4.0, 1e-13);
}

TEST(SaddleObjective, DuplicatedAgentsLeaveValueUnchanged) {
  Rng rng(7);
  const auto p = testing::small_problem('b', 2, 2.0, 0.7);
  const auto basis = sample_frequencies(p.kernel, 8, 1);
  const Discretization disc(5, 1.0);
  const Matrix x0 = random_matrix(rng, 3, 2, 1.0);
  const auto v = random_controls(rng, 3, 5, 2, 1.0);
  const auto a = random_duals(rng, 8, 5, 1.0);
  Matrix x2(6, 2);
  ControlBatch v2{Tensor3(6, 5, 2)};
  for (std::size_t m = 0; m < 6; ++m) {
    for (std::size_t k = 0; k < 2; ++k) x2(m, k) = x0(m / 2, k);
    std::copy(v.values.agent(m / 2).begin(), v.values.agent(m / 2).end(), v2.values.agent(m).begin());
  }
  EXPECT_NEAR(saddle_objective(p, basis, a, v2, x2, disc), saddle_objective(p, basis, a, v, x0, disc), 1e-12);
}

TEST(SaddleObjective, MinimizerOverDualsIsFeatureMean) {
  Rng rng(8);
  const auto p = testing::small_problem('a', 2, 2.0, 0.7);
  const auto basis = sample_frequencies(p.kernel, 6, 1);
  const Discretization disc(4, 1.0);
  const Matrix x0 = random_matrix(rng, 5, 2, 1.0);
  const auto v = random_controls(rng, 5, 4, 2, 1.0);
  // Gradient descent on the (convex quadratic) objective in a, using only
  // finite differences of saddle_objective.
  DualCoefficients a(6, 4);
  const double h = disc.step();
  for (int it = 0; it < 200; ++it) {
    DualCoefficients g(6, 4);
    for (std::size_t i = 0; i < a.data().size(); ++i) {
      DualCoefficients up = a, down = a;
      up.data()[i] += 1e-4;
      down.data()[i] -= 1e-4;
      g.data()[i] = (saddle_objective(p, basis, up, v, x0, disc) - saddle_objective(p, basis, down, v, x0, disc)) / 2e-4;
    }
    for (std::size_t i = 0; i < a.data().size(); ++i) a.data()[i] -= 0.5 / h * g.data()[i];
  }
  const auto mean = feature_means(basis, rollout(x0, v, disc));
  for (std::size_t i = 0; i < a.data().size(); ++i) EXPECT_NEAR(a.data()[i], mean.data()[i], 1e-7);
  // Strict convexity: perturbing away from the mean raises the objective.
  const double base = saddle_objective(p, basis, mean, v, x0, disc);
  for (std::size_t i = 0; i < mean.data().size(); ++i) {
    DualCoefficients moved = mean;
    moved.data()[i] += 0.01;
    EXPECT_NEAR(saddle_objective(p, basis, moved, v, x0, disc) - base, 0.5 * h * 1e-4, 1e-12);
  }
}

TEST(SaddleObjective, GramInverseWeightsDualTerm) {
  Rng rng(9);
  const auto p = testing::small_problem('a', 2, 2.0, 0.7);
  const auto basis = sample_frequencies(p.kernel, 4, 1);
  const Discretization disc(3, 1.0);
  const Matrix x0 = random_matrix(rng, 2, 2, 1.0);
  const auto v = random_controls(rng, 2, 3, 2, 1.0);
  const auto a = random_duals(rng, 4, 3, 1.0);
  Matrix identity(4, 4), twice(4, 4);
  for (std::size_t i = 0; i < 4; ++i) identity(i, i) = 1.0, twice(i, i) = 2.0;
  const double base = saddle_objective(p, basis, a, v, x0, disc);
  EXPECT_NEAR(saddle_objective(p, basis, a, v, x0, disc, &identity), base, 1e-14);
  EXPECT_NEAR(saddle_objective(p, basis, a, v, x0, disc, &twice) - base, dual_quadratic(a, disc.step()), 1e-13);
}

class ControlGradientFd : public ::testing::TestWithParam<char> {};

TEST_P(ControlGradientFd, MatchesCentralDifferences) {
  Rng rng(10 + GetParam());
  for (int trial = 0; trial < 5; ++trial) {
    const auto p = testing::small_problem(GetParam(), 2, 1.5, 0.6);
    const auto basis = sample_frequencies(p.kernel, 8, trial);
    const Discretization disc(5, 1.0);
    const Matrix x0 = random_matrix(rng, 3, 2, 1.0);
    auto v = random_controls(rng, 3, 5, 2, 1.0);
    const auto a = random_duals(rng, 8, 5, 1.0);
    const auto g = control_gradient(p, basis, a, x0, v, disc);
    for (std::size_t i = 0; i < v.values.data().size(); ++i) {
      const double keep = v.values.data()[i];
      v.values.data()[i] = keep + 1e-6;
      const double up = saddle_objective(p, basis, a, v, x0, disc);
      v.values.data()[i] = keep - 1e-6;
      const double down = saddle_objective(p, basis, a, v, x0, disc);
      v.values.data()[i] = keep;
      EXPECT_LT(testing::relative_error(g.values.data()[i], (up - down) / 2e-6, 1e-4), 1e-5) << "entry " << i;
    }
  }
}

INSTANTIATE_TEST_SUITE_P(Presets, ControlGradientFd, ::testing::Values('a', 'b', 'c'));

TEST(ControlGradient, PureQuadraticIsScaledControl) {
  Rng rng(11);
  auto p = testing::small_problem('a', 3, 1.0, 1.0);
  p.terminal.weight = 0.0;
  const auto basis = sample_frequencies(p.kernel, 8, 1);
  const Discretization disc(6, 1.0);
  const Matrix x0 = random_matrix(rng, 4, 3, 1.0);
  const auto v = random_controls(rng, 4, 6, 3, 1.0);
  const auto g = control_gradient(p, basis, DualCoefficients(8, 6), x0, v, disc);
  for (std::size_t i = 0; i < v.values.data().size(); ++i)
    EXPECT_NEAR(g.values.data()[i], -disc.step() / 4.0 * v.values.data()[i], 1e-15);
}

TEST(ControlGradient, AgentsDecoupleForFixedDuals) {
  Rng rng(12);
  const auto p = testing::small_problem('b', 2, 1.0, 1.0);
  const auto basis = sample_frequencies(p.kernel, 8, 1);
  const Discretization disc(5, 1.0);
  const Matrix x0 = random_matrix(rng, 3, 2, 1.0);
  auto v = random_controls(rng, 3, 5, 2, 1.0);
  const auto a = random_duals(rng, 8, 5, 1.0);
  const auto g1 = control_gradient(p, basis, a, x0, v, disc);
  for (double& x : v.values.agent(2)) x += rng.normal();
  const auto g2 = control_gradient(p, basis, a, x0, v, disc);
  for (std::size_t m = 0; m < 2; ++m)
    for (std::size_t i = 0; i < g1.values.agent(m).size(); ++i)
      EXPECT_EQ(g1.values.agent(m)[i], g2.values.agent(m)[i]);
}

TEST(ControlGradient, ThreadCountDoesNotChangeResult) {
  Rng rng(13);
  const auto p = testing::small_problem('a', 2, 1.0, 0.5);
  const auto basis = sample_frequencies(p.kernel, 16, 1);
  const Discretization disc(6, 1.0);
  const Matrix x0 = random_matrix(rng, 70, 2, 1.0);
  const auto v = random_controls(rng, 70, 6, 2, 1.0);
  const auto a = random_duals(rng, 16, 6, 1.0);
  EXPECT_EQ(control_gradient(p, basis, a, x0, v, disc, 1).values, control_gradient(p, basis, a, x0, v, disc, 3).values);
  EXPECT_EQ(saddle_objective(p, basis, a, v, x0, disc, nullptr, 1), saddle_objective(p, basis, a, v, x0, disc, nullptr, 4));
  const auto z = rollout(x0, v, disc);
  EXPECT_EQ(feature_means(basis, z, 1), feature_means(basis, z, 4));
}

}  // namespace
}  // namespace rfmfg
