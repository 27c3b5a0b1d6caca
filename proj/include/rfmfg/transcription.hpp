#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "rfmfg/kernels.hpp"
#include "rfmfg/parallel.hpp"
#include "rfmfg/problem.hpp"
#include "rfmfg/tensor.hpp"

namespace rfmfg {

/// Uniform grid t_l = l * step, l = 0 .. num_steps-1, with step = T / (N - 1).
struct Discretization {
  std::size_t num_steps = 50;
  double horizon = 1.0;

  Discretization() = default;
  Discretization(std::size_t n, double t) : num_steps(n), horizon(t) {
    require(n >= 2, "transcription: need at least 2 time samples");
    require(t > 0.0, "transcription: horizon must be positive");
  }

  double step() const { return horizon / static_cast<double>(num_steps - 1); }
  double time(std::size_t l) const {
    return l + 1 == num_steps ? horizon : static_cast<double>(l) * step();
  }
};

/// Controls v[m][l], shape M x N x d.
struct ControlBatch {
  Tensor3 values;
  bool operator==(const ControlBatch&) const = default;
};

/// States z[m][l], shape M x N x d; z[m][0] is agent m's initial position.
struct TrajectoryBatch {
  Tensor3 values;
  Matrix initial_positions;
  bool operator==(const TrajectoryBatch&) const = default;
};

/// Dual coefficients a_i[l], i < r, l < N. Stored step-major so that the
/// coefficient vector of one time slice is contiguous.
class DualCoefficients {
 public:
  DualCoefficients() = default;
  DualCoefficients(std::size_t features, std::size_t steps, double fill = 0.0)
      : by_step_(steps, features, fill) {}

  std::size_t features() const { return by_step_.cols(); }
  std::size_t steps() const { return by_step_.rows(); }

  double& operator()(std::size_t i, std::size_t l) { return by_step_(l, i); }
  double operator()(std::size_t i, std::size_t l) const { return by_step_(l, i); }

  std::span<double> slice(std::size_t l) { return by_step_.row(l); }
  std::span<const double> slice(std::size_t l) const { return by_step_.row(l); }

  std::vector<double>& data() { return by_step_.data(); }
  const std::vector<double>& data() const { return by_step_.data(); }

  bool operator==(const DualCoefficients&) const = default;

 private:
  Matrix by_step_;
};

namespace detail {

inline void check_controls(const Matrix& x0, const ControlBatch& v, const Discretization& disc) {
  const Tensor3& t = v.values;
  if (t.agents() != x0.rows() || t.dim() != x0.cols() || t.steps() != disc.num_steps)
    throw std::invalid_argument("transcription: controls have shape " + std::to_string(t.agents()) +
                                "x" + std::to_string(t.steps()) + "x" + std::to_string(t.dim()) +
                                ", expected " + std::to_string(x0.rows()) + "x" +
                                std::to_string(disc.num_steps) + "x" + std::to_string(x0.cols()));
}

inline void check_duals(const RandomFeatureBasis& basis, const DualCoefficients& a,
                        const Discretization& disc) {
  if (a.features() != basis.feature_count() || a.steps() != disc.num_steps)
    throw std::invalid_argument("transcription: dual coefficients have shape " +
                                std::to_string(a.features()) + "x" + std::to_string(a.steps()) +
                                ", expected " + std::to_string(basis.feature_count()) + "x" +
                                std::to_string(disc.num_steps));
}

/// Euler rollout of one agent. v and z are N*d contiguous.
inline void rollout_agent(std::span<const double> x0, std::span<const double> v,
                          std::span<double> z, std::size_t steps, double h) {
  const std::size_t d = x0.size();
  std::copy(x0.begin(), x0.end(), z.begin());
  for (std::size_t l = 0; l + 1 < steps; ++l)
    for (std::size_t k = 0; k < d; ++k) z[(l + 1) * d + k] = z[l * d + k] + h * v[l * d + k];
}

}  // namespace detail

/// z[m][0] = x_m, z[m][l+1] = z[m][l] + h v[m][l]. The last control never moves the state.
inline TrajectoryBatch rollout(const Matrix& initial_positions, const ControlBatch& controls,
                               const Discretization& disc) {
  detail::check_controls(initial_positions, controls, disc);
  const std::size_t M = initial_positions.rows(), N = disc.num_steps, d = initial_positions.cols();
  TrajectoryBatch out{Tensor3(M, N, d), initial_positions};
  const double h = disc.step();
  for (std::size_t m = 0; m < M; ++m)
    detail::rollout_agent(initial_positions.row(m), controls.values.agent(m), out.values.agent(m), N, h);
  return out;
}

/// J_m = sum_{l=1..N} h [L(t_l, z_l, v_l) + a[.][l] . zeta(z_l)] + psi(z_N).
/// z and v are one agent's N*d blocks.
inline double agent_cost(const MFGProblem& problem, const RandomFeatureBasis& basis,
                         const DualCoefficients& a, std::span<const double> z,
                         std::span<const double> v, const Discretization& disc) {
  const std::size_t N = disc.num_steps, d = problem.dimension;
  detail::check_duals(basis, a, disc);
  require(z.size() == N * d && v.size() == N * d, "transcription: agent block has wrong size");
  const double h = disc.step();
  std::vector<double> zeta(basis.feature_count());
  double running = 0.0;
  for (std::size_t l = 0; l < N; ++l) {
    const auto zl = z.subspan(l * d, d);
    eval_features_into(basis, zl, zeta);
    running += lagrangian_value(problem.lagrangian, disc.time(l), zl, v.subspan(l * d, d)) +
               dot(a.slice(l), zeta);
  }
  return h * running + terminal_value(problem.terminal, z.subspan((N - 1) * d, d));
}

/// sum_l (h/2) a[.][l]^T Kinv a[.][l]; Kinv = identity when null.
inline double dual_quadratic(const DualCoefficients& a, double h, const Matrix* gram_inverse = nullptr) {
  double s = 0.0;
  for (std::size_t l = 0; l < a.steps(); ++l) {
    const auto al = a.slice(l);
    if (!gram_inverse) {
      s += squared_norm(al);
    } else {
      for (std::size_t i = 0; i < al.size(); ++i) s += al[i] * dot(gram_inverse->row(i), al);
    }
  }
  return 0.5 * h * s;
}

/// Saddle function (h/2) sum_l |a_l|^2_{K^-1} - (1/M) sum_m J_m. Agent costs are
/// summed per block of kAgentBlock agents and blocks are combined in order.
inline double saddle_objective(const MFGProblem& problem, const RandomFeatureBasis& basis,
                               const DualCoefficients& a, const ControlBatch& controls,
                               const Matrix& initial_positions, const Discretization& disc,
                               const Matrix* gram_inverse = nullptr, std::size_t threads = 1) {
  detail::check_controls(initial_positions, controls, disc);
  detail::check_duals(basis, a, disc);
  if (gram_inverse)
    require(gram_inverse->rows() == a.features() && gram_inverse->cols() == a.features(),
            "transcription: Gram inverse has wrong shape");
  const std::size_t M = initial_positions.rows(), N = disc.num_steps, d = problem.dimension;
  const double h = disc.step();
  std::vector<double> partial(block_count(M), 0.0);
  parallel_blocks(partial.size(), threads, [&](std::size_t b) {
    std::vector<double> z(N * d);
    double s = 0.0;
    for (std::size_t m = b * kAgentBlock; m < std::min(M, (b + 1) * kAgentBlock); ++m) {
      detail::rollout_agent(initial_positions.row(m), controls.values.agent(m), z, N, h);
      s += agent_cost(problem, basis, a, z, controls.values.agent(m), disc);
    }
    partial[b] = s;
  });
  double total = 0.0;
  for (double s : partial) total += s;
  return dual_quadratic(a, h, gram_inverse) - total / static_cast<double>(M);
}

/// Per-agent adjoint pass. Writes dJ_m/dv (N*d) into grad; z must hold the
/// agent's rolled-out trajectory.
///   lam_N = grad psi(z_N) + h (dL/dx_N + G_N^T a_N)
///   lam_l = lam_{l+1} + h (dL/dx_l + G_l^T a_l)
///   dJ/dv_l = h dL/dv_l + h lam_{l+1}  (l < N),   dJ/dv_N = h dL/dv_N
inline void agent_cost_gradient(const MFGProblem& problem, const RandomFeatureBasis& basis,
                                const DualCoefficients& a, std::span<const double> z,
                                std::span<const double> v, const Discretization& disc,
                                std::span<double> grad) {
  const std::size_t N = disc.num_steps, d = problem.dimension;
  const double h = disc.step();
  std::vector<double> lam(d), dx(d), dv(d);
  terminal_gradient_into(problem.terminal, z.subspan((N - 1) * d, d), lam);
  for (std::size_t l = N; l-- > 0;) {
    const auto zl = z.subspan(l * d, d);
    lagrangian_gradients_into(problem.lagrangian, disc.time(l), zl, v.subspan(l * d, d), dx, dv);
    for (std::size_t k = 0; k < d; ++k)
      grad[l * d + k] = h * dv[k] + (l + 1 < N ? h * lam[k] : 0.0);
    add_feature_gradient_transpose(basis, zl, a.slice(l), 1.0, dx);
    for (std::size_t k = 0; k < d; ++k) lam[k] += h * dx[k];
  }
}

/// grad_v of the saddle function: -(1/M) dJ/dv, agent by agent.
inline ControlBatch control_gradient(const MFGProblem& problem, const RandomFeatureBasis& basis,
                                     const DualCoefficients& a, const Matrix& initial_positions,
                                     const ControlBatch& controls, const Discretization& disc,
                                     std::size_t threads = 1) {
  detail::check_controls(initial_positions, controls, disc);
  detail::check_duals(basis, a, disc);
  const std::size_t M = initial_positions.rows(), N = disc.num_steps, d = problem.dimension;
  const double h = disc.step();
  const double scale = -1.0 / static_cast<double>(M);
  ControlBatch g{Tensor3(M, N, d)};
  parallel_blocks(block_count(M), threads, [&](std::size_t b) {
    std::vector<double> z(N * d);
    for (std::size_t m = b * kAgentBlock; m < std::min(M, (b + 1) * kAgentBlock); ++m) {
      detail::rollout_agent(initial_positions.row(m), controls.values.agent(m), z, N, h);
      auto gm = g.values.agent(m);
      agent_cost_gradient(problem, basis, a, z, controls.values.agent(m), disc, gm);
      for (double& x : gm) x *= scale;
    }
  });
  return g;
}

/// Population feature means: entry (i, l) = (1/M) sum_m zeta_i(z[m][l]).
/// Block partial sums are combined in block order (thread-count independent).
inline DualCoefficients feature_means(const RandomFeatureBasis& basis, const TrajectoryBatch& traj,
                                      std::size_t threads = 1) {
  const Tensor3& z = traj.values;
  const std::size_t M = z.agents(), N = z.steps(), r = basis.feature_count();
  std::vector<DualCoefficients> partial(block_count(M));
  parallel_blocks(partial.size(), threads, [&](std::size_t b) {
    DualCoefficients acc(r, N);
    for (std::size_t m = b * kAgentBlock; m < std::min(M, (b + 1) * kAgentBlock); ++m)
      for (std::size_t l = 0; l < N; ++l) add_features(basis, z.at(m, l), acc.slice(l));
    partial[b] = std::move(acc);
  });
  DualCoefficients mean(r, N);
  for (const auto& p : partial)
    for (std::size_t i = 0; i < mean.data().size(); ++i) mean.data()[i] += p.data()[i];
  for (double& x : mean.data()) x /= static_cast<double>(M);
  return mean;
}

}  // namespace rfmfg
