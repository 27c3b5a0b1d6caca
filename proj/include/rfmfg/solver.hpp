#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "rfmfg/cost_report.hpp"
#include "rfmfg/parallel.hpp"
#include "rfmfg/problem.hpp"
#include "rfmfg/rng.hpp"
#include "rfmfg/transcription.hpp"

namespace rfmfg {

enum class ProxMode {
  /// a <- (1 - h_a) a + h_a mean  (identity Gram, as displayed in closed form)
  Linearized,
  /// a <- (a + h h_a mean) / (1 + h h_a), the exact per-slice proximal minimizer
  ExactProx,
};

enum class GradientScaling {
  /// Ascent along the L2(0,T) gradient of each agent's own payoff,
  /// (M / h) grad_v L. Same fixed points as Raw; step sizes stay O(1)
  /// independent of M and N.
  Metric,
  /// Ascent along the Euclidean gradient grad_v L of the saddle function.
  Raw,
  /// Metric gradient multiplied by the inverse of each agent's kinetic +
  /// terminal Hessian 2c I + 2w h 11^T (the obstacle and coupling terms are
  /// left out). Same fixed points; removes the stiff terminal direction.
  Preconditioned,
};

enum class InitMode { Zeros, Random };

struct SolverConfig {
  double h_v = 0.2;
  double h_a = 0.5;
  std::size_t max_iterations = 2000;
  double tolerance = 1e-6;
  InitMode control_init = InitMode::Zeros;
  double control_init_scale = 0.1;
  std::uint64_t control_seed = 0;
  InitMode dual_init = InitMode::Zeros;
  double dual_init_scale = 0.1;
  std::uint64_t dual_seed = 0;
  ProxMode prox_mode = ProxMode::Linearized;
  GradientScaling gradient_scaling = GradientScaling::Preconditioned;
  std::size_t record_history_every = 10;
  std::size_t threads = 1;
  /// Progress lines `iter=<k> objective=<x> residual=<x>` go here when set.
  std::ostream* log = nullptr;

  void validate() const {
    require(h_v >= 0.0 && std::isfinite(h_v), "solver: h_v must be >= 0");
    require(h_a > 0.0, "solver: h_a must be positive");
    if (prox_mode == ProxMode::Linearized)
      require(h_a <= 1.0, "solver: h_a must lie in (0, 1] for linearized prox");
    require(max_iterations >= 1, "solver: max_iterations must be >= 1");
    require(tolerance > 0.0, "solver: tolerance must be positive");
    require(record_history_every >= 1, "solver: record_history_every must be >= 1");
  }
};

struct SaddleState {
  ControlBatch controls;
  ControlBatch controls_prev;
  DualCoefficients duals;
  std::size_t iteration = 0;
};

struct HistoryEntry {
  std::size_t iteration = 0;
  double residual = 0.0;
  double objective = 0.0;
};

struct Solution {
  ControlBatch controls;
  TrajectoryBatch trajectories;
  DualCoefficients duals;
  CostReport cost_report;
  std::vector<HistoryEntry> residual_history;
  bool converged = false;
  std::size_t iterations = 0;
};

/// Thrown when the iteration produces a non-finite value.
class DivergedError : public std::runtime_error {
 public:
  DivergedError(std::size_t iteration, std::vector<HistoryEntry> trace)
      : std::runtime_error("solver: diverged (non-finite state) at iteration " +
                           std::to_string(iteration)),
        iteration_(iteration),
        trace_(std::move(trace)) {}
  std::size_t iteration() const { return iteration_; }
  const std::vector<HistoryEntry>& trace() const { return trace_; }

 private:
  std::size_t iteration_;
  std::vector<HistoryEntry> trace_;
};

/// Dual proximal update on one time slice at a time. `feature_means` holds
/// (1/M) sum_m zeta_i(zbar[m][l]). With a Gram inverse, Linearized applies
/// (I - h_a Kinv) a + h_a mean.
inline DualCoefficients prox_duals(const DualCoefficients& duals, const DualCoefficients& feature_means,
                                   double h_a, ProxMode mode, double h,
                                   const Matrix* gram_inverse = nullptr) {
  require(duals.features() == feature_means.features() && duals.steps() == feature_means.steps(),
          "solver: duals and feature means differ in shape");
  require(h_a > 0.0, "solver: h_a must be positive");
  DualCoefficients out(duals.features(), duals.steps());
  const auto& a = duals.data();
  const auto& mbar = feature_means.data();
  auto& o = out.data();
  if (mode == ProxMode::Linearized) {
    require(h_a <= 1.0, "solver: h_a must lie in (0, 1] for linearized prox");
    if (!gram_inverse) {
      for (std::size_t i = 0; i < o.size(); ++i) o[i] = (1.0 - h_a) * a[i] + h_a * mbar[i];
    } else {
      for (std::size_t l = 0; l < duals.steps(); ++l) {
        const auto al = duals.slice(l);
        const auto ml = feature_means.slice(l);
        auto ol = out.slice(l);
        for (std::size_t i = 0; i < al.size(); ++i)
          ol[i] = al[i] - h_a * dot(gram_inverse->row(i), al) + h_a * ml[i];
      }
    }
  } else {
    require(!gram_inverse, "solver: exact_prox supports the identity Gram only");
    const double c = h * h_a;
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = (a[i] + c * mbar[i]) / (1.0 + c);
  }
  return out;
}

/// |v' - v|_inf / (1 + |v|_inf) + |a' - a|_inf / (1 + |a|_inf).
inline double residual(const SaddleState& prev, const SaddleState& next) {
  require(prev.controls.values.same_shape(next.controls.values) &&
              prev.duals.features() == next.duals.features() &&
              prev.duals.steps() == next.duals.steps(),
          "solver: residual of states with different shapes");
  const auto& v0 = prev.controls.values.data();
  const auto& a0 = prev.duals.data();
  return sup_distance(v0, next.controls.values.data()) / (1.0 + sup_norm(v0)) +
         sup_distance(a0, next.duals.data()) / (1.0 + sup_norm(a0));
}

namespace detail {

/// In place, per agent and coordinate: g <- (2c I + 2w h 11^T)^{-1} g on the
/// N - 1 controls that move the state, g <- g / 2c on the last one.
inline void apply_lq_preconditioner(const MFGProblem& problem, const Discretization& disc, ControlBatch& g) {
  const Tensor3& t = g.values;
  const std::size_t N = t.steps(), d = t.dim();
  const double alpha = 2.0 * problem.lagrangian.kinetic_weight;
  const double beta = 2.0 * problem.terminal.weight * disc.step();
  const double shrink = beta / (alpha + beta * static_cast<double>(N - 1));
  for (std::size_t m = 0; m < t.agents(); ++m) {
    auto a = g.values.agent(m);
    for (std::size_t k = 0; k < d; ++k) {
      double sum = 0.0;
      for (std::size_t l = 0; l + 1 < N; ++l) sum += a[l * d + k];
      for (std::size_t l = 0; l + 1 < N; ++l) a[l * d + k] = (a[l * d + k] - shrink * sum) / alpha;
      a[(N - 1) * d + k] /= alpha;
    }
  }
}

}  // namespace detail

/// Ascent direction used by pdhg_step.
inline ControlBatch ascent_direction(const MFGProblem& problem, const RandomFeatureBasis& basis,
                                     const DualCoefficients& a, const Matrix& initial_positions,
                                     const ControlBatch& controls, const Discretization& disc,
                                     const SolverConfig& config) {
  ControlBatch g = control_gradient(problem, basis, a, initial_positions, controls, disc, config.threads);
  if (config.gradient_scaling == GradientScaling::Raw) return g;
  const double scale = static_cast<double>(initial_positions.rows()) / disc.step();
  for (double& x : g.values.data()) x *= scale;
  if (config.gradient_scaling == GradientScaling::Preconditioned)
    detail::apply_lq_preconditioner(problem, disc, g);
  return g;
}

/// One primal-dual iteration:
///   v+   = v + h_v grad_v L(a, v)
///   vbar = 2 v+ - v
///   a+   = prox(a, mean features of rollout(vbar))
inline SaddleState pdhg_step(const SaddleState& state, const MFGProblem& problem,
                             const RandomFeatureBasis& basis, const Matrix& initial_positions,
                             const Discretization& disc, const SolverConfig& config) {
  const ControlBatch g =
      ascent_direction(problem, basis, state.duals, initial_positions, state.controls, disc, config);
  if (!all_finite(g.values.data())) throw DivergedError(state.iteration, {});

  SaddleState next;
  next.iteration = state.iteration + 1;
  next.controls_prev = state.controls;
  next.controls = state.controls;
  auto& v = next.controls.values.data();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] += config.h_v * g.values.data()[i];

  ControlBatch vbar = next.controls;
  const auto& v_old = state.controls.values.data();
  for (std::size_t i = 0; i < v.size(); ++i) vbar.values.data()[i] = 2.0 * v[i] - v_old[i];

  const TrajectoryBatch zbar = rollout(initial_positions, vbar, disc);
  const DualCoefficients mbar = feature_means(basis, zbar, config.threads);
  next.duals = prox_duals(state.duals, mbar, config.h_a, config.prox_mode, disc.step());

  if (!all_finite(v) || !all_finite(next.duals.data())) throw DivergedError(next.iteration, {});
  return next;
}

inline SaddleState initial_state(const RandomFeatureBasis& basis, std::size_t agents,
                                 std::size_t dim, const Discretization& disc,
                                 const SolverConfig& config) {
  SaddleState s;
  s.controls.values = Tensor3(agents, disc.num_steps, dim);
  s.duals = DualCoefficients(basis.feature_count(), disc.num_steps);
  if (config.control_init == InitMode::Random) {
    Rng rng(config.control_seed, Stream::ControlInit);
    for (double& x : s.controls.values.data()) x = config.control_init_scale * rng.normal();
  }
  if (config.dual_init == InitMode::Random) {
    Rng rng(config.dual_seed, Stream::DualInit);
    for (double& x : s.duals.data()) x = config.dual_init_scale * rng.normal();
  }
  s.controls_prev = s.controls;
  return s;
}

/// Runs pdhg_step from the configured initial state until the residual drops
/// below tolerance or max_iterations is reached.
inline Solution solve(const MFGProblem& problem, const RandomFeatureBasis& basis,
                      const Matrix& initial_positions, const Discretization& disc,
                      const SolverConfig& config) {
  problem.validate();
  config.validate();
  require(initial_positions.rows() >= 1, "solver: need at least one agent");
  require(initial_positions.cols() == problem.dimension,
          "solver: initial positions have wrong dimension");
  require(basis.interaction_dims() == problem.kernel.interaction_dims,
          "solver: basis and kernel disagree on interaction_dims");

  SaddleState state =
      initial_state(basis, initial_positions.rows(), problem.dimension, disc, config);
  Solution sol;
  auto record = [&](std::size_t it, double res) {
    const double obj = saddle_objective(problem, basis, state.duals, state.controls,
                                        initial_positions, disc, nullptr, config.threads);
    sol.residual_history.push_back({it, res, obj});
    if (config.log)
      *config.log << "iter=" << it << " objective=" << format_double(obj)
                  << " residual=" << format_double(res) << '\n';
  };

  double res = 0.0;
  try {
    while (state.iteration < config.max_iterations) {
      SaddleState next = pdhg_step(state, problem, basis, initial_positions, disc, config);
      res = residual(state, next);
      state = std::move(next);
      if (!std::isfinite(res)) throw DivergedError(state.iteration, {});
      sol.converged = res < config.tolerance;
      if (sol.converged || state.iteration % config.record_history_every == 0 ||
          state.iteration == config.max_iterations)
        record(state.iteration, res);
      if (sol.converged) break;
    }
  } catch (const DivergedError& e) {
    throw DivergedError(e.iteration(), sol.residual_history);
  }

  sol.iterations = state.iteration;
  sol.controls = std::move(state.controls);
  sol.duals = std::move(state.duals);
  sol.trajectories = rollout(initial_positions, sol.controls, disc);
  sol.cost_report = cost_report(problem, basis, sol.trajectories, sol.controls, disc, config.threads);
  return sol;
}

/// Samples M initial positions from the problem's distribution, then solves.
inline Solution solve(const MFGProblem& problem, const RandomFeatureBasis& basis,
                      std::size_t agents, const Discretization& disc, const SolverConfig& config,
                      std::uint64_t initial_positions_seed) {
  return solve(problem, basis, sample_initial_positions(problem.initial, agents, initial_positions_seed),
               disc, config);
}

// Potential-minimization oracle ---------------------------------------------

struct OracleConfig {
  std::size_t max_iterations = 200000;
  /// Stop when the sup-norm of (M / h) dP/dv falls below this.
  double gradient_tolerance = 1e-10;
  double armijo = 1e-4;
};

struct OracleResult {
  TrajectoryBatch trajectories;
  ControlBatch controls;
  std::vector<double> objective_history;
  std::size_t iterations = 0;
};

class LineSearchError : public std::runtime_error {
 public:
  explicit LineSearchError(double last_objective)
      : std::runtime_error("solver: oracle line search failed at objective " +
                           format_double(last_objective)),
        last_objective_(last_objective) {}
  double last_objective() const { return last_objective_; }

 private:
  double last_objective_;
};

namespace detail {

/// P(v) = (1/M) sum_m [sum_l h L + psi(z_N)] + (h / 2M^2) sum_l |sum_m zeta(z[m][l])|^2.
/// When grad is non-null it receives dP/dv, computed with explicit feature
/// Jacobians (independent of agent_cost_gradient).
inline double potential(const MFGProblem& problem, const RandomFeatureBasis& basis,
                        const Matrix& x0, const ControlBatch& v, const Discretization& disc,
                        ControlBatch* grad) {
  const std::size_t M = x0.rows(), N = disc.num_steps, d = problem.dimension, r = basis.feature_count();
  const double h = disc.step();
  const double inv_m = 1.0 / static_cast<double>(M);
  const TrajectoryBatch traj = rollout(x0, v, disc);
  const Tensor3& z = traj.values;

  Matrix sums(N, r);
  double own = 0.0;
  for (std::size_t m = 0; m < M; ++m) {
    for (std::size_t l = 0; l < N; ++l) {
      const auto zeta = eval_features(basis, z.at(m, l));
      for (std::size_t i = 0; i < r; ++i) sums(l, i) += zeta[i];
      own += h * lagrangian_value(problem.lagrangian, disc.time(l), z.at(m, l), v.values.at(m, l));
    }
    own += terminal_value(problem.terminal, z.at(m, N - 1));
  }
  double inter = 0.0;
  for (std::size_t l = 0; l < N; ++l) inter += squared_norm(sums.row(l));
  const double value = own * inv_m + 0.5 * h * inv_m * inv_m * inter;
  if (!grad) return value;

  grad->values = Tensor3(M, N, d);
  std::vector<double> adj(d), force(d);
  for (std::size_t m = 0; m < M; ++m) {
    // adj holds dP/dz[m][l+1] while processing step l.
    const auto tg = terminal_value_and_gradient(problem.terminal, z.at(m, N - 1));
    for (std::size_t k = 0; k < d; ++k) adj[k] = inv_m * tg.gradient[k];
    for (std::size_t l = N; l-- > 0;) {
      const auto lg = lagrangian_gradients(problem.lagrangian, disc.time(l), z.at(m, l), v.values.at(m, l));
      for (std::size_t k = 0; k < d; ++k)
        (*grad).values(m, l, k) = inv_m * h * lg.dv[k] + (l + 1 < N ? h * adj[k] : 0.0);
      const Matrix jac = eval_feature_gradient(basis, z.at(m, l));
      for (std::size_t k = 0; k < d; ++k) {
        double s = 0.0;
        for (std::size_t i = 0; i < r; ++i) s += jac(i, k) * sums(l, i);
        force[k] = s * inv_m;
      }
      for (std::size_t k = 0; k < d; ++k) adj[k] += inv_m * h * (lg.dx[k] + force[k]);
    }
  }
  return value;
}

}  // namespace detail

/// Independent validation oracle: minimizes the discrete population potential
/// by gradient descent with Armijo backtracking, starting from zero controls.
/// Intended for small instances.
inline OracleResult potential_oracle_solve(const MFGProblem& problem, const RandomFeatureBasis& basis,
                                           const Matrix& initial_positions, const Discretization& disc,
                                           const OracleConfig& config = {}) {
  const std::size_t M = initial_positions.rows(), N = disc.num_steps, d = problem.dimension;
  const double metric = static_cast<double>(M) / disc.step();
  OracleResult out;
  ControlBatch v{Tensor3(M, N, d)};
  ControlBatch g, trial_grad;
  double value = detail::potential(problem, basis, initial_positions, v, disc, &g);
  out.objective_history.push_back(value);
  double step = 1.0 / metric;
  for (std::size_t it = 0; it < config.max_iterations; ++it) {
    const double gsup = sup_norm(g.values.data()) * metric;
    if (gsup < config.gradient_tolerance) break;
    const double gg = squared_norm(g.values.data());
    step *= 2.0;
    ControlBatch trial = v;
    double trial_value = 0.0;
    bool have_grad = false;
    for (;;) {
      for (std::size_t i = 0; i < trial.values.data().size(); ++i)
        trial.values.data()[i] = v.values.data()[i] - step * g.values.data()[i];
      trial_value = detail::potential(problem, basis, initial_positions, trial, disc, nullptr);
      if (trial_value <= value - config.armijo * step * gg) break;
      // Near the minimizer the decrease drops below rounding in P; fall back
      // to requiring a smaller gradient norm.
      if (std::abs(trial_value - value) <= 1e-13 * (1.0 + std::abs(value))) {
        detail::potential(problem, basis, initial_positions, trial, disc, &trial_grad);
        if (squared_norm(trial_grad.values.data()) < gg) {
          have_grad = true;
          break;
        }
      }
      step *= 0.5;
      if (step * metric < 1e-14) throw LineSearchError(value);
    }
    v = std::move(trial);
    if (have_grad) {
      g = std::move(trial_grad);
      value = trial_value;
    } else {
      value = detail::potential(problem, basis, initial_positions, v, disc, &g);
    }
    out.objective_history.push_back(value);
    out.iterations = it + 1;
  }
  out.controls = v;
  out.trajectories = rollout(initial_positions, v, disc);
  return out;
}

}  // namespace rfmfg
