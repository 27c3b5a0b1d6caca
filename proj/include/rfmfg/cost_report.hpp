#pragma once

#include <cstddef>
#include <ostream>
#include <string>
#include <vector>

#include "rfmfg/format.hpp"
#include "rfmfg/transcription.hpp"

namespace rfmfg {

/// Population costs at a trajectory batch.
struct CostReport {
  double running = 0.0;
  double interaction = 0.0;
  double terminal = 0.0;
  double total = 0.0;

  /// {"running":...,"interaction":...,"terminal":...,"total":...}
  std::string to_json() const {
    return "{\"running\":" + format_double(running) + ",\"interaction\":" +
           format_double(interaction) + ",\"terminal\":" + format_double(terminal) +
           ",\"total\":" + format_double(total) + "}";
  }
};

/// Interaction cost (h / 2M^2) sum_l |sum_m zeta(z[m][l])|^2. Includes the
/// m = m' diagonal, which contributes h N mu / (2M).
inline double interaction_cost(const RandomFeatureBasis& basis, const TrajectoryBatch& traj,
                               const Discretization& disc, std::size_t threads = 1) {
  const DualCoefficients mean = feature_means(basis, traj, threads);
  double s = 0.0;
  for (std::size_t l = 0; l < mean.steps(); ++l) s += squared_norm(mean.slice(l));
  return 0.5 * disc.step() * s;
}

/// running   = (h/M) sum_m sum_l L(t_l, z, v)
/// terminal  = (1/M) sum_m psi(z[m][N])
/// interaction as in interaction_cost.
inline CostReport cost_report(const MFGProblem& problem, const RandomFeatureBasis& basis,
                              const TrajectoryBatch& traj, const ControlBatch& controls,
                              const Discretization& disc, std::size_t threads = 1) {
  const Tensor3& z = traj.values;
  require(z.same_shape(controls.values), "reporting: trajectories and controls differ in shape");
  require(z.steps() == disc.num_steps && z.dim() == problem.dimension,
          "reporting: trajectories do not match the discretization");
  const std::size_t M = z.agents(), N = z.steps();
  const double h = disc.step();
  CostReport c;
  for (std::size_t m = 0; m < M; ++m) {
    double run = 0.0;
    for (std::size_t l = 0; l < N; ++l)
      run += lagrangian_value(problem.lagrangian, disc.time(l), z.at(m, l), controls.values.at(m, l));
    c.running += run;
    c.terminal += terminal_value(problem.terminal, z.at(m, N - 1));
  }
  c.running *= h / static_cast<double>(M);
  c.terminal /= static_cast<double>(M);
  c.interaction = interaction_cost(basis, traj, disc, threads);
  c.total = c.running + c.interaction + c.terminal;
  return c;
}

/// Time-integrated obstacle penalty (h/M) sum_m sum_l penalty(z[m][l]); zero
/// without an obstacle. Part of `running`.
inline double obstacle_cost(const MFGProblem& problem, const TrajectoryBatch& traj,
                            const Discretization& disc) {
  if (!problem.lagrangian.obstacle) return 0.0;
  const Tensor3& z = traj.values;
  double s = 0.0;
  for (std::size_t m = 0; m < z.agents(); ++m)
    for (std::size_t l = 0; l < z.steps(); ++l) s += problem.lagrangian.obstacle->penalty(z.at(m, l));
  return s * disc.step() / static_cast<double>(z.agents());
}

}  // namespace rfmfg
