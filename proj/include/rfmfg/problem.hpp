#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "rfmfg/kernels.hpp"
#include "rfmfg/rng.hpp"
#include "rfmfg/tensor.hpp"

namespace rfmfg {

/// Soft wedge obstacle on the first two coordinates:
/// penalty(x) = weight * max(x'^T Q x', 0).
struct ObstacleSpec {
  double weight = 5.0;
  std::array<double, 4> quadratic_form{1.0, 0.0, 0.0, -5.0};  // row-major 2x2

  double form(std::span<const double> x) const {
    const auto& q = quadratic_form;
    return x[0] * (q[0] * x[0] + q[1] * x[1]) + x[1] * (q[2] * x[0] + q[3] * x[1]);
  }
  double penalty(std::span<const double> x) const { return weight * std::max(form(x), 0.0); }
  bool operator==(const ObstacleSpec&) const = default;
};

/// L(t, x, v) = kinetic_weight * |v|^2 + optional obstacle penalty.
struct LagrangianSpec {
  double kinetic_weight = 0.5;
  std::optional<ObstacleSpec> obstacle;
};

/// psi(x) = weight * |x - target|^2.
struct TerminalSpec {
  double weight = 10.0;
  std::vector<double> target;
};

/// Equal-weight isotropic Gaussian mixture.
struct InitialDistribution {
  std::vector<std::vector<double>> centers;
  double std = 0.1;
};

struct MFGProblem {
  std::size_t dimension = 2;
  double horizon = 1.0;
  LagrangianSpec lagrangian;
  TerminalSpec terminal;
  InitialDistribution initial;
  GaussianKernelSpec kernel;

  void validate() const {
    require(dimension >= 1, "problem: dimension must be >= 1");
    require(horizon > 0.0, "problem: horizon must be positive");
    require(lagrangian.kinetic_weight > 0.0, "problem: kinetic_weight must be positive");
    if (lagrangian.obstacle) require(dimension >= 2, "problem: obstacle needs dimension >= 2");
    require(terminal.weight >= 0.0, "problem: terminal weight must be >= 0");
    require(terminal.target.size() == dimension, "problem: target has wrong dimension");
    require(!initial.centers.empty(), "problem: initial distribution needs a center");
    require(initial.std > 0.0, "problem: initial std must be positive");
    for (const auto& c : initial.centers)
      require(c.size() == dimension, "problem: initial center has wrong dimension");
    kernel.validate();
    require(kernel.interaction_dims <= dimension, "problem: interaction_dims exceeds dimension");
  }
};

/// M draws from the mixture: a uniform component choice, then isotropic noise.
/// Uses the InitialPositions stream, independent of frequency sampling.
inline Matrix sample_initial_positions(const InitialDistribution& dist, std::size_t count,
                                       std::uint64_t seed) {
  require(count >= 1, "problem: need at least one initial position");
  require(!dist.centers.empty(), "problem: initial distribution needs a center");
  const std::size_t d = dist.centers.front().size();
  Rng rng(seed, Stream::InitialPositions);
  Matrix x(count, d);
  for (std::size_t m = 0; m < count; ++m) {
    const auto& c = dist.centers[rng.below(dist.centers.size())];
    for (std::size_t k = 0; k < d; ++k) x(m, k) = c[k] + dist.std * rng.normal();
  }
  return x;
}

inline double lagrangian_value(const LagrangianSpec& spec, double /*t*/, std::span<const double> x,
                               std::span<const double> v) {
  double value = spec.kinetic_weight * squared_norm(v);
  if (spec.obstacle) value += spec.obstacle->penalty(x);
  return value;
}

struct LagrangianGradients {
  std::vector<double> dx;
  std::vector<double> dv;
};

/// Writes dL/dx and dL/dv. On the obstacle boundary the x-gradient is 0.
inline void lagrangian_gradients_into(const LagrangianSpec& spec, double /*t*/,
                                      std::span<const double> x, std::span<const double> v,
                                      std::span<double> dx, std::span<double> dv) {
  for (std::size_t k = 0; k < v.size(); ++k) dv[k] = 2.0 * spec.kinetic_weight * v[k];
  std::fill(dx.begin(), dx.end(), 0.0);
  if (spec.obstacle && spec.obstacle->form(x) > 0.0) {
    const auto& q = spec.obstacle->quadratic_form;
    const double w = spec.obstacle->weight;
    dx[0] = w * ((q[0] + q[0]) * x[0] + (q[1] + q[2]) * x[1]);
    dx[1] = w * ((q[2] + q[1]) * x[0] + (q[3] + q[3]) * x[1]);
  }
}

inline LagrangianGradients lagrangian_gradients(const LagrangianSpec& spec, double t,
                                                std::span<const double> x,
                                                std::span<const double> v) {
  LagrangianGradients g{std::vector<double>(x.size()), std::vector<double>(v.size())};
  lagrangian_gradients_into(spec, t, x, v, g.dx, g.dv);
  return g;
}

inline double terminal_value(const TerminalSpec& spec, std::span<const double> x) {
  double s = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) s += (x[k] - spec.target[k]) * (x[k] - spec.target[k]);
  return spec.weight * s;
}

inline void terminal_gradient_into(const TerminalSpec& spec, std::span<const double> x,
                                   std::span<double> out) {
  for (std::size_t k = 0; k < x.size(); ++k) out[k] = 2.0 * spec.weight * (x[k] - spec.target[k]);
}

struct TerminalEvaluation {
  double value = 0.0;
  std::vector<double> gradient;
};

inline TerminalEvaluation terminal_value_and_gradient(const TerminalSpec& spec,
                                                      std::span<const double> x) {
  require(x.size() == spec.target.size(), "problem: terminal state has wrong dimension");
  TerminalEvaluation e{terminal_value(spec, x), std::vector<double>(x.size())};
  terminal_gradient_into(spec, x, e.gradient);
  return e;
}

enum class Experiment { A, B, C };

inline Experiment parse_experiment(const std::string& tag) {
  if (tag == "a" || tag == "A") return Experiment::A;
  if (tag == "b" || tag == "B") return Experiment::B;
  if (tag == "c" || tag == "C") return Experiment::C;
  throw std::invalid_argument("problem: unknown experiment '" + tag + "' (expected a, b or c)");
}

/// Optional overrides applied on top of a preset's defaults. For experiment C,
/// `sigma_hat` is the dimensionless radius and sigma = sigma_hat * sqrt(d / 2).
struct PresetOverrides {
  std::optional<double> mu;
  std::optional<double> sigma;
  std::optional<double> sigma_hat;
  std::optional<double> initial_std;
  std::optional<double> terminal_weight;
  std::optional<double> horizon;
};

inline std::vector<std::vector<double>> octagon_centers(std::size_t d) {
  std::vector<std::vector<double>> centers;
  for (int j = 1; j <= 8; ++j) {
    std::vector<double> c(d, 0.0);
    const double angle = 2.0 * std::numbers::pi * j / 8.0;
    c[0] = std::cos(angle);
    c[1] = std::sin(angle);
    centers.push_back(std::move(c));
  }
  return centers;
}

/// The three reference problems.
///  A: octagon mixture -> origin, L = |v|^2/2, kernel on (x1, x2), mu = 10.
///  B: Gaussian at (0,1,0..) -> (0,-1,0..) around a wedge obstacle, mu = 50, sigma = 1.
///  C: as A with a full-dimensional kernel, sigma = sigma_hat * sqrt(d / 2).
inline MFGProblem preset(Experiment experiment, std::size_t d, const PresetOverrides& o = {}) {
  require(d >= 2, "problem: presets need dimension >= 2");
  MFGProblem p;
  p.dimension = d;
  p.horizon = o.horizon.value_or(1.0);
  p.terminal.weight = o.terminal_weight.value_or(10.0);
  switch (experiment) {
    case Experiment::A:
    case Experiment::C:
      p.initial.centers = octagon_centers(d);
      p.initial.std = o.initial_std.value_or(0.1);
      p.lagrangian.kinetic_weight = 0.5;
      p.terminal.target.assign(d, 0.0);
      if (experiment == Experiment::A) {
        require(!o.sigma_hat, "problem: sigma_hat only applies to experiment c");
        p.kernel = {o.mu.value_or(10.0), o.sigma.value_or(0.2), 2};
      } else {
        require(!(o.sigma && o.sigma_hat), "problem: give sigma or sigma_hat, not both");
        const double sigma_hat = o.sigma_hat.value_or(0.2);
        const double sigma = o.sigma ? *o.sigma : sigma_hat * std::sqrt(static_cast<double>(d) / 2.0);
        p.kernel = {o.mu.value_or(sigma_hat == 1.25 && !o.sigma ? 1.0 : 10.0), sigma, d};
      }
      break;
    case Experiment::B: {
      require(!o.sigma_hat, "problem: sigma_hat only applies to experiment c");
      std::vector<double> start(d, 0.0), target(d, 0.0);
      start[1] = 1.0;
      target[1] = -1.0;
      p.initial.centers = {start};
      p.initial.std = o.initial_std.value_or(0.2);
      p.lagrangian.kinetic_weight = 0.25;
      p.lagrangian.obstacle = ObstacleSpec{};
      p.terminal.target = target;
      p.kernel = {o.mu.value_or(50.0), o.sigma.value_or(1.0), 2};
      break;
    }
  }
  p.validate();
  return p;
}

inline MFGProblem preset(const std::string& tag, std::size_t d, const PresetOverrides& o = {}) {
  return preset(parse_experiment(tag), d, o);
}

}  // namespace rfmfg
