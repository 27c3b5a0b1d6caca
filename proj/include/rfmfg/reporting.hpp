#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "rfmfg/cost_report.hpp"
#include "rfmfg/format.hpp"
#include "rfmfg/kernels.hpp"
#include "rfmfg/problem.hpp"
#include "rfmfg/solver.hpp"

namespace rfmfg {

/// Raised when an output file cannot be written or read.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class TrajectoryFormat { Csv, Json };

inline TrajectoryFormat parse_trajectory_format(const std::string& s) {
  if (s == "csv") return TrajectoryFormat::Csv;
  if (s == "json") return TrajectoryFormat::Json;
  throw std::invalid_argument("reporting: unknown trajectory format '" + s + "' (expected csv or json)");
}

namespace detail {
inline std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("reporting: cannot open '" + path.string() + "' for writing");
  return os;
}
inline void finish_output(std::ofstream& os, const std::filesystem::path& path) {
  os.flush();
  if (!os) throw IoError("reporting: write to '" + path.string() + "' failed");
}
}  // namespace detail

/// CSV `agent,step,t,x1,...,xd`, one row per (agent, step); both indices start
/// at 1 and t = (step - 1) h. JSON holds the same data as
/// [{"agent":1,"samples":[{"step":1,"t":0.0,"x":[...]}, ...]}, ...].
inline void write_trajectories(std::ostream& os, const TrajectoryBatch& traj,
                               const Discretization& disc, TrajectoryFormat format) {
  const Tensor3& z = traj.values;
  if (format == TrajectoryFormat::Csv) {
    os << "agent,step,t";
    for (std::size_t k = 1; k <= z.dim(); ++k) os << ",x" << k;
    os << '\n';
    for (std::size_t m = 0; m < z.agents(); ++m)
      for (std::size_t l = 0; l < z.steps(); ++l) {
        os << m + 1 << ',' << l + 1 << ',' << format_double(disc.time(l));
        for (double x : z.at(m, l)) os << ',' << format_double(x);
        os << '\n';
      }
    return;
  }
  nlohmann::json doc = nlohmann::json::array();
  for (std::size_t m = 0; m < z.agents(); ++m) {
    nlohmann::json samples = nlohmann::json::array();
    for (std::size_t l = 0; l < z.steps(); ++l) {
      const auto x = z.at(m, l);
      samples.push_back({{"step", l + 1}, {"t", disc.time(l)}, {"x", std::vector<double>(x.begin(), x.end())}});
    }
    doc.push_back({{"agent", m + 1}, {"samples", std::move(samples)}});
  }
  os << doc.dump() << '\n';
}

inline void export_trajectories(const Solution& solution, const std::filesystem::path& path,
                                const Discretization& disc, TrajectoryFormat format) {
  auto os = detail::open_output(path);
  write_trajectories(os, solution.trajectories, disc, format);
  detail::finish_output(os, path);
}

inline void export_trajectories(const Solution& solution, const std::filesystem::path& path,
                                const Discretization& disc, const std::string& format) {
  export_trajectories(solution, path, disc, parse_trajectory_format(format));
}

/// Reads a trajectory file written by write_trajectories.
inline TrajectoryBatch read_trajectories(std::istream& is, TrajectoryFormat format) {
  std::vector<std::vector<std::vector<double>>> rows;  // agent -> step -> x
  if (format == TrajectoryFormat::Csv) {
    std::string line;
    if (!std::getline(is, line) || line.rfind("agent,step,t", 0) != 0)
      throw std::invalid_argument("reporting: missing trajectory CSV header");
    while (std::getline(is, line)) {
      if (line.empty()) continue;
      std::vector<std::string> cells;
      std::stringstream ss(line);
      for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(cell);
      if (cells.size() < 4) throw std::invalid_argument("reporting: short trajectory row");
      const std::size_t m = parse_u64(cells[0]), l = parse_u64(cells[1]);
      if (m == 0 || l == 0) throw std::invalid_argument("reporting: indices start at 1");
      if (rows.size() < m) rows.resize(m);
      if (rows[m - 1].size() < l) rows[m - 1].resize(l);
      auto& x = rows[m - 1][l - 1];
      for (std::size_t c = 3; c < cells.size(); ++c) x.push_back(parse_double(cells[c]));
    }
  } else {
    const auto doc = nlohmann::json::parse(is);
    for (const auto& agent : doc) {
      std::vector<std::vector<double>> steps;
      for (const auto& s : agent.at("samples")) steps.push_back(s.at("x").get<std::vector<double>>());
      rows.push_back(std::move(steps));
    }
  }
  require(!rows.empty() && !rows[0].empty() && !rows[0][0].empty(), "reporting: empty trajectory file");
  const std::size_t M = rows.size(), N = rows[0].size(), d = rows[0][0].size();
  TrajectoryBatch t{Tensor3(M, N, d), Matrix(M, d)};
  for (std::size_t m = 0; m < M; ++m) {
    require(rows[m].size() == N, "reporting: ragged trajectory file");
    for (std::size_t l = 0; l < N; ++l) {
      require(rows[m][l].size() == d, "reporting: ragged trajectory file");
      std::copy(rows[m][l].begin(), rows[m][l].end(), t.values.at(m, l).begin());
    }
    std::copy(rows[m][0].begin(), rows[m][0].end(), t.initial_positions.row(m).begin());
  }
  return t;
}

inline TrajectoryBatch import_trajectories(const std::filesystem::path& path, TrajectoryFormat format) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("reporting: cannot open '" + path.string() + "'");
  return read_trajectories(is, format);
}

inline void export_cost_report(const CostReport& report, const std::filesystem::path& path) {
  auto os = detail::open_output(path);
  os << report.to_json() << '\n';
  detail::finish_output(os, path);
}

inline void export_residual_history(const std::vector<HistoryEntry>& history,
                                    const std::filesystem::path& path) {
  auto os = detail::open_output(path);
  os << "iteration,residual,objective\n";
  for (const auto& h : history)
    os << h.iteration << ',' << format_double(h.residual) << ',' << format_double(h.objective) << '\n';
  detail::finish_output(os, path);
}

/// CSV `r,seed,linf,l2`, one row per (r, seed). Same-seed bases share their
/// leading frequencies across r.
inline void write_kernel_error_curve(std::ostream& os, const GaussianKernelSpec& spec,
                                     std::span<const std::size_t> r_values,
                                     std::span<const std::uint64_t> seeds, const Matrix& points) {
  require(!r_values.empty() && !seeds.empty(), "reporting: need at least one r and one seed");
  os << "r,seed,linf,l2\n";
  for (std::size_t r : r_values)
    for (std::uint64_t seed : seeds) {
      const auto e = approximation_error(spec, sample_frequencies(spec, r, seed), points);
      os << r << ',' << seed << ',' << format_double(e.linf) << ',' << format_double(e.l2) << '\n';
    }
}

inline void export_kernel_error_curve(const GaussianKernelSpec& spec, std::span<const std::size_t> r_values,
                                      std::span<const std::uint64_t> seeds, const Matrix& points,
                                      const std::filesystem::path& path) {
  auto os = detail::open_output(path);
  write_kernel_error_curve(os, spec, r_values, seeds, points);
  detail::finish_output(os, path);
}

/// CSV `s,exact,approx` for s uniform on [-radius, radius] and x = s * direction.
/// The direction is normalized here.
inline void write_kernel_slice(std::ostream& os, const GaussianKernelSpec& spec,
                               const RandomFeatureBasis& basis, std::span<const double> direction,
                               double radius, std::size_t num_points) {
  require(num_points >= 2, "reporting: kernel slice needs at least 2 points");
  const double norm = std::sqrt(squared_norm(direction));
  require(norm > 0.0 && std::isfinite(norm), "reporting: kernel slice direction must be nonzero");
  std::vector<double> x(direction.size()), origin(direction.size(), 0.0);
  os << "s,exact,approx\n";
  for (std::size_t p = 0; p < num_points; ++p) {
    const double s = -radius + 2.0 * radius * static_cast<double>(p) / static_cast<double>(num_points - 1);
    for (std::size_t k = 0; k < x.size(); ++k) x[k] = s * direction[k] / norm;
    os << format_double(s) << ',' << format_double(kernel_exact(spec, x, origin)) << ','
       << format_double(kernel_approx(basis, x, origin)) << '\n';
  }
}

inline void export_kernel_slice(const GaussianKernelSpec& spec, const RandomFeatureBasis& basis,
                                std::span<const double> direction, double radius, std::size_t num_points,
                                const std::filesystem::path& path) {
  auto os = detail::open_output(path);
  write_kernel_slice(os, spec, basis, direction, radius, num_points);
  detail::finish_output(os, path);
}

/// Evaluation set for kernels acting on more than two coordinates: `count`
/// draws from the initial distribution, shifted by `center` and projected on
/// the interaction coordinates (K(x, c) - K_r(x, c) = K(x - c, 0) - K_r(x - c, 0)).
inline Matrix sampled_evaluation_points(const InitialDistribution& dist, std::span<const double> center,
                                        std::size_t interaction_dims, std::size_t count,
                                        std::uint64_t seed) {
  const Matrix x = sample_initial_positions(dist, count, seed);
  require(center.size() >= interaction_dims && x.cols() >= interaction_dims,
          "reporting: evaluation center shorter than interaction_dims");
  Matrix p(count, interaction_dims);
  for (std::size_t i = 0; i < count; ++i)
    for (std::size_t k = 0; k < interaction_dims; ++k) p(i, k) = x(i, k) - center[k];
  return p;
}

/// Default evaluation set: the 51 x 51 grid when the kernel is planar,
/// otherwise 2000 samples of the initial distribution around its first center.
inline Matrix default_evaluation_points(const MFGProblem& problem, std::uint64_t seed) {
  if (problem.kernel.interaction_dims == 2) return default_grid_2d();
  return sampled_evaluation_points(problem.initial, problem.initial.centers.front(),
                                   problem.kernel.interaction_dims, 2000, seed);
}

}  // namespace rfmfg
