#include "gdmd/simulate.hpp"

#include "gdmd/assignment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

namespace gdmd {

void SimulationSpec::validate() const {
  if (n < 2) throw Error(ErrorCode::InvalidArgument, "simulation: n must be >= 2");
  if (steps < 3) throw Error(ErrorCode::InvalidArgument, "simulation: steps must be >= 3");
  if (!(dt > 0.0)) throw Error(ErrorCode::InvalidArgument, "simulation: dt must be positive");
  if (modes.empty()) throw Error(ErrorCode::InvalidArgument, "simulation: no modes");
  for (const auto& m : modes) {
    if (!(m.growth > 0.0))
      throw Error(ErrorCode::InvalidArgument, "simulation: growth must be positive");
    if (!(m.freq_std_hz >= 0.0))
      throw Error(ErrorCode::InvalidArgument, "simulation: frequency std must be >= 0");
    if (m.blocks.empty())
      throw Error(ErrorCode::InvalidArgument, "simulation: mode without blocks");
    int total = 0;
    for (int b : m.blocks) {
      if (b < 1) throw Error(ErrorCode::InvalidArgument, "simulation: block size must be >= 1");
      total += b;
    }
    if (total > n)
      throw Error(ErrorCode::BlocksExceedN, "simulation: block sizes exceed node count");
  }
}

SimulationSpec SimulationSpec::standard(std::uint64_t seed) {
  SimulationSpec s;
  s.seed = seed;
  s.modes = {
      {{16}, 1.01, 0.1, 0.05, 1.0},
      {{8}, 0.9, 1.0, 0.1, 1.0},
      {{4}, 1.05, 2.5, 0.1, 1.0},
  };
  return s;
}

std::vector<Mat> make_modes(const SimulationSpec& spec) {
  spec.validate();
  std::vector<Mat> out;
  for (const auto& m : spec.modes) {
    Mat phi = Mat::Zero(spec.n, spec.n);
    int start = 0;
    for (int b : m.blocks) {
      phi.block(start, start, b, b).setOnes();
      start += b;
    }
    out.push_back(std::move(phi));
  }
  return out;
}

Simulation simulate_sequence(const SimulationSpec& spec) {
  Simulation sim;
  sim.truth = make_modes(spec);

  std::mt19937_64 rng(spec.seed);
  for (const auto& m : spec.modes) {
    std::normal_distribution<double> dist(m.freq_mean_hz, m.freq_std_hz > 0.0 ? m.freq_std_hz : 1.0);
    sim.freq_hz.push_back(m.freq_std_hz > 0.0 ? dist(rng) : m.freq_mean_hz);
  }

  sim.sequence.n = spec.n;
  sim.sequence.dt_eff = spec.dt;
  for (int k = 0; k < spec.steps; ++k) {
    Mat g = Mat::Zero(spec.n, spec.n);
    for (std::size_t p = 0; p < spec.modes.size(); ++p) {
      const auto& m = spec.modes[p];
      const double c = std::pow(m.growth, k) *
                       std::cos(2.0 * std::numbers::pi * sim.freq_hz[p] * k * spec.dt) *
                       m.amplitude;
      g += c * sim.truth[p];
    }
    sim.sequence.graphs.push_back(std::move(g));
  }
  return sim;
}

namespace {

template <typename V>
bool degenerate(const V& centered) {
  return !(centered.norm() > 1e-14 * std::sqrt(static_cast<double>(centered.size())));
}

}  // namespace

double edge_pearson(const Mat& a, const Mat& b) {
  const Vec u = upper_triangle(a);
  const Vec v = upper_triangle(b);
  if (u.size() != v.size())
    throw Error(ErrorCode::ShapeMismatch, "edge_pearson: size mismatch");
  const Vec cu = u.array() - u.mean();
  const Vec cv = v.array() - v.mean();
  if (degenerate(cu) || degenerate(cv)) return 0.0;
  return std::clamp(cu.dot(cv) / (cu.norm() * cv.norm()), -1.0, 1.0);
}

double edge_pearson(const CMat& a, const CMat& b) {
  const CVec u = upper_triangle(a);
  const CVec v = upper_triangle(b);
  if (u.size() != v.size())
    throw Error(ErrorCode::ShapeMismatch, "edge_pearson: size mismatch");
  const CVec cu = u.array() - u.mean();
  const CVec cv = v.array() - v.mean();
  if (degenerate(cu) || degenerate(cv)) return 0.0;
  return std::min(1.0, std::abs(cu.dot(cv)) / (cu.norm() * cv.norm()));
}

namespace {

std::vector<double> assign_scores(const Mat& score) {
  const std::vector<int> match = max_score_assignment(score);
  std::vector<double> out(match.size(), 0.0);
  for (std::size_t i = 0; i < match.size(); ++i)
    if (match[i] >= 0) out[i] = score(static_cast<Eigen::Index>(i), match[i]);
  return out;
}

}  // namespace

std::vector<double> recovery_scores(const std::vector<Mat>& estimated,
                                    const std::vector<Mat>& truth) {
  if (truth.empty()) throw Error(ErrorCode::InvalidArgument, "recovery: no truth modes");
  if (estimated.empty()) return std::vector<double>(truth.size(), 0.0);
  Mat score(static_cast<Eigen::Index>(truth.size()), static_cast<Eigen::Index>(estimated.size()));
  for (std::size_t i = 0; i < truth.size(); ++i)
    for (std::size_t j = 0; j < estimated.size(); ++j)
      score(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          std::abs(edge_pearson(truth[i], estimated[j]));
  return assign_scores(score);
}

std::vector<double> mode_recovery_score(const std::vector<DynamicMode>& estimated,
                                        const std::vector<Mat>& truth) {
  std::vector<Mat> real_parts;
  real_parts.reserve(estimated.size());
  for (const auto& m : estimated) real_parts.push_back(phase_align(m.phi).real());
  return recovery_scores(real_parts, truth);
}

std::vector<double> complex_recovery_scores(const std::vector<DynamicMode>& estimated,
                                            const std::vector<CMat>& truth) {
  if (truth.empty()) throw Error(ErrorCode::InvalidArgument, "recovery: no truth modes");
  if (estimated.empty()) return std::vector<double>(truth.size(), 0.0);
  Mat score(static_cast<Eigen::Index>(truth.size()), static_cast<Eigen::Index>(estimated.size()));
  for (std::size_t i = 0; i < truth.size(); ++i)
    for (std::size_t j = 0; j < estimated.size(); ++j)
      score(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          edge_pearson(truth[i], estimated[j].phi);
  return assign_scores(score);
}

double mean(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double stddev(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  const double mu = mean(v);
  double acc = 0.0;
  for (double x : v) acc += (x - mu) * (x - mu);
  return std::sqrt(acc / static_cast<double>(v.size()));
}

void NonlinearSpec::validate() const {
  if (groups_per_mode < 1 || modes < 1)
    throw Error(ErrorCode::InvalidArgument, "nonlinear benchmark: need >= 1 mode and group");
  if (steps < 3) throw Error(ErrorCode::InvalidArgument, "nonlinear benchmark: steps must be >= 3");
  if (static_cast<int>(freq.size()) != modes)
    throw Error(ErrorCode::InvalidArgument, "nonlinear benchmark: one frequency per mode");
  if (!(share > 0.0) || share >= 1.0)
    throw Error(ErrorCode::InvalidArgument, "nonlinear benchmark: share must lie in (0, 1)");
  if (!(gamma > 0.0)) throw Error(ErrorCode::InvalidArgument, "nonlinear benchmark: gamma must be > 0");
  // Zero-mean orthonormal directions: 2 per mode plus one private per node.
  if (window < 2 * modes + n() + 1)
    throw Error(ErrorCode::InvalidArgument, "nonlinear benchmark: window too short for the basis");
}

NonlinearBenchmark nonlinear_benchmark(const NonlinearSpec& spec) {
  spec.validate();
  const int n = spec.n();
  const int s = spec.window;
  const int g = spec.groups_per_mode;
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  std::vector<int> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);

  NonlinearBenchmark out;
  for (int p = 0; p < spec.modes; ++p) {
    const double f = spec.freq[static_cast<std::size_t>(p)];
    out.freq.push_back(std::abs(f + spec.freq_jitter * f * normal(rng)));
  }

  // Orthonormal basis of the zero-mean subspace, scaled to unit sample variance.
  Mat seedmat(s, s);
  seedmat.col(0).setOnes();
  for (int j = 1; j < s; ++j)
    for (int i = 0; i < s; ++i) seedmat(i, j) = normal(rng);
  Eigen::HouseholderQR<Mat> qr(seedmat);
  const Mat q = qr.householderQ() * Mat::Identity(s, s);
  const Mat basis = q.rightCols(s - 1) * std::sqrt(static_cast<double>(s));

  // group_of[p][node] = 0 (B), 1 (A), 2 (C) or -1.
  std::vector<std::vector<int>> group_of(static_cast<std::size_t>(spec.modes),
                                         std::vector<int>(static_cast<std::size_t>(n), -1));
  for (int p = 0; p < spec.modes; ++p)
    for (int role = 0; role < 3; ++role)
      for (int q2 = 0; q2 < g; ++q2)
        group_of[static_cast<std::size_t>(p)]
                [static_cast<std::size_t>(perm[static_cast<std::size_t>((3 * p + role) * g + q2)])] = role;

  const double r = std::sqrt(spec.share);
  for (int p = 0; p < spec.modes; ++p) {
    CMat phi = CMat::Zero(n, n);
    const auto& grp = group_of[static_cast<std::size_t>(p)];
    for (int b = 0; b < n; ++b) {
      if (grp[static_cast<std::size_t>(b)] != 0) continue;
      for (int o = 0; o < n; ++o) {
        const int role = grp[static_cast<std::size_t>(o)];
        if (role == 1) phi(o, b) = phi(b, o) = Complex(spec.share / 2.0, 0.0);
        if (role == 2) phi(o, b) = phi(b, o) = Complex(0.0, -spec.share / 2.0);
      }
    }
    out.truth.push_back(std::move(phi));
  }

  const int frames = spec.steps * s;
  Mat v(n, frames);
  for (int k = 0; k < spec.steps; ++k) {
    for (int i = 0; i < n; ++i) {
      Vec x = Vec::Zero(s);
      double used = 0.0;
      for (int p = 0; p < spec.modes; ++p) {
        const int role = group_of[static_cast<std::size_t>(p)][static_cast<std::size_t>(i)];
        if (role < 0) continue;
        const auto u1 = basis.col(2 * p);
        const auto u2 = basis.col(2 * p + 1);
        const double th = 2.0 * std::numbers::pi * out.freq[static_cast<std::size_t>(p)] * k;
        if (role == 0) x += r * (std::cos(th) * u1 + std::sin(th) * u2);
        if (role == 1) x += r * u1;
        if (role == 2) x += r * u2;
        used += spec.share;
      }
      x += std::sqrt(1.0 - used) * basis.col(2 * spec.modes + i);
      v.block(i, static_cast<Eigen::Index>(k) * s, 1, s) = x.transpose();
    }
  }

  out.windows = WindowSpec{s, s};
  out.latent.data = v;
  out.latent.dt = 1.0 / s;
  out.latent.roi_labels = BoldSeries::default_labels(n);
  out.observed = out.latent;
  out.observed.data = (spec.gamma * v.array()).tanh().matrix();
  out.clean = sliding_window_correlation(out.latent, out.windows);
  out.raw = sliding_window_correlation(out.observed, out.windows);
  return out;
}

}  // namespace gdmd
