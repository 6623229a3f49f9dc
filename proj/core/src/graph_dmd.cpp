#include "gdmd/graph_dmd.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace gdmd {

namespace {

CMat symmetrize(const CMat& m) { return 0.5 * (m + m.transpose()); }

/// Leading q left singular vectors of [G_1 G_2 ... G_K] (n x nK).
Mat node_space_basis(const GraphSequence& gs, int q) {
  const int n = gs.n;
  Mat unfolding(n, static_cast<Eigen::Index>(n) * static_cast<Eigen::Index>(gs.size()));
  for (std::size_t k = 0; k < gs.size(); ++k)
    unfolding.middleCols(static_cast<Eigen::Index>(k) * n, n) = gs.graphs[k];
  Eigen::BDCSVD<Mat> svd(unfolding, Eigen::ComputeThinU);
  return svd.matrixU().leftCols(q);
}

}  // namespace

std::vector<DynamicMode> graph_dmd(const GraphSequence& gs, const GraphDmdOptions& opts) {
  if (gs.size() < 3)
    throw Error(ErrorCode::TooFewSnapshots, "graph_dmd: need at least 3 graphs");
  const int n = gs.n;
  for (const auto& g : gs.graphs)
    if (g.rows() != n || g.cols() != n)
      throw Error(ErrorCode::ShapeMismatch, "graph_dmd: graph size differs from n");

  const int q = opts.projection.q;
  if (q < 0 || q > n)
    throw Error(ErrorCode::InvalidArgument, "graph_dmd: projection rank must lie in [0, n]");

  Mat basis;
  Mat snapshots;
  int side = n;
  if (q == 0) {
    snapshots = gs.stacked();
  } else {
    basis = node_space_basis(gs, q);
    side = q;
    snapshots.resize(static_cast<Eigen::Index>(q) * q, static_cast<Eigen::Index>(gs.size()));
    for (std::size_t k = 0; k < gs.size(); ++k) {
      const Mat reduced = basis.transpose() * gs.graphs[k] * basis;
      snapshots.col(static_cast<Eigen::Index>(k)) = vectorize(reduced);
    }
  }

  const DmdResult res = exact_dmd(snapshots, opts.rank, gs.dt_eff, opts.amplitudes);

  std::vector<DynamicMode> modes;
  std::vector<double> weight;
  for (int p = 0; p < res.rank; ++p) {
    const Complex lambda = res.eigenvalues(p);
    if (lambda == Complex(0.0)) continue;
    if (opts.drop_conjugates && lambda.imag() < 0.0) continue;

    CMat phi = devectorize(CVec(res.modes.col(p)), side);
    if (q != 0) phi = basis.cast<Complex>() * phi * basis.transpose().cast<Complex>();

    DynamicMode m;
    m.phi = symmetrize(phi);
    m.lambda = lambda;
    m.amplitude = res.amplitudes(p);
    const ModeDynamics dyn = eigen_to_dynamics(lambda, gs.dt_eff);
    m.growth = dyn.growth;
    m.omega = dyn.omega;
    m.freq_hz = dyn.freq_hz;
    weight.push_back(std::abs(m.amplitude) * m.phi.norm());
    modes.push_back(std::move(m));
  }

  std::vector<std::size_t> order(modes.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return weight[a] > weight[b]; });
  std::vector<DynamicMode> sorted;
  sorted.reserve(modes.size());
  for (std::size_t i : order) sorted.push_back(std::move(modes[i]));
  return sorted;
}

int window_count(int length, int window, int step) {
  if (window < 1 || step < 1)
    throw Error(ErrorCode::InvalidArgument, "window_count: window and step must be >= 1");
  if (length < window) return 0;
  return (length - window) / step + 1;
}

std::size_t WindowedModeSet::mode_count() const {
  std::size_t total = 0;
  for (const auto& w : windows) total += w.size();
  return total;
}

std::vector<DynamicMode> WindowedModeSet::flatten() const {
  std::vector<DynamicMode> out;
  out.reserve(mode_count());
  for (const auto& w : windows) out.insert(out.end(), w.begin(), w.end());
  return out;
}

WindowedModeSet windowed_graph_dmd(const GraphSequence& gs, const WindowedOptions& opts) {
  if (opts.window < 3)
    throw Error(ErrorCode::InvalidArgument, "windowed_graph_dmd: window must be >= 3 graphs");
  if (static_cast<int>(gs.size()) < opts.window)
    throw Error(ErrorCode::TooFewSnapshots, "windowed_graph_dmd: sequence shorter than window");

  WindowedModeSet out;
  out.window = opts.window;
  out.step = opts.step;
  const int count = window_count(static_cast<int>(gs.size()), opts.window, opts.step);
  out.windows.resize(static_cast<std::size_t>(count));

  for (int w = 0; w < count; ++w) {
    GraphSequence slice;
    slice.n = gs.n;
    slice.dt_eff = gs.dt_eff;
    const auto first = gs.graphs.begin() + static_cast<std::ptrdiff_t>(w) * opts.step;
    slice.graphs.assign(first, first + opts.window);

    std::vector<DynamicMode> modes;
    try {
      modes = graph_dmd(slice, opts.dmd);
    } catch (const Error& e) {
      // An all-zero window carries no dynamics; anything else is a real failure.
      if (e.code() != ErrorCode::RankDeficient) throw;
    }
    for (auto& m : modes) {
      if (m.growth < opts.growth_min || m.growth > opts.growth_max) {
        ++out.filtered;
        continue;
      }
      m.window_index = w;
      out.windows[static_cast<std::size_t>(w)].push_back(std::move(m));
    }
  }
  return out;
}

namespace {

/// First entry of maximal modulus in storage order.
Eigen::Index largest_entry(const CMat& phi) {
  Eigen::Index idx = 0;
  double best = -1.0;
  for (Eigen::Index i = 0; i < phi.size(); ++i) {
    const double a = std::abs(phi(i));
    if (a > best) {
      best = a;
      idx = i;
    }
  }
  return idx;
}

}  // namespace

CMat phase_align(const CMat& phi) {
  const double nrm = phi.norm();
  if (!(nrm > 0.0))
    throw Error(ErrorCode::InvalidArgument, "phase_align: mode has zero norm");
  const Eigen::Index idx = largest_entry(phi);
  const Complex rot = std::conj(phi(idx)) / std::abs(phi(idx));
  CMat out = phi * (rot / nrm);
  out(idx) = Complex(std::abs(out(idx)), 0.0);
  return out;
}

DynamicMode phase_align(const DynamicMode& mode) {
  DynamicMode out = mode;
  out.phi = phase_align(mode.phi);
  // Keep phi * amplitude unchanged so reconstructions still hold.
  const Eigen::Index idx = largest_entry(mode.phi);
  out.amplitude = mode.amplitude * (mode.phi(idx) / out.phi(idx));
  return out;
}

}  // namespace gdmd
