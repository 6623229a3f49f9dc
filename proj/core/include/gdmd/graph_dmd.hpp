#pragma once

// Structure-preserving DMD on graph sequences. Every emitted mode is an
// n x n (complex, symmetric) network.

#include "gdmd/dmd.hpp"
#include "gdmd/dnfc.hpp"

#include <optional>
#include <vector>

namespace gdmd {

struct DynamicMode {
  CMat phi;
  Complex lambda{1.0, 0.0};
  Complex amplitude{0.0, 0.0};
  double growth = 1.0;
  double omega = 0.0;
  double freq_hz = 0.0;
  std::optional<int> window_index;
};

/// Optional one-sided node-space projection: G_k -> U^T G_k U with U the
/// leading q left singular vectors of the mode-1 unfolding [G_1 ... G_K].
struct Projection {
  int q = 0;  // 0 means no projection

  static Projection none() { return {0}; }
  static Projection node_space(int q) { return {q}; }
};

struct GraphDmdOptions {
  RankPolicy rank = RankPolicy::energy();
  Projection projection = Projection::none();
  AmplitudeMethod amplitudes = AmplitudeMethod::LeastSquares;
  /// Keep only the Im(lambda) >= 0 member of each conjugate pair.
  bool drop_conjugates = false;
};

/// Modes are returned ordered by |b_p| * ||Phi_p||_F, largest first.
std::vector<DynamicMode> graph_dmd(const GraphSequence& gs, const GraphDmdOptions& opts = {});

struct WindowedOptions {
  int window = 64;
  int step = 4;
  GraphDmdOptions dmd{RankPolicy::energy(), Projection::none(),
                      AmplitudeMethod::LeastSquares, true};
  double growth_min = 0.8;
  double growth_max = 1.2;
};

struct WindowedModeSet {
  std::vector<std::vector<DynamicMode>> windows;
  int window = 0;
  int step = 0;
  std::size_t filtered = 0;  // modes discarded by the growth filter

  std::size_t mode_count() const;
  std::vector<DynamicMode> flatten() const;
};

/// Number of windows: floor((len - window)/step) + 1, or 0 if len < window.
int window_count(int length, int window, int step);

WindowedModeSet windowed_graph_dmd(const GraphSequence& gs, const WindowedOptions& opts = {});

/// Global unit-complex rotation making the largest-modulus entry real and
/// positive, followed by scaling to unit Frobenius norm. lambda is unchanged.
DynamicMode phase_align(const DynamicMode& mode);
CMat phase_align(const CMat& phi);

}  // namespace gdmd
