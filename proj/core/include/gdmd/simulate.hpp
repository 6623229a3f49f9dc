#pragma once

// Ground-truth oscillatory graph sequences, mode-recovery scoring, and a
// nonlinear benchmark whose undistorted dynamics are exactly linear.

#include "gdmd/dnfc.hpp"
#include "gdmd/graph_dmd.hpp"

#include <cstdint>
#include <vector>

namespace gdmd {

struct ModeSpec {
  std::vector<int> blocks;  // diagonal block sizes, laid consecutively from node 0
  double growth = 1.0;      // a_p
  double freq_mean_hz = 0.0;
  double freq_std_hz = 0.0;
  double amplitude = 1.0;   // b_p
};

struct SimulationSpec {
  int n = 32;
  int steps = 30;
  std::vector<ModeSpec> modes;
  double dt = 0.1;
  std::uint64_t seed = 0;

  void validate() const;

  /// Three overlapping modes: single blocks of 16, 8 and 4 nodes, growth
  /// (1.01, 0.9, 1.05), frequencies N(0.1, 0.05), N(1, 0.1), N(2.5, 0.1) Hz.
  static SimulationSpec standard(std::uint64_t seed = 0);
};

/// Phi_p: ones inside the mode's diagonal blocks, zeros elsewhere.
/// Throws BlocksExceedN when a mode's blocks do not fit in n.
std::vector<Mat> make_modes(const SimulationSpec& spec);

struct Simulation {
  GraphSequence sequence;
  std::vector<Mat> truth;
  std::vector<double> freq_hz;  // frequency drawn for each mode
};

/// G_k = sum_p Phi_p a_p^k cos(2 pi f_p k dt) b_p, k = 0..steps-1, with each
/// f_p drawn once from its normal distribution.
Simulation simulate_sequence(const SimulationSpec& spec);

/// Pearson over strict upper triangles; 0 when either side is constant.
double edge_pearson(const Mat& a, const Mat& b);

/// |complex Pearson| over centered strict upper triangles; 0 when degenerate.
double edge_pearson(const CMat& a, const CMat& b);

/// For each truth mode, |Pearson| with the estimate it is matched to under an
/// optimal one-to-one assignment; truth modes left unmatched score 0.
std::vector<double> recovery_scores(const std::vector<Mat>& estimated,
                                    const std::vector<Mat>& truth);

/// Real parts of phase-aligned DynamicModes, scored as above.
std::vector<double> mode_recovery_score(const std::vector<DynamicMode>& estimated,
                                        const std::vector<Mat>& truth);

/// Complex truth: scores with the complex Pearson of each estimated phi.
std::vector<double> complex_recovery_scores(const std::vector<DynamicMode>& estimated,
                                            const std::vector<CMat>& truth);

double mean(const std::vector<double>& v);
double stddev(const std::vector<double>& v);  // population

/// Nonlinear benchmark. Every node carries a unit-variance signal over
/// `window` samples per graph step. Oscillatory mode p owns three disjoint
/// node groups (B, A, C) of `group` nodes: B nodes load sqrt(share) on a
/// rotating direction cos(th) u1 + sin(th) u2, A nodes on u1 and C nodes on
/// u2, with th = 2 pi f_p k. The per-step correlation graphs are then an
/// exact sparse linear system. The observed signal is tanh(gamma * v).
struct NonlinearSpec {
  int groups_per_mode = 2;  // nodes per B/A/C group; n = 3 * modes * group
  int modes = 2;
  int steps = 64;
  int window = 32;
  double share = 0.45;                     // variance carried by each mode
  std::vector<double> freq{0.03, 0.11};    // cycles per graph step
  double freq_jitter = 0.1;                // relative std of each frequency
  double gamma = 2.0;
  std::uint64_t seed = 0;

  int n() const { return 3 * modes * groups_per_mode; }
  void validate() const;
};

struct NonlinearBenchmark {
  BoldSeries observed;         // tanh-distorted signal, n x (steps * window)
  BoldSeries latent;           // undistorted signal
  WindowSpec windows;          // length = stride = window
  GraphSequence clean;         // correlation graphs of the undistorted signal
  GraphSequence raw;           // correlation graphs of the observed signal
  std::vector<CMat> truth;     // complex ground-truth modes
  std::vector<double> freq;    // drawn frequencies, cycles per step
};

NonlinearBenchmark nonlinear_benchmark(const NonlinearSpec& spec);

}  // namespace gdmd
