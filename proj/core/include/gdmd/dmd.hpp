#pragma once

// Exact dynamic mode decomposition of a generic real snapshot matrix.

#include "gdmd/common.hpp"

namespace gdmd {

/// How many singular triplets of the shifted snapshot matrix to keep.
struct RankPolicy {
  enum class Kind { Fixed, Energy };

  Kind kind = Kind::Energy;
  int rank = 0;          // Fixed
  double tau = 1e-10;    // Energy: keep sigma_i > tau * sigma_1

  static RankPolicy fixed(int r) { return {Kind::Fixed, r, 0.0}; }
  static RankPolicy energy(double tau = 1e-10) { return {Kind::Energy, 0, tau}; }
};

/// Amplitude fit. LeastSquares solves min ||Phi b - d_1||; Projection uses
/// b_p = <Phi_p, d_1> / ||Phi_p||^2, which is only exact for orthogonal modes.
enum class AmplitudeMethod { LeastSquares, Projection };

struct DmdResult {
  CMat modes;         // d x r, columns Phi_p
  CVec eigenvalues;   // lambda_p
  CVec amplitudes;    // b_p
  Vec singular_values;  // retained sigma_i of the first shifted block
  int rank = 0;
  double dt_eff = 1.0;
};

/// Snapshots are columns d_1..d_T (T >= 3). Exact-DMD lifting:
///   D1 ~ U S V*,  A_hat = U* D2 V S^-1,  A_hat W = W Lambda,  Phi = D2 V S^-1 W.
/// Throws RankDeficient when nothing survives truncation, NotConverged when
/// the eigensolver fails.
DmdResult exact_dmd(const Mat& snapshots, const RankPolicy& policy, double dt_eff,
                    AmplitudeMethod amplitudes = AmplitudeMethod::LeastSquares);

struct ModeDynamics {
  double growth = 1.0;   // |lambda|, per step
  double omega = 0.0;    // rad/s, principal branch
  double freq_hz = 0.0;  // |omega| / 2pi
};

/// a = |lambda|, omega = atan2(Im, Re) / dt_eff, f = |omega| / 2pi.
/// Frequencies above pi/dt_eff alias onto the principal branch.
ModeDynamics eigen_to_dynamics(Complex lambda, double dt_eff);

/// z^k by repeated squaring (k >= 0).
Complex ipow(Complex z, int k);

/// sum_p Phi_p lambda_p^k b_p; k = 0 is the amplitude fit of d_1.
CVec reconstruct(const DmdResult& res, int k);

}  // namespace gdmd
