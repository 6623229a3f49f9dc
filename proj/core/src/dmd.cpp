#include "gdmd/dmd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace gdmd {

namespace {

int retained_rank(const Vec& sigma, const RankPolicy& policy, Eigen::Index d, Eigen::Index cols) {
  if (sigma.size() == 0 || !(sigma(0) > 0.0) || !std::isfinite(sigma(0)))
    throw Error(ErrorCode::RankDeficient, "exact_dmd: snapshot matrix has no energy");

  // Numerical floor below which S^-1 only amplifies round-off.
  const double floor = sigma(0) * static_cast<double>(std::max(d, cols)) *
                       std::numeric_limits<double>::epsilon();
  int numeric = 0;
  while (numeric < sigma.size() && sigma(numeric) > floor) ++numeric;

  int r = 0;
  if (policy.kind == RankPolicy::Kind::Fixed) {
    if (policy.rank < 1)
      throw Error(ErrorCode::InvalidArgument, "exact_dmd: fixed rank must be >= 1");
    r = std::min(policy.rank, numeric);
  } else {
    if (!(policy.tau >= 0.0))
      throw Error(ErrorCode::InvalidArgument, "exact_dmd: energy threshold must be >= 0");
    const double cut = policy.tau * sigma(0);
    while (r < numeric && sigma(r) > cut) ++r;
  }
  if (r < 1)
    throw Error(ErrorCode::RankDeficient, "exact_dmd: no singular value above threshold");
  return r;
}

}  // namespace

Complex ipow(Complex z, int k) {
  Complex acc(1.0, 0.0);
  while (k > 0) {
    if (k & 1) acc *= z;
    z *= z;
    k >>= 1;
  }
  return acc;
}

DmdResult exact_dmd(const Mat& snapshots, const RankPolicy& policy, double dt_eff,
                    AmplitudeMethod amplitudes) {
  if (snapshots.cols() < 3)
    throw Error(ErrorCode::TooFewSnapshots, "exact_dmd: need at least 3 snapshots");
  if (!snapshots.allFinite())
    throw Error(ErrorCode::InvalidArgument, "exact_dmd: non-finite snapshots");
  if (!(dt_eff > 0.0))
    throw Error(ErrorCode::InvalidArgument, "exact_dmd: dt_eff must be positive");

  const Eigen::Index d = snapshots.rows();
  const Eigen::Index t = snapshots.cols();
  const auto d1 = snapshots.leftCols(t - 1);
  const auto d2 = snapshots.rightCols(t - 1);

  Eigen::BDCSVD<Mat> svd(d1, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vec& sigma = svd.singularValues();
  const int r = retained_rank(sigma, policy, d, t - 1);

  const Mat u = svd.matrixU().leftCols(r);
  const Mat v = svd.matrixV().leftCols(r);
  const Vec sinv = sigma.head(r).cwiseInverse();

  // D2 V S^-1, reused for both the reduced operator and the lifted modes.
  const Mat d2vs = (d2 * v) * sinv.asDiagonal();
  const Mat a_hat = u.transpose() * d2vs;

  Eigen::EigenSolver<Mat> eig(a_hat, true);
  if (eig.info() != Eigen::Success)
    throw Error(ErrorCode::NotConverged, "exact_dmd: eigensolver failed");

  DmdResult res;
  res.rank = r;
  res.dt_eff = dt_eff;
  res.singular_values = sigma.head(r);
  res.eigenvalues = eig.eigenvalues();
  res.modes = d2vs.cast<Complex>() * eig.eigenvectors();

  const CVec first = snapshots.col(0).cast<Complex>();
  if (amplitudes == AmplitudeMethod::LeastSquares) {
    res.amplitudes = res.modes.completeOrthogonalDecomposition().solve(first);
  } else {
    res.amplitudes.resize(r);
    for (int p = 0; p < r; ++p) {
      const double nrm2 = res.modes.col(p).squaredNorm();
      res.amplitudes(p) = nrm2 > 0.0 ? res.modes.col(p).dot(first) / nrm2 : Complex(0.0);
    }
  }
  return res;
}

ModeDynamics eigen_to_dynamics(Complex lambda, double dt_eff) {
  if (lambda == Complex(0.0))
    throw Error(ErrorCode::ZeroEigenvalue, "eigen_to_dynamics: lambda is zero");
  if (!(dt_eff > 0.0))
    throw Error(ErrorCode::InvalidArgument, "eigen_to_dynamics: dt_eff must be positive");
  ModeDynamics out;
  out.growth = std::abs(lambda);
  out.omega = std::atan2(lambda.imag(), lambda.real()) / dt_eff;
  out.freq_hz = std::abs(out.omega) / (2.0 * std::numbers::pi);
  return out;
}

CVec reconstruct(const DmdResult& res, int k) {
  if (k < 0) throw Error(ErrorCode::InvalidArgument, "reconstruct: k must be >= 0");
  CVec coeff(res.eigenvalues.size());
  for (Eigen::Index p = 0; p < coeff.size(); ++p)
    coeff(p) = ipow(res.eigenvalues(p), k) * res.amplitudes(p);
  return res.modes * coeff;
}

}  // namespace gdmd
