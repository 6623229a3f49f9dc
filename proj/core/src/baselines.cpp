#include "gdmd/baselines.hpp"

#include <cmath>
#include <random>

namespace gdmd {

Mat sfc(const BoldSeries& x, Warnings* warnings) {
  x.validate();
  if (x.frames() < 3) throw Error(ErrorCode::InvalidArgument, "sfc: need at least 3 frames");
  return correlation_matrix(x.data, warnings);
}

PcaResult pca(const Mat& g, int k) {
  if (g.rows() < 2) throw Error(ErrorCode::InvalidArgument, "pca: need at least 2 samples");
  if (k < 1 || k > std::min(g.rows(), g.cols()))
    throw Error(ErrorCode::InvalidArgument, "pca: k out of range");
  const Mat centered = g.rowwise() - g.colwise().mean();
  Eigen::BDCSVD<Mat> svd(centered, Eigen::ComputeThinU | Eigen::ComputeThinV);
  PcaResult out;
  out.components = svd.matrixV().leftCols(k).transpose();
  out.scores = centered * out.components.transpose();
  out.explained_variance =
      svd.singularValues().head(k).array().square() / static_cast<double>(g.rows() - 1);
  return out;
}

namespace {

/// W <- (W W^T)^{-1/2} W.
Mat symmetric_decorrelation(const Mat& w) {
  Eigen::SelfAdjointEigenSolver<Mat> eig(w * w.transpose());
  const Vec inv_sqrt = eig.eigenvalues().cwiseMax(1e-300).cwiseSqrt().cwiseInverse();
  return eig.eigenvectors() * inv_sqrt.asDiagonal() * eig.eigenvectors().transpose() * w;
}

}  // namespace

IcaResult fast_ica(const Mat& g, int k, const IcaOptions& opts) {
  const Eigen::Index n_samples = g.rows();
  if (k < 1 || k > g.cols())
    throw Error(ErrorCode::InvalidArgument, "fast_ica: k out of range");
  if (n_samples <= k)
    throw Error(ErrorCode::InvalidArgument, "fast_ica: need more samples than components");
  if (opts.max_iter < 1 || !(opts.tol > 0.0))
    throw Error(ErrorCode::InvalidArgument, "fast_ica: bad iteration settings");

  const Vec mu = g.colwise().mean();
  const Mat xt = (g.rowwise() - mu.transpose()).transpose();  // d x N
  Eigen::BDCSVD<Mat> svd(xt, Eigen::ComputeThinU);
  const Vec d = svd.singularValues().head(k);
  if (!(d(k - 1) > d(0) * 1e-12))
    throw Error(ErrorCode::RankDeficient, "fast_ica: data rank below k");

  // Whitening to unit-variance rows: x1 = K xt, K = diag(sqrt(N)/d) U_k^T.
  const double sn = std::sqrt(static_cast<double>(n_samples));
  const Mat whiten = (sn * d.cwiseInverse()).asDiagonal() * svd.matrixU().leftCols(k).transpose();
  const Mat x1 = whiten * xt;  // k x N

  std::mt19937_64 rng(opts.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Mat w(k, k);
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j) w(i, j) = normal(rng);
  w = symmetric_decorrelation(w);

  const double inv_n = 1.0 / static_cast<double>(n_samples);
  IcaResult out;
  for (int it = 1; it <= opts.max_iter; ++it) {
    const Mat wx = w * x1;  // k x N
    Mat gx(wx.rows(), wx.cols());
    Vec gprime_mean(k);
    if (opts.contrast == IcaContrast::Cube) {
      gx = wx.array().cube();
      gprime_mean = (3.0 * wx.array().square()).rowwise().mean();
    } else {
      gx = wx.array().tanh();
      gprime_mean = (1.0 - gx.array().square()).rowwise().mean();
    }
    const Mat w_new =
        symmetric_decorrelation(gx * x1.transpose() * inv_n - gprime_mean.asDiagonal() * w);
    const double lim = ((w_new * w.transpose()).diagonal().cwiseAbs().array() - 1.0).abs().maxCoeff();
    w = w_new;
    out.iterations = it;
    if (lim < opts.tol) {
      out.converged = true;
      break;
    }
  }

  out.unmixing = w * whiten;                                    // k x d
  out.sources = (out.unmixing * xt).transpose();                // N x k
  out.mixing = out.unmixing.completeOrthogonalDecomposition().pseudoInverse();  // d x k
  return out;
}

DmdResult signal_dmd_baseline(const BoldSeries& x, const RankPolicy& policy) {
  x.validate();
  return exact_dmd(x.data, policy, x.dt);
}

}  // namespace gdmd
