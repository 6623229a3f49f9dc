#include "gdmd/dnfc.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace gdmd {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::ZeroVariance: return "ZeroVariance";
    case ErrorCode::WindowTooLong: return "WindowTooLong";
    case ErrorCode::RankDeficient: return "RankDeficient";
    case ErrorCode::NotConverged: return "NotConverged";
    case ErrorCode::ZeroEigenvalue: return "ZeroEigenvalue";
    case ErrorCode::TooFewSnapshots: return "TooFewSnapshots";
    case ErrorCode::SingularSystem: return "SingularSystem";
    case ErrorCode::Diverged: return "Diverged";
    case ErrorCode::BlocksExceedN: return "BlocksExceedN";
    case ErrorCode::RankDeficientConfounds: return "RankDeficientConfounds";
    case ErrorCode::DegenerateCluster: return "DegenerateCluster";
    case ErrorCode::Io: return "Io";
    case ErrorCode::Config: return "Config";
  }
  return "Unknown";
}

void BoldSeries::validate() const {
  if (data.rows() < 2 || data.cols() < 2)
    throw Error(ErrorCode::InvalidArgument, "BoldSeries needs n >= 2 rois and t >= 2 frames");
  if (!data.allFinite())
    throw Error(ErrorCode::InvalidArgument, "BoldSeries contains non-finite values");
  if (static_cast<Eigen::Index>(roi_labels.size()) != data.rows())
    throw Error(ErrorCode::InvalidArgument, "roi_labels length differs from row count");
  if (!(dt > 0.0) || !std::isfinite(dt))
    throw Error(ErrorCode::InvalidArgument, "dt must be positive");
}

std::vector<std::string> BoldSeries::default_labels(Eigen::Index n) {
  std::vector<std::string> out;
  out.reserve(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) out.push_back("roi_" + std::to_string(i));
  return out;
}

void WindowSpec::validate() const {
  if (length < 3)
    throw Error(ErrorCode::InvalidArgument, "window length must be >= 3");
  if (stride < 1 || stride > length)
    throw Error(ErrorCode::InvalidArgument, "window stride must lie in [1, length]");
}

int WindowSpec::count(Eigen::Index frames) const {
  if (frames < length) return 0;
  return static_cast<int>((frames - length) / stride) + 1;
}

Mat GraphSequence::stacked() const {
  Mat g(static_cast<Eigen::Index>(n) * n, static_cast<Eigen::Index>(graphs.size()));
  for (std::size_t k = 0; k < graphs.size(); ++k)
    g.col(static_cast<Eigen::Index>(k)) = vectorize(graphs[k]);
  return g;
}

Mat GraphSequence::edge_series() const {
  Mat y(edge_count(n), static_cast<Eigen::Index>(graphs.size()));
  for (std::size_t k = 0; k < graphs.size(); ++k)
    y.col(static_cast<Eigen::Index>(k)) = upper_triangle(graphs[k]);
  return y;
}

namespace {

bool is_constant(std::span<const double> u) {
  auto [lo, hi] = std::minmax_element(u.begin(), u.end());
  return *lo == *hi;
}

}  // namespace

double pearson(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size())
    throw Error(ErrorCode::ShapeMismatch, "pearson: length mismatch");
  if (u.size() < 3)
    throw Error(ErrorCode::InvalidArgument, "pearson: need at least 3 samples");
  if (is_constant(u) || is_constant(v))
    throw Error(ErrorCode::ZeroVariance, "pearson: constant input");

  const auto n = static_cast<double>(u.size());
  double mu = 0.0, mv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    mu += u[i];
    mv += v[i];
  }
  mu /= n;
  mv /= n;
  double suv = 0.0, suu = 0.0, svv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double a = u[i] - mu;
    const double b = v[i] - mv;
    suv += a * b;
    suu += a * a;
    svv += b * b;
  }
  return std::clamp(suv / std::sqrt(suu * svv), -1.0, 1.0);
}

double pearson(const Vec& u, const Vec& v) {
  return pearson(std::span<const double>(u.data(), static_cast<std::size_t>(u.size())),
                 std::span<const double>(v.data(), static_cast<std::size_t>(v.size())));
}

Mat correlation_matrix(const Mat& rows, Warnings* warnings) {
  const Eigen::Index n = rows.rows();
  if (rows.cols() < 3)
    throw Error(ErrorCode::InvalidArgument, "correlation_matrix: need at least 3 samples");

  Mat z = rows.colwise() - rows.rowwise().mean();
  std::vector<bool> degenerate(static_cast<std::size_t>(n), false);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (rows.row(i).minCoeff() == rows.row(i).maxCoeff()) {
      degenerate[static_cast<std::size_t>(i)] = true;
      z.row(i).setZero();
      std::ostringstream msg;
      msg << "zero-variance row " << i << "; its correlations set to 0";
      warn(warnings, msg.str());
    } else {
      z.row(i) /= z.row(i).norm();
    }
  }

  const Mat prod = z * z.transpose();
  Mat out(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    out(i, i) = 1.0;
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double r = std::clamp(prod(i, j), -1.0, 1.0);
      out(i, j) = r;
      out(j, i) = r;
    }
  }
  return out;
}

GraphSequence sliding_window_correlation(const BoldSeries& x, const WindowSpec& w,
                                         Warnings* warnings) {
  x.validate();
  w.validate();
  if (w.length > x.frames())
    throw Error(ErrorCode::WindowTooLong, "window length exceeds series length");

  GraphSequence gs;
  gs.n = static_cast<int>(x.rois());
  gs.dt_eff = w.stride * x.dt;
  const int count = w.count(x.frames());
  gs.graphs.reserve(static_cast<std::size_t>(count));
  for (int k = 0; k < count; ++k) {
    Warnings local;
    gs.graphs.push_back(correlation_matrix(
        x.data.middleCols(static_cast<Eigen::Index>(k) * w.stride, w.length),
        warnings ? &local : nullptr));
    for (auto& msg : local) warn(warnings, "window " + std::to_string(k) + ": " + msg);
  }
  return gs;
}

Vec vectorize(const Mat& g) {
  if (g.rows() != g.cols())
    throw Error(ErrorCode::ShapeMismatch, "vectorize: matrix not square");
  return Eigen::Map<const Vec>(g.data(), g.size());
}

Mat devectorize(const Vec& v, int n) {
  if (n < 0 || v.size() != static_cast<Eigen::Index>(n) * n)
    throw Error(ErrorCode::ShapeMismatch, "devectorize: length is not n^2");
  return Eigen::Map<const Mat>(v.data(), n, n);
}

CVec vectorize(const CMat& g) {
  if (g.rows() != g.cols())
    throw Error(ErrorCode::ShapeMismatch, "vectorize: matrix not square");
  return Eigen::Map<const CVec>(g.data(), g.size());
}

CMat devectorize(const CVec& v, int n) {
  if (n < 0 || v.size() != static_cast<Eigen::Index>(n) * n)
    throw Error(ErrorCode::ShapeMismatch, "devectorize: length is not n^2");
  return Eigen::Map<const CMat>(v.data(), n, n);
}

int edge_count(int n) { return n * (n - 1) / 2; }

int edge_index(int i, int j, int n) {
  if (i > j) std::swap(i, j);
  // Row i starts after i full rows of decreasing length.
  return i * n - i * (i + 1) / 2 + (j - i - 1);
}

template <typename Derived>
static auto upper_triangle_impl(const Eigen::MatrixBase<Derived>& g) {
  using Scalar = typename Derived::Scalar;
  const int n = static_cast<int>(g.rows());
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> out(edge_count(n));
  int e = 0;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) out(e++) = g(i, j);
  return out;
}

Vec upper_triangle(const Mat& g) {
  if (g.rows() != g.cols())
    throw Error(ErrorCode::ShapeMismatch, "upper_triangle: matrix not square");
  return upper_triangle_impl(g);
}

CVec upper_triangle(const CMat& g) {
  if (g.rows() != g.cols())
    throw Error(ErrorCode::ShapeMismatch, "upper_triangle: matrix not square");
  return upper_triangle_impl(g);
}

Mat from_upper_triangle(const Vec& e, int n, double diag) {
  if (e.size() != edge_count(n))
    throw Error(ErrorCode::ShapeMismatch, "from_upper_triangle: length is not n(n-1)/2");
  Mat g = Mat::Constant(n, n, 0.0);
  int idx = 0;
  for (int i = 0; i < n; ++i) {
    g(i, i) = diag;
    for (int j = i + 1; j < n; ++j) {
      g(i, j) = e(idx);
      g(j, i) = e(idx);
      ++idx;
    }
  }
  return g;
}

}  // namespace gdmd
