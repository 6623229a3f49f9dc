#include "gdmd/regression.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

namespace gdmd {

Vec residualize_confounds(const Vec& y, const Mat& confounds) {
  if (confounds.rows() != y.size())
    throw Error(ErrorCode::ShapeMismatch, "residualize_confounds: row count differs from y");
  Mat c(confounds.rows(), confounds.cols() + 1);
  c.leftCols(confounds.cols()) = confounds;
  c.col(confounds.cols()).setOnes();
  Eigen::ColPivHouseholderQR<Mat> qr(c);
  qr.setThreshold(1e-10);
  if (qr.rank() < c.cols())
    throw Error(ErrorCode::RankDeficientConfounds,
                "residualize_confounds: confounds plus intercept are rank deficient");
  return y - c * qr.solve(y);
}

FeatureMatrix band_features(const ModeAtlas& atlas, const std::vector<Band>& bands) {
  if (bands.empty()) throw Error(ErrorCode::InvalidArgument, "band_features: no bands requested");
  const int e = edge_count(atlas.n);
  const auto subjects = static_cast<Eigen::Index>(atlas.subjects.size());

  std::vector<const AtlasBin*> picked;
  for (const auto& band : bands) {
    const AtlasBin* hit = nullptr;
    for (const auto& b : atlas.bins)
      if (std::abs(b.f_lo - band.f_lo) <= 1e-12 && std::abs(b.f_hi - band.f_hi) <= 1e-12) hit = &b;
    if (!hit) throw Error(ErrorCode::InvalidArgument, "band_features: band not present in atlas");
    picked.push_back(hit);
  }

  FeatureMatrix fm;
  int cols = 0;
  for (std::size_t b = 0; b < picked.size(); ++b) {
    for (std::size_t c = 0; c < picked[b]->centroids.size(); ++c) {
      std::ostringstream label;
      label << bands[b].f_lo << "-" << bands[b].f_hi << "/c" << c;
      fm.blocks.push_back({label.str(), cols, e});
      cols += e;
    }
  }
  fm.x = Mat::Zero(subjects, cols);
  fm.present = Eigen::MatrixXi::Zero(subjects, static_cast<Eigen::Index>(fm.blocks.size()));

  std::size_t block = 0;
  for (const AtlasBin* bin : picked) {
    if (static_cast<Eigen::Index>(bin->aligned.size()) != subjects)
      throw Error(ErrorCode::ShapeMismatch, "band_features: atlas bin lacks subject rows");
    for (std::size_t c = 0; c < bin->centroids.size(); ++c, ++block) {
      for (Eigen::Index s = 0; s < subjects; ++s) {
        const auto& row = bin->aligned[static_cast<std::size_t>(s)];
        if (c >= row.size() || !row[c]) continue;
        if (row[c]->size() != 2 * e)
          throw Error(ErrorCode::ShapeMismatch, "band_features: representative length is not 2E");
        fm.x.block(s, fm.blocks[block].first_column, 1, e) = row[c]->head(e).transpose();
        fm.present(s, static_cast<Eigen::Index>(block)) = 1;
      }
    }
  }
  return fm;
}

Mat ElasticNetModel::standardize(const Mat& x) const {
  if (x.cols() != center.size())
    throw Error(ErrorCode::ShapeMismatch, "elastic net: feature count differs from training");
  return (x.rowwise() - center.transpose()).array().rowwise() / scale.transpose().array();
}

Vec ElasticNetModel::predict(const Mat& x) const {
  return (standardize(x) * weights).array() + intercept;
}

namespace {

struct Standardized {
  Mat xs;
  Vec center;
  Vec scale;
  std::vector<bool> constant;
};

Standardized standardize_columns(const Mat& x) {
  Standardized s;
  const double n = static_cast<double>(x.rows());
  s.center = x.colwise().mean();
  s.xs = x.rowwise() - s.center.transpose();
  s.scale.resize(x.cols());
  s.constant.assign(static_cast<std::size_t>(x.cols()), false);
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const double sd = std::sqrt(s.xs.col(j).squaredNorm() / n);
    if (sd > 1e-12 * (1.0 + std::abs(s.center(j)))) {
      s.scale(j) = sd;
      s.xs.col(j) /= sd;
    } else {
      s.scale(j) = 1.0;
      s.xs.col(j).setZero();
      s.constant[static_cast<std::size_t>(j)] = true;
    }
  }
  return s;
}

// A few ulps of slack so lambda = lambda_max maps to zero despite round-off.
double soft_threshold(double z, double t) {
  if (std::abs(z) <= t + 8.0 * std::numeric_limits<double>::epsilon() * t) return 0.0;
  if (z > t) return z - t;
  if (z < -t) return z + t;
  return 0.0;
}

void check_penalty(double lambda, double l1_ratio) {
  if (!(lambda >= 0.0) || !std::isfinite(lambda))
    throw Error(ErrorCode::InvalidArgument, "elastic net: lambda must be >= 0");
  if (!(l1_ratio >= 0.0 && l1_ratio <= 1.0))
    throw Error(ErrorCode::InvalidArgument, "elastic net: l1_ratio must lie in [0, 1]");
}

}  // namespace

ElasticNetModel elastic_net_fit(const Mat& x, const Vec& y, double lambda, double l1_ratio,
                                const ElasticNetOptions& opts, const Vec* warm_start) {
  if (x.rows() != y.size())
    throw Error(ErrorCode::ShapeMismatch, "elastic net: row count differs from y");
  if (x.rows() < 2) throw Error(ErrorCode::InvalidArgument, "elastic net: need N >= 2");
  if (!x.allFinite() || !y.allFinite())
    throw Error(ErrorCode::InvalidArgument, "elastic net: non-finite input");
  check_penalty(lambda, l1_ratio);

  const Standardized s = standardize_columns(x);
  const double n = static_cast<double>(x.rows());
  const Eigen::Index p = x.cols();

  ElasticNetModel m;
  m.lambda = lambda;
  m.l1_ratio = l1_ratio;
  m.center = s.center;
  m.scale = s.scale;
  m.intercept = y.mean();
  m.weights = Vec::Zero(p);
  if (warm_start && warm_start->size() == p) m.weights = *warm_start;
  for (Eigen::Index j = 0; j < p; ++j)
    if (s.constant[static_cast<std::size_t>(j)]) m.weights(j) = 0.0;

  Vec r = (y.array() - m.intercept).matrix() - s.xs * m.weights;
  const double l1 = lambda * l1_ratio;
  const double denom = 1.0 + lambda * (1.0 - l1_ratio);

  for (int sweep = 1; sweep <= opts.max_iter; ++sweep) {
    double max_delta = 0.0;
    for (Eigen::Index j = 0; j < p; ++j) {
      if (s.constant[static_cast<std::size_t>(j)]) continue;
      const double wj = m.weights(j);
      const double z = s.xs.col(j).dot(r) / n + wj;
      const double w_new = soft_threshold(z, l1) / denom;
      const double delta = w_new - wj;
      if (delta != 0.0) {
        r.noalias() -= delta * s.xs.col(j);
        m.weights(j) = w_new;
        max_delta = std::max(max_delta, std::abs(delta));
      }
    }
    m.sweeps = sweep;
    if (max_delta < opts.tol) {
      m.converged = true;
      break;
    }
  }
  return m;
}

double kkt_violation(const ElasticNetModel& model, const Mat& x, const Vec& y) {
  const Mat xs = model.standardize(x);
  const double n = static_cast<double>(x.rows());
  const Vec r = (y.array() - model.intercept).matrix() - xs * model.weights;
  const double l1 = model.lambda * model.l1_ratio;
  const double l2 = model.lambda * (1.0 - model.l1_ratio);
  double worst = std::abs(r.mean());  // intercept optimality
  for (Eigen::Index j = 0; j < xs.cols(); ++j) {
    const double g = -xs.col(j).dot(r) / n + l2 * model.weights(j);
    const double wj = model.weights(j);
    const double v = wj != 0.0 ? std::abs(g + l1 * (wj > 0.0 ? 1.0 : -1.0))
                               : std::max(0.0, std::abs(g) - l1);
    worst = std::max(worst, v);
  }
  return worst;
}

double lambda_max(const Mat& x, const Vec& y, double l1_ratio) {
  if (!(l1_ratio > 0.0)) throw Error(ErrorCode::InvalidArgument, "lambda_max: l1_ratio must be > 0");
  const Standardized s = standardize_columns(x);
  const Vec yc = y.array() - y.mean();
  return (s.xs.transpose() * yc).cwiseAbs().maxCoeff() /
         (static_cast<double>(x.rows()) * l1_ratio);
}

double correlation(const Vec& a, const Vec& b) {
  if (a.size() != b.size()) throw Error(ErrorCode::ShapeMismatch, "correlation: length mismatch");
  const Vec ca = a.array() - a.mean();
  const Vec cb = b.array() - b.mean();
  const double d = ca.norm() * cb.norm();
  if (!(d > 0.0)) return 0.0;
  return std::clamp(ca.dot(cb) / d, -1.0, 1.0);
}

std::vector<double> CvOptions::lambda_grid() const {
  if (!lambdas.empty()) return lambdas;
  std::vector<double> grid(20);
  for (int i = 0; i < 20; ++i) grid[static_cast<std::size_t>(i)] = std::pow(10.0, -4.0 + 4.0 * i / 19.0);
  return grid;
}

namespace {

Mat rows_of(const Mat& x, const std::vector<int>& idx) {
  Mat out(static_cast<Eigen::Index>(idx.size()), x.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = x.row(idx[i]);
  return out;
}

Vec rows_of(const Vec& y, const std::vector<int>& idx) {
  Vec out(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) out(static_cast<Eigen::Index>(i)) = y(idx[i]);
  return out;
}

/// Fold label per sample: a seeded shuffle dealt round-robin.
std::vector<int> fold_labels(int n, int folds, std::uint64_t seed) {
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<int> label(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) label[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] = i % folds;
  return label;
}

struct Choice {
  double lambda = 0.0;
  double l1_ratio = 0.0;
};

const ElasticNetOptions kCvFit{20000, 1e-8};

/// Inner k-fold grid search minimizing held-out mean squared error. Each
/// l1_ratio walks the lambda grid from large to small with warm starts.
Choice select_hyper(const Mat& x, const Vec& y, const CvOptions& opts, std::uint64_t seed) {
  std::vector<double> grid = opts.lambda_grid();
  std::sort(grid.begin(), grid.end(), std::greater<>());
  const int n = static_cast<int>(x.rows());
  const int folds = std::min(opts.inner_folds, n);
  const std::vector<int> label = fold_labels(n, folds, seed);

  Mat err = Mat::Zero(static_cast<Eigen::Index>(opts.l1_ratios.size()),
                      static_cast<Eigen::Index>(grid.size()));
  for (int f = 0; f < folds; ++f) {
    std::vector<int> tr, te;
    for (int i = 0; i < n; ++i) (label[static_cast<std::size_t>(i)] == f ? te : tr).push_back(i);
    if (tr.size() < 2 || te.empty()) continue;
    const Mat xtr = rows_of(x, tr), xte = rows_of(x, te);
    const Vec ytr = rows_of(y, tr), yte = rows_of(y, te);
    for (std::size_t a = 0; a < opts.l1_ratios.size(); ++a) {
      Vec warm;
      for (std::size_t l = 0; l < grid.size(); ++l) {
        const ElasticNetModel m =
            elastic_net_fit(xtr, ytr, grid[l], opts.l1_ratios[a], kCvFit, warm.size() ? &warm : nullptr);
        warm = m.weights;
        err(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(l)) +=
            (m.predict(xte) - yte).squaredNorm();
      }
    }
  }
  Eigen::Index ba = 0, bl = 0;
  double best = std::numeric_limits<double>::infinity();
  for (Eigen::Index a = 0; a < err.rows(); ++a)
    for (Eigen::Index l = 0; l < err.cols(); ++l)
      if (err(a, l) < best) {
        best = err(a, l);
        ba = a;
        bl = l;
      }
  return {grid[static_cast<std::size_t>(bl)], opts.l1_ratios[static_cast<std::size_t>(ba)]};
}

double run_repeat(const Mat& x, const Vec& y, const CvOptions& opts, int repeat) {
  const int n = static_cast<int>(x.rows());
  const std::uint64_t rseed = derive_seed(opts.seed, static_cast<std::uint64_t>(repeat));
  const std::vector<int> label = fold_labels(n, opts.folds, rseed);
  Vec pred(n);
  for (int f = 0; f < opts.folds; ++f) {
    std::vector<int> tr, te;
    for (int i = 0; i < n; ++i) (label[static_cast<std::size_t>(i)] == f ? te : tr).push_back(i);
    const Mat xtr = rows_of(x, tr);
    const Vec ytr = rows_of(y, tr);
    const Choice c = select_hyper(xtr, ytr, opts, derive_seed(rseed, static_cast<std::uint64_t>(f) + 1));
    const ElasticNetModel m = elastic_net_fit(xtr, ytr, c.lambda, c.l1_ratio, kCvFit);
    const Vec p = m.predict(rows_of(x, te));
    for (std::size_t i = 0; i < te.size(); ++i) pred(te[i]) = p(static_cast<Eigen::Index>(i));
  }
  return correlation(pred, y);
}

}  // namespace

CvReport evaluate_r(const Mat& features, const Vec& y, const CvOptions& opts, int workers) {
  if (features.rows() != y.size())
    throw Error(ErrorCode::ShapeMismatch, "evaluate_r: row count differs from y");
  if (features.rows() < 10) throw Error(ErrorCode::InvalidArgument, "evaluate_r: need >= 10 subjects");
  if (opts.folds < 2 || opts.repeats < 1 || opts.inner_folds < 2 || opts.l1_ratios.empty())
    throw Error(ErrorCode::InvalidArgument, "evaluate_r: bad cross-validation settings");
  if (!features.allFinite() || !y.allFinite())
    throw Error(ErrorCode::InvalidArgument, "evaluate_r: non-finite input");
  for (double a : opts.l1_ratios) check_penalty(0.0, a);
  for (double l : opts.lambda_grid()) check_penalty(l, 0.0);

  CvReport rep;
  rep.repeat_r.assign(static_cast<std::size_t>(opts.repeats), 0.0);
  const int nw = std::max(1, std::min(workers, opts.repeats));
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(nw));
  for (int w = 0; w < nw; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (int r = w; r < opts.repeats; r += nw)
          rep.repeat_r[static_cast<std::size_t>(r)] = run_repeat(features, y, opts, r);
      } catch (...) {
        errors[static_cast<std::size_t>(w)] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  double s = 0.0;
  for (double r : rep.repeat_r) s += r;
  rep.mean_r = s / opts.repeats;
  double v = 0.0;
  for (double r : rep.repeat_r) v += (r - rep.mean_r) * (r - rep.mean_r);
  rep.std_r = std::sqrt(v / opts.repeats);

  const Choice c = select_hyper(features, y, opts, derive_seed(opts.seed, 0xC0FFEEULL));
  rep.chosen_lambda = c.lambda;
  rep.chosen_l1_ratio = c.l1_ratio;
  return rep;
}

}  // namespace gdmd
