#pragma once

// Behavioral regression harness: confound removal, elastic net by cyclic
// coordinate descent, and repeated k-fold evaluation of Pearson r.

#include "gdmd/modes_post.hpp"

#include <cstdint>
#include <vector>

namespace gdmd {

/// y - C_aug (C_aug^T C_aug)^-1 C_aug^T y, with an intercept column appended
/// to C. Throws RankDeficientConfounds when C_aug lacks full column rank.
Vec residualize_confounds(const Vec& y, const Mat& confounds);

struct Band {
  double f_lo = 0.0;
  double f_hi = 0.0;
};

struct FeatureBlock {
  std::string label;  // "<f_lo>-<f_hi>/c<cluster>"
  int first_column = 0;
  int columns = 0;
};

struct FeatureMatrix {
  Mat x;                            // subjects x columns
  std::vector<FeatureBlock> blocks;
  /// present(s, b) = 0 when subject s had no representative for block b and
  /// the block was zero-filled.
  Eigen::MatrixXi present;
};

/// One block of E = n(n-1)/2 columns per pooled cluster of each requested
/// band: the real part of the aligned representative's upper triangle.
/// Bands are matched to atlas bins by their edges (within 1e-12).
FeatureMatrix band_features(const ModeAtlas& atlas, const std::vector<Band>& bands);

struct ElasticNetOptions {
  int max_iter = 100000;  // full coordinate sweeps
  double tol = 1e-10;     // stop when the largest coordinate update falls below
};

/// Trained on internally standardized columns (population std; constant
/// columns are left at weight 0). `weights` live in the standardized space.
struct ElasticNetModel {
  Vec weights;
  double intercept = 0.0;
  double lambda = 0.0;
  double l1_ratio = 0.0;
  Vec center;
  Vec scale;
  bool converged = false;
  int sweeps = 0;

  Mat standardize(const Mat& x) const;
  Vec predict(const Mat& x) const;
};

/// Minimizes (1/2N)||y - Xs w - w0||^2 + lambda (rho ||w||_1 + (1-rho)/2 ||w||^2)
/// where Xs is the standardized design.
ElasticNetModel elastic_net_fit(const Mat& x, const Vec& y, double lambda, double l1_ratio,
                                const ElasticNetOptions& opts = {},
                                const Vec* warm_start = nullptr);

/// Largest violation of the subgradient optimality conditions of a fitted
/// model on its training data.
double kkt_violation(const ElasticNetModel& model, const Mat& x, const Vec& y);

/// ||Xs^T (y - mean y)||_inf / (N rho): the smallest lambda with w = 0.
double lambda_max(const Mat& x, const Vec& y, double l1_ratio);

/// Pearson correlation of two vectors; 0 when either is constant.
double correlation(const Vec& a, const Vec& b);

struct CvOptions {
  int folds = 5;
  int repeats = 10;
  int inner_folds = 3;
  std::vector<double> lambdas;    // empty: logspace(1e-4, 1, 20)
  std::vector<double> l1_ratios{0.1, 0.5, 0.9};
  std::uint64_t seed = 0;

  std::vector<double> lambda_grid() const;
};

struct CvReport {
  double mean_r = 0.0;
  double std_r = 0.0;  // population std across repeats
  std::vector<double> repeat_r;
  double chosen_lambda = 0.0;  // inner selection on the full cohort
  double chosen_l1_ratio = 0.0;
};

/// Repeated k-fold CV. For each outer training split an inner k-fold grid
/// search picks (lambda, rho); r is the Pearson correlation between the
/// pooled out-of-fold predictions and y, one value per repeat. Repeats run on
/// up to `workers` threads; results do not depend on the worker count.
CvReport evaluate_r(const Mat& features, const Vec& y, const CvOptions& opts = {},
                    int workers = 1);

}  // namespace gdmd
