#pragma once

// Koopman autoencoder over node windows. One shared encoder maps each
// node's s-sample window to an m-dimensional embedding; latent graphs are
// Pearson correlations between node embeddings. Training pushes the latent
// graph sequence toward a sparse linear system in which every edge is
// predicted from the edges that share an endpoint with it.

#include "gdmd/dnfc.hpp"

#include <cstdint>
#include <vector>

namespace gdmd {

enum class Activation { Identity, Tanh };

struct Layer {
  Mat weight;  // out x in
  Vec bias;    // out
  Activation activation = Activation::Identity;
};

struct Mlp {
  std::vector<Layer> layers;

  int input_width() const;
  int output_width() const;
  Eigen::Index parameter_count() const;

  /// Columns of x are independent samples.
  Mat forward(const Mat& x) const;
};

struct KoopmanModel {
  Mlp encoder;
  Mlp decoder;
  int window = 0;  // s
  int latent = 0;  // m

  /// Encoder s -> hidden... -> m, decoder mirrored. Hidden layers use
  /// `hidden_activation`, the last layer of each network is linear.
  /// Xavier-normal weights drawn from `seed`, zero biases.
  static KoopmanModel create(int window, const std::vector<int>& hidden, int latent,
                             std::uint64_t seed, Activation hidden_activation = Activation::Tanh);

  /// Single identity layer in both networks (m = s): latent graphs equal the
  /// plain window correlations.
  static KoopmanModel identity(int window);

  void validate() const;
  Eigen::Index parameter_count() const;
  /// Encoder layers then decoder layers; per layer the column-major weight
  /// followed by the bias.
  Vec parameters() const;
  void set_parameters(const Vec& theta);
};

Vec encode_node(const KoopmanModel& model, const Vec& x_window);
Vec decode_node(const KoopmanModel& model, const Vec& z);

/// x_window is n x s (one row per node). Constant embeddings correlate 0
/// with everything, as in correlation_matrix.
Mat latent_graph(const KoopmanModel& model, const Mat& x_window, Warnings* warnings = nullptr);

/// latent_graph over every window of x, in dNFC order.
GraphSequence latent_sequence(const KoopmanModel& model, const BoldSeries& x, const WindowSpec& w,
                              Warnings* warnings = nullptr);

/// Incident edge set of every edge (upper-triangle order): (i,p) for p != i,j,
/// then (q,j) for q != i,j, then (i,j) itself; 2(n-2)+1 entries each.
std::vector<std::vector<int>> incident_edges(int n);

struct SparseKoopmanOperator {
  int n = 0;
  double ridge = 0.0;
  std::vector<std::vector<int>> neighborhoods;
  std::vector<Vec> weights;

  /// One-step prediction of every edge from the columns of y0 (E x K).
  Mat predict(const Mat& y0) const;
};

/// Per-edge ridge regression of y_e(k+1) on the incident edges at step k over
/// the columns of `edges` (E x T, T >= 3):
///   min ||y' - Z w||^2 + ridge * (T-1) * ||w||^2.
/// With ridge = 0 a rank-deficient local design throws SingularSystem.
SparseKoopmanOperator fit_sparse_koopman(const Mat& edges, int n, double ridge);

/// ||Y' - A Y||_F^2 / (E (T-1)) for a given operator.
double lkis_loss(const GraphSequence& latent, const SparseKoopmanOperator& op);

/// Same with the operator refit on `latent`.
double lkis_loss(const GraphSequence& latent, double ridge);

/// Sum of squared one-step residuals of the refit operator divided by the
/// total variance of the targets about their per-edge means. Scale-free, so
/// it can compare sequences of different spread.
double relative_koopman_residual(const GraphSequence& gs, double ridge);

struct TrainConfig {
  double alpha = 1.0;
  double beta = 0.1;
  double learning_rate = 1e-3;
  double momentum = 0.9;
  int epochs = 200;
  int batch_windows = 0;  // consecutive windows per update; 0 = all training windows
  double ridge = 1e-3;
  double validation_fraction = 0.2;
  double clip_norm = 0.0;  // gradient norm cap; 0 disables
  std::vector<int> hidden{64, 32};
  int latent = 16;
  Activation activation = Activation::Tanh;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Windows prepared for training: inputs (s x K n, column k n + i is node i
/// of window k) and the raw window-correlation edges (E x K).
struct WindowBatch {
  Mat inputs;
  Mat raw_edges;
  int n = 0;
  int windows = 0;

  static WindowBatch from_series(const BoldSeries& x, const WindowSpec& w);
  WindowBatch slice(int first, int count) const;
};

struct LossTerms {
  double total = 0.0;
  double recon = 0.0;
  double lkis = 0.0;
  double reg = 0.0;
};

/// L = L_recon + alpha L_lkis + beta L_reg.
///   L_recon: mean squared error of the reconstructed node windows.
///   L_lkis:  (||Y' - A Y||^2 + ridge (K-1) sum_e ||w_e||^2) / (E (K-1)) with
///            A refit on the current latents. Including the ridge term makes
///            A the minimizer of the reported quantity, so the gradient taken
///            with A held fixed is the exact gradient.
///   L_reg:   mean squared difference between latent and raw window graphs
///            over the strict upper triangle.
/// When `grad` is given it receives dL/dtheta in parameters() layout.
LossTerms total_loss(const KoopmanModel& model, const WindowBatch& batch, const TrainConfig& cfg,
                     Vec* grad = nullptr);

/// Max over parameters of |analytic - central difference| /
/// max(|analytic|, |numeric|, floor), h = 1e-5. The floor keeps parameters
/// whose true gradient vanishes from dividing round-off by round-off.
double grad_check(const KoopmanModel& model, const WindowBatch& batch, const TrainConfig& cfg,
                  double h = 1e-5, double floor = 1e-6);

struct EpochLog {
  int epoch = 0;  // 0 is the untrained model
  LossTerms train;
  LossTerms validation;
};

struct TrainResult {
  KoopmanModel model;  // parameters with the lowest validation loss
  std::vector<EpochLog> log;
  int best_epoch = 0;
  int train_windows = 0;
  int validation_windows = 0;
};

/// Momentum gradient descent on total_loss over the first windows of x; the
/// final `validation_fraction` of windows is held out. Throws Diverged on a
/// non-finite loss or gradient.
TrainResult train(const BoldSeries& x, const WindowSpec& w, const TrainConfig& cfg);

}  // namespace gdmd
