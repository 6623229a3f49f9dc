#include "gdmd/koopman.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

namespace gdmd {

int Mlp::input_width() const {
  if (layers.empty()) throw Error(ErrorCode::InvalidArgument, "mlp: no layers");
  return static_cast<int>(layers.front().weight.cols());
}

int Mlp::output_width() const {
  if (layers.empty()) throw Error(ErrorCode::InvalidArgument, "mlp: no layers");
  return static_cast<int>(layers.back().weight.rows());
}

Eigen::Index Mlp::parameter_count() const {
  Eigen::Index total = 0;
  for (const auto& l : layers) total += l.weight.size() + l.bias.size();
  return total;
}

namespace {

void apply(Activation act, Mat& h) {
  if (act == Activation::Tanh) h = h.array().tanh().matrix();
}

/// Forward pass keeping every layer output; outs[0] is the input.
struct Trace {
  std::vector<Mat> outs;
};

Trace forward_trace(const Mlp& net, const Mat& x) {
  Trace t;
  t.outs.reserve(net.layers.size() + 1);
  t.outs.push_back(x);
  for (const auto& l : net.layers) {
    Mat h = (l.weight * t.outs.back()).colwise() + l.bias;
    apply(l.activation, h);
    t.outs.push_back(std::move(h));
  }
  return t;
}

/// Backpropagates d_out through the network. Parameter gradients are written
/// into `grad` starting at `offset` in parameters() layout; returns dL/dx.
Mat backward(const Mlp& net, const Trace& t, Mat d_out, Vec& grad, Eigen::Index offset) {
  std::vector<Eigen::Index> starts;
  Eigen::Index pos = offset;
  for (const auto& l : net.layers) {
    starts.push_back(pos);
    pos += l.weight.size() + l.bias.size();
  }
  for (std::size_t li = net.layers.size(); li-- > 0;) {
    const Layer& l = net.layers[li];
    const Mat& out = t.outs[li + 1];
    if (l.activation == Activation::Tanh) d_out = d_out.cwiseProduct((1.0 - out.array().square()).matrix());
    const Mat dw = d_out * t.outs[li].transpose();
    const Vec db = d_out.rowwise().sum();
    grad.segment(starts[li], dw.size()) = Eigen::Map<const Vec>(dw.data(), dw.size());
    grad.segment(starts[li] + dw.size(), db.size()) = db;
    d_out = l.weight.transpose() * d_out;
  }
  return d_out;
}

}  // namespace

Mat Mlp::forward(const Mat& x) const {
  if (x.rows() != input_width()) throw Error(ErrorCode::ShapeMismatch, "mlp: input width mismatch");
  Mat a = x;
  for (const auto& l : layers) {
    Mat h = (l.weight * a).colwise() + l.bias;
    apply(l.activation, h);
    a = std::move(h);
  }
  return a;
}

KoopmanModel KoopmanModel::create(int window, const std::vector<int>& hidden, int latent,
                                  std::uint64_t seed, Activation hidden_activation) {
  if (window < 3) throw Error(ErrorCode::InvalidArgument, "koopman model: window must be >= 3");
  if (latent < 3) throw Error(ErrorCode::InvalidArgument, "koopman model: latent width must be >= 3");
  for (int h : hidden)
    if (h < 1) throw Error(ErrorCode::InvalidArgument, "koopman model: hidden widths must be >= 1");

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto build = [&](const std::vector<int>& widths) {
    Mlp net;
    for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
      Layer l;
      const int in = widths[i];
      const int out = widths[i + 1];
      const double sd = std::sqrt(2.0 / (in + out));
      l.weight.resize(out, in);
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c)
        for (Eigen::Index r = 0; r < l.weight.rows(); ++r) l.weight(r, c) = sd * normal(rng);
      l.bias = Vec::Zero(out);
      l.activation = i + 2 < widths.size() ? hidden_activation : Activation::Identity;
      net.layers.push_back(std::move(l));
    }
    return net;
  };

  std::vector<int> enc{window};
  enc.insert(enc.end(), hidden.begin(), hidden.end());
  enc.push_back(latent);
  std::vector<int> dec(enc.rbegin(), enc.rend());

  KoopmanModel m;
  m.window = window;
  m.latent = latent;
  m.encoder = build(enc);
  m.decoder = build(dec);
  return m;
}

KoopmanModel KoopmanModel::identity(int window) {
  if (window < 3) throw Error(ErrorCode::InvalidArgument, "koopman model: window must be >= 3");
  KoopmanModel m;
  m.window = window;
  m.latent = window;
  Layer l{Mat::Identity(window, window), Vec::Zero(window), Activation::Identity};
  m.encoder.layers = {l};
  m.decoder.layers = {l};
  return m;
}

void KoopmanModel::validate() const {
  if (encoder.layers.empty() || decoder.layers.empty())
    throw Error(ErrorCode::InvalidArgument, "koopman model: empty network");
  for (const Mlp* net : {&encoder, &decoder}) {
    for (std::size_t i = 0; i < net->layers.size(); ++i) {
      const Layer& l = net->layers[i];
      if (l.bias.size() != l.weight.rows())
        throw Error(ErrorCode::ShapeMismatch, "koopman model: bias width mismatch");
      if (i > 0 && l.weight.cols() != net->layers[i - 1].weight.rows())
        throw Error(ErrorCode::ShapeMismatch, "koopman model: layer widths do not chain");
    }
  }
  if (encoder.input_width() != window || decoder.output_width() != window)
    throw Error(ErrorCode::ShapeMismatch, "koopman model: network widths differ from window");
  if (encoder.output_width() != latent || decoder.input_width() != latent)
    throw Error(ErrorCode::ShapeMismatch, "koopman model: network widths differ from latent");
  if (latent < 3) throw Error(ErrorCode::InvalidArgument, "koopman model: latent width must be >= 3");
}

Eigen::Index KoopmanModel::parameter_count() const {
  return encoder.parameter_count() + decoder.parameter_count();
}

Vec KoopmanModel::parameters() const {
  Vec theta(parameter_count());
  Eigen::Index pos = 0;
  for (const Mlp* net : {&encoder, &decoder}) {
    for (const auto& l : net->layers) {
      theta.segment(pos, l.weight.size()) = Eigen::Map<const Vec>(l.weight.data(), l.weight.size());
      pos += l.weight.size();
      theta.segment(pos, l.bias.size()) = l.bias;
      pos += l.bias.size();
    }
  }
  return theta;
}

void KoopmanModel::set_parameters(const Vec& theta) {
  if (theta.size() != parameter_count())
    throw Error(ErrorCode::ShapeMismatch, "koopman model: parameter vector length mismatch");
  Eigen::Index pos = 0;
  for (Mlp* net : {&encoder, &decoder}) {
    for (auto& l : net->layers) {
      l.weight = Eigen::Map<const Mat>(theta.data() + pos, l.weight.rows(), l.weight.cols());
      pos += l.weight.size();
      l.bias = theta.segment(pos, l.bias.size());
      pos += l.bias.size();
    }
  }
}

Vec encode_node(const KoopmanModel& model, const Vec& x_window) {
  if (x_window.size() != model.window)
    throw Error(ErrorCode::ShapeMismatch, "encode_node: window length mismatch");
  if (!x_window.allFinite()) throw Error(ErrorCode::InvalidArgument, "encode_node: non-finite input");
  return model.encoder.forward(x_window);
}

Vec decode_node(const KoopmanModel& model, const Vec& z) {
  if (z.size() != model.latent) throw Error(ErrorCode::ShapeMismatch, "decode_node: latent width mismatch");
  if (!z.allFinite()) throw Error(ErrorCode::InvalidArgument, "decode_node: non-finite input");
  return model.decoder.forward(z);
}

Mat latent_graph(const KoopmanModel& model, const Mat& x_window, Warnings* warnings) {
  if (x_window.rows() < 2) throw Error(ErrorCode::InvalidArgument, "latent_graph: need n >= 2");
  if (x_window.cols() != model.window)
    throw Error(ErrorCode::ShapeMismatch, "latent_graph: window length mismatch");
  const Mat z = model.encoder.forward(x_window.transpose());  // m x n
  return correlation_matrix(z.transpose(), warnings);
}

GraphSequence latent_sequence(const KoopmanModel& model, const BoldSeries& x, const WindowSpec& w,
                              Warnings* warnings) {
  x.validate();
  w.validate();
  if (w.length != model.window)
    throw Error(ErrorCode::ShapeMismatch, "latent_sequence: window length differs from model");
  if (w.length > x.frames()) throw Error(ErrorCode::WindowTooLong, "window length exceeds series length");
  GraphSequence gs;
  gs.n = static_cast<int>(x.rois());
  gs.dt_eff = w.stride * x.dt;
  const int count = w.count(x.frames());
  for (int k = 0; k < count; ++k) {
    Warnings local;
    gs.graphs.push_back(latent_graph(model, x.data.middleCols(static_cast<Eigen::Index>(k) * w.stride, w.length),
                                     warnings ? &local : nullptr));
    for (auto& msg : local) warn(warnings, "window " + std::to_string(k) + ": " + msg);
  }
  return gs;
}

std::vector<std::vector<int>> incident_edges(int n) {
  if (n < 3) throw Error(ErrorCode::InvalidArgument, "incident_edges: need n >= 3");
  std::vector<std::vector<int>> out;
  out.reserve(static_cast<std::size_t>(edge_count(n)));
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      std::vector<int> nb;
      nb.reserve(static_cast<std::size_t>(2 * (n - 2) + 1));
      for (int p = 0; p < n; ++p)
        if (p != i && p != j) nb.push_back(edge_index(i, p, n));
      for (int q = 0; q < n; ++q)
        if (q != i && q != j) nb.push_back(edge_index(q, j, n));
      nb.push_back(edge_index(i, j, n));
      out.push_back(std::move(nb));
    }
  }
  return out;
}

namespace {

Mat gather_rows(const Mat& y, const std::vector<int>& rows) {
  Mat out(static_cast<Eigen::Index>(rows.size()), y.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) out.row(static_cast<Eigen::Index>(r)) = y.row(rows[r]);
  return out;
}

}  // namespace

Mat SparseKoopmanOperator::predict(const Mat& y0) const {
  if (y0.rows() != static_cast<Eigen::Index>(weights.size()))
    throw Error(ErrorCode::ShapeMismatch, "sparse koopman: edge count mismatch");
  Mat out(y0.rows(), y0.cols());
  for (std::size_t e = 0; e < weights.size(); ++e)
    out.row(static_cast<Eigen::Index>(e)) = weights[e].transpose() * gather_rows(y0, neighborhoods[e]);
  return out;
}

SparseKoopmanOperator fit_sparse_koopman(const Mat& edges, int n, double ridge) {
  if (edges.rows() != edge_count(n))
    throw Error(ErrorCode::ShapeMismatch, "fit_sparse_koopman: row count is not n(n-1)/2");
  if (edges.cols() < 3) throw Error(ErrorCode::TooFewSnapshots, "fit_sparse_koopman: need T >= 3");
  if (!(ridge >= 0.0)) throw Error(ErrorCode::InvalidArgument, "fit_sparse_koopman: ridge must be >= 0");
  if (!edges.allFinite()) throw Error(ErrorCode::InvalidArgument, "fit_sparse_koopman: non-finite input");

  const Eigen::Index kp = edges.cols() - 1;
  const Mat y0 = edges.leftCols(kp);
  const Mat y1 = edges.rightCols(kp);

  SparseKoopmanOperator op;
  op.n = n;
  op.ridge = ridge;
  op.neighborhoods = incident_edges(n);
  op.weights.resize(op.neighborhoods.size());
  for (std::size_t e = 0; e < op.neighborhoods.size(); ++e) {
    const Mat z = gather_rows(y0, op.neighborhoods[e]).transpose();  // K' x |N|
    const Vec y = y1.row(static_cast<Eigen::Index>(e)).transpose();
    if (ridge > 0.0) {
      Mat a = z.transpose() * z;
      a.diagonal().array() += ridge * static_cast<double>(kp);
      Eigen::LLT<Mat> llt(a);
      if (llt.info() != Eigen::Success)
        throw Error(ErrorCode::SingularSystem, "fit_sparse_koopman: local system not positive definite");
      op.weights[e] = llt.solve(z.transpose() * y);
    } else {
      Eigen::ColPivHouseholderQR<Mat> qr(z);
      if (qr.rank() < z.cols())
        throw Error(ErrorCode::SingularSystem, "fit_sparse_koopman: rank-deficient local design");
      op.weights[e] = qr.solve(y);
    }
  }
  return op;
}

double lkis_loss(const GraphSequence& latent, const SparseKoopmanOperator& op) {
  if (latent.size() < 3) throw Error(ErrorCode::TooFewSnapshots, "lkis_loss: need >= 3 graphs");
  if (latent.n != op.n) throw Error(ErrorCode::ShapeMismatch, "lkis_loss: operator node count differs");
  const Mat y = latent.edge_series();
  const Eigen::Index kp = y.cols() - 1;
  const Mat r = y.rightCols(kp) - op.predict(y.leftCols(kp));
  return r.squaredNorm() / static_cast<double>(y.rows() * kp);
}

double lkis_loss(const GraphSequence& latent, double ridge) {
  return lkis_loss(latent, fit_sparse_koopman(latent.edge_series(), latent.n, ridge));
}

double relative_koopman_residual(const GraphSequence& gs, double ridge) {
  const Mat y = gs.edge_series();
  const SparseKoopmanOperator op = fit_sparse_koopman(y, gs.n, ridge);
  const Eigen::Index kp = y.cols() - 1;
  const Mat y1 = y.rightCols(kp);
  const double res = (y1 - op.predict(y.leftCols(kp))).squaredNorm();
  const double var = (y1.colwise() - y1.rowwise().mean()).squaredNorm();
  if (!(var > 0.0)) return res > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
  return res / var;
}

void TrainConfig::validate() const {
  if (!(alpha >= 0.0) || !(beta >= 0.0) || !(ridge >= 0.0))
    throw Error(ErrorCode::InvalidArgument, "train config: alpha, beta and ridge must be >= 0");
  if (epochs < 1) throw Error(ErrorCode::InvalidArgument, "train config: epochs must be >= 1");
  if (!(learning_rate > 0.0)) throw Error(ErrorCode::InvalidArgument, "train config: learning_rate must be > 0");
  if (!(momentum >= 0.0 && momentum < 1.0))
    throw Error(ErrorCode::InvalidArgument, "train config: momentum must lie in [0, 1)");
  if (batch_windows < 0 || (batch_windows > 0 && batch_windows < 3))
    throw Error(ErrorCode::InvalidArgument, "train config: batch_windows must be 0 or >= 3");
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0))
    throw Error(ErrorCode::InvalidArgument, "train config: validation_fraction must lie in [0, 1)");
  if (!(clip_norm >= 0.0)) throw Error(ErrorCode::InvalidArgument, "train config: clip_norm must be >= 0");
  if (latent < 3) throw Error(ErrorCode::InvalidArgument, "train config: latent width must be >= 3");
}

WindowBatch WindowBatch::from_series(const BoldSeries& x, const WindowSpec& w) {
  x.validate();
  w.validate();
  if (w.length > x.frames()) throw Error(ErrorCode::WindowTooLong, "window length exceeds series length");
  WindowBatch b;
  b.n = static_cast<int>(x.rois());
  b.windows = w.count(x.frames());
  b.inputs.resize(w.length, static_cast<Eigen::Index>(b.windows) * b.n);
  b.raw_edges.resize(edge_count(b.n), b.windows);
  for (int k = 0; k < b.windows; ++k) {
    const auto block = x.data.middleCols(static_cast<Eigen::Index>(k) * w.stride, w.length);
    b.inputs.middleCols(static_cast<Eigen::Index>(k) * b.n, b.n) = block.transpose();
    b.raw_edges.col(k) = upper_triangle(correlation_matrix(block));
  }
  return b;
}

WindowBatch WindowBatch::slice(int first, int count) const {
  if (first < 0 || count < 0 || first + count > windows)
    throw Error(ErrorCode::InvalidArgument, "window batch: slice out of range");
  WindowBatch b;
  b.n = n;
  b.windows = count;
  b.inputs = inputs.middleCols(static_cast<Eigen::Index>(first) * n, static_cast<Eigen::Index>(count) * n);
  b.raw_edges = raw_edges.middleCols(first, count);
  return b;
}

LossTerms total_loss(const KoopmanModel& model, const WindowBatch& batch, const TrainConfig& cfg,
                     Vec* grad) {
  if (batch.windows < 3) throw Error(ErrorCode::TooFewSnapshots, "total_loss: need >= 3 windows");
  if (batch.inputs.rows() != model.window)
    throw Error(ErrorCode::ShapeMismatch, "total_loss: window length differs from model");
  const int n = batch.n;
  const int kw = batch.windows;
  const int m = model.latent;
  const int e_count = edge_count(n);
  const double kp = static_cast<double>(kw - 1);

  const Trace enc = forward_trace(model.encoder, batch.inputs);
  const Mat& z = enc.outs.back();  // m x K n
  const Trace dec = forward_trace(model.decoder, z);
  const Mat& xhat = dec.outs.back();

  LossTerms out;
  const Mat recon_err = xhat - batch.inputs;
  out.recon = recon_err.squaredNorm() / static_cast<double>(recon_err.size());

  // Latent Pearson graphs. zn holds unit-norm centered embeddings; norms
  // of zero flag constant embeddings, whose correlations are fixed at 0.
  Mat zn(m, static_cast<Eigen::Index>(kw) * n);
  Vec norms(static_cast<Eigen::Index>(kw) * n);
  for (Eigen::Index c = 0; c < zn.cols(); ++c) {
    const auto col = z.col(c);
    if (col.minCoeff() == col.maxCoeff()) {
      zn.col(c).setZero();
      norms(c) = 0.0;
    } else {
      zn.col(c) = col.array() - col.mean();
      norms(c) = zn.col(c).norm();
      zn.col(c) /= norms(c);
    }
  }
  Mat y(e_count, kw);
  std::vector<Mat> rho(static_cast<std::size_t>(kw));
  for (int k = 0; k < kw; ++k) {
    const auto zk = zn.middleCols(static_cast<Eigen::Index>(k) * n, n);
    rho[static_cast<std::size_t>(k)] = zk.transpose() * zk;
    y.col(k) = upper_triangle(rho[static_cast<std::size_t>(k)]);
  }

  const Mat reg_err = y - batch.raw_edges;
  out.reg = reg_err.squaredNorm() / static_cast<double>(e_count * kw);

  const SparseKoopmanOperator op = fit_sparse_koopman(y, n, cfg.ridge);
  const Mat y0 = y.leftCols(kw - 1);
  const Mat resid = y.rightCols(kw - 1) - op.predict(y0);
  double penalty = 0.0;
  for (const auto& w : op.weights) penalty += w.squaredNorm();
  out.lkis = (resid.squaredNorm() + cfg.ridge * kp * penalty) / (e_count * kp);
  out.total = out.recon + cfg.alpha * out.lkis + cfg.beta * out.reg;

  if (!grad) return out;

  // dL/dY over latent edges.
  Mat dy = (2.0 * cfg.beta / (e_count * kw)) * reg_err;
  const double c_lkis = 2.0 * cfg.alpha / (e_count * kp);
  dy.rightCols(kw - 1) += c_lkis * resid;
  for (std::size_t e = 0; e < op.weights.size(); ++e) {
    const auto& nb = op.neighborhoods[e];
    const Vec& w = op.weights[e];
    for (std::size_t l = 0; l < nb.size(); ++l)
      dy.row(nb[l]).head(kw - 1) -= c_lkis * w(static_cast<Eigen::Index>(l)) * resid.row(static_cast<Eigen::Index>(e));
  }

  // Through the Pearson map: d rho_ij / d z_i = (zn_j - rho_ij zn_i) / ||c_i||.
  Mat dz = Mat::Zero(m, static_cast<Eigen::Index>(kw) * n);
  for (int k = 0; k < kw; ++k) {
    const Mat g = from_upper_triangle(dy.col(k), n, 0.0);
    const auto zk = zn.middleCols(static_cast<Eigen::Index>(k) * n, n);
    const Vec row_w = g.cwiseProduct(rho[static_cast<std::size_t>(k)]).rowwise().sum();
    Mat d = zk * g - zk * row_w.asDiagonal();
    for (int i = 0; i < n; ++i) {
      const double nrm = norms(static_cast<Eigen::Index>(k) * n + i);
      if (nrm > 0.0) d.col(i) /= nrm;
      else d.col(i).setZero();
    }
    dz.middleCols(static_cast<Eigen::Index>(k) * n, n) = d;
  }

  grad->setZero(model.parameter_count());
  const Eigen::Index enc_params = model.encoder.parameter_count();
  const Mat dz_recon = backward(model.decoder, dec, (2.0 / static_cast<double>(recon_err.size())) * recon_err,
                                *grad, enc_params);
  backward(model.encoder, enc, dz + dz_recon, *grad, 0);
  return out;
}

double grad_check(const KoopmanModel& model, const WindowBatch& batch, const TrainConfig& cfg, double h,
                  double floor) {
  Vec analytic;
  total_loss(model, batch, cfg, &analytic);
  KoopmanModel probe = model;
  const Vec theta = model.parameters();
  double worst = 0.0;
  for (Eigen::Index p = 0; p < theta.size(); ++p) {
    Vec t = theta;
    t(p) = theta(p) + h;
    probe.set_parameters(t);
    const double up = total_loss(probe, batch, cfg).total;
    t(p) = theta(p) - h;
    probe.set_parameters(t);
    const double down = total_loss(probe, batch, cfg).total;
    const double numeric = (up - down) / (2.0 * h);
    const double den = std::max({std::abs(analytic(p)), std::abs(numeric), floor});
    worst = std::max(worst, std::abs(analytic(p) - numeric) / den);
  }
  return worst;
}

namespace {

bool finite(const LossTerms& l) {
  return std::isfinite(l.total) && std::isfinite(l.recon) && std::isfinite(l.lkis) && std::isfinite(l.reg);
}

}  // namespace

TrainResult train(const BoldSeries& x, const WindowSpec& w, const TrainConfig& cfg) {
  cfg.validate();
  const WindowBatch all = WindowBatch::from_series(x, w);
  const int total = all.windows;
  int n_val = 0;
  if (cfg.validation_fraction > 0.0) {
    n_val = static_cast<int>(std::lround(cfg.validation_fraction * total));
    n_val = std::max(n_val, 3);
  }
  const int n_train = total - n_val;
  if (n_train < 3)
    throw Error(ErrorCode::TooFewSnapshots, "train: need >= 3 training windows after the validation split");

  const WindowBatch train_set = all.slice(0, n_train);
  const WindowBatch val_set = n_val > 0 ? all.slice(n_train, n_val) : WindowBatch{};

  std::vector<WindowBatch> batches;
  if (cfg.batch_windows == 0 || cfg.batch_windows >= n_train) {
    batches.push_back(train_set);
  } else {
    int first = 0;
    while (first < n_train) {
      int count = std::min(cfg.batch_windows, n_train - first);
      if (n_train - first - count < 3) count = n_train - first;  // fold a short tail into this batch
      batches.push_back(train_set.slice(first, count));
      first += count;
    }
  }

  TrainResult res;
  res.model = KoopmanModel::create(w.length, cfg.hidden, cfg.latent, cfg.seed, cfg.activation);
  res.train_windows = n_train;
  res.validation_windows = n_val;

  KoopmanModel model = res.model;
  auto evaluate = [&](int epoch) {
    EpochLog log;
    log.epoch = epoch;
    log.train = total_loss(model, train_set, cfg);
    log.validation = n_val > 0 ? total_loss(model, val_set, cfg) : log.train;
    if (!finite(log.train) || !finite(log.validation)) {
      std::ostringstream msg;
      msg << "train: non-finite loss at epoch " << epoch;
      throw Error(ErrorCode::Diverged, msg.str());
    }
    return log;
  };

  res.log.push_back(evaluate(0));
  double best = res.log.back().validation.total;
  Vec theta = model.parameters();
  Vec velocity = Vec::Zero(theta.size());
  Vec grad;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (const auto& b : batches) {
      total_loss(model, b, cfg, &grad);
      if (!grad.allFinite()) {
        std::ostringstream msg;
        msg << "train: non-finite gradient at epoch " << epoch;
        throw Error(ErrorCode::Diverged, msg.str());
      }
      if (cfg.clip_norm > 0.0) {
        const double gn = grad.norm();
        if (gn > cfg.clip_norm) grad *= cfg.clip_norm / gn;
      }
      velocity = cfg.momentum * velocity - cfg.learning_rate * grad;
      theta += velocity;
      model.set_parameters(theta);
    }
    res.log.push_back(evaluate(epoch));
    if (res.log.back().validation.total < best) {
      best = res.log.back().validation.total;
      res.best_epoch = epoch;
      res.model = model;
    }
  }
  return res;
}

}  // namespace gdmd
