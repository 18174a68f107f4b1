#pragma once

// Two fixed architectures with hand-derived gradients: a two-layer GCN
// and the multi-head quantile MLP used as the distillation student.
//
// Every stochastic element (dropout masks, radius noise) draws from its own
// seed derived from the call seed, and is recorded in the forward trace so
// backward treats it as a constant.

#include "rege/core.hpp"

#include <array>
#include <cmath>
#include <random>
#include <string>
#include <vector>

namespace rege::nn {

enum class Mode { train, eval };

// ---------------------------------------------------------------- helpers

/// Uniform Glorot initialization, limit sqrt(6 / (fan_in + fan_out)).
inline Matrix glorot_uniform(Eigen::Index fan_in, Eigen::Index fan_out, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> u(-limit, limit);
  Matrix w(fan_in, fan_out);
  for (Eigen::Index i = 0; i < fan_in; ++i)
    for (Eigen::Index j = 0; j < fan_out; ++j) w(i, j) = u(rng);
  return w;
}

inline Matrix relu(const Matrix& x) { return x.cwiseMax(0.0); }

/// Inverted-dropout scale mask: entries are 0 or 1 / (1 - p).
inline Matrix dropout_mask(Eigen::Index rows, Eigen::Index cols, double p, std::uint64_t seed) {
  if (p < 0.0 || p >= 1.0) throw ParameterError("dropout probability must lie in [0, 1)");
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution keep(1.0 - p);
  const double scale = 1.0 / (1.0 - p);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = keep(rng) ? scale : 0.0;
  return m;
}

/// Gaussian draws with row i scaled to variance radii[i].
inline Matrix radius_noise(Eigen::Index rows, Eigen::Index cols, const Vector& radii,
                           std::uint64_t seed) {
  if (radii.size() != rows) throw DimensionError("radius count does not match row count");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Matrix noise(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    if (radii[i] < 0.0) throw ParameterError("radius must be non-negative");
    const double sd = std::sqrt(radii[i]);
    for (Eigen::Index j = 0; j < cols; ++j) noise(i, j) = sd * gauss(rng);
  }
  return noise;
}

/// h + N(0, r_i) elementwise on row i.
inline Matrix inject_radius_noise(const Matrix& h, const Vector& radii, std::uint64_t seed) {
  return h + radius_noise(h.rows(), h.cols(), radii, seed);
}

// ------------------------------------------------------------------ losses

inline Matrix softmax(const Matrix& logits) {
  Matrix p(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double mx = logits.row(i).maxCoeff();
    p.row(i) = (logits.row(i).array() - mx).exp();
    p.row(i) /= p.row(i).sum();
  }
  return p;
}

struct LossAndGrad {
  double loss = 0.0;
  Matrix grad;  // d loss / d prediction
};

/// Mean masked negative log-likelihood and its gradient w.r.t. the logits.
inline LossAndGrad cross_entropy(const Matrix& logits, const std::vector<int>& labels,
                                 const Mask& mask) {
  if (static_cast<Eigen::Index>(labels.size()) != logits.rows() ||
      static_cast<Eigen::Index>(mask.size()) != logits.rows())
    throw DimensionError("cross_entropy: label/mask length does not match logits");
  const auto m = mask_count(mask);
  if (m == 0) throw ParameterError("cross_entropy: empty mask");
  LossAndGrad out;
  out.grad = Matrix::Zero(logits.rows(), logits.cols());
  const double inv_m = 1.0 / static_cast<double>(m);
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    if (!mask[i]) continue;
    const int y = labels[i];
    if (y < 0 || y >= logits.cols()) throw ParameterError("cross_entropy: label out of range");
    const double mx = logits.row(i).maxCoeff();
    const auto shifted = (logits.row(i).array() - mx).eval();
    const double lse = std::log(shifted.exp().sum());
    out.loss += (lse - shifted[y]) * inv_m;
    out.grad.row(i) = (shifted - lse).exp().matrix() * inv_m;
    out.grad(i, y) -= inv_m;
  }
  return out;
}

inline double cross_entropy_loss(const Matrix& logits, const std::vector<int>& labels,
                                 const Mask& mask) {
  return cross_entropy(logits, labels, mask).loss;
}

/// Pinball loss max{(q - 1)(y - yhat), q (y - yhat)}.
inline double quantile_loss(double y, double y_hat, double q) {
  if (!(q > 0.0 && q < 1.0)) throw ParameterError("quantile level must lie in (0, 1)");
  const double u = y - y_hat;
  return std::max((q - 1.0) * u, q * u);
}

/// Mean pinball loss over the selected rows and all columns, with the
/// gradient w.r.t. the prediction (zero on unselected rows).
inline LossAndGrad quantile_loss(const Matrix& target, const Matrix& pred, double q,
                                 const Mask& rows) {
  if (!(q > 0.0 && q < 1.0)) throw ParameterError("quantile level must lie in (0, 1)");
  if (target.rows() != pred.rows() || target.cols() != pred.cols())
    throw DimensionError("quantile_loss: shape mismatch");
  const auto m = mask_count(rows);
  if (m == 0) throw ParameterError("quantile_loss: empty row selection");
  const double inv = 1.0 / static_cast<double>(m * static_cast<std::size_t>(pred.cols()));
  LossAndGrad out;
  out.grad = Matrix::Zero(pred.rows(), pred.cols());
  for (Eigen::Index i = 0; i < pred.rows(); ++i) {
    if (!rows[i]) continue;
    for (Eigen::Index j = 0; j < pred.cols(); ++j) {
      const double u = target(i, j) - pred(i, j);
      out.loss += std::max((q - 1.0) * u, q * u) * inv;
      if (u > 0.0)
        out.grad(i, j) = -q * inv;
      else if (u < 0.0)
        out.grad(i, j) = (1.0 - q) * inv;
    }
  }
  return out;
}

/// Mean squared error over the selected rows and all columns.
inline LossAndGrad squared_error(const Matrix& target, const Matrix& pred, const Mask& rows) {
  if (target.rows() != pred.rows() || target.cols() != pred.cols())
    throw DimensionError("squared_error: shape mismatch");
  const auto m = mask_count(rows);
  if (m == 0) throw ParameterError("squared_error: empty row selection");
  const double inv = 1.0 / static_cast<double>(m * static_cast<std::size_t>(pred.cols()));
  LossAndGrad out;
  out.grad = Matrix::Zero(pred.rows(), pred.cols());
  for (Eigen::Index i = 0; i < pred.rows(); ++i) {
    if (!rows[i]) continue;
    const auto diff = (pred.row(i) - target.row(i)).eval();
    out.loss += diff.squaredNorm() * inv;
    out.grad.row(i) = 2.0 * inv * diff;
  }
  return out;
}

// -------------------------------------------------------------------- Adam

struct AdamState {
  std::vector<Matrix> m, v;
  long step = 0;
};

struct AdamConfig {
  double lr = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// One Adam update over paired parameter/gradient tensors. `decay[k]` is an
/// L2 coefficient for tensor k, added to its gradient before the moment
/// updates (missing entries are 0).
inline void adam_step(const std::vector<Matrix*>& params, const std::vector<const Matrix*>& grads,
                      AdamState& state, const AdamConfig& cfg,
                      const std::vector<double>& decay = {}) {
  if (params.size() != grads.size()) throw DimensionError("adam: parameter/gradient count mismatch");
  if (state.m.empty()) {
    for (const Matrix* p : params) {
      state.m.push_back(Matrix::Zero(p->rows(), p->cols()));
      state.v.push_back(Matrix::Zero(p->rows(), p->cols()));
    }
  }
  if (state.m.size() != params.size()) throw DimensionError("adam: state does not match parameters");
  ++state.step;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Matrix& p = *params[k];
    const Matrix& raw = *grads[k];
    if (p.rows() != raw.rows() || p.cols() != raw.cols() || state.m[k].rows() != p.rows() ||
        state.m[k].cols() != p.cols())
      throw DimensionError("adam: shape mismatch in tensor " + std::to_string(k));
    const double wd = k < decay.size() ? decay[k] : 0.0;
    const Matrix g = wd != 0.0 ? Matrix(raw + wd * p) : raw;
    state.m[k] = cfg.beta1 * state.m[k] + (1.0 - cfg.beta1) * g;
    state.v[k] = cfg.beta2 * state.v[k] + (1.0 - cfg.beta2) * g.cwiseAbs2();
    p.array() -= cfg.lr * (state.m[k].array() / c1) / ((state.v[k].array() / c2).sqrt() + cfg.eps);
  }
}

// --------------------------------------------------------------------- GCN

/// Two-layer GCN. Biases are 1 x k row matrices, or empty when disabled.
struct GCNParams {
  Matrix w1, w2;
  Matrix b1, b2;

  bool has_bias() const { return b1.size() > 0; }
  Eigen::Index in_dim() const { return w1.rows(); }
  Eigen::Index hidden_dim() const { return w1.cols(); }
  Eigen::Index out_dim() const { return w2.cols(); }

  static GCNParams init(Eigen::Index in, Eigen::Index hidden, Eigen::Index out,
                        std::uint64_t seed, bool bias = false) {
    std::mt19937_64 rng(seed);
    GCNParams p;
    p.w1 = glorot_uniform(in, hidden, rng);
    p.w2 = glorot_uniform(hidden, out, rng);
    if (bias) {
      p.b1 = Matrix::Zero(1, hidden);
      p.b2 = Matrix::Zero(1, out);
    }
    return p;
  }

  std::vector<Matrix*> tensors() {
    std::vector<Matrix*> t{&w1, &w2};
    if (has_bias()) t.insert(t.end(), {&b1, &b2});
    return t;
  }
  std::vector<const Matrix*> tensors() const {
    std::vector<const Matrix*> t{&w1, &w2};
    if (has_bias()) t.insert(t.end(), {&b1, &b2});
    return t;
  }
};

struct GCNGrads {
  Matrix w1, w2, b1, b2;

  std::vector<const Matrix*> tensors() const {
    std::vector<const Matrix*> t{&w1, &w2};
    if (b1.size() > 0) t.insert(t.end(), {&b1, &b2});
    return t;
  }
};

/// Everything backward needs, with the stochastic draws frozen.
struct GCNTrace {
  Matrix a_hat, features;
  Matrix ax;         // A_hat X
  Matrix pre1;       // A_hat X W1 + b1
  Matrix noise1;     // empty when no noise was injected
  Matrix hidden;     // relu(pre1) + noise1
  Matrix keep1;      // dropout scale mask; empty when dropout is off
  Matrix a_dropped;  // A_hat (hidden * keep1)
  Matrix noise2;
  Matrix logits;
  Eigen::Index in_dim = 0, hidden_dim = 0, out_dim = 0;
};

struct GCNOutput {
  Matrix logits;
  Matrix hidden;  // layer-1 output before dropout
  GCNTrace trace;
};

struct GCNForwardOptions {
  Mode mode = Mode::eval;
  double dropout = 0.5;
  const Vector* radii = nullptr;  // noise is injected only in train mode
  std::uint64_t seed = 0;
};

namespace detail {
inline void add_bias(Matrix& x, const Matrix& b) {
  if (b.size() > 0) x.rowwise() += b.row(0);
}

inline void check_gcn_dims(const GCNParams& p, const Matrix& a_hat, const Matrix& x) {
  if (a_hat.rows() != a_hat.cols()) throw DimensionError("gcn: propagation matrix is not square");
  if (a_hat.rows() != x.rows()) throw DimensionError("gcn layer 1: adjacency/features row mismatch");
  if (x.cols() != p.w1.rows()) throw DimensionError("gcn layer 1: feature width != W1 rows");
  if (p.w1.cols() != p.w2.rows()) throw DimensionError("gcn layer 2: W1 cols != W2 rows");
  if (p.has_bias() && (p.b1.cols() != p.w1.cols() || p.b2.cols() != p.w2.cols()))
    throw DimensionError("gcn: bias width mismatch");
}
}  // namespace detail

inline GCNOutput gcn_forward(const GCNParams& p, const Matrix& a_hat, const Matrix& features,
                             const GCNForwardOptions& opt) {
  detail::check_gcn_dims(p, a_hat, features);
  const bool train = opt.mode == Mode::train;
  const bool noisy = train && opt.radii != nullptr;
  if (opt.radii && opt.radii->size() != a_hat.rows())
    throw DimensionError("gcn: radius count does not match node count");

  GCNTrace t;
  t.a_hat = a_hat;
  t.features = features;
  t.in_dim = p.in_dim();
  t.hidden_dim = p.hidden_dim();
  t.out_dim = p.out_dim();
  t.ax = a_hat * features;
  t.pre1 = t.ax * p.w1;
  detail::add_bias(t.pre1, p.b1);
  t.hidden = relu(t.pre1);
  if (noisy) {
    t.noise1 = radius_noise(t.hidden.rows(), t.hidden.cols(), *opt.radii, derive_seed(opt.seed, {11}));
    t.hidden += t.noise1;
  }
  Matrix dropped = t.hidden;
  if (train && opt.dropout > 0.0) {
    t.keep1 = dropout_mask(t.hidden.rows(), t.hidden.cols(), opt.dropout, derive_seed(opt.seed, {12}));
    dropped = dropped.cwiseProduct(t.keep1);
  }
  t.a_dropped = a_hat * dropped;
  t.logits = t.a_dropped * p.w2;
  detail::add_bias(t.logits, p.b2);
  if (noisy) {
    t.noise2 = radius_noise(t.logits.rows(), t.logits.cols(), *opt.radii, derive_seed(opt.seed, {13}));
    t.logits += t.noise2;
  }
  GCNOutput out;
  out.logits = t.logits;
  out.hidden = t.hidden;
  out.trace = std::move(t);
  return out;
}

/// Recomputes the logits from `p` using the trace's inputs and frozen
/// dropout/noise draws.
inline Matrix gcn_replay(const GCNParams& p, const GCNTrace& t) {
  detail::check_gcn_dims(p, t.a_hat, t.features);
  Matrix h = t.ax * p.w1;
  detail::add_bias(h, p.b1);
  h = relu(h);
  if (t.noise1.size() > 0) h += t.noise1;
  if (t.keep1.size() > 0) h = h.cwiseProduct(t.keep1);
  Matrix logits = (t.a_hat * h) * p.w2;
  detail::add_bias(logits, p.b2);
  if (t.noise2.size() > 0) logits += t.noise2;
  return logits;
}

/// Exact gradients of a loss whose derivative w.r.t. the logits is `dlogits`.
inline GCNGrads gcn_backward(const GCNParams& p, const GCNTrace& t, const Matrix& dlogits) {
  if (p.in_dim() != t.in_dim || p.hidden_dim() != t.hidden_dim || p.out_dim() != t.out_dim)
    throw DimensionError("gcn backward: parameters do not match the trace");
  if (dlogits.rows() != t.logits.rows() || dlogits.cols() != t.logits.cols())
    throw DimensionError("gcn backward: upstream gradient shape mismatch");
  GCNGrads g;
  g.w2 = t.a_dropped.transpose() * dlogits;
  Matrix dh = t.a_hat.transpose() * (dlogits * p.w2.transpose());
  if (t.keep1.size() > 0) dh = dh.cwiseProduct(t.keep1);
  const Matrix dpre = dh.cwiseProduct((t.pre1.array() > 0.0).cast<double>().matrix());
  g.w1 = t.ax.transpose() * dpre;
  if (p.has_bias()) {
    g.b1 = dpre.colwise().sum();
    g.b2 = dlogits.colwise().sum();
  }
  return g;
}

// --------------------------------------------------------------------- MLP

inline constexpr int kHeads = 3;
enum Head : int { mean_head = 0, lower_head = 1, upper_head = 2 };

/// Fully connected relu backbone feeding three linear heads.
struct MLPParams {
  std::vector<Matrix> w, b;  // backbone layers; b[k] is 1 x width
  std::array<Matrix, kHeads> head_w, head_b;

  Eigen::Index in_dim() const { return w.front().rows(); }
  Eigen::Index out_dim() const { return head_w[0].cols(); }

  static MLPParams init(Eigen::Index in, Eigen::Index width, int layers, Eigen::Index out,
                        std::uint64_t seed) {
    if (layers < 1) throw ParameterError("mlp needs at least one hidden layer");
    std::mt19937_64 rng(seed);
    MLPParams p;
    Eigen::Index fan_in = in;
    for (int k = 0; k < layers; ++k) {
      p.w.push_back(glorot_uniform(fan_in, width, rng));
      p.b.push_back(Matrix::Zero(1, width));
      fan_in = width;
    }
    for (int h = 0; h < kHeads; ++h) {
      p.head_w[h] = glorot_uniform(width, out, rng);
      p.head_b[h] = Matrix::Zero(1, out);
    }
    return p;
  }

  std::vector<Matrix*> tensors() {
    std::vector<Matrix*> t;
    for (std::size_t k = 0; k < w.size(); ++k) t.insert(t.end(), {&w[k], &b[k]});
    for (int h = 0; h < kHeads; ++h) t.insert(t.end(), {&head_w[h], &head_b[h]});
    return t;
  }
};

struct MLPGrads {
  std::vector<Matrix> w, b;
  std::array<Matrix, kHeads> head_w, head_b;

  std::vector<const Matrix*> tensors() const {
    std::vector<const Matrix*> t;
    for (std::size_t k = 0; k < w.size(); ++k) t.insert(t.end(), {&w[k], &b[k]});
    for (int h = 0; h < kHeads; ++h) t.insert(t.end(), {&head_w[h], &head_b[h]});
    return t;
  }
};

struct MLPTrace {
  Matrix input;
  std::vector<Matrix> pre;    // pre-activation of each backbone layer
  std::vector<Matrix> keep;   // dropout scale masks (empty when off)
  std::vector<Matrix> out;    // post relu/dropout of each backbone layer
  std::array<Matrix, kHeads> heads;
};

struct MLPForwardOptions {
  Mode mode = Mode::eval;
  double dropout = 0.5;
  int dropout_layers = 2;  // dropout follows the first this-many layers
  std::uint64_t seed = 0;
};

inline MLPTrace mlp_forward(const MLPParams& p, const Matrix& x, const MLPForwardOptions& opt) {
  if (x.cols() != p.in_dim()) throw DimensionError("mlp layer 1: input width != W rows");
  MLPTrace t;
  t.input = x;
  const Matrix* h = &t.input;
  for (std::size_t k = 0; k < p.w.size(); ++k) {
    Matrix pre = *h * p.w[k];
    pre.rowwise() += p.b[k].row(0);
    Matrix act = relu(pre);
    Matrix keep;
    if (opt.mode == Mode::train && opt.dropout > 0.0 && static_cast<int>(k) < opt.dropout_layers) {
      keep = dropout_mask(act.rows(), act.cols(), opt.dropout,
                          derive_seed(opt.seed, {21, static_cast<std::uint64_t>(k)}));
      act = act.cwiseProduct(keep);
    }
    t.pre.push_back(std::move(pre));
    t.keep.push_back(std::move(keep));
    t.out.push_back(std::move(act));
    h = &t.out.back();
  }
  for (int hd = 0; hd < kHeads; ++hd) {
    t.heads[hd] = *h * p.head_w[hd];
    t.heads[hd].rowwise() += p.head_b[hd].row(0);
  }
  return t;
}

/// Head outputs recomputed with the trace's frozen dropout masks.
inline std::array<Matrix, kHeads> mlp_replay(const MLPParams& p, const MLPTrace& t) {
  Matrix h = t.input;
  for (std::size_t k = 0; k < p.w.size(); ++k) {
    Matrix pre = h * p.w[k];
    pre.rowwise() += p.b[k].row(0);
    h = relu(pre);
    if (t.keep[k].size() > 0) h = h.cwiseProduct(t.keep[k]);
  }
  std::array<Matrix, kHeads> heads;
  for (int hd = 0; hd < kHeads; ++hd) {
    heads[hd] = h * p.head_w[hd];
    heads[hd].rowwise() += p.head_b[hd].row(0);
  }
  return heads;
}

inline MLPGrads mlp_backward(const MLPParams& p, const MLPTrace& t,
                             const std::array<Matrix, kHeads>& dheads) {
  if (t.pre.size() != p.w.size()) throw DimensionError("mlp backward: trace depth mismatch");
  MLPGrads g;
  g.w.resize(p.w.size());
  g.b.resize(p.w.size());
  const Matrix& last = t.out.back();
  Matrix dh = Matrix::Zero(last.rows(), last.cols());
  for (int hd = 0; hd < kHeads; ++hd) {
    if (dheads[hd].rows() != t.heads[hd].rows() || dheads[hd].cols() != t.heads[hd].cols())
      throw DimensionError("mlp backward: head gradient shape mismatch");
    g.head_w[hd] = last.transpose() * dheads[hd];
    g.head_b[hd] = dheads[hd].colwise().sum();
    dh += dheads[hd] * p.head_w[hd].transpose();
  }
  for (std::size_t k = p.w.size(); k-- > 0;) {
    if (t.keep[k].size() > 0) dh = dh.cwiseProduct(t.keep[k]);
    const Matrix dpre = dh.cwiseProduct((t.pre[k].array() > 0.0).cast<double>().matrix());
    const Matrix& in = k == 0 ? t.input : t.out[k - 1];
    g.w[k] = in.transpose() * dpre;
    g.b[k] = dpre.colwise().sum();
    if (k > 0) dh = dpre * p.w[k].transpose();
  }
  return g;
}

}  // namespace rege::nn
