#pragma once

// Model-dependent radii: a GCN teacher, a feature-only MLP student with
// mean and quantile heads, and conformal calibration of the quantile heads.

#include "rege/core.hpp"
#include "rege/graph.hpp"
#include "rege/io.hpp"
#include "rege/nn.hpp"
#include "rege/radii.hpp"
#include "rege/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>
#include <vector>

namespace rege {

struct TeacherArtifacts {
  nn::GCNParams params;
  Matrix z;  // eval-mode embeddings (hidden layer, or logits if configured)
};

/// Plain GCN trained on the unperturbed graph for `teacher_epochs`.
inline TeacherArtifacts train_teacher(const Graph& g, const TrainConfig& cfg) {
  TrainConfig tc = cfg;
  tc.epochs_per_view = cfg.teacher_epochs;
  tc.stages = 1;
  tc.seed = derive_seed(cfg.seed, {300});
  auto fit = train_baseline(g, tc);
  TeacherArtifacts t;
  t.params = std::move(fit.params);
  const auto out = nn::gcn_forward(t.params, symmetric_normalize(g).matrix, g.features, {});
  t.z = cfg.distill_logits ? out.logits : out.hidden;
  return t;
}

struct StudentConfig {
  int width = 1024;
  int layers = 3;
  double dropout = 0.5;
  int dropout_layers = 2;
  int epochs = 300;
  double lr = 1e-3;
  double alpha = 0.05;
  std::uint64_t seed = 0;

  static StudentConfig from(const TrainConfig& c) {
    StudentConfig s;
    s.width = c.student_width;
    s.layers = c.student_layers;
    s.dropout = c.student_dropout;
    s.dropout_layers = std::min(2, c.student_layers);
    s.epochs = c.student_epochs;
    s.lr = c.student_lr;
    s.alpha = c.alpha;
    s.seed = derive_seed(c.seed, {400});
    return s;
  }
};

struct StudentOutputs {
  Matrix mean, lower, upper;
};

struct StudentModel {
  nn::MLPParams params;
  double alpha = 0.05;
  std::vector<double> epoch_loss;

  StudentOutputs predict(const Matrix& x) const {
    const auto t = nn::mlp_forward(params, x, {});
    return {t.heads[nn::mean_head], t.heads[nn::lower_head], t.heads[nn::upper_head]};
  }
};

/// Summed student objective: squared error on the mean head plus pinball
/// losses at alpha/2 and 1 - alpha/2 on the lower and upper heads.
inline double student_loss(const std::array<Matrix, nn::kHeads>& heads, const Matrix& target,
                           const Mask& rows, double alpha, std::array<Matrix, nn::kHeads>* grads) {
  const auto mse = nn::squared_error(target, heads[nn::mean_head], rows);
  const auto lo = nn::quantile_loss(target, heads[nn::lower_head], alpha / 2.0, rows);
  const auto hi = nn::quantile_loss(target, heads[nn::upper_head], 1.0 - alpha / 2.0, rows);
  if (grads) *grads = {mse.grad, lo.grad, hi.grad};
  return mse.loss + lo.loss + hi.loss;
}

namespace detail {
inline Matrix select_rows(const Matrix& m, const Mask& rows) {
  Matrix out(static_cast<Eigen::Index>(mask_count(rows)), m.cols());
  Eigen::Index r = 0;
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    if (rows[i]) out.row(r++) = m.row(i);
  return out;
}
}  // namespace detail

/// Full-batch Adam on the selected rows. The student sees node features
/// only, never the graph.
inline StudentModel train_student(const Matrix& features, const Matrix& z, const Mask& rows,
                                  const StudentConfig& cfg) {
  if (features.rows() != z.rows()) throw DimensionError("student: feature/target row mismatch");
  if (static_cast<Eigen::Index>(rows.size()) != features.rows())
    throw DimensionError("student: row mask length mismatch");
  if (mask_count(rows) == 0) throw ParameterError("student: no training rows");
  if (!(cfg.alpha > 0.0 && cfg.alpha < 1.0)) throw ParameterError("alpha must lie in (0, 1)");
  const Matrix x = detail::select_rows(features, rows);
  const Matrix y = detail::select_rows(z, rows);
  const Mask all(static_cast<std::size_t>(x.rows()), true);

  StudentModel s;
  s.alpha = cfg.alpha;
  s.params = nn::MLPParams::init(x.cols(), cfg.width, cfg.layers, y.cols(), derive_seed(cfg.seed, {1}));
  nn::AdamState adam;
  const nn::AdamConfig adam_cfg{cfg.lr};
  nn::MLPForwardOptions fo;
  fo.mode = nn::Mode::train;
  fo.dropout = cfg.dropout;
  fo.dropout_layers = cfg.dropout_layers;
  for (int e = 0; e < cfg.epochs; ++e) {
    fo.seed = derive_seed(cfg.seed, {2, static_cast<std::uint64_t>(e)});
    const auto trace = nn::mlp_forward(s.params, x, fo);
    std::array<Matrix, nn::kHeads> dheads;
    s.epoch_loss.push_back(student_loss(trace.heads, y, all, cfg.alpha, &dheads));
    const auto grads = nn::mlp_backward(s.params, trace, dheads);
    nn::adam_step(s.params.tensors(), grads.tensors(), adam, adam_cfg);
  }
  return s;
}

/// max{lower - y, y - upper}: non-positive exactly when y is covered.
inline double conformal_score(double lower, double upper, double y) {
  return std::max(lower - y, y - upper);
}

/// Order-statistic rank ceil((m + 1)(1 - alpha)), 1-based.
inline std::size_t conformal_rank(std::size_t m, double alpha) {
  const double t = static_cast<double>(m + 1) * (1.0 - alpha);
  return static_cast<std::size_t>(std::ceil(t - 1e-9));
}

/// The ceil((m + 1)(1 - alpha)) / m empirical quantile of the scores: the
/// k-th smallest score, or the largest when k exceeds m.
inline double compute_qhat(std::vector<double> scores, double alpha) {
  if (scores.empty()) throw ParameterError("compute_qhat: no calibration scores");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ParameterError("alpha must lie in (0, 1)");
  const auto m = scores.size();
  const auto k = std::max<std::size_t>(1, conformal_rank(m, alpha));
  if (k >= m) return *std::max_element(scores.begin(), scores.end());
  std::nth_element(scores.begin(), scores.begin() + static_cast<std::ptrdiff_t>(k - 1), scores.end());
  return scores[k - 1];
}

struct ConformalCalibration {
  double alpha = 0.05;
  std::vector<std::vector<double>> scores;  // scores[j]: dimension j over calibration rows
  Vector q_hat;
};

/// Per-dimension calibration on the selected rows. With `pooled`, one
/// offset computed from all dimensions' scores is shared.
inline ConformalCalibration calibrate(const StudentModel& s, const Matrix& features,
                                      const Matrix& target, const Mask& rows, double alpha,
                                      bool pooled = false) {
  if (features.rows() != target.rows() || static_cast<Eigen::Index>(rows.size()) != target.rows())
    throw DimensionError("calibrate: row count mismatch");
  const auto pred = s.predict(detail::select_rows(features, rows));
  const Matrix y = detail::select_rows(target, rows);
  if (pred.lower.cols() != y.cols()) throw DimensionError("calibrate: student/target width mismatch");
  ConformalCalibration c;
  c.alpha = alpha;
  const auto d = y.cols();
  c.scores.assign(static_cast<std::size_t>(d), {});
  for (Eigen::Index j = 0; j < d; ++j)
    for (Eigen::Index i = 0; i < y.rows(); ++i)
      c.scores[j].push_back(conformal_score(pred.lower(i, j), pred.upper(i, j), y(i, j)));
  c.q_hat.resize(d);
  if (pooled) {
    std::vector<double> all;
    for (const auto& sj : c.scores) all.insert(all.end(), sj.begin(), sj.end());
    c.q_hat.setConstant(compute_qhat(std::move(all), alpha));
  } else {
    for (Eigen::Index j = 0; j < d; ++j) c.q_hat[j] = compute_qhat(c.scores[j], alpha);
  }
  return c;
}

struct Intervals {
  Matrix lower, upper;  // n x d
};

/// [lower - q_hat_j, upper + q_hat_j] for every node and dimension.
inline Intervals conformal_intervals(const StudentOutputs& raw, const ConformalCalibration& c) {
  if (raw.lower.cols() != c.q_hat.size() || raw.upper.cols() != c.q_hat.size())
    throw DimensionError("conformal_intervals: dimension mismatch");
  Intervals iv;
  iv.lower = raw.lower.rowwise() - c.q_hat.transpose();
  iv.upper = raw.upper.rowwise() + c.q_hat.transpose();
  return iv;
}

inline Intervals conformal_intervals(const StudentModel& s, const ConformalCalibration& c,
                                     const Matrix& features) {
  return conformal_intervals(s.predict(features), c);
}

/// Mean clamped interval width per node, min-max normalized.
inline RadiusVector mdr_radii(const Intervals& iv) {
  if (iv.lower.rows() != iv.upper.rows() || iv.lower.cols() != iv.upper.cols())
    throw DimensionError("mdr_radii: interval bounds differ in shape");
  if (iv.lower.cols() == 0) throw DimensionError("mdr_radii: zero-width embedding");
  const Vector raw = (iv.upper - iv.lower).cwiseMax(0.0).rowwise().mean();
  return {minmax_normalize(raw), RadiusKind::mdr};
}

struct MdrArtifacts {
  TeacherArtifacts teacher;
  StudentModel student;
  ConformalCalibration calibration;
  RadiusVector radii;
};

/// Teacher, student and calibration on the training nodes, then radii for
/// every node.
inline MdrArtifacts model_dependent_radii(const Graph& g, const TrainConfig& cfg) {
  cfg.validate();
  MdrArtifacts a;
  a.teacher = train_teacher(g, cfg);
  a.student = train_student(g.features, a.teacher.z, g.train, StudentConfig::from(cfg));
  a.calibration = calibrate(a.student, g.features, a.teacher.z, g.train, cfg.alpha, cfg.pooled_qhat);
  a.radii = mdr_radii(conformal_intervals(a.student, a.calibration, g.features));
  return a;
}

/// CSV "dimension,q_hat,calibration_size".
inline std::string calibration_csv(const ConformalCalibration& c) {
  std::ostringstream out;
  out << "dimension,q_hat,calibration_size\n";
  for (Eigen::Index j = 0; j < c.q_hat.size(); ++j)
    out << j << ',' << io::fmt_double(c.q_hat[j]) << ',' << c.scores[j].size() << '\n';
  return out.str();
}

}  // namespace rege
