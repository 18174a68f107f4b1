#pragma once

// GCN training: curriculum over reconstructed views with radius noise, the
// no-curriculum ablation, and the plain baseline. All three run on the same
// staged engine so their degenerate cases coincide bit for bit.

#include "rege/core.hpp"
#include "rege/graph.hpp"
#include "rege/nn.hpp"
#include "rege/radii.hpp"
#include "rege/spectral.hpp"

#include <json.hpp>

#include <chrono>
#include <optional>
#include <string>
#include <vector>

namespace rege {

struct TrainConfig {
  int epochs_per_view = 100;
  int patience_views = 25;
  int hidden = 16;
  double dropout = 0.5;
  double lr = 0.01;
  double weight_decay = 5e-4;  // L2 on first-layer weights only
  double alpha = 0.05;
  int q_min = 5;
  int component_step = 5;
  std::uint64_t seed = 0;
  bool use_bias = false;

  /// Stage count for the no-curriculum and baseline runs. 0 matches the
  /// number of views the curriculum would train on for the same graph.
  int stages = 0;

  EigenOrder eigen_order = EigenOrder::signed_descending;
  ScaleScope scale_scope = ScaleScope::full_matrix;
  RowAggregation row_aggregation = RowAggregation::all_entries;

  // Teacher / student (model-dependent radii).
  int teacher_epochs = 200;
  int student_epochs = 300;
  int student_width = 1024;
  int student_layers = 3;
  double student_dropout = 0.5;
  double student_lr = 1e-3;
  bool distill_logits = false;
  bool pooled_qhat = false;

  ViewOptions view_options() const { return {eigen_order, scale_scope, 0.5}; }

  void validate() const {
    if (epochs_per_view < 1 || patience_views < 1 || hidden < 1 || q_min < 1 ||
        component_step < 1 || stages < 0 || teacher_epochs < 1 || student_epochs < 1 ||
        student_width < 1 || student_layers < 1)
      throw ParameterError("training counts must be positive");
    if (dropout < 0.0 || dropout >= 1.0 || student_dropout < 0.0 || student_dropout >= 1.0)
      throw ParameterError("dropout must lie in [0, 1)");
    if (!(alpha > 0.0 && alpha < 1.0)) throw ParameterError("alpha must lie in (0, 1)");
    if (!(lr > 0.0) || !(student_lr > 0.0) || weight_decay < 0.0)
      throw ParameterError("learning rates must be positive and decay non-negative");
  }
};

inline std::string_view to_string(EigenOrder o) {
  return o == EigenOrder::signed_descending ? "signed" : "magnitude";
}
inline std::string_view to_string(ScaleScope s) {
  return s == ScaleScope::full_matrix ? "full" : "off-diagonal";
}
inline std::string_view to_string(RowAggregation a) {
  return a == RowAggregation::all_entries ? "all" : "incident";
}

inline nlohmann::ordered_json to_json(const TrainConfig& c) {
  return {{"epochs_per_view", c.epochs_per_view},
          {"patience_views", c.patience_views},
          {"hidden", c.hidden},
          {"dropout", c.dropout},
          {"lr", c.lr},
          {"weight_decay", c.weight_decay},
          {"alpha", c.alpha},
          {"q_min", c.q_min},
          {"component_step", c.component_step},
          {"seed", c.seed},
          {"use_bias", c.use_bias},
          {"stages", c.stages},
          {"eigen_order", to_string(c.eigen_order)},
          {"scale_scope", to_string(c.scale_scope)},
          {"row_aggregation", to_string(c.row_aggregation)},
          {"teacher_epochs", c.teacher_epochs},
          {"student_epochs", c.student_epochs},
          {"student_width", c.student_width},
          {"student_layers", c.student_layers},
          {"student_dropout", c.student_dropout},
          {"student_lr", c.student_lr},
          {"distill_logits", c.distill_logits},
          {"pooled_qhat", c.pooled_qhat}};
}

struct StageRecord {
  int components = 0;  // view component count, 0 for the original graph
  std::vector<double> epoch_loss;
  double val_accuracy = 0.0;
};

struct TrainReport {
  std::string method;
  std::vector<StageRecord> stages;
  int best_stage = -1;
  double best_val_accuracy = 0.0;
  double train_accuracy = 0.0;
  std::optional<double> test_accuracy;
  double wall_seconds = 0.0;
  TrainConfig config;
};

/// Report as an ordered JSON object. Wall-clock time is left out unless
/// asked for, so reports are reproducible byte for byte.
inline nlohmann::ordered_json to_json(const TrainReport& r, bool with_timing = false) {
  nlohmann::ordered_json stages = nlohmann::ordered_json::array();
  for (const auto& s : r.stages)
    stages.push_back({{"components", s.components},
                      {"epochs", s.epoch_loss.size()},
                      {"val_accuracy", s.val_accuracy},
                      {"epoch_loss", s.epoch_loss}});
  nlohmann::ordered_json j{{"method", r.method},
                           {"best_stage", r.best_stage},
                           {"best_val_accuracy", r.best_val_accuracy},
                           {"train_accuracy", r.train_accuracy},
                           {"test_accuracy", r.test_accuracy ? nlohmann::ordered_json(*r.test_accuracy)
                                                             : nlohmann::ordered_json(nullptr)},
                           {"stages", stages},
                           {"config", to_json(r.config)}};
  if (with_timing) j["wall_seconds"] = r.wall_seconds;
  return j;
}

struct TrainResult {
  nn::GCNParams params;
  TrainReport report;
};

/// Fraction of masked nodes whose argmax logit (lowest index on ties)
/// equals the label.
inline double accuracy(const Matrix& logits, const std::vector<int>& labels, const Mask& mask) {
  const auto m = mask_count(mask);
  if (m == 0) throw ParameterError("accuracy: empty mask");
  std::size_t hit = 0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    if (!mask[i]) continue;
    Eigen::Index arg = 0;
    logits.row(i).maxCoeff(&arg);
    hit += arg == labels[i] ? 1 : 0;
  }
  return static_cast<double>(hit) / static_cast<double>(m);
}

inline double evaluate(const nn::GCNParams& p, const NormalizedAdjacency& a_hat,
                       const Graph& g, const Mask& mask) {
  const auto out = nn::gcn_forward(p, a_hat.matrix, g.features, {});
  return accuracy(out.logits, g.labels, mask);
}

/// Eval-mode accuracy on the original graph (no noise, no dropout).
inline double evaluate(const nn::GCNParams& p, const Graph& g, const Mask& mask) {
  if (!g.has_labels()) throw PreconditionError("evaluate: graph has no labels");
  return evaluate(p, symmetric_normalize(g), g, mask);
}

namespace detail {

inline void check_trainable(const Graph& g) {
  if (!g.has_labels()) throw PreconditionError("training needs node labels");
  if (g.num_classes < 1) throw PreconditionError("training needs at least one class");
  if (g.train.empty() || mask_count(g.train) == 0)
    throw PreconditionError("training needs a non-empty train mask");
  for (const Mask* m : {&g.train, &g.val, &g.test})
    for (std::size_t i = 0; i < m->size(); ++i)
      if ((*m)[i] && g.labels[i] < 0)
        throw PreconditionError("split mask selects unlabeled node " + g.node_ids[i]);
}

struct Stage {
  const Matrix* adjacency;  // nullptr: the original graph
  int components;
};

/// Warm-started training over `stages`, checkpointing the best validation
/// accuracy on the original graph after each stage and stopping after
/// `patience_views` stages without strict improvement.
inline TrainResult fit_stages(const Graph& g, const std::vector<Stage>& stages, const Vector* radii,
                              int epochs_per_stage, const TrainConfig& cfg, std::string method) {
  const auto start = std::chrono::steady_clock::now();
  cfg.validate();
  check_trainable(g);
  if (radii && radii->size() != g.n())
    throw PreconditionError("radius vector length does not match node count");
  if (stages.empty()) throw ParameterError("training needs at least one stage");

  const Mask& select = mask_count(g.val) > 0 ? g.val : g.train;
  const NormalizedAdjacency original = symmetric_normalize(g);

  TrainResult res;
  res.report.method = std::move(method);
  res.report.config = cfg;
  auto params = nn::GCNParams::init(g.features.cols(), cfg.hidden, g.num_classes,
                                    derive_seed(cfg.seed, {100}), cfg.use_bias);
  nn::AdamState adam;
  const nn::AdamConfig adam_cfg{cfg.lr};
  const std::vector<double> decay{cfg.weight_decay};

  int since_best = 0;
  for (std::size_t s = 0; s < stages.size(); ++s) {
    const NormalizedAdjacency view_hat =
        stages[s].adjacency ? symmetric_normalize(*stages[s].adjacency) : original;
    StageRecord rec;
    rec.components = stages[s].components;
    rec.epoch_loss.reserve(static_cast<std::size_t>(epochs_per_stage));
    for (int e = 0; e < epochs_per_stage; ++e) {
      nn::GCNForwardOptions fo;
      fo.mode = nn::Mode::train;
      fo.dropout = cfg.dropout;
      fo.radii = radii;
      fo.seed = derive_seed(cfg.seed, {200, s, static_cast<std::uint64_t>(e)});
      const auto out = nn::gcn_forward(params, view_hat.matrix, g.features, fo);
      const auto ce = nn::cross_entropy(out.logits, g.labels, g.train);
      const auto grads = nn::gcn_backward(params, out.trace, ce.grad);
      nn::adam_step(params.tensors(), grads.tensors(), adam, adam_cfg, decay);
      rec.epoch_loss.push_back(ce.loss);
    }
    rec.val_accuracy = evaluate(params, original, g, select);
    res.report.stages.push_back(std::move(rec));
    if (res.report.best_stage < 0 || res.report.stages.back().val_accuracy > res.report.best_val_accuracy) {
      res.report.best_stage = static_cast<int>(s);
      res.report.best_val_accuracy = res.report.stages.back().val_accuracy;
      res.params = params;
      since_best = 0;
    } else if (++since_best >= cfg.patience_views) {
      break;
    }
  }
  res.report.train_accuracy = evaluate(res.params, original, g, g.train);
  if (mask_count(g.test) > 0) res.report.test_accuracy = evaluate(res.params, original, g, g.test);
  res.report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return res;
}

inline int resolved_stages(const Graph& g, const TrainConfig& cfg) {
  if (cfg.stages > 0) return cfg.stages;
  const int q = std::min<int>(cfg.q_min, static_cast<int>(g.n()));
  return static_cast<int>(component_schedule(g.n(), q, cfg.component_step).size());
}

}  // namespace detail

/// Trains one GCN sequentially over `views` (ascending component count),
/// injecting radius noise after both layers.
inline TrainResult curriculum_train(const Graph& g, const ViewSequence& views,
                                    const RadiusVector& radii, const TrainConfig& cfg) {
  if (views.count() == 0) throw ParameterError("curriculum needs at least one view");
  std::vector<detail::Stage> stages;
  for (std::size_t i = 0; i < views.count(); ++i) {
    if (views.views[i].rows() != g.n() || views.views[i].cols() != g.n())
      throw PreconditionError("view size does not match the graph");
    if (i > 0 && views.component_counts[i] <= views.component_counts[i - 1])
      throw PreconditionError("views must be ordered by increasing component count");
    stages.push_back({&views.views[i], views.component_counts[i]});
  }
  return detail::fit_stages(g, stages, &radii.values, cfg.epochs_per_view, cfg, "curriculum");
}

/// Radius-noise training on the original graph only.
inline TrainResult train_nct(const Graph& g, const RadiusVector& radii, const TrainConfig& cfg) {
  std::vector<detail::Stage> stages(static_cast<std::size_t>(detail::resolved_stages(g, cfg)),
                                    detail::Stage{nullptr, 0});
  return detail::fit_stages(g, stages, &radii.values, cfg.epochs_per_view, cfg, "nct");
}

/// Plain GCN: original graph, dropout, no noise.
inline TrainResult train_baseline(const Graph& g, const TrainConfig& cfg) {
  std::vector<detail::Stage> stages(static_cast<std::size_t>(detail::resolved_stages(g, cfg)),
                                    detail::Stage{nullptr, 0});
  return detail::fit_stages(g, stages, nullptr, cfg.epochs_per_view, cfg, "baseline");
}

}  // namespace rege
