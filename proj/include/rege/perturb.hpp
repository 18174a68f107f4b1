#pragma once

// Structural perturbations and the experiment harness comparing training
// methods on perturbed graphs.

#include "rege/core.hpp"
#include "rege/graph.hpp"
#include "rege/io.hpp"
#include "rege/mdr.hpp"
#include "rege/radii.hpp"
#include "rege/spectral.hpp"
#include "rege/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

namespace rege {

struct PerturbationBudget {
  double rate = 0.0;  // fraction of existing edges to modify

  std::size_t flips(std::size_t edges) const {
    if (!(rate >= 0.0 && rate <= 1.0)) throw ParameterError("perturbation rate must lie in [0, 1]");
    return static_cast<std::size_t>(std::floor(rate * static_cast<double>(edges)));
  }
};

struct PerturbedGraph {
  Graph graph;
  std::size_t requested = 0;
  std::size_t applied = 0;
  bool clipped = false;  // fewer candidate pairs than the budget asked for
};

namespace detail {
using Pair = std::pair<Eigen::Index, Eigen::Index>;

/// Removes and returns a uniformly chosen element (order not preserved).
template <class Rng>
Pair take_random(std::vector<Pair>& pool, Rng& rng) {
  std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
  const auto k = pick(rng);
  std::swap(pool[k], pool.back());
  const Pair p = pool.back();
  pool.pop_back();
  return p;
}

inline void flip(Matrix& a, const Pair& p) {
  const double v = a(p.first, p.second) != 0.0 ? 0.0 : 1.0;
  a(p.first, p.second) = a(p.second, p.first) = v;
}
}  // namespace detail

/// Flips floor(rate * |E|) distinct node pairs: floor(b/2) edge removals and
/// the remainder as insertions, each drawn uniformly without replacement.
inline PerturbedGraph random_flip(const Graph& g, PerturbationBudget budget, std::uint64_t seed) {
  PerturbedGraph out{g, budget.flips(g.edge_count()), 0, false};
  std::vector<detail::Pair> edges, non_edges;
  for (Eigen::Index i = 0; i < g.n(); ++i)
    for (Eigen::Index j = i + 1; j < g.n(); ++j)
      (g.adjacency(i, j) != 0.0 ? edges : non_edges).emplace_back(i, j);
  std::mt19937_64 rng(seed);
  const auto removals = out.requested / 2;
  const auto additions = out.requested - removals;
  for (std::size_t k = 0; k < removals && !edges.empty(); ++k, ++out.applied)
    detail::flip(out.graph.adjacency, detail::take_random(edges, rng));
  for (std::size_t k = 0; k < additions && !non_edges.empty(); ++k, ++out.applied)
    detail::flip(out.graph.adjacency, detail::take_random(non_edges, rng));
  out.clipped = out.applied < out.requested;
  return out;
}

/// DICE-style attack: each modification deletes a random within-class edge
/// or inserts a random between-class non-edge with equal probability,
/// falling back to the other move when one pool is exhausted.
inline PerturbedGraph heuristic_attack(const Graph& g, PerturbationBudget budget,
                                       std::uint64_t seed) {
  if (!g.has_labels()) throw PreconditionError("heuristic attack needs node labels");
  PerturbedGraph out{g, budget.flips(g.edge_count()), 0, false};
  std::vector<detail::Pair> within, between;
  for (Eigen::Index i = 0; i < g.n(); ++i)
    for (Eigen::Index j = i + 1; j < g.n(); ++j) {
      const int li = g.labels[i], lj = g.labels[j];
      if (li < 0 || lj < 0) continue;
      const bool edge = g.adjacency(i, j) != 0.0;
      if (edge && li == lj) within.emplace_back(i, j);
      if (!edge && li != lj) between.emplace_back(i, j);
    }
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution coin(0.5);
  for (std::size_t k = 0; k < out.requested; ++k) {
    if (within.empty() && between.empty()) break;
    const bool remove = between.empty() || (!within.empty() && coin(rng));
    detail::flip(out.graph.adjacency, detail::take_random(remove ? within : between, rng));
    ++out.applied;
  }
  out.clipped = out.applied < out.requested;
  return out;
}

// ---------------------------------------------------------------- methods

enum class Method { baseline, rege_d, rege_m, nct_d, nct_m };

inline std::string_view to_string(Method m) {
  switch (m) {
    case Method::baseline: return "baseline";
    case Method::rege_d: return "rege-d";
    case Method::rege_m: return "rege-m";
    case Method::nct_d: return "nct-d";
    case Method::nct_m: return "nct-m";
  }
  return "?";
}

inline Method parse_method(std::string_view s) {
  for (auto m : {Method::baseline, Method::rege_d, Method::rege_m, Method::nct_d, Method::nct_m}) {
    auto name = std::string(to_string(m));
    auto underscored = name;
    std::replace(underscored.begin(), underscored.end(), '-', '_');
    if (s == name || s == underscored) return m;
  }
  throw ParameterError("unknown method '" + std::string(s) + "'");
}

inline bool uses_ddr(Method m) { return m == Method::rege_d || m == Method::nct_d; }
inline bool uses_mdr(Method m) { return m == Method::rege_m || m == Method::nct_m; }
inline bool uses_curriculum(Method m) { return m == Method::rege_d || m == Method::rege_m; }

/// Radii computed once per graph and shared by the methods that need them.
struct RadiiCache {
  std::optional<ViewSequence> views;
  std::optional<RadiusVector> ddr;
  std::optional<RadiusVector> mdr;
};

inline const ViewSequence& cached_views(const Graph& g, const TrainConfig& cfg, RadiiCache& c) {
  if (!c.views) {
    const int q = std::min<int>(cfg.q_min, static_cast<int>(g.n()));
    c.views = generate_views(g, q, cfg.component_step, cfg.view_options());
  }
  return *c.views;
}

inline const RadiusVector& cached_radii(const Graph& g, Method m, const TrainConfig& cfg,
                                        RadiiCache& c) {
  if (uses_ddr(m)) {
    if (!c.ddr) c.ddr = binary_deviation_radii(consensus(cached_views(g, cfg, c)), cfg.row_aggregation);
    return *c.ddr;
  }
  if (!c.mdr) c.mdr = model_dependent_radii(g, cfg).radii;
  return *c.mdr;
}

/// Trains `m` on `train_graph`, computing views and radii from that graph
/// unless the cache already holds them.
inline TrainResult run_method(const Graph& train_graph, Method m, const TrainConfig& cfg,
                              RadiiCache& cache) {
  TrainResult r;
  switch (m) {
    case Method::baseline:
      r = train_baseline(train_graph, cfg);
      break;
    case Method::rege_d:
    case Method::rege_m:
      r = curriculum_train(train_graph, cached_views(train_graph, cfg, cache),
                           cached_radii(train_graph, m, cfg, cache), cfg);
      break;
    case Method::nct_d:
    case Method::nct_m:
      r = train_nct(train_graph, cached_radii(train_graph, m, cfg, cache), cfg);
      break;
  }
  r.report.method = std::string(to_string(m));
  return r;
}

inline TrainResult run_method(const Graph& g, Method m, const TrainConfig& cfg) {
  RadiiCache cache;
  return run_method(g, m, cfg, cache);
}

// ------------------------------------------------------------- experiments

enum class AttackKind { none, random, heuristic, external };

inline std::string_view to_string(AttackKind a) {
  switch (a) {
    case AttackKind::none: return "none";
    case AttackKind::random: return "random";
    case AttackKind::heuristic: return "heuristic";
    case AttackKind::external: return "external";
  }
  return "?";
}

inline AttackKind parse_attack(std::string_view s) {
  for (auto a : {AttackKind::none, AttackKind::random, AttackKind::heuristic, AttackKind::external})
    if (s == to_string(a)) return a;
  throw ParameterError("unknown attack '" + std::string(s) + "'");
}

struct ExperimentSpec {
  std::vector<Method> methods;
  std::vector<AttackKind> attacks;
  std::vector<double> budgets;
  std::vector<std::uint64_t> seeds;
  TrainConfig config;
  int jobs = 1;
  /// Compute radii on the clean graph instead of the attacked one.
  bool radii_from_clean = false;
  /// Adjacency for AttackKind::external (same node set as the graph).
  std::optional<Matrix> external_adjacency;
};

struct ExperimentRow {
  Method method;
  AttackKind attack;
  double budget;
  std::uint64_t seed;
  double accuracy = std::numeric_limits<double>::quiet_NaN();
  std::string error;  // empty on success
};

struct SummaryRow {
  Method method;
  AttackKind attack;
  double budget;
  double mean = 0.0;
  double stddev = 0.0;  // population standard deviation
  std::size_t count = 0;
};

struct ExperimentReport {
  std::vector<ExperimentRow> rows;
  std::vector<SummaryRow> summary;

  bool any_failed() const {
    return std::any_of(rows.begin(), rows.end(), [](const auto& r) { return !r.error.empty(); });
  }
};

/// Mean and population std per (method, attack, budget) over successful
/// rows, in first-appearance order.
inline std::vector<SummaryRow> summarize(const std::vector<ExperimentRow>& rows) {
  std::vector<SummaryRow> out;
  std::vector<std::vector<double>> values;
  for (const auto& r : rows) {
    if (!r.error.empty()) continue;
    auto it = std::find_if(out.begin(), out.end(), [&](const SummaryRow& s) {
      return s.method == r.method && s.attack == r.attack && s.budget == r.budget;
    });
    if (it == out.end()) {
      out.push_back({r.method, r.attack, r.budget});
      values.emplace_back();
      it = out.end() - 1;
    }
    values[static_cast<std::size_t>(it - out.begin())].push_back(r.accuracy);
  }
  for (std::size_t k = 0; k < out.size(); ++k) {
    const auto& v = values[k];
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    out[k].mean = mean;
    out[k].stddev = std::sqrt(var / static_cast<double>(v.size()));
    out[k].count = v.size();
  }
  return out;
}

inline PerturbedGraph apply_attack(const Graph& g, AttackKind a, double budget, std::uint64_t seed,
                                   const std::optional<Matrix>& external) {
  switch (a) {
    case AttackKind::none: return {g, 0, 0, false};
    case AttackKind::random: return random_flip(g, {budget}, seed);
    case AttackKind::heuristic: return heuristic_attack(g, {budget}, seed);
    case AttackKind::external:
      if (!external) throw ParameterError("external attack needs a perturbed edge list");
      return {with_adjacency(g, *external), 0, 0, false};
  }
  throw ParameterError("unknown attack");
}

/// Runs every (attack, budget, seed) cell: perturb, compute radii on the
/// perturbed graph, train each method, score the test mask. Cells run on
/// up to `jobs` threads; the row order is fixed regardless.
inline ExperimentReport run_experiment(const Graph& g, const ExperimentSpec& spec) {
  if (spec.methods.empty() || spec.attacks.empty() || spec.budgets.empty() || spec.seeds.empty())
    throw ParameterError("experiment lists must be non-empty");
  spec.config.validate();
  if (!g.has_labels() || mask_count(g.test) == 0)
    throw PreconditionError("experiment needs labels and a non-empty test mask");

  struct Cell {
    AttackKind attack;
    std::size_t budget_index;
    std::uint64_t seed;
  };
  std::vector<Cell> cells;
  for (auto a : spec.attacks)
    for (std::size_t b = 0; b < spec.budgets.size(); ++b)
      for (auto s : spec.seeds) cells.push_back({a, b, s});

  ExperimentReport report;
  report.rows.resize(cells.size() * spec.methods.size());
  auto run_cell = [&](std::size_t c) {
    const Cell& cell = cells[c];
    const double budget = spec.budgets[cell.budget_index];
    auto row_at = [&](std::size_t m) -> ExperimentRow& {
      return report.rows[c * spec.methods.size() + m];
    };
    for (std::size_t m = 0; m < spec.methods.size(); ++m)
      row_at(m) = {spec.methods[m], cell.attack, budget, cell.seed,
                   std::numeric_limits<double>::quiet_NaN(), {}};
    TrainConfig cfg = spec.config;
    cfg.seed = cell.seed;
    std::optional<PerturbedGraph> attacked;
    try {
      attacked = apply_attack(g, cell.attack, budget,
                              derive_seed(cell.seed, {500, static_cast<std::uint64_t>(cell.attack),
                                                      cell.budget_index}),
                              spec.external_adjacency);
    } catch (const std::exception& e) {
      for (std::size_t m = 0; m < spec.methods.size(); ++m) row_at(m).error = e.what();
      return;
    }
    RadiiCache cache;
    RadiiCache clean_cache;
    for (std::size_t m = 0; m < spec.methods.size(); ++m) {
      try {
        const Method method = spec.methods[m];
        if (spec.radii_from_clean && method != Method::baseline) {
          // Views stay those of the attacked graph; only the radii move.
          const auto& views = cached_views(attacked->graph, cfg, cache);
          const auto& radii = cached_radii(g, method, cfg, clean_cache);
          auto r = uses_curriculum(method) ? curriculum_train(attacked->graph, views, radii, cfg)
                                           : train_nct(attacked->graph, radii, cfg);
          row_at(m).accuracy = r.report.test_accuracy.value_or(0.0);
        } else {
          row_at(m).accuracy = run_method(attacked->graph, method, cfg, cache).report.test_accuracy.value_or(0.0);
        }
      } catch (const std::exception& e) {
        row_at(m).error = e.what();
      }
    }
  };

  const int jobs = std::max(1, std::min<int>(spec.jobs, static_cast<int>(cells.size())));
  if (jobs == 1) {
    for (std::size_t c = 0; c < cells.size(); ++c) run_cell(c);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (int t = 0; t < jobs; ++t)
      pool.emplace_back([&] {
        for (std::size_t c; (c = next.fetch_add(1)) < cells.size();) run_cell(c);
      });
    for (auto& th : pool) th.join();
  }
  report.summary = summarize(report.rows);
  return report;
}

/// CSV "method,attack,budget,seed,accuracy" (failed cells carry an error column).
inline std::string experiment_csv(const ExperimentReport& r) {
  std::ostringstream out;
  out << "method,attack,budget,seed,accuracy,error\n";
  for (const auto& row : r.rows) {
    std::string err = row.error;
    std::replace(err.begin(), err.end(), ',', ';');
    std::replace(err.begin(), err.end(), '\n', ' ');
    out << to_string(row.method) << ',' << to_string(row.attack) << ',' << io::fmt_double(row.budget)
        << ',' << row.seed << ',' << (row.error.empty() ? io::fmt_double(row.accuracy) : "nan") << ','
        << err << '\n';
  }
  return out.str();
}

inline std::string summary_csv(const ExperimentReport& r) {
  std::ostringstream out;
  out << "method,attack,budget,mean,std,runs\n";
  for (const auto& s : r.summary)
    out << to_string(s.method) << ',' << to_string(s.attack) << ',' << io::fmt_double(s.budget) << ','
        << io::fmt_double(s.mean) << ',' << io::fmt_double(s.stddev) << ',' << s.count << '\n';
  return out.str();
}

/// Method rows by (attack, budget) columns, cells "mean ± std" in percent.
inline std::string summary_table(const ExperimentReport& r) {
  std::vector<std::pair<AttackKind, double>> cols;
  std::vector<Method> methods;
  for (const auto& s : r.summary) {
    if (std::find(cols.begin(), cols.end(), std::pair{s.attack, s.budget}) == cols.end())
      cols.emplace_back(s.attack, s.budget);
    if (std::find(methods.begin(), methods.end(), s.method) == methods.end()) methods.push_back(s.method);
  }
  std::ostringstream out;
  auto pad = [](std::string s, std::size_t w) {
    if (s.size() < w) s.append(w - s.size(), ' ');
    return s;
  };
  out << pad("method", 10);
  for (const auto& [a, b] : cols)
    out << " | " << pad(std::string(to_string(a)) + " " + io::fmt_fixed(100.0 * b, 0) + "%", 16);
  out << '\n';
  for (auto m : methods) {
    out << pad(std::string(to_string(m)), 10);
    for (const auto& [a, b] : cols) {
      std::string cell = "-";
      for (const auto& s : r.summary)
        if (s.method == m && s.attack == a && s.budget == b)
          cell = io::fmt_fixed(100.0 * s.mean, 2) + " ± " + io::fmt_fixed(100.0 * s.stddev, 2);
      out << " | " << pad(cell, 16);
    }
    out << '\n';
  }
  return out.str();
}

// ---------------------------------------------------------- component sweep

struct SweepRow {
  int q = 0;
  std::size_t views = 0;
  double accuracy = 0.0;
};

/// REGE-D test accuracy as a function of the first view's component count.
inline std::vector<SweepRow> component_sweep(const Graph& g, const std::vector<int>& q_values,
                                             const TrainConfig& cfg) {
  if (q_values.empty()) throw ParameterError("sweep needs at least one q value");
  if (!g.has_labels() || mask_count(g.test) == 0)
    throw PreconditionError("sweep needs labels and a non-empty test mask");
  const auto decomp = eigendecompose(g, cfg.eigen_order);
  std::vector<SweepRow> rows;
  for (int q : q_values) {
    if (q < 1 || q > g.n()) throw ParameterError("sweep q value " + std::to_string(q) + " out of range");
    TrainConfig c = cfg;
    c.q_min = q;
    const auto views = generate_views(decomp, q, c.component_step, c.view_options());
    const auto radii = binary_deviation_radii(consensus(views), c.row_aggregation);
    const auto r = curriculum_train(g, views, radii, c);
    rows.push_back({q, views.count(), r.report.test_accuracy.value_or(0.0)});
  }
  return rows;
}

inline std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::ostringstream out;
  out << "q,views,accuracy\n";
  for (const auto& r : rows) out << r.q << ',' << r.views << ',' << io::fmt_double(r.accuracy) << '\n';
  return out.str();
}

}  // namespace rege
