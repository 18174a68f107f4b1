// rege: command-line driver for view generation, radii, training variants,
// perturbation experiments and component sweeps.

#include "rege/rege.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace rege;

namespace {

struct RunConfig {
  std::string dataset;
  std::string features, labels, splits;
  std::string config_path;
  std::string out = "out";
  std::uint64_t data_seed = 0;

  TrainConfig train;
  std::string eigen_order = "signed";
  std::string scale_scope = "full";
  std::string row_aggregation = "all";

  std::string method = "rege-d";
  std::string attack = "heuristic";
  std::string budget = "0.1";
  std::string seeds = "0";
  std::string q_values;
  std::string perturbed_edges;
  int jobs = 1;

  std::string kind = "ddr";
  bool dump_consensus = false;
  bool radii_zero = false;
  bool radii_from_clean = false;
  std::string run_id;
};

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <class T>
std::vector<T> parse_list(const std::string& s, const char* what) {
  std::vector<T> out;
  for (const auto& item : split_list(s)) {
    try {
      if constexpr (std::is_same_v<T, double>)
        out.push_back(std::stod(item));
      else if constexpr (std::is_same_v<T, int>)
        out.push_back(std::stoi(item));
      else
        out.push_back(static_cast<T>(std::stoull(item)));
    } catch (const std::exception&) {
      throw ParameterError(std::string("bad ") + what + " value '" + item + "'");
    }
  }
  if (out.empty()) throw ParameterError(std::string("empty ") + what + " list");
  return out;
}

/// Adds every shared flag to `sub`, bound to `rc`.
void add_common_options(CLI::App* sub, RunConfig& rc) {
  auto& t = rc.train;
  sub->add_option("--dataset", rc.dataset,
                  "Edge-list path, 'karate', or 'sbm:N,BLOCKS,P_IN,P_OUT'");
  sub->add_option("--features", rc.features, "Feature CSV (header; first column node id)");
  sub->add_option("--labels", rc.labels, "Label CSV (header; node_id,label)");
  sub->add_option("--splits", rc.splits, "Split CSV (header; node_id,split)");
  sub->add_option("--config", rc.config_path,
                  "key=value config file; command-line flags take precedence");
  sub->add_option("--seed", t.seed, "Seed for training, noise and perturbations")->capture_default_str();
  sub->add_option("--data-seed", rc.data_seed, "Seed for SBM generation and random splits")
      ->capture_default_str();
  sub->add_option("--out", rc.out, "Output directory")->capture_default_str();
  sub->add_option("--q-min", t.q_min, "Components in the first view")->capture_default_str();
  sub->add_option("--step", t.component_step, "Component increment between views")->capture_default_str();
  sub->add_option("--alpha", t.alpha, "Conformal miscoverage level")->capture_default_str();
  sub->add_option("--method", rc.method,
                  "baseline|rege-d|rege-m|nct-d|nct-m (comma list for experiment)")
      ->capture_default_str();
  sub->add_option("--attack", rc.attack, "none|random|heuristic|external (comma list)")
      ->capture_default_str();
  sub->add_option("--budget", rc.budget, "Perturbation rates, comma list")->capture_default_str();
  sub->add_option("--seeds", rc.seeds, "Experiment seeds, comma list")->capture_default_str();
  sub->add_option("--jobs", rc.jobs, "Concurrent experiment cells")->capture_default_str();
  sub->add_option("--perturbed-edges", rc.perturbed_edges,
                  "Pre-attacked edge list used by --attack external");
  sub->add_option("--epochs-per-view", t.epochs_per_view, "Epochs per view / stage")->capture_default_str();
  sub->add_option("--patience", t.patience_views, "Early-stopping patience in views")->capture_default_str();
  sub->add_option("--hidden", t.hidden, "GCN hidden units")->capture_default_str();
  sub->add_option("--dropout", t.dropout, "GCN dropout probability")->capture_default_str();
  sub->add_option("--lr", t.lr, "GCN learning rate")->capture_default_str();
  sub->add_option("--weight-decay", t.weight_decay, "L2 weight decay on layer-1 weights")->capture_default_str();
  sub->add_option("--stages", t.stages, "Stages for nct/baseline (0 = number of views)")->capture_default_str();
  sub->add_option("--bias", t.use_bias, "Use GCN biases")->capture_default_str();
  sub->add_option("--eigen-order", rc.eigen_order, "signed|magnitude")->capture_default_str();
  sub->add_option("--scale-scope", rc.scale_scope, "full|off-diagonal")->capture_default_str();
  sub->add_option("--row-aggregation", rc.row_aggregation, "all|incident")->capture_default_str();
  sub->add_option("--teacher-epochs", t.teacher_epochs, "Teacher GCN epochs")->capture_default_str();
  sub->add_option("--student-epochs", t.student_epochs, "Student MLP epochs")->capture_default_str();
  sub->add_option("--student-width", t.student_width, "Student hidden width")->capture_default_str();
  sub->add_option("--student-layers", t.student_layers, "Student hidden layers")->capture_default_str();
  sub->add_option("--student-dropout", t.student_dropout, "Student dropout")->capture_default_str();
  sub->add_option("--student-lr", t.student_lr, "Student learning rate")->capture_default_str();
  sub->add_option("--distill-logits", t.distill_logits, "Distill teacher logits instead of hidden")
      ->capture_default_str();
  sub->add_option("--pooled-qhat", t.pooled_qhat, "One conformal offset for all dimensions")
      ->capture_default_str();
}

void finalize(RunConfig& rc) {
  if (rc.dataset.empty()) throw ParameterError("--dataset is required");
  rc.train.eigen_order = rc.eigen_order == "magnitude" ? EigenOrder::magnitude_descending
                         : rc.eigen_order == "signed"
                             ? EigenOrder::signed_descending
                             : throw ParameterError("--eigen-order must be signed or magnitude");
  rc.train.scale_scope = rc.scale_scope == "full" ? ScaleScope::full_matrix
                         : rc.scale_scope == "off-diagonal"
                             ? ScaleScope::off_diagonal
                             : throw ParameterError("--scale-scope must be full or off-diagonal");
  rc.train.row_aggregation = rc.row_aggregation == "all" ? RowAggregation::all_entries
                             : rc.row_aggregation == "incident"
                                 ? RowAggregation::incident_only
                                 : throw ParameterError("--row-aggregation must be all or incident");
  rc.train.validate();
}

Graph load_dataset(const RunConfig& rc) {
  if (rc.dataset == "karate") return karate(rc.data_seed);
  if (rc.dataset.rfind("sbm:", 0) == 0) {
    const auto parts = split_list(rc.dataset.substr(4));
    if (parts.size() != 4) throw ParameterError("sbm dataset is 'sbm:N,BLOCKS,P_IN,P_OUT'");
    return generate_sbm(std::stol(parts[0]), std::stoi(parts[1]), std::stod(parts[2]),
                        std::stod(parts[3]), rc.data_seed);
  }
  auto opt = [](const std::string& s) { return s.empty() ? std::optional<std::string>{} : s; };
  return load_graph(rc.dataset, opt(rc.features), opt(rc.labels), opt(rc.splits), rc.data_seed);
}

std::string energy_csv(const EigenDecomposition& d, const std::vector<int>& counts) {
  std::ostringstream out;
  out << "components,energy\n";
  for (int k : counts) out << k << ',' << io::fmt_double(retained_energy(d, k)) << '\n';
  return out.str();
}

int cmd_views(RunConfig& rc) {
  const Graph g = load_dataset(rc);
  const auto& t = rc.train;
  const auto d = eigendecompose(g, t.eigen_order);
  const auto seq = generate_views(d, std::min<int>(t.q_min, static_cast<int>(g.n())),
                                  t.component_step, t.view_options());
  const fs::path out(rc.out);
  write_views(out / "views", g.node_ids, seq);
  io::atomic_write(out / "energy.csv", energy_csv(d, seq.component_counts));
  std::ostringstream original;
  write_edge_list(original, g.node_ids, g.adjacency);
  io::atomic_write(out / "original.txt", original.str());
  std::cout << "wrote " << seq.count() << " views to " << (out / "views").string() << '\n';
  for (std::size_t i = 0; i < seq.count(); ++i)
    std::cout << "  k=" << seq.component_counts[i] << " edges=" << static_cast<long>(seq.views[i].sum() / 2)
              << " energy=" << io::fmt_fixed(retained_energy(d, seq.component_counts[i]), 4) << '\n';
  return 0;
}

int cmd_radii(RunConfig& rc) {
  const Graph g = load_dataset(rc);
  const auto& t = rc.train;
  const auto kind = parse_radius_kind(rc.kind);
  const fs::path out(rc.out);
  RadiusVector r;
  if (kind == RadiusKind::mdr) {
    if (!g.has_labels()) throw PreconditionError("mdr radii need a labeled dataset (--labels)");
    auto a = model_dependent_radii(g, t);
    io::atomic_write(out / "calibration.csv", calibration_csv(a.calibration));
    r = std::move(a.radii);
  } else {
    const auto w = consensus(generate_views(g, std::min<int>(t.q_min, static_cast<int>(g.n())),
                                            t.component_step, t.view_options()));
    if (rc.dump_consensus) io::atomic_write(out / "consensus.csv", consensus_csv(g.node_ids, w));
    r = kind == RadiusKind::ddr      ? binary_deviation_radii(w, t.row_aggregation)
        : kind == RadiusKind::stddev ? stddev_radii(w)
                                     : entropy_radii(w);
  }
  const auto path = out / ("radii_" + std::string(to_string(kind)) + ".csv");
  io::atomic_write(path, radii_csv(g.node_ids, r));
  std::vector<double> v(r.values.data(), r.values.data() + r.values.size());
  std::sort(v.begin(), v.end());
  const double median = v.size() % 2 ? v[v.size() / 2] : 0.5 * (v[v.size() / 2 - 1] + v[v.size() / 2]);
  std::cout << "wrote " << path.string() << '\n'
            << "min=" << io::fmt_fixed(v.front(), 4) << " median=" << io::fmt_fixed(median, 4)
            << " max=" << io::fmt_fixed(v.back(), 4) << '\n';
  return 0;
}

int cmd_train(RunConfig& rc) {
  const Graph g = load_dataset(rc);
  const auto method = parse_method(rc.method);
  const auto& t = rc.train;
  RadiiCache cache;
  if (rc.radii_zero && method != Method::baseline) {
    cache.ddr = RadiusVector::zeros(g.n(), RadiusKind::ddr);
    cache.mdr = RadiusVector::zeros(g.n(), RadiusKind::mdr);
  }
  const auto res = run_method(g, method, t, cache);
  const fs::path dir = fs::path(rc.out) / (rc.run_id.empty() ? std::string(to_string(method)) : rc.run_id);
  save_checkpoint(dir / "best.ckpt", res.params, t);
  io::atomic_write(dir / "report.json", to_json(res.report).dump(2) + "\n");
  std::cout << "method " << to_string(method) << ": " << res.report.stages.size() << " stage(s), best stage "
            << res.report.best_stage << ", " << io::fmt_fixed(res.report.wall_seconds, 2) << " s\n";
  if (res.report.test_accuracy)
    std::cout << "test accuracy: " << io::fmt_fixed(*res.report.test_accuracy, 4) << '\n';
  else
    std::cout << "test accuracy: n/a (empty test mask)\n";
  return 0;
}

int cmd_experiment(RunConfig& rc) {
  const Graph g = load_dataset(rc);
  ExperimentSpec spec;
  for (const auto& m : split_list(rc.method)) spec.methods.push_back(parse_method(m));
  for (const auto& a : split_list(rc.attack)) spec.attacks.push_back(parse_attack(a));
  spec.budgets = parse_list<double>(rc.budget, "budget");
  spec.seeds = parse_list<std::uint64_t>(rc.seeds, "seed");
  spec.config = rc.train;
  spec.jobs = rc.jobs;
  spec.radii_from_clean = rc.radii_from_clean;
  if (!rc.perturbed_edges.empty())
    spec.external_adjacency = adjacency_from_edges(g.node_ids, read_edge_list(rc.perturbed_edges));
  const auto report = run_experiment(g, spec);
  const fs::path out(rc.out);
  io::atomic_write(out / "report.csv", experiment_csv(report));
  io::atomic_write(out / "summary.csv", summary_csv(report));
  const auto table = summary_table(report);
  io::atomic_write(out / "summary.txt", table);
  std::cout << table;
  if (report.any_failed()) {
    for (const auto& r : report.rows)
      if (!r.error.empty())
        std::cerr << "cell " << to_string(r.method) << '/' << to_string(r.attack) << '/'
                  << io::fmt_double(r.budget) << "/seed " << r.seed << " failed: " << r.error << '\n';
    return 3;
  }
  return 0;
}

int cmd_sweep(RunConfig& rc) {
  const Graph g = load_dataset(rc);
  std::vector<int> qs;
  if (rc.q_values.empty()) {
    for (int q : component_schedule(g.n(), std::min<int>(rc.train.q_min, static_cast<int>(g.n())),
                                    rc.train.component_step))
      qs.push_back(q);
  } else {
    qs = parse_list<int>(rc.q_values, "q");
  }
  const auto rows = component_sweep(g, qs, rc.train);
  const auto path = fs::path(rc.out) / "sweep.csv";
  io::atomic_write(path, sweep_csv(rows));
  std::cout << sweep_csv(rows);
  return 0;
}

/// Reads `key=value` lines ('#' comments) and turns them into `--key=value`
/// arguments. Keys must name a flag of `sub`.
std::vector<std::string> config_args(const std::string& path, const CLI::App& sub) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config file '" + path + "'");
  std::vector<std::string> args;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError("config line is not key=value", lineno);
    auto key = line.substr(0, eq), value = line.substr(eq + 1);
    key.erase(0, key.find_first_not_of(" \t"));
    key.erase(key.find_last_not_of(" \t") + 1);
    value.erase(0, value.find_first_not_of(" \t"));
    value.erase(value.find_last_not_of(" \t\r") + 1);
    std::replace(key.begin(), key.end(), '_', '-');
    if (key == "config") throw ParseError("config files cannot include other config files", lineno);
    const CLI::Option* opt = nullptr;
    try {
      opt = sub.get_option("--" + key);
    } catch (const CLI::OptionNotFound&) {
    }
    if (!opt) throw ParseError("unknown config key '" + key + "'", lineno);
    args.push_back("--" + key + "=" + value);
  }
  return args;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Radius-noise curriculum training for robust node classification"};
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  RunConfig rc;

  auto* views = app.add_subcommand("views", "Write reconstructed views and the retained-energy table");
  auto* radii = app.add_subcommand("radii", "Compute node radii and write them as CSV");
  auto* train = app.add_subcommand("train", "Train one method and write checkpoint + report");
  auto* experiment = app.add_subcommand("experiment", "Run the method x attack x budget x seed grid");
  auto* sweep = app.add_subcommand("sweep", "REGE-D accuracy as a function of the first view's components");
  for (auto* s : {views, radii, train, experiment, sweep}) add_common_options(s, rc);
  radii->add_option("--kind", rc.kind, "ddr|mdr|stddev|entropy")->capture_default_str();
  radii->add_flag("--dump-consensus", rc.dump_consensus, "Also write the consensus matrix W");
  train->add_flag("--radii-zero", rc.radii_zero, "Use all-zero radii (degeneracy check)");
  train->add_option("--run-id", rc.run_id, "Run directory name (default: method)");
  experiment->add_flag("--radii-from-clean", rc.radii_from_clean,
                       "Compute radii on the clean graph instead of the attacked one");
  sweep->add_option("--q-values", rc.q_values, "Comma list of first-view component counts");

  // Splice config-file values in front of the real flags so flags win.
  std::vector<std::string> args(argv + 1, argv + argc);
  try {
    if (!args.empty()) {
      CLI::App* sub = nullptr;
      for (auto* s : {views, radii, train, experiment, sweep})
        if (s->get_name() == args.front()) sub = s;
      std::string cfg;
      for (std::size_t i = 1; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size()) cfg = args[i + 1];
        if (args[i].rfind("--config=", 0) == 0) cfg = args[i].substr(9);
      }
      if (sub && !cfg.empty()) {
        const auto extra = config_args(cfg, *sub);
        args.insert(args.begin() + 1, extra.begin(), extra.end());
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  std::reverse(args.begin(), args.end());
  try {
    app.parse(std::move(args));
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    finalize(rc);
    if (*views) return cmd_views(rc);
    if (*radii) return cmd_radii(rc);
    if (*train) return cmd_train(rc);
    if (*experiment) return cmd_experiment(rc);
    if (*sweep) return cmd_sweep(rc);
  } catch (const PreconditionError& e) {
    std::cerr << "precondition failed: " << e.what() << '\n';
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
