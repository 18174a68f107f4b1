// Acceptance checks. One PASS/FAIL line per criterion; exit status is the
// number of failures (capped at 1).

#include "gradcheck.hpp"
#include "oracles.hpp"
#include "rege/rege.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>

using namespace rege;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(REGE_CLI) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

const fs::path kWork = fs::temp_directory_path() / "rege_acceptance";

// Node 0..33 DDR values as tabulated for the Karate club.
const std::vector<double> kKarateDdr = {1.0,  0.41, 0.5,  0.45, 0.16, 0.22, 0.19, 0.24, 0.29, 0.0,  0.16, 0.01,
                                        0.02, 0.31, 0.07, 0.08, 0.12, 0.0,  0.0,  0.06, 0.04, 0.03, 0.06, 0.25,
                                        0.13, 0.02, 0.08, 0.21, 0.1,  0.23, 0.26, 0.2,  0.73, 0.98};

Outcome karate_golden() {
  const auto out = kWork / "c1";
  const auto t0 = std::chrono::steady_clock::now();
  const int code = run_cli("radii --kind ddr --dataset karate --q-min 5 --step 5 --out " + out.string(),
                           kWork / "c1.log");
  const double secs = seconds_since(t0);
  if (code != 0) return {false, "radii command exited " + std::to_string(code)};
  std::istringstream in(io::read_file(out / "radii_ddr.csv"));
  std::string line;
  std::getline(in, line);
  std::vector<double> r(34, -1.0);
  while (std::getline(in, line)) {
    const auto a = line.find(','), b = line.rfind(',');
    r[static_cast<std::size_t>(std::stoi(line.substr(0, a)))] = std::stod(line.substr(a + 1, b - a - 1));
  }
  const double rho = oracle::spearman(r, kKarateDdr);
  const auto top = std::max_element(r.begin(), r.end()) - r.begin();
  std::ostringstream d;
  d << "spearman=" << io::fmt_fixed(rho, 3) << " (need >= 0.90), argmax=" << top << ", " << io::fmt_fixed(secs, 2)
    << " s";
  return {rho >= 0.90 && (top == 0 || top == 33) && secs < 5.0, d.str()};
}

Outcome deviation_endpoints() {
  const Eigen::Index n = 6;
  const Vector half = binary_deviation_raw({Matrix::Constant(n, n, 0.5)});
  Matrix w = Matrix::Zero(n, n);
  for (Eigen::Index j = 0; j < n; ++j) w(0, j) = w(j, 0) = 1.0;  // row 0 all ones
  w(0, 0) = 1.0;
  const Vector certain = binary_deviation_raw({w});
  bool ok = true;
  for (Eigen::Index i = 0; i < n; ++i) ok = ok && half[i] == 1.0 && certain[i] == 0.0;
  return {ok, "all-0.5 -> " + io::fmt_double(half[0]) + ", all-0/all-1 -> " + io::fmt_double(certain[0])};
}

std::vector<Graph> random_sbms() {
  std::vector<Graph> gs;
  std::mt19937_64 rng(2024);
  for (int t = 0; t < 50; ++t) {
    const auto n = std::uniform_int_distribution<Eigen::Index>(5, 100)(rng);
    const int blocks = std::uniform_int_distribution<int>(1, 4)(rng);
    const double p_in = std::uniform_real_distribution<double>(0.1, 0.6)(rng);
    const double p_out = std::uniform_real_distribution<double>(0.0, 0.1)(rng);
    gs.push_back(generate_sbm(n, blocks, p_in, p_out, rng()));
  }
  return gs;
}

Outcome spectral_identity(const std::vector<Graph>& gs) {
  const auto t0 = std::chrono::steady_clock::now();
  int exact = 0;
  double worst = 0.0;
  for (const auto& g : gs) {
    for (auto order : {EigenOrder::signed_descending, EigenOrder::magnitude_descending}) {
      const auto d = eigendecompose(g, order);
      const Matrix full = d.eigenvectors * d.eigenvalues.asDiagonal() * d.eigenvectors.transpose();
      worst = std::max(worst, (full - g.adjacency).cwiseAbs().maxCoeff());
      exact += reconstruct_view(d, g.n(), {order}) == g.adjacency;
    }
    // Independent check of the spectrum itself.
    const auto o = oracle::jacobi(g.adjacency);
    const auto d = eigendecompose(g);
    for (Eigen::Index k = 0; k < g.n(); ++k)
      worst = std::max(worst, std::abs(d.eigenvalues[k] - o.values[g.n() - 1 - k]));
  }
  const double secs = seconds_since(t0);
  std::ostringstream s;
  s << exact << "/" << 2 * gs.size() << " exact views, max error " << io::fmt_double(worst) << ", "
    << io::fmt_fixed(secs, 2) << " s";
  return {exact == static_cast<int>(2 * gs.size()) && worst < 1e-8 && secs < 60.0, s.str()};
}

Outcome energy_monotone(const std::vector<Graph>& gs) {
  std::vector<Graph> all = gs;
  all.push_back(karate());
  int bad = 0;
  for (const auto& g : all)
    for (auto order : {EigenOrder::signed_descending, EigenOrder::magnitude_descending}) {
      const auto d = eigendecompose(g, order);
      double prev = 0.0;
      for (Eigen::Index q = 1; q <= g.n(); ++q) {
        const double e = retained_energy(d, q);
        bad += e < prev;
        prev = e;
      }
      bad += prev != 1.0;
    }
  return {bad == 0, std::to_string(2 * all.size()) + " spectra, " + std::to_string(bad) + " violations"};
}

Outcome conformal_coverage() {
  const auto t0 = std::chrono::steady_clock::now();
  const int m_train = 400, m_cal = 200, m_test = 1000;
  int good = 0;
  std::ostringstream s;
  s << "coverage";
  for (std::uint64_t trial = 0; trial < 10; ++trial) {
    std::mt19937_64 rng(derive_seed(77, {trial}));
    std::uniform_real_distribution<double> ux(-3.0, 3.0);
    std::normal_distribution<double> eps;
    auto sample = [&](int m, Matrix& x, Matrix& y) {
      x.resize(m, 1);
      y.resize(m, 1);
      for (int i = 0; i < m; ++i) {
        x(i, 0) = ux(rng);
        y(i, 0) = std::sin(x(i, 0)) + (0.1 + 0.4 * std::abs(x(i, 0))) * eps(rng);
      }
    };
    Matrix xt, yt, xc, yc, xs, ys;
    sample(m_train, xt, yt);
    sample(m_cal, xc, yc);
    sample(m_test, xs, ys);
    StudentConfig cfg;
    cfg.width = 64;
    cfg.epochs = 400;
    cfg.lr = 5e-3;
    cfg.dropout = 0.1;
    cfg.seed = trial;
    const auto student = train_student(xt, yt, Mask(m_train, true), cfg);
    const auto cal = calibrate(student, xc, yc, Mask(m_cal, true), 0.05);
    const auto iv = conformal_intervals(student, cal, xs);
    int covered = 0;
    for (int i = 0; i < m_test; ++i) covered += iv.lower(i, 0) <= ys(i, 0) && ys(i, 0) <= iv.upper(i, 0);
    const double c = covered / double(m_test);
    good += c >= 0.92;
    s << " " << io::fmt_fixed(c, 3);
  }
  const double secs = seconds_since(t0);
  s << "; " << good << "/10 >= 0.92, " << io::fmt_fixed(secs, 1) << " s";
  return {good >= 9 && secs < 120.0, s.str()};
}

Outcome qhat_oracle() {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> nd;
  const std::pair<int, int> alphas[] = {{5, 100}, {1, 10}, {1, 2}};
  int mismatches = 0, total = 0;
  for (auto [num, den] : alphas)
    for (int t = 0; t < 1000; ++t) {
      const std::size_t m = 1 + rng() % 300;
      std::vector<double> s(m);
      for (auto& v : s) v = t % 3 == 0 ? std::round(nd(rng) * 3.0) : nd(rng);  // some ties
      mismatches += compute_qhat(s, double(num) / den) != oracle::qhat_bruteforce(s, num, den);
      ++total;
    }
  return {mismatches == 0, std::to_string(total - mismatches) + "/" + std::to_string(total) + " agree"};
}

Outcome gradients() {
  const auto t0 = std::chrono::steady_clock::now();
  gradcheck::Result gcn, mlp;
  for (std::uint64_t s = 0; s < 20; ++s) {
    gradcheck::merge(gcn, gradcheck::gcn_instance(s));
    gradcheck::merge(mlp, gradcheck::mlp_instance(s));
  }
  const double secs = seconds_since(t0);
  std::ostringstream d;
  d << "gcn max rel " << io::fmt_double(gcn.max_rel) << " (" << gcn.checked << " coords, " << gcn.skipped
    << " at kinks), mlp max rel " << io::fmt_double(mlp.max_rel) << " (" << mlp.checked << " coords, "
    << mlp.skipped << " at kinks), " << io::fmt_fixed(secs, 2) << " s";
  return {gcn.max_rel < 1e-4 && mlp.max_rel < 1e-4 && gcn.checked > 0 && mlp.checked > 0 && secs < 120.0,
          d.str()};
}

Outcome degeneracy() {
  int same = 0, total = 0;
  for (const Graph& g : {karate(), generate_sbm(90, 3, 0.25, 0.02, 8)}) {
    for (std::uint64_t seed : {0u, 5u}) {
      TrainConfig cfg;
      cfg.seed = seed;
      cfg.q_min = static_cast<int>(g.n());
      const auto views = generate_views(g, cfg.q_min, cfg.component_step);
      const auto a = curriculum_train(g, views, RadiusVector::zeros(g.n()), cfg);
      const auto b = train_baseline(g, cfg);
      same += a.params.w1 == b.params.w1 && a.params.w2 == b.params.w2 && views.count() == 1;
      ++total;
    }
  }
  return {same == total, std::to_string(same) + "/" + std::to_string(total) + " bit-identical"};
}

Outcome robustness() {
  const auto t0 = std::chrono::steady_clock::now();
  const Graph g = generate_sbm(200, 2, 0.10, 0.02, 1);
  ExperimentSpec spec;
  spec.methods = {Method::baseline, Method::rege_d, Method::rege_m, Method::nct_d, Method::nct_m};
  spec.attacks = {AttackKind::heuristic};
  spec.budgets = {0.10};
  for (std::uint64_t s = 0; s < 10; ++s) spec.seeds.push_back(s);
  const auto report = run_experiment(g, spec);
  if (report.any_failed()) return {false, "experiment cell failed"};
  auto mean = [&](Method m) {
    for (const auto& s : report.summary)
      if (s.method == m) return s.mean;
    return std::numeric_limits<double>::quiet_NaN();
  };
  const double base = mean(Method::baseline), rd = mean(Method::rege_d), rm = mean(Method::rege_m),
               nd = mean(Method::nct_d), nm = mean(Method::nct_m);
  const double secs = seconds_since(t0);
  std::ostringstream d;
  d << "baseline " << io::fmt_fixed(base, 4) << ", rege-d " << io::fmt_fixed(rd, 4) << ", rege-m "
    << io::fmt_fixed(rm, 4) << ", nct-d " << io::fmt_fixed(nd, 4) << ", nct-m " << io::fmt_fixed(nm, 4) << ", "
    << io::fmt_fixed(secs / 60.0, 1) << " min";
  const bool ok = rd >= base - 0.02 && rm >= base - 0.02 && rd >= nd - 0.02 && rm >= nm - 0.02 && secs < 1800.0;
  return {ok, d.str()};
}

/// Byte comparison of two output trees.
bool same_tree(const fs::path& a, const fs::path& b, std::string& diff) {
  std::vector<fs::path> fa, fb;
  for (const auto& e : fs::recursive_directory_iterator(a))
    if (e.is_regular_file()) fa.push_back(fs::relative(e.path(), a));
  for (const auto& e : fs::recursive_directory_iterator(b))
    if (e.is_regular_file()) fb.push_back(fs::relative(e.path(), b));
  std::sort(fa.begin(), fa.end());
  std::sort(fb.begin(), fb.end());
  if (fa != fb || fa.empty()) {
    diff = "file sets differ under " + a.string();
    return false;
  }
  for (const auto& f : fa)
    if (io::read_file(a / f) != io::read_file(b / f)) {
      diff = f.string();
      return false;
    }
  return true;
}

Outcome determinism() {
  const std::string quick = " --seed 11 --epochs-per-view 20 --teacher-epochs 40 --student-epochs 40 --student-width 64";
  const std::vector<std::pair<std::string, std::string>> commands = {
      {"views", "views --dataset karate"},
      {"radii-ddr", "radii --kind ddr --dump-consensus --dataset karate"},
      {"radii-stddev", "radii --kind stddev --dataset karate"},
      {"radii-entropy", "radii --kind entropy --dataset karate"},
      {"radii-mdr", "radii --kind mdr --dataset karate"},
      {"train", "train --dataset karate --method rege-m"},
      {"experiment",
       "experiment --dataset sbm:60,2,0.3,0.03 --method baseline,rege-d,nct-m --attack random,heuristic "
       "--budget 0.05,0.1 --seeds 1,2 --jobs 2"},
      {"sweep", "sweep --dataset karate --q-values 5,20,34"},
  };
  int same = 0;
  std::string failures;
  for (const auto& [name, cmd] : commands) {
    const auto a = kWork / "c10" / name / "a", b = kWork / "c10" / name / "b";
    fs::remove_all(a);
    fs::remove_all(b);
    const int ca = run_cli(cmd + quick + " --out " + a.string(), kWork / "c10a.log");
    const int cb = run_cli(cmd + quick + " --out " + b.string(), kWork / "c10b.log");
    std::string diff;
    if (ca == 0 && cb == 0 && same_tree(a, b, diff))
      ++same;
    else
      failures += " " + name + (diff.empty() ? "" : "(" + diff + ")");
  }
  std::string d = std::to_string(same) + "/" + std::to_string(commands.size()) + " commands byte-identical";
  if (!failures.empty()) d += "; differ:" + failures;
  return {same == static_cast<int>(commands.size()), d};
}

}  // namespace

int main() {
  fs::create_directories(kWork);
  const auto sbms = random_sbms();
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"karate ddr golden ranks", karate_golden},
      {"binary deviation endpoints", deviation_endpoints},
      {"spectral identity", [&] { return spectral_identity(sbms); }},
      {"energy monotonicity", [&] { return energy_monotone(sbms); }},
      {"conformal coverage", conformal_coverage},
      {"qhat order statistic", qhat_oracle},
      {"gradient correctness", gradients},
      {"degeneracy to baseline", degeneracy},
      {"robustness under heuristic attack", robustness},
      {"cli determinism", determinism},
  };
  int failed = 0, idx = 0;
  for (const auto& [name, check] : criteria) {
    ++idx;
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  criterion " << idx << ": " << name << " -- " << o.detail
              << std::endl;
  }
  std::cout << (criteria.size() - failed) << "/" << criteria.size() << " criteria passed" << std::endl;
  return failed ? 1 : 0;
}
