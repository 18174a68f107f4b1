// Runs the built command-line tool end to end.

#include "rege/rege.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>

namespace fs = std::filesystem;

namespace {

const fs::path kWork = fs::temp_directory_path() / "rege_cli_tests";

struct Run {
  int code;
  std::string out;
};

Run cli(const std::string& args) {
  fs::create_directories(kWork);
  const auto log = kWork / "stdout.txt";
  const std::string cmd = std::string(REGE_CLI) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, rege::io::read_file(log)};
}

std::string slurp(const fs::path& p) { return rege::io::read_file(p); }

std::vector<std::string> lines(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

const std::string kQuick = " --epochs-per-view 20 --teacher-epochs 40 --student-epochs 40 --student-width 32";

}  // namespace

TEST(Cli, HelpOnEverySubcommand) {
  for (const char* sub : {"views", "radii", "train", "experiment", "sweep"}) {
    const auto r = cli(std::string(sub) + " --help");
    EXPECT_EQ(r.code, 0) << sub;
    for (const char* flag : {"--dataset", "--features", "--labels", "--splits", "--config", "--seed", "--out",
                             "--q-min", "--step", "--alpha", "--method", "--attack", "--budget", "--jobs",
                             "--perturbed-edges"})
      EXPECT_NE(r.out.find(flag), std::string::npos) << sub << " " << flag;
  }
}

TEST(Cli, ViewsOnKarate) {
  const auto out = kWork / "views";
  fs::remove_all(out);
  ASSERT_EQ(cli("views --dataset karate --out " + out.string()).code, 0);
  int files = 0;
  for (const auto& e : fs::directory_iterator(out / "views")) files += e.path().extension() == ".txt";
  EXPECT_EQ(files, 7);
  EXPECT_EQ(slurp(out / "views" / "view_0034.txt"), slurp(out / "original.txt"));
  const auto energy = lines(slurp(out / "energy.csv"));
  ASSERT_EQ(energy.size(), 8u);
  double prev = 0.0;
  for (std::size_t i = 1; i < energy.size(); ++i) {
    const double e = std::stod(energy[i].substr(energy[i].find(',') + 1));
    EXPECT_GE(e, prev);
    prev = e;
  }
  EXPECT_EQ(prev, 1.0);
}

TEST(Cli, DdrRadiiCsv) {
  const auto out = kWork / "radii";
  ASSERT_EQ(cli("radii --kind ddr --dataset karate --out " + out.string()).code, 0);
  const auto rows = lines(slurp(out / "radii_ddr.csv"));
  ASSERT_EQ(rows.size(), 35u);
  EXPECT_EQ(rows[0], "node_id,radius,kind");
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto a = rows[i].find(','), b = rows[i].rfind(',');
    const double v = std::stod(rows[i].substr(a + 1, b - a - 1));
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(Cli, MdrWithoutLabelsFails) {
  const auto edges = kWork / "plain.txt";
  std::ofstream(edges) << "0 1\n1 2\n2 0\n2 3\n";
  const auto r = cli("radii --kind mdr --dataset " + edges.string() + " --out " + (kWork / "x").string());
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.out.find("label"), std::string::npos);
}

TEST(Cli, ZeroRadiiFullViewMatchesBaseline) {
  const auto out = kWork / "train";
  const auto a = cli("train --dataset karate --method rege-d --q-min 34 --radii-zero --seed 3 --out " +
                     out.string() + kQuick);
  const auto b = cli("train --dataset karate --method baseline --q-min 34 --seed 3 --out " + out.string() + kQuick);
  ASSERT_EQ(a.code, 0) << a.out;
  ASSERT_EQ(b.code, 0) << b.out;
  const auto acc = [](const std::string& s) { return s.substr(s.find("test accuracy:")); };
  EXPECT_EQ(acc(a.out), acc(b.out));
  EXPECT_EQ(slurp(out / "rege-d" / "best.ckpt"), slurp(out / "baseline" / "best.ckpt"));
}

TEST(Cli, ConfigFileIsOverriddenByFlags) {
  const auto cfg = kWork / "run.cfg";
  std::ofstream(cfg) << "# quick run\nseed = 5\nepochs_per_view=20\nmethod=baseline\n";
  const auto out = kWork / "cfg";
  ASSERT_EQ(cli("train --dataset karate --config " + cfg.string() + " --seed 6 --out " + out.string()).code, 0);
  const auto j = nlohmann::json::parse(slurp(out / "baseline" / "report.json"));
  EXPECT_EQ(j["config"]["seed"], 6);
  EXPECT_EQ(j["config"]["epochs_per_view"], 20);
}

TEST(Cli, UnknownConfigKeyRejected) {
  const auto cfg = kWork / "bad.cfg";
  std::ofstream(cfg) << "learning_speed=3\n";
  const auto r = cli("train --dataset karate --config " + cfg.string());
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.out.find("learning-speed"), std::string::npos);
}

TEST(Cli, ExperimentTwoSeeds) {
  const auto out = kWork / "exp";
  const auto r = cli("experiment --dataset karate --method baseline --attack random --budget 0.05 --seeds 1,2 --out " +
                     out.string() + kQuick);
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_EQ(lines(slurp(out / "report.csv")).size(), 3u);
  EXPECT_EQ(lines(slurp(out / "summary.csv")).size(), 2u);
  EXPECT_NE(slurp(out / "summary.txt").find("±"), std::string::npos);
}

TEST(Cli, ExperimentFailureExitsNonzero) {
  const auto r = cli("experiment --dataset karate --method baseline --attack external --budget 0 --out " +
                     (kWork / "fail").string() + kQuick);
  EXPECT_NE(r.code, 0);
}

TEST(Cli, ExternalPerturbedEdges) {
  const auto out = kWork / "ext";
  ASSERT_EQ(cli("views --dataset karate --out " + out.string()).code, 0);
  const auto r = cli("experiment --dataset karate --method baseline --attack external --budget 0 --perturbed-edges " +
                     (out / "views" / "view_0005.txt").string() + " --out " + out.string() + kQuick);
  EXPECT_EQ(r.code, 0) << r.out;
}

TEST(Cli, SweepRows) {
  const auto out = kWork / "sweep";
  ASSERT_EQ(cli("sweep --dataset karate --q-values 5,34 --out " + out.string() + kQuick).code, 0);
  EXPECT_EQ(lines(slurp(out / "sweep.csv")).size(), 3u);
}

TEST(Cli, BadDatasetIsStructuredError) {
  const auto r = cli("views --dataset /nonexistent/graph.txt");
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.out.find("error"), std::string::npos);
}
