#include "rege/rege.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace rege;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / "rege_graph_tests";
  fs::create_directories(dir);
  return dir / name;
}

void put(const fs::path& p, const std::string& s) { std::ofstream(p) << s; }

}  // namespace

TEST(LoadGraph, TriangleWithIdentityFeatures) {
  const auto p = scratch("tri.txt");
  put(p, "# triangle\n0 1\n1 2\n\n0 2\n");
  const Graph g = load_graph(p.string());
  EXPECT_EQ(g.n(), 3);
  EXPECT_EQ(g.edge_count(), 3u);
  EXPECT_TRUE(g.features.isApprox(Matrix::Identity(3, 3)));
  for (int i = 0; i < 3; ++i) EXPECT_EQ(g.degree(i), 2);
  EXPECT_NO_THROW(validate(g));
}

TEST(LoadGraph, DuplicateAndReversedEdgesCollapse) {
  const auto p = scratch("dup.txt");
  put(p, "a b\nb a\na b\nb c\n");
  const Graph g = load_graph(p.string());
  EXPECT_EQ(g.n(), 3);
  EXPECT_EQ(g.edge_count(), 2u);
  EXPECT_EQ(g.node_ids, (std::vector<std::string>{"a", "b", "c"}));
}

TEST(LoadGraph, MalformedLineReportsLineNumber) {
  const auto p = scratch("bad.txt");
  put(p, "0 1\n# note\n1 2 3\n");
  try {
    load_graph(p.string());
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
}

TEST(LoadGraph, FeatureRowMismatchIsDimensionError) {
  const auto e = scratch("e.txt"), f = scratch("f.csv");
  put(e, "0 1\n1 2\n");
  put(f, "node,x0,x1\n0,1,2\n1,3,4\n");
  EXPECT_THROW(load_graph(e.string(), f.string()), DimensionError);
}

TEST(LoadGraph, LabelsAndSplitsRoundTrip) {
  const auto e = scratch("e2.txt"), l = scratch("l.csv"), s = scratch("s.csv");
  put(e, "0 1\n1 2\n2 3\n");
  put(l, "node,label\n0,0\n1,0\n2,1\n3,1\n");
  put(s, "node,split\n0,train\n1,val\n2,test\n3,train\n");
  const Graph g = load_graph(e.string(), {}, l.string(), s.string());
  EXPECT_EQ(g.num_classes, 2);
  EXPECT_EQ(g.labels, (std::vector<int>{0, 0, 1, 1}));
  EXPECT_EQ(mask_count(g.train), 2u);
  EXPECT_TRUE(g.val[1]);
  EXPECT_TRUE(g.test[2]);
}

TEST(RandomSplit, DisjointSeededAndCovering) {
  Graph a = generate_sbm(60, 2, 0.3, 0.05, 3), b = generate_sbm(60, 2, 0.3, 0.05, 3);
  EXPECT_EQ(a.train, b.train);
  for (Eigen::Index i = 0; i < a.n(); ++i)
    EXPECT_EQ(int(a.train[i]) + int(a.val[i]) + int(a.test[i]), 1);
  EXPECT_EQ(mask_count(a.train), 6u);
  EXPECT_EQ(mask_count(a.val), 6u);
}

TEST(Normalize, RowSumsOfRegularGraph) {
  // Triangle plus self loops: every degree is 3, so A_hat = (A + I) / 3.
  Matrix a = Matrix::Ones(3, 3) - Matrix::Identity(3, 3);
  const auto h = symmetric_normalize(a).matrix;
  EXPECT_TRUE(h.isApprox(Matrix::Constant(3, 3, 1.0 / 3.0)));
}

TEST(Normalize, IsolatedNodeKeepsSelfLoop) {
  Matrix a = Matrix::Zero(2, 2);
  const auto h = symmetric_normalize(a).matrix;
  EXPECT_TRUE(h.isApprox(Matrix::Identity(2, 2)));
}

TEST(Karate, ShapeAndFactions) {
  const Graph g = karate();
  EXPECT_EQ(g.n(), 34);
  EXPECT_EQ(g.edge_count(), 78u);
  EXPECT_EQ(g.degree(0), 16);
  EXPECT_EQ(g.degree(33), 17);
  EXPECT_EQ(g.degree(11), 1);
  EXPECT_EQ(g.num_classes, 2);
  EXPECT_NO_THROW(validate(g));
}

TEST(Sbm, DeterministicAndValid) {
  const Graph a = generate_sbm(50, 3, 0.4, 0.02, 9), b = generate_sbm(50, 3, 0.4, 0.02, 9);
  EXPECT_EQ(a.adjacency, b.adjacency);
  EXPECT_NO_THROW(validate(a));
  EXPECT_EQ(a.num_classes, 3);
  const Graph c = generate_sbm(50, 3, 0.4, 0.02, 10);
  EXPECT_NE(a.adjacency, c.adjacency);
}

TEST(EdgeList, CanonicalExportReloads) {
  const Graph g = karate();
  std::ostringstream out;
  write_edge_list(out, g.node_ids, g.adjacency);
  const auto p = scratch("karate.txt");
  put(p, out.str());
  const Graph h = load_graph(p.string());
  Matrix permuted(g.n(), g.n());
  for (Eigen::Index i = 0; i < h.n(); ++i)
    for (Eigen::Index j = 0; j < h.n(); ++j)
      permuted(i, j) = g.adjacency(std::stoi(h.node_ids[i]), std::stoi(h.node_ids[j]));
  EXPECT_EQ(h.adjacency, permuted);
}

TEST(Validate, RejectsAsymmetricAndSelfLoop) {
  Graph g = karate();
  g.adjacency(0, 5) = 0.0;
  EXPECT_THROW(validate(g), ParameterError);
  g = karate();
  g.adjacency(3, 3) = 1.0;
  EXPECT_THROW(validate(g), ParameterError);
}
