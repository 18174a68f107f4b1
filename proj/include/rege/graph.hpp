#pragma once

#include "rege/core.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace rege {

/// Undirected, unweighted graph with optional node labels and a
/// train/val/test split. Label -1 marks an unlabeled node.
struct Graph {
  std::vector<std::string> node_ids;
  Matrix adjacency;
  Matrix features;
  std::vector<int> labels;  // empty when the dataset has no labels
  int num_classes = 0;
  Mask train, val, test;

  Eigen::Index n() const { return adjacency.rows(); }
  bool has_labels() const { return !labels.empty(); }

  std::size_t edge_count() const {
    std::size_t c = 0;
    for (Eigen::Index i = 0; i < n(); ++i)
      for (Eigen::Index j = i + 1; j < n(); ++j) c += adjacency(i, j) != 0.0;
    return c;
  }

  int degree(Eigen::Index i) const {
    return static_cast<int>(adjacency.row(i).sum());
  }
};

struct NormalizedAdjacency {
  Matrix matrix;
};

struct SplitFractions {
  double train = 0.1;
  double val = 0.1;
};

/// Throws DimensionError / ParameterError when `g` violates the Graph
/// invariants (binary symmetric adjacency, zero diagonal, disjoint masks).
inline void validate(const Graph& g) {
  const auto n = g.n();
  if (g.adjacency.cols() != n) throw DimensionError("adjacency must be square");
  if (static_cast<Eigen::Index>(g.node_ids.size()) != n)
    throw DimensionError("node id count does not match adjacency size");
  if (g.features.rows() != n)
    throw DimensionError("feature rows do not match node count");
  for (Eigen::Index i = 0; i < n; ++i) {
    if (g.adjacency(i, i) != 0.0) throw ParameterError("adjacency has a self-loop");
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double a = g.adjacency(i, j);
      if (a != g.adjacency(j, i)) throw ParameterError("adjacency is not symmetric");
      if (a != 0.0 && a != 1.0) throw ParameterError("adjacency is not binary");
    }
  }
  if (g.has_labels() && static_cast<Eigen::Index>(g.labels.size()) != n)
    throw DimensionError("label count does not match node count");
  for (const Mask* m : {&g.train, &g.val, &g.test})
    if (!m->empty() && static_cast<Eigen::Index>(m->size()) != n)
      throw DimensionError("mask length does not match node count");
  for (Eigen::Index i = 0; i < n; ++i) {
    int hits = 0;
    for (const Mask* m : {&g.train, &g.val, &g.test})
      hits += (!m->empty() && (*m)[i]) ? 1 : 0;
    if (hits > 1) throw ParameterError("split masks overlap");
  }
}

/// Seeded random split of the labeled nodes. Counts are rounded and each
/// of train/val receives at least one node when enough labeled nodes exist.
inline void random_split(Graph& g, std::uint64_t seed, SplitFractions f = {}) {
  const auto n = static_cast<std::size_t>(g.n());
  g.train.assign(n, false);
  g.val.assign(n, false);
  g.test.assign(n, false);
  std::vector<std::size_t> labeled;
  for (std::size_t i = 0; i < n; ++i)
    if (g.has_labels() && g.labels[i] >= 0) labeled.push_back(i);
  std::mt19937_64 rng(seed);
  std::shuffle(labeled.begin(), labeled.end(), rng);
  const auto m = labeled.size();
  auto n_train = static_cast<std::size_t>(std::llround(f.train * m));
  auto n_val = static_cast<std::size_t>(std::llround(f.val * m));
  if (m >= 3) {
    n_train = std::max<std::size_t>(n_train, 1);
    n_val = std::max<std::size_t>(n_val, 1);
  }
  n_train = std::min(n_train, m);
  n_val = std::min(n_val, m - n_train);
  for (std::size_t k = 0; k < m; ++k) {
    if (k < n_train)
      g.train[labeled[k]] = true;
    else if (k < n_train + n_val)
      g.val[labeled[k]] = true;
    else
      g.test[labeled[k]] = true;
  }
}

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto ws = " \t\r\n";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_csv(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    out.emplace_back(trim(line.substr(start, pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline bool skippable(std::string_view line) {
  const auto t = trim(line);
  return t.empty() || t.front() == '#';
}

inline std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path + "'");
  return in;
}

inline double parse_double(const std::string& tok, std::size_t line) {
  try {
    std::size_t used = 0;
    const double v = std::stod(tok, &used);
    if (used != tok.size()) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw ParseError("expected a number, got '" + tok + "'", line);
  }
}

inline int parse_int(const std::string& tok, std::size_t line) {
  try {
    std::size_t used = 0;
    const int v = std::stoi(tok, &used);
    if (used != tok.size()) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw ParseError("expected an integer, got '" + tok + "'", line);
  }
}

/// Rows of a headed CSV keyed by the first column, in file order.
inline std::vector<std::pair<std::string, std::vector<std::string>>> read_keyed_csv(
    const std::string& path, std::size_t& header_cols) {
  auto in = open_input(path);
  std::string line;
  std::size_t lineno = 0;
  header_cols = 0;
  std::vector<std::pair<std::string, std::vector<std::string>>> rows;
  while (std::getline(in, line)) {
    ++lineno;
    if (skippable(line)) continue;
    auto cells = split_csv(line);
    if (header_cols == 0) {
      header_cols = cells.size();
      if (header_cols < 2) throw ParseError("CSV header needs at least two columns", lineno);
      continue;
    }
    if (cells.size() != header_cols)
      throw ParseError("expected " + std::to_string(header_cols) + " columns", lineno);
    auto key = cells.front();
    cells.erase(cells.begin());
    rows.emplace_back(std::move(key), std::move(cells));
  }
  if (header_cols == 0) throw ParseError("CSV file '" + path + "' has no header");
  return rows;
}

}  // namespace detail

/// Raw (u, v) identifier pairs of an edge-list file. '#' lines and blank
/// lines are ignored; any other line must hold exactly two tokens.
inline std::vector<std::pair<std::string, std::string>> read_edge_list(
    const std::string& path) {
  auto in = detail::open_input(path);
  std::vector<std::pair<std::string, std::string>> edges;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::skippable(line)) continue;
    std::istringstream ss(line);
    std::string u, v, extra;
    if (!(ss >> u >> v) || (ss >> extra))
      throw ParseError("malformed edge '" + std::string(detail::trim(line)) + "'", lineno);
    edges.emplace_back(std::move(u), std::move(v));
  }
  return edges;
}

/// Builds a binary adjacency over a fixed node id set. Unknown ids are an
/// error; self-loops are dropped; duplicates and reversed pairs collapse.
inline Matrix adjacency_from_edges(
    const std::vector<std::string>& node_ids,
    const std::vector<std::pair<std::string, std::string>>& edges) {
  std::unordered_map<std::string, Eigen::Index> index;
  for (std::size_t i = 0; i < node_ids.size(); ++i)
    index.emplace(node_ids[i], static_cast<Eigen::Index>(i));
  const auto n = static_cast<Eigen::Index>(node_ids.size());
  Matrix a = Matrix::Zero(n, n);
  for (const auto& [u, v] : edges) {
    auto iu = index.find(u), iv = index.find(v);
    if (iu == index.end() || iv == index.end())
      throw DimensionError("edge (" + u + ", " + v + ") references an unknown node");
    if (iu->second == iv->second) continue;
    a(iu->second, iv->second) = 1.0;
    a(iv->second, iu->second) = 1.0;
  }
  return a;
}

/// Loads a graph from an edge list plus optional feature, label and split
/// CSVs. Node ids map to dense indices in first-appearance order. Missing
/// features become the identity; a missing split becomes a seeded random
/// split of the labeled nodes.
inline Graph load_graph(const std::string& edge_list_path,
                        const std::optional<std::string>& features_path = {},
                        const std::optional<std::string>& labels_path = {},
                        const std::optional<std::string>& splits_path = {},
                        std::uint64_t split_seed = 0, SplitFractions fractions = {}) {
  const auto edges = read_edge_list(edge_list_path);
  Graph g;
  std::unordered_map<std::string, Eigen::Index> index;
  auto intern = [&](const std::string& id) {
    if (index.emplace(id, static_cast<Eigen::Index>(g.node_ids.size())).second)
      g.node_ids.push_back(id);
  };
  for (const auto& [u, v] : edges) {
    intern(u);
    intern(v);
  }
  const auto n = static_cast<Eigen::Index>(g.node_ids.size());
  g.adjacency = adjacency_from_edges(g.node_ids, edges);

  auto lookup = [&](const std::string& id, const std::string& what) {
    auto it = index.find(id);
    if (it == index.end())
      throw DimensionError(what + " row for node '" + id + "' not in the edge list");
    return it->second;
  };

  if (features_path) {
    std::size_t cols = 0;
    const auto rows = detail::read_keyed_csv(*features_path, cols);
    if (static_cast<Eigen::Index>(rows.size()) != n)
      throw DimensionError("feature file has " + std::to_string(rows.size()) +
                           " rows, edge list has " + std::to_string(n) + " nodes");
    g.features = Matrix::Zero(n, static_cast<Eigen::Index>(cols - 1));
    std::vector<bool> seen(static_cast<std::size_t>(n), false);
    std::size_t r = 0;
    for (const auto& [id, cells] : rows) {
      ++r;
      const auto i = lookup(id, "feature");
      if (seen[i]) throw DimensionError("duplicate feature row for node '" + id + "'");
      seen[i] = true;
      for (std::size_t c = 0; c < cells.size(); ++c)
        g.features(i, static_cast<Eigen::Index>(c)) = detail::parse_double(cells[c], r + 1);
    }
  } else {
    g.features = Matrix::Identity(n, n);
  }

  if (labels_path) {
    std::size_t cols = 0;
    const auto rows = detail::read_keyed_csv(*labels_path, cols);
    if (static_cast<Eigen::Index>(rows.size()) != n)
      throw DimensionError("label file has " + std::to_string(rows.size()) +
                           " rows, edge list has " + std::to_string(n) + " nodes");
    g.labels.assign(static_cast<std::size_t>(n), -1);
    std::size_t r = 0;
    for (const auto& [id, cells] : rows) {
      ++r;
      const int label = detail::parse_int(cells.front(), r + 1);
      if (label < -1) throw ParseError("labels must be >= -1", r + 1);
      g.labels[lookup(id, "label")] = label;
      g.num_classes = std::max(g.num_classes, label + 1);
    }
  }

  if (splits_path) {
    std::size_t cols = 0;
    const auto rows = detail::read_keyed_csv(*splits_path, cols);
    g.train.assign(static_cast<std::size_t>(n), false);
    g.val.assign(static_cast<std::size_t>(n), false);
    g.test.assign(static_cast<std::size_t>(n), false);
    std::size_t r = 0;
    for (const auto& [id, cells] : rows) {
      ++r;
      const auto i = lookup(id, "split");
      const auto& s = cells.front();
      if (s == "train")
        g.train[i] = true;
      else if (s == "val")
        g.val[i] = true;
      else if (s == "test")
        g.test[i] = true;
      else
        throw ParseError("unknown split '" + s + "'", r + 1);
    }
  } else {
    random_split(g, split_seed, fractions);
  }
  validate(g);
  return g;
}

/// Writes the upper triangle as "u v" lines in (row, column) order.
inline void write_edge_list(std::ostream& out, const std::vector<std::string>& node_ids,
                            const Matrix& adjacency) {
  const auto n = adjacency.rows();
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j)
      if (adjacency(i, j) != 0.0) out << node_ids[i] << ' ' << node_ids[j] << '\n';
}

/// Copy of `g` whose adjacency is replaced by `adjacency` (same node set).
inline Graph with_adjacency(const Graph& g, Matrix adjacency) {
  if (adjacency.rows() != g.n() || adjacency.cols() != g.n())
    throw DimensionError("replacement adjacency has the wrong size");
  Graph out = g;
  out.adjacency = std::move(adjacency);
  return out;
}

/// D^-1/2 (A + I) D^-1/2 with D the degree matrix of A + I.
inline NormalizedAdjacency symmetric_normalize(const Matrix& adjacency) {
  const auto n = adjacency.rows();
  Matrix a = adjacency + Matrix::Identity(n, n);
  const Vector inv_sqrt = a.rowwise().sum().array().rsqrt();
  return {inv_sqrt.asDiagonal() * a * inv_sqrt.asDiagonal()};
}

inline NormalizedAdjacency symmetric_normalize(const Graph& g) {
  return symmetric_normalize(g.adjacency);
}

/// Stochastic block model with identity features, block-id labels and a
/// seeded 10/10/80 split. Block sizes differ by at most one.
inline Graph generate_sbm(Eigen::Index n, int num_blocks, double p_in, double p_out,
                          std::uint64_t seed) {
  if (n < 1) throw ParameterError("sbm needs at least one node");
  if (num_blocks < 1 || num_blocks > n) throw ParameterError("invalid block count");
  if (p_out < 0.0 || p_in > 1.0 || p_out > p_in)
    throw ParameterError("sbm requires 0 <= p_out <= p_in <= 1");
  Graph g;
  g.node_ids.resize(static_cast<std::size_t>(n));
  g.labels.resize(static_cast<std::size_t>(n));
  const auto base = n / num_blocks, extra = n % num_blocks;
  Eigen::Index node = 0;
  for (int b = 0; b < num_blocks; ++b) {
    const auto size = base + (b < extra ? 1 : 0);
    for (Eigen::Index k = 0; k < size; ++k, ++node) g.labels[node] = b;
  }
  for (Eigen::Index i = 0; i < n; ++i) g.node_ids[i] = std::to_string(i);
  g.num_classes = num_blocks;
  g.adjacency = Matrix::Zero(n, n);
  std::mt19937_64 rng(derive_seed(seed, {1}));
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double p = g.labels[i] == g.labels[j] ? p_in : p_out;
      if (coin(rng) < p) g.adjacency(i, j) = g.adjacency(j, i) = 1.0;
    }
  g.features = Matrix::Identity(n, n);
  random_split(g, derive_seed(seed, {2}));
  return g;
}

/// Zachary's karate club: 34 members, 78 ties, labels 0 for the
/// instructor's faction and 1 for the president's.
inline Graph karate(std::uint64_t split_seed = 0) {
  static constexpr int kEdges[78][2] = {
      {0, 1},   {0, 2},   {0, 3},   {0, 4},   {0, 5},   {0, 6},   {0, 7},   {0, 8},
      {0, 10},  {0, 11},  {0, 12},  {0, 13},  {0, 17},  {0, 19},  {0, 21},  {0, 31},
      {1, 2},   {1, 3},   {1, 7},   {1, 13},  {1, 17},  {1, 19},  {1, 21},  {1, 30},
      {2, 3},   {2, 7},   {2, 8},   {2, 9},   {2, 13},  {2, 27},  {2, 28},  {2, 32},
      {3, 7},   {3, 12},  {3, 13},  {4, 6},   {4, 10},  {5, 6},   {5, 10},  {5, 16},
      {6, 16},  {8, 30},  {8, 32},  {8, 33},  {9, 33},  {13, 33}, {14, 32}, {14, 33},
      {15, 32}, {15, 33}, {18, 32}, {18, 33}, {19, 33}, {20, 32}, {20, 33}, {22, 32},
      {22, 33}, {23, 25}, {23, 27}, {23, 29}, {23, 32}, {23, 33}, {24, 25}, {24, 27},
      {24, 31}, {25, 31}, {26, 29}, {26, 33}, {27, 33}, {28, 31}, {28, 33}, {29, 32},
      {29, 33}, {30, 32}, {30, 33}, {31, 32}, {31, 33}, {32, 33}};
  static constexpr int kFaction[34] = {0, 0, 0, 0, 0, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 1, 0,
                                       0, 1, 0, 1, 0, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1};
  Graph g;
  g.adjacency = Matrix::Zero(34, 34);
  for (const auto& e : kEdges) g.adjacency(e[0], e[1]) = g.adjacency(e[1], e[0]) = 1.0;
  for (int i = 0; i < 34; ++i) g.node_ids.push_back(std::to_string(i));
  g.features = Matrix::Identity(34, 34);
  g.labels.assign(std::begin(kFaction), std::end(kFaction));
  g.num_classes = 2;
  random_split(g, split_seed);
  return g;
}

}  // namespace rege
