#pragma once

// Spectral views of a graph: eigendecomposition of the raw adjacency and
// binary low-rank reconstructions from its leading eigenpairs.

#include "rege/core.hpp"
#include "rege/graph.hpp"
#include "rege/io.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <filesystem>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

namespace rege {

/// Which eigenpairs count as "leading".
enum class EigenOrder {
  /// Descending signed eigenvalue: the dominant positive spectrum first.
  signed_descending,
  /// Descending |lambda|, signed value breaking ties: maximizes retained
  /// energy for every prefix length.
  magnitude_descending,
};

/// Entries that set the min and max of the [0, 1] rescaling.
enum class ScaleScope { full_matrix, off_diagonal };

struct ViewOptions {
  EigenOrder order = EigenOrder::signed_descending;
  ScaleScope scope = ScaleScope::full_matrix;
  double threshold = 0.5;
};

struct EigenDecomposition {
  Vector eigenvalues;  // sorted per `order`
  Matrix eigenvectors;  // column i pairs with eigenvalues[i]
  EigenOrder order = EigenOrder::signed_descending;

  Eigen::Index n() const { return eigenvalues.size(); }
};

struct ViewSequence {
  std::vector<Matrix> views;
  std::vector<int> component_counts;

  std::size_t count() const { return views.size(); }
};

/// Full symmetric eigendecomposition of `a`. Throws NumericalError if the
/// solver fails or the reconstruction residual exceeds 1e-8 per entry.
inline EigenDecomposition eigendecompose(const Matrix& a,
                                         EigenOrder order = EigenOrder::signed_descending) {
  if (a.rows() != a.cols()) throw DimensionError("eigendecompose needs a square matrix");
  const auto n = a.rows();
  EigenDecomposition d;
  d.order = order;
  if (n == 0) return d;
  Eigen::SelfAdjointEigenSolver<Matrix> solver(a);
  if (solver.info() != Eigen::Success)
    throw NumericalError("symmetric eigensolver did not converge", -1.0);
  const Vector& vals = solver.eigenvalues();  // ascending
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  if (order == EigenOrder::signed_descending) {
    std::stable_sort(idx.begin(), idx.end(),
                     [&](auto x, auto y) { return vals[x] > vals[y]; });
  } else {
    std::stable_sort(idx.begin(), idx.end(), [&](auto x, auto y) {
      const double ax = std::abs(vals[x]), ay = std::abs(vals[y]);
      if (ax != ay) return ax > ay;
      return vals[x] > vals[y];
    });
  }
  d.eigenvalues.resize(n);
  d.eigenvectors.resize(n, n);
  for (Eigen::Index k = 0; k < n; ++k) {
    d.eigenvalues[k] = vals[idx[k]];
    d.eigenvectors.col(k) = solver.eigenvectors().col(idx[k]);
  }
  const double residual =
      (d.eigenvectors * d.eigenvalues.asDiagonal() * d.eigenvectors.transpose() - a)
          .cwiseAbs()
          .maxCoeff();
  if (!(residual < 1e-8))
    throw NumericalError("eigendecomposition does not reproduce the input", residual);
  return d;
}

inline EigenDecomposition eigendecompose(const Graph& g,
                                         EigenOrder order = EigenOrder::signed_descending) {
  return eigendecompose(g.adjacency, order);
}

/// Fraction of total squared-eigenvalue mass in the first q eigenpairs.
/// Prefix and total share one left-to-right sum, so the ratio is exactly
/// non-decreasing in q and exactly 1 at q = n.
inline double retained_energy(const EigenDecomposition& d, Eigen::Index q) {
  if (q < 1 || q > d.n()) throw ParameterError("component count out of range");
  double prefix = 0.0, total = 0.0;
  for (Eigen::Index i = 0; i < d.n(); ++i) {
    total += d.eigenvalues[i] * d.eigenvalues[i];
    if (i + 1 == q) prefix = total;
  }
  if (total == 0.0) return 1.0;
  return prefix / total;
}

/// Rank-k reconstruction U_k L_k U_k^T, symmetrized, rescaled to [0, 1]
/// and thresholded into a binary adjacency with zero diagonal. A constant
/// reconstruction yields the empty graph.
inline Matrix reconstruct_view(const EigenDecomposition& d, Eigen::Index k,
                               const ViewOptions& opt = {}) {
  if (k < 1 || k > d.n()) throw ParameterError("component count out of range");
  const auto n = d.n();
  const auto u = d.eigenvectors.leftCols(k);
  Matrix ak = u * d.eigenvalues.head(k).asDiagonal() * u.transpose();
  ak = 0.5 * (ak + ak.transpose()).eval();

  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i == j && opt.scope == ScaleScope::off_diagonal) continue;
      lo = std::min(lo, ak(i, j));
      hi = std::max(hi, ak(i, j));
    }
  Matrix view = Matrix::Zero(n, n);
  if (!(hi > lo)) return view;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      if (i != j && (ak(i, j) - lo) / (hi - lo) >= opt.threshold) view(i, j) = 1.0;
  return view;
}

/// Component counts q_min, q_min + step, ..., always ending exactly at n.
inline std::vector<int> component_schedule(Eigen::Index n, int q_min, int step) {
  if (n < 1) throw ParameterError("graph has no nodes");
  if (q_min < 1 || q_min > n) throw ParameterError("q_min must lie in [1, n]");
  if (step < 1) throw ParameterError("component step must be >= 1");
  std::vector<int> counts;
  for (Eigen::Index k = q_min; k <= n; k += step) counts.push_back(static_cast<int>(k));
  if (counts.back() != n) counts.push_back(static_cast<int>(n));
  return counts;
}

inline ViewSequence generate_views(const EigenDecomposition& d, int q_min, int step,
                                   const ViewOptions& opt = {}) {
  ViewSequence seq;
  seq.component_counts = component_schedule(d.n(), q_min, step);
  seq.views.reserve(seq.component_counts.size());
  for (int k : seq.component_counts) seq.views.push_back(reconstruct_view(d, k, opt));
  return seq;
}

inline ViewSequence generate_views(const Graph& g, int q_min, int step,
                                   const ViewOptions& opt = {}) {
  return generate_views(eigendecompose(g, opt.order), q_min, step, opt);
}

inline std::string view_file_name(int components) {
  std::string digits = std::to_string(components);
  if (digits.size() < 4) digits.insert(0, 4 - digits.size(), '0');
  return "view_" + digits + ".txt";
}

/// One edge-list file per view, named by component count.
inline void write_views(const std::filesystem::path& dir,
                        const std::vector<std::string>& node_ids, const ViewSequence& seq) {
  for (std::size_t i = 0; i < seq.count(); ++i) {
    std::ostringstream out;
    write_edge_list(out, node_ids, seq.views[i]);
    io::atomic_write(dir / view_file_name(seq.component_counts[i]), out.str());
  }
}

}  // namespace rege
