#pragma once

// Node radii from the consensus of reconstructed views.

#include "rege/core.hpp"
#include "rege/io.hpp"
#include "rege/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace rege {

enum class RadiusKind { ddr, mdr, stddev, entropy };

inline std::string_view to_string(RadiusKind k) {
  switch (k) {
    case RadiusKind::ddr: return "ddr";
    case RadiusKind::mdr: return "mdr";
    case RadiusKind::stddev: return "stddev";
    case RadiusKind::entropy: return "entropy";
  }
  return "?";
}

inline RadiusKind parse_radius_kind(std::string_view s) {
  if (s == "ddr") return RadiusKind::ddr;
  if (s == "mdr") return RadiusKind::mdr;
  if (s == "stddev") return RadiusKind::stddev;
  if (s == "entropy") return RadiusKind::entropy;
  throw ParameterError("unknown radius kind '" + std::string(s) + "'");
}

/// Edge frequency across views: symmetric, entries in [0, 1], zero diagonal.
struct ConsensusMatrix {
  Matrix w;
};

/// Per-node uncertainty in [0, 1].
struct RadiusVector {
  Vector values;
  RadiusKind kind = RadiusKind::ddr;

  Eigen::Index size() const { return values.size(); }

  static RadiusVector zeros(Eigen::Index n, RadiusKind kind = RadiusKind::ddr) {
    return {Vector::Zero(n), kind};
  }
};

/// How a row of W is reduced to a node value by the binary deviation.
enum class RowAggregation {
  /// Average over all n entries of the row.
  all_entries,
  /// Average over entries observed in at least one view (W > 0).
  incident_only,
};

inline ConsensusMatrix consensus(const ViewSequence& seq) {
  if (seq.views.empty()) throw ParameterError("consensus needs at least one view");
  const auto n = seq.views.front().rows();
  Matrix w = Matrix::Zero(n, n);
  for (const auto& v : seq.views) {
    if (v.rows() != n || v.cols() != n) throw DimensionError("views differ in size");
    w += v;
  }
  w /= static_cast<double>(seq.views.size());
  w.diagonal().setZero();
  return {std::move(w)};
}

/// (v - min) / (max - min); the all-zero vector when v is constant.
inline Vector minmax_normalize(const Vector& raw) {
  if (raw.size() == 0) throw ParameterError("cannot normalize an empty vector");
  const double lo = raw.minCoeff(), hi = raw.maxCoeff();
  if (!(hi > lo)) return Vector::Zero(raw.size());
  return ((raw.array() - lo) / (hi - lo)).matrix();
}

namespace detail {
/// Sum in ascending order, so rows holding the same multiset of values
/// (structurally equivalent nodes) reduce to bit-identical results.
inline double ordered_sum(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  double s = 0.0;
  for (double x : v) s += x;
  return s;
}
}  // namespace detail

/// Unnormalized 1 - mean_j |W_ij - (1 - W_ij)|.
inline Vector binary_deviation_raw(const ConsensusMatrix& c,
                                   RowAggregation agg = RowAggregation::all_entries) {
  const auto n = c.w.rows();
  Vector r(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    std::vector<double> terms;
    for (Eigen::Index j = 0; j < n; ++j) {
      const double dev = std::abs(2.0 * c.w(i, j) - 1.0);
      if (agg == RowAggregation::all_entries)
        terms.push_back(dev);
      else if (c.w(i, j) > 0.0)
        terms.push_back(1.0 - dev);
    }
    if (agg == RowAggregation::all_entries)
      r[i] = 1.0 - detail::ordered_sum(std::move(terms)) / static_cast<double>(n);
    else
      r[i] = terms.empty() ? 0.0 : detail::ordered_sum(terms) / static_cast<double>(terms.size());
  }
  return r;
}

inline RadiusVector binary_deviation_radii(const ConsensusMatrix& c,
                                           RowAggregation agg = RowAggregation::all_entries) {
  return {minmax_normalize(binary_deviation_raw(c, agg)), RadiusKind::ddr};
}

/// Population standard deviation of each row.
inline Vector stddev_raw(const ConsensusMatrix& c) {
  const auto n = c.w.rows();
  Vector r(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    std::vector<double> row;
    for (Eigen::Index j = 0; j < n; ++j) row.push_back(c.w(i, j));
    const double mean = detail::ordered_sum(row) / static_cast<double>(n);
    for (double& x : row) x = (x - mean) * (x - mean);
    r[i] = std::sqrt(detail::ordered_sum(std::move(row)) / static_cast<double>(n));
  }
  return r;
}

inline RadiusVector stddev_radii(const ConsensusMatrix& c) {
  return {minmax_normalize(stddev_raw(c)), RadiusKind::stddev};
}

/// Binary entropy in bits with H(0) = H(1) = 0.
inline double binary_entropy(double p) {
  if (p <= 0.0 || p >= 1.0) return 0.0;
  return -p * std::log2(p) - (1.0 - p) * std::log2(1.0 - p);
}

inline Vector entropy_raw(const ConsensusMatrix& c) {
  const auto n = c.w.rows();
  Vector r(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    std::vector<double> h;
    for (Eigen::Index j = 0; j < n; ++j) h.push_back(binary_entropy(c.w(i, j)));
    r[i] = detail::ordered_sum(std::move(h)) / static_cast<double>(n);
  }
  return r;
}

inline RadiusVector entropy_radii(const ConsensusMatrix& c) {
  return {minmax_normalize(entropy_raw(c)), RadiusKind::entropy};
}

/// Data-dependent radii end to end: views, consensus, binary deviation.
inline RadiusVector data_dependent_radii(const Graph& g, int q_min, int step,
                                         const ViewOptions& opt = {},
                                         RowAggregation agg = RowAggregation::all_entries) {
  const int q = std::min<int>(q_min, static_cast<int>(g.n()));
  return binary_deviation_radii(consensus(generate_views(g, q, step, opt)), agg);
}

/// CSV "node_id,radius,kind".
inline std::string radii_csv(const std::vector<std::string>& node_ids, const RadiusVector& r) {
  if (static_cast<Eigen::Index>(node_ids.size()) != r.size())
    throw DimensionError("radius vector length does not match node count");
  std::ostringstream out;
  out << "node_id,radius,kind\n";
  for (Eigen::Index i = 0; i < r.size(); ++i)
    out << node_ids[i] << ',' << io::fmt_double(r.values[i]) << ',' << to_string(r.kind)
        << '\n';
  return out.str();
}

/// Dense CSV of W with a node-id header row and column.
inline std::string consensus_csv(const std::vector<std::string>& node_ids,
                                 const ConsensusMatrix& c) {
  std::ostringstream out;
  out << "node_id";
  for (const auto& id : node_ids) out << ',' << id;
  out << '\n';
  for (Eigen::Index i = 0; i < c.w.rows(); ++i) {
    out << node_ids[i];
    for (Eigen::Index j = 0; j < c.w.cols(); ++j) out << ',' << io::fmt_double(c.w(i, j));
    out << '\n';
  }
  return out.str();
}

}  // namespace rege
