#pragma once

// Checks of the two approximation guarantees of clustered attention, evaluated
// on dense attention rows:
//
//  * Lipschitz bound: |softmax(q_i K^T) - softmax(c_i K^T)|_2 <= |q_i - c_i|_2 * |K|_2
//    where c_i is the centroid of query i's cluster (unscaled logits).
//  * L1 dominance: |A^t_i - A_i|_1 <= |A^c_j - A_i|_1 for query i in cluster j,
//    together with the identity that the error of A^t on the cluster's top-k
//    keys equals |m_i - m_hat_j| (m_i: true mass of query i on those keys).
//
// Failures are reported as data in ApproxReport, never thrown.

#include <clattn/attention.hpp>

#include <utility>

namespace clattn {

template <std::floating_point T>
struct Tolerances {
  double lipschitz = 1e-5;
  double l1_dominance = 1e-6;
  double mass_identity = 1e-6;
};

// 64-bit kernels get tighter defaults.
template <>
struct Tolerances<double> {
  double lipschitz = 1e-10;
  double l1_dominance = 1e-12;
  double mass_identity = 1e-12;
};

enum class ViolationKind { LipschitzBound, L1Dominance, MassIdentity };

inline const char* to_string(ViolationKind kind) {
  switch (kind) {
    case ViolationKind::LipschitzBound: return "lipschitz_bound";
    case ViolationKind::L1Dominance: return "l1_dominance";
    case ViolationKind::MassIdentity: return "mass_identity";
  }
  return "unknown";
}

struct Violation {
  std::size_t query = 0;
  // Amount by which the checked quantity exceeded its bound (before tolerance).
  double slack = 0.0;
  ViolationKind kind = ViolationKind::LipschitzBound;
};

struct ApproxReport {
  // Lipschitz check: |approx row - true row| in l1/l2, and eps * |K|_2.
  // L1 check: |A^t_i - A_i| in l1/l2, and |A^c_j - A_i|_1.
  std::vector<double> per_query_l1;
  std::vector<double> per_query_l2;
  std::vector<double> per_query_bound;
  std::vector<Violation> violations;
  // L1 check only: (m_i, m_hat_j) per query.
  std::vector<std::pair<double, double>> masses;
  // Largest (lhs - bound) seen, negative when every query has room to spare.
  double max_slack = -std::numeric_limits<double>::infinity();
  double spectral_norm = 0.0;
  bool spectral_norm_converged = true;

  bool ok() const noexcept { return violations.empty(); }
  std::size_t count(ViolationKind kind) const noexcept {
    return static_cast<std::size_t>(
        std::count_if(violations.begin(), violations.end(), [kind](const Violation& v) { return v.kind == kind; }));
  }
};

enum class LipschitzMode {
  // Logits q K^T exactly as in the bound's statement.
  Unscaled,
  // Corollary for scaled logits: both sides use q K^T / sqrt(Dk).
  ScaledCorollary,
};

template <std::floating_point T>
ApproxReport check_lipschitz_bound(const BasicMatrix<T>& q, const BasicMatrix<T>& k, const Clustering<T>& clustering,
                                   LipschitzMode mode = LipschitzMode::Unscaled, Tolerances<T> tol = {}) {
  detail::require(q.cols() == k.cols(), "check_lipschitz_bound: q and k must have the same width");
  detail::check_clustering(q, clustering);
  const bool scaled = mode == LipschitzMode::ScaledCorollary;
  const double scale = detail::logit_scale(q.cols(), scaled);

  ApproxReport report;
  const SpectralNorm norm = spectral_norm(k);
  report.spectral_norm = norm.value;
  report.spectral_norm_converged = norm.converged;

  const std::size_t n = k.rows();
  std::vector<double> true_row(n), centroid_row(n);
  for (std::size_t i = 0; i < q.rows(); ++i) {
    const std::size_t j = clustering.assignments[i];
    detail::all_logits(q.row(i), k, scale, std::span<double>(true_row));
    detail::all_logits(clustering.centroids.row(j), k, scale, std::span<double>(centroid_row));
    softmax_inplace(true_row);
    softmax_inplace(centroid_row);

    double l1 = 0.0, l2 = 0.0;
    for (std::size_t l = 0; l < n; ++l) {
      const double d = true_row[l] - centroid_row[l];
      l1 += std::abs(d);
      l2 += d * d;
    }
    l2 = std::sqrt(l2);
    const double eps = row_l2_distance(q, clustering.centroids, i, j);
    const double bound = eps * norm.value * scale;

    report.per_query_l1.push_back(l1);
    report.per_query_l2.push_back(l2);
    report.per_query_bound.push_back(bound);
    report.max_slack = std::max(report.max_slack, l2 - bound);
    if (l2 > bound + tol.lipschitz) report.violations.push_back({i, l2 - bound, ViolationKind::LipschitzBound});
  }
  return report;
}

template <std::floating_point T>
ApproxReport check_l1_dominance(const BasicMatrix<T>& q, const BasicMatrix<T>& k, const Clustering<T>& clustering,
                                std::size_t topk, const AttentionOptions& opts = {}, Tolerances<T> tol = {}) {
  detail::require(q.cols() == k.cols(), "check_l1_dominance: q and k must have the same width");
  detail::check_clustering(q, clustering);
  detail::require(topk >= 1 && topk <= k.rows(), "check_l1_dominance: need 1 <= topk <= N");
  const double scale = detail::logit_scale(q.cols(), opts.scale);
  const std::size_t n = k.rows();

  const BasicMatrix<T> ac = detail::clustered_attention_matrix(clustering.centroids, k, scale, opts.threads);
  const TopKSet<T> top = topk_per_cluster(ac, topk);
  const BasicMatrix<T> at = improved_attention_matrix(q, k, clustering, topk, opts);

  ApproxReport report;
  std::vector<double> true_row(n);
  std::vector<char> in_top(n);
  for (std::size_t i = 0; i < q.rows(); ++i) {
    const std::size_t j = clustering.assignments[i];
    detail::all_logits(q.row(i), k, scale, std::span<double>(true_row));
    softmax_inplace(true_row);
    std::fill(in_top.begin(), in_top.end(), 0);
    for (std::size_t l : top.indices[j]) in_top[l] = 1;

    double lhs = 0.0, lhs_sq = 0.0, rhs = 0.0, top_err = 0.0, true_mass = 0.0;
    const auto at_row = at.row(i);
    const auto ac_row = ac.row(j);
    for (std::size_t l = 0; l < n; ++l) {
      const double d = static_cast<double>(at_row[l]) - true_row[l];
      lhs += std::abs(d);
      lhs_sq += d * d;
      rhs += std::abs(static_cast<double>(ac_row[l]) - true_row[l]);
      if (in_top[l]) {
        top_err += std::abs(d);
        true_mass += true_row[l];
      }
    }
    report.per_query_l1.push_back(lhs);
    report.per_query_l2.push_back(std::sqrt(lhs_sq));
    report.per_query_bound.push_back(rhs);
    report.masses.emplace_back(true_mass, top.masses[j]);
    report.max_slack = std::max(report.max_slack, lhs - rhs);
    if (lhs > rhs + tol.l1_dominance) report.violations.push_back({i, lhs - rhs, ViolationKind::L1Dominance});
    const double identity_gap = std::abs(top_err - std::abs(true_mass - top.masses[j]));
    if (identity_gap > tol.mass_identity) report.violations.push_back({i, identity_gap, ViolationKind::MassIdentity});
  }
  return report;
}

struct ErrorSummary {
  double mean_l1 = 0.0;
  double max_l1 = 0.0;
  double mean_l2 = 0.0;
  double max_l2 = 0.0;
};

// Row-wise error statistics between two sets of attention outputs.
template <std::floating_point T>
ErrorSummary error_summary(const AttentionResult<T>& approx, const AttentionResult<T>& oracle) {
  const auto& a = approx.values;
  const auto& b = oracle.values;
  detail::require(a.rows() == b.rows() && a.cols() == b.cols(), "error_summary: shape mismatch");
  ErrorSummary s;
  if (a.rows() == 0) return s;
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double l1 = row_l1_distance(a, b, i, i);
    const double l2 = row_l2_distance(a, b, i, i);
    s.mean_l1 += l1;
    s.mean_l2 += l2;
    s.max_l1 = std::max(s.max_l1, l1);
    s.max_l2 = std::max(s.max_l2, l2);
  }
  s.mean_l1 /= static_cast<double>(a.rows());
  s.mean_l2 /= static_cast<double>(a.rows());
  return s;
}

// Mean over queries of |A^c_{j(i)} - A_i|_1 (clustered) or |A^t_i - A_i|_1
// (improved, topk given) on the attention rows themselves.
template <std::floating_point T>
double mean_attention_l1(const BasicMatrix<T>& q, const BasicMatrix<T>& k, const Clustering<T>& clustering,
                         std::optional<std::size_t> topk = std::nullopt, const AttentionOptions& opts = {}) {
  const ApproxReport r = check_l1_dominance(q, k, clustering, topk.value_or(1), opts);
  const auto& v = topk ? r.per_query_l1 : r.per_query_bound;
  double sum = 0.0;
  for (double x : v) sum += x;
  return sum / static_cast<double>(v.size());
}

}  // namespace clattn
