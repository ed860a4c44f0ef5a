#pragma once

// Softmax attention kernels: the exact O(N^2) reference, clustered attention,
// improved (top-k) clustered attention and the oracle-top baseline.
//
// Clustered and improved kernels never hold an N x N buffer unless
// `diagnostic` is set; their attention storage is C x N plus C x k indices.

#include <clattn/kmeans.hpp>
#include <clattn/parallel.hpp>

#include <optional>

namespace clattn {

inline constexpr std::size_t kDefaultTopK = 32;

struct AttentionOptions {
  // Multiply logits by 1/sqrt(Dk).
  bool scale = true;
  // Keep the dense attention matrix in AttentionResult::attn.
  bool diagnostic = false;
  std::size_t threads = 1;
};

template <std::floating_point T = float>
struct AttentionResult {
  BasicMatrix<T> values;
  // Full: N x N. Clustered: C x N (A^c). Improved: N x N (A^t). Oracle-top: N x N.
  std::optional<BasicMatrix<T>> attn;
};

template <std::floating_point T = float>
struct TopKSet {
  std::size_t k = 0;
  // indices[j] holds cluster j's k keys in ascending key order.
  std::vector<std::vector<std::size_t>> indices;
  // masses[j] = sum of A^c[j, l] over l in indices[j].
  std::vector<double> masses;
};

namespace detail {

inline double logit_scale(std::size_t dk, bool scale) {
  return scale ? 1.0 / std::sqrt(static_cast<double>(dk)) : 1.0;
}

template <std::floating_point T>
void check_qkv(const BasicMatrix<T>& q, const BasicMatrix<T>& k, const BasicMatrix<T>& v) {
  require(q.cols() == k.cols(), "attention: q and k must have the same width");
  require(k.rows() == v.rows(), "attention: k and v must have the same number of rows");
  require(q.rows() >= 1 && k.rows() >= 1, "attention: empty input");
}

template <std::floating_point T>
void check_clustering(const BasicMatrix<T>& q, const Clustering<T>& clustering) {
  require(clustering.num_queries() == q.rows(), "attention: clustering does not cover every query");
  require(clustering.centroids.rows() == clustering.num_clusters() && clustering.centroids.cols() == q.cols(),
          "attention: centroid matrix shape mismatch");
  for (std::size_t a : clustering.assignments) require(a < clustering.num_clusters(), "attention: bad assignment");
}

// logits[l] = scale * <query, k_l> for every key.
template <std::floating_point T>
void all_logits(std::span<const T> query, const BasicMatrix<T>& k, double scale, std::span<double> logits) {
  for (std::size_t l = 0; l < k.rows(); ++l) logits[l] = scale * dot(query, k.row(l));
}

// out += sum_l w[l] * v[idx[l]], summed in ascending position order.
template <std::floating_point T>
void accumulate_rows(std::span<const double> weights, std::span<const std::size_t> idx, const BasicMatrix<T>& v,
                     std::span<double> out) {
  for (std::size_t p = 0; p < idx.size(); ++p) {
    const double w = weights[p];
    const auto vrow = v.row(idx[p]);
    for (std::size_t d = 0; d < out.size(); ++d) out[d] += w * static_cast<double>(vrow[d]);
  }
}

template <std::floating_point T>
void store_row(std::span<const double> src, std::span<T> dst) {
  for (std::size_t d = 0; d < dst.size(); ++d) dst[d] = static_cast<T>(src[d]);
}

// k largest entries of `row` (ties to the lowest index), returned ascending.
template <typename Scalar>
std::vector<std::size_t> top_k_indices(std::span<const Scalar> row, std::size_t k) {
  std::vector<std::size_t> order(row.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto before = [&](std::size_t a, std::size_t b) { return row[a] > row[b] || (row[a] == row[b] && a < b); };
  if (k < order.size()) {
    std::nth_element(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(), before);
    order.resize(k);
  }
  std::sort(order.begin(), order.end());
  return order;
}

// Clustered attention matrix A^c = softmax(Q^c K^T * scale), C x N.
template <std::floating_point T>
BasicMatrix<T> clustered_attention_matrix(const BasicMatrix<T>& centroids, const BasicMatrix<T>& k, double scale,
                                          std::size_t threads) {
  BasicMatrix<T> ac(centroids.rows(), k.rows());
  parallel_for(centroids.rows(), threads, [&](std::size_t begin, std::size_t end) {
    TrackedVector<double> logits(k.rows());
    for (std::size_t j = begin; j < end; ++j) {
      all_logits(centroids.row(j), k, scale, logits);
      softmax_inplace(logits);
      store_row<T>(logits, ac.row(j));
    }
  });
  return ac;
}

// Top branch weights for one query: m_hat * softmax over its cluster's top-k
// logits. A zero mass gives all-zero weights without forming 0/0.
template <std::floating_point T>
void top_branch_weights(std::span<const T> query, const BasicMatrix<T>& k, std::span<const std::size_t> top,
                        double mass, double scale, std::span<double> weights) {
  for (std::size_t p = 0; p < top.size(); ++p) weights[p] = scale * dot(query, k.row(top[p]));
  softmax_inplace(weights.first(top.size()));
  for (std::size_t p = 0; p < top.size(); ++p) weights[p] *= mass;
}

}  // namespace detail

template <std::floating_point T>
AttentionResult<T> full_attention(const BasicMatrix<T>& q, const BasicMatrix<T>& k, const BasicMatrix<T>& v,
                                  const AttentionOptions& opts = {}) {
  detail::check_qkv(q, k, v);
  const std::size_t n_keys = k.rows();
  const double scale = detail::logit_scale(q.cols(), opts.scale);

  AttentionResult<T> out{BasicMatrix<T>(q.rows(), v.cols()), std::nullopt};
  if (opts.diagnostic) out.attn.emplace(q.rows(), n_keys);
  std::vector<std::size_t> all_keys(n_keys);
  std::iota(all_keys.begin(), all_keys.end(), std::size_t{0});

  parallel_for(q.rows(), opts.threads, [&](std::size_t begin, std::size_t end) {
    TrackedVector<double> weights(n_keys);
    TrackedVector<double> acc(v.cols());
    for (std::size_t i = begin; i < end; ++i) {
      detail::all_logits(q.row(i), k, scale, weights);
      softmax_inplace(weights);
      std::fill(acc.begin(), acc.end(), 0.0);
      detail::accumulate_rows<T>(weights, all_keys, v, acc);
      detail::store_row<T>(acc, out.values.row(i));
      if (out.attn) detail::store_row<T>(weights, out.attn->row(i));
    }
  });
  return out;
}

template <std::floating_point T>
AttentionResult<T> clustered_attention(const BasicMatrix<T>& q, const BasicMatrix<T>& k, const BasicMatrix<T>& v,
                                       const Clustering<T>& clustering, const AttentionOptions& opts = {}) {
  detail::check_qkv(q, k, v);
  detail::check_clustering(q, clustering);
  const double scale = detail::logit_scale(q.cols(), opts.scale);

  BasicMatrix<T> ac = detail::clustered_attention_matrix(clustering.centroids, k, scale, opts.threads);
  const std::size_t c = clustering.num_clusters();
  BasicMatrix<T> centroid_values(c, v.cols());
  parallel_for(c, opts.threads, [&](std::size_t begin, std::size_t end) {
    TrackedVector<double> acc(v.cols());
    for (std::size_t j = begin; j < end; ++j) {
      std::fill(acc.begin(), acc.end(), 0.0);
      const auto arow = ac.row(j);
      for (std::size_t l = 0; l < k.rows(); ++l) {
        const double w = arow[l];
        const auto vrow = v.row(l);
        for (std::size_t d = 0; d < v.cols(); ++d) acc[d] += w * static_cast<double>(vrow[d]);
      }
      detail::store_row<T>(acc, centroid_values.row(j));
    }
  });

  AttentionResult<T> out{BasicMatrix<T>(q.rows(), v.cols()), std::nullopt};
  for (std::size_t i = 0; i < q.rows(); ++i) {
    const auto src = centroid_values.row(clustering.assignments[i]);
    std::copy(src.begin(), src.end(), out.values.row(i).begin());
  }
  if (opts.diagnostic) out.attn = std::move(ac);
  return out;
}

template <std::floating_point T>
TopKSet<T> topk_per_cluster(const BasicMatrix<T>& ac, std::size_t k) {
  detail::require(k >= 1 && k <= ac.cols(), "topk_per_cluster: need 1 <= k <= N");
  TopKSet<T> out;
  out.k = k;
  out.indices.reserve(ac.rows());
  out.masses.reserve(ac.rows());
  for (std::size_t j = 0; j < ac.rows(); ++j) {
    const auto row = ac.row(j);
    auto idx = detail::top_k_indices(row, k);
    double mass = 0.0;
    for (std::size_t l : idx) mass += row[l];
    out.indices.push_back(std::move(idx));
    out.masses.push_back(mass);
  }
  return out;
}

// Improved clustered attention evaluated as V_i = V^t_i + V^b_i:
//   V^b_j = sum over keys outside cluster j's top-k of A^c[j, l] V_l (once per cluster)
//   V^t_i = m_hat_j * softmax(exact logits of query i on the top-k keys) . V_top
template <std::floating_point T>
AttentionResult<T> improved_clustered_attention(const BasicMatrix<T>& q, const BasicMatrix<T>& k,
                                                const BasicMatrix<T>& v, const Clustering<T>& clustering,
                                                std::size_t topk = kDefaultTopK,
                                                const AttentionOptions& opts = {}) {
  detail::check_qkv(q, k, v);
  detail::check_clustering(q, clustering);
  detail::require(topk >= 1 && topk <= k.rows(), "improved_clustered_attention: need 1 <= topk <= N");
  const double scale = detail::logit_scale(q.cols(), opts.scale);
  const std::size_t c = clustering.num_clusters();
  const std::size_t n_keys = k.rows();

  BasicMatrix<T> ac = detail::clustered_attention_matrix(clustering.centroids, k, scale, opts.threads);
  const TopKSet<T> top = topk_per_cluster(ac, topk);

  // Bottom branch, one row per cluster, kept in double until the final add.
  TrackedVector<double> bottom(c * v.cols(), 0.0);
  parallel_for(c, opts.threads, [&](std::size_t begin, std::size_t end) {
    TrackedVector<char> in_top(n_keys);
    for (std::size_t j = begin; j < end; ++j) {
      std::fill(in_top.begin(), in_top.end(), 0);
      for (std::size_t l : top.indices[j]) in_top[l] = 1;
      const auto arow = ac.row(j);
      double* acc = bottom.data() + j * v.cols();
      for (std::size_t l = 0; l < n_keys; ++l) {
        if (in_top[l]) continue;
        const double w = arow[l];
        const auto vrow = v.row(l);
        for (std::size_t d = 0; d < v.cols(); ++d) acc[d] += w * static_cast<double>(vrow[d]);
      }
    }
  });

  AttentionResult<T> out{BasicMatrix<T>(q.rows(), v.cols()), std::nullopt};
  if (opts.diagnostic) out.attn.emplace(q.rows(), n_keys);
  parallel_for(q.rows(), opts.threads, [&](std::size_t begin, std::size_t end) {
    TrackedVector<double> weights(topk);
    TrackedVector<double> acc(v.cols());
    for (std::size_t i = begin; i < end; ++i) {
      const std::size_t j = clustering.assignments[i];
      const auto& idx = top.indices[j];
      detail::top_branch_weights(q.row(i), k, idx, top.masses[j], scale, weights);
      std::copy_n(bottom.data() + j * v.cols(), v.cols(), acc.begin());
      detail::accumulate_rows<T>(weights, idx, v, acc);
      detail::store_row<T>(acc, out.values.row(i));
      if (out.attn) {
        auto row = out.attn->row(i);
        const auto arow = ac.row(j);
        std::copy(arow.begin(), arow.end(), row.begin());
        for (std::size_t p = 0; p < idx.size(); ++p) row[idx[p]] = static_cast<T>(weights[p]);
      }
    }
  });
  return out;
}

// Dense N x N improved attention matrix A^t, for diagnostics and tests.
template <std::floating_point T>
BasicMatrix<T> improved_attention_matrix(const BasicMatrix<T>& q, const BasicMatrix<T>& k,
                                         const Clustering<T>& clustering, std::size_t topk = kDefaultTopK,
                                         const AttentionOptions& opts = {}) {
  detail::require(q.cols() == k.cols(), "improved_attention_matrix: q and k must have the same width");
  detail::check_clustering(q, clustering);
  detail::require(topk >= 1 && topk <= k.rows(), "improved_attention_matrix: need 1 <= topk <= N");
  const double scale = detail::logit_scale(q.cols(), opts.scale);

  const BasicMatrix<T> ac = detail::clustered_attention_matrix(clustering.centroids, k, scale, opts.threads);
  const TopKSet<T> top = topk_per_cluster(ac, topk);
  BasicMatrix<T> at(q.rows(), k.rows());
  std::vector<double> weights(topk);
  for (std::size_t i = 0; i < q.rows(); ++i) {
    const std::size_t j = clustering.assignments[i];
    const auto arow = ac.row(j);
    auto row = at.row(i);
    std::copy(arow.begin(), arow.end(), row.begin());
    detail::top_branch_weights(q.row(i), k, top.indices[j], top.masses[j], scale, weights);
    for (std::size_t p = 0; p < topk; ++p) row[top.indices[j][p]] = static_cast<T>(weights[p]);
  }
  return at;
}

// Exact attention restricted to each query's own top-k keys and renormalized.
// With topk == N this takes the same arithmetic path as full_attention.
template <std::floating_point T>
AttentionResult<T> oracle_top_attention(const BasicMatrix<T>& q, const BasicMatrix<T>& k, const BasicMatrix<T>& v,
                                        std::size_t topk = kDefaultTopK, const AttentionOptions& opts = {}) {
  detail::check_qkv(q, k, v);
  detail::require(topk >= 1 && topk <= k.rows(), "oracle_top_attention: need 1 <= topk <= N");
  const double scale = detail::logit_scale(q.cols(), opts.scale);
  const std::size_t n_keys = k.rows();

  AttentionResult<T> out{BasicMatrix<T>(q.rows(), v.cols()), std::nullopt};
  if (opts.diagnostic) out.attn.emplace(q.rows(), n_keys);
  parallel_for(q.rows(), opts.threads, [&](std::size_t begin, std::size_t end) {
    TrackedVector<double> logits(n_keys);
    TrackedVector<double> weights(topk);
    TrackedVector<double> acc(v.cols());
    for (std::size_t i = begin; i < end; ++i) {
      detail::all_logits(q.row(i), k, scale, logits);
      const auto idx = detail::top_k_indices(std::span<const double>(logits), topk);
      for (std::size_t p = 0; p < topk; ++p) weights[p] = logits[idx[p]];
      softmax_inplace(weights);
      std::fill(acc.begin(), acc.end(), 0.0);
      detail::accumulate_rows<T>(weights, idx, v, acc);
      detail::store_row<T>(acc, out.values.row(i));
      if (out.attn) {
        auto row = out.attn->row(i);
        for (std::size_t p = 0; p < topk; ++p) row[idx[p]] = static_cast<T>(weights[p]);
      }
    }
  });
  return out;
}

}  // namespace clattn
