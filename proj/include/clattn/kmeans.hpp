#pragma once

// Lloyd's K-Means over hash codes with the Hamming metric. The resulting
// partition is then used to form Euclidean centroids of the original queries.

#include <clattn/lsh.hpp>
#include <clattn/parallel.hpp>

#include <limits>
#include <numeric>
#include <unordered_set>

namespace clattn {

inline constexpr std::size_t kDefaultLloydIters = 10;

struct CentroidInit {
  std::vector<HashCode> centroids;
  // Set when the input had fewer distinct codes than requested centroids.
  bool has_duplicates = false;
};

// Picks c centroids uniformly without replacement from the distinct codes
// (distinct codes are ordered by first occurrence before sampling).
inline CentroidInit init_centroids(const HashCodes& codes, std::size_t c, std::uint64_t seed) {
  detail::require(c >= 1 && c <= codes.size(), "init_centroids: need 1 <= c <= N");

  std::vector<HashCode> distinct;
  std::unordered_set<HashCode> seen;
  for (HashCode code : codes.codes)
    if (seen.insert(code).second) distinct.push_back(code);

  std::mt19937_64 rng(seed);
  CentroidInit out;
  const std::size_t take = std::min(c, distinct.size());
  for (std::size_t i = 0; i < take; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, distinct.size() - 1);
    std::swap(distinct[i], distinct[pick(rng)]);
    out.centroids.push_back(distinct[i]);
  }
  if (take < c) {
    out.has_duplicates = true;
    std::uniform_int_distribution<std::size_t> pick(0, distinct.size() - 1);
    while (out.centroids.size() < c) out.centroids.push_back(distinct[pick(rng)]);
  }
  return out;
}

// Nearest centroid, ties to the lowest index.
inline std::size_t nearest_centroid(HashCode code, std::span<const HashCode> centroids) noexcept {
  std::size_t best = 0;
  std::size_t best_d = std::numeric_limits<std::size_t>::max();
  for (std::size_t j = 0; j < centroids.size(); ++j) {
    const std::size_t d = hamming_distance(code, centroids[j]);
    if (d < best_d) {
      best_d = d;
      best = j;
    }
  }
  return best;
}

struct LloydStep {
  std::vector<std::size_t> assignments;
  std::vector<HashCode> centroids;
  // Sum of distances to the assigned centroid, measured before the update.
  std::size_t objective = 0;
};

namespace detail {

inline std::vector<std::size_t> assign_all(const HashCodes& codes, std::span<const HashCode> centroids,
                                           std::size_t threads) {
  std::vector<std::size_t> assignments(codes.size());
  parallel_for(codes.size(), threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) assignments[i] = nearest_centroid(codes.codes[i], centroids);
  });
  return assignments;
}

// Farthest query from its own centroid among those not yet used, ties to the
// lowest query index. `eligible` filters candidates.
template <typename Eligible>
std::size_t farthest_member(const HashCodes& codes, std::span<const std::size_t> assignments,
                            std::span<const HashCode> centroids, const std::vector<bool>& used,
                            Eligible&& eligible) {
  std::size_t best = codes.size();
  std::size_t best_d = 0;
  for (std::size_t i = 0; i < codes.size(); ++i) {
    if (used[i] || !eligible(i)) continue;
    const std::size_t d = hamming_distance(codes.codes[i], centroids[assignments[i]]);
    if (best == codes.size() || d > best_d) {
      best = i;
      best_d = d;
    }
  }
  return best;
}

}  // namespace detail

inline LloydStep lloyd_step(const HashCodes& codes, std::span<const HashCode> centroids, std::size_t threads = 1) {
  detail::require(!centroids.empty(), "lloyd_step: need at least one centroid");
  const std::size_t c = centroids.size();

  LloydStep step;
  step.assignments = detail::assign_all(codes, centroids, threads);
  for (std::size_t i = 0; i < codes.size(); ++i)
    step.objective += hamming_distance(codes.codes[i], centroids[step.assignments[i]]);

  // Per-bit majority vote, ties to 0.
  std::vector<std::size_t> counts(c, 0);
  std::vector<std::size_t> ones(c * codes.bits, 0);
  for (std::size_t i = 0; i < codes.size(); ++i) {
    const std::size_t j = step.assignments[i];
    ++counts[j];
    for (HashCode rest = codes.codes[i]; rest != 0; rest &= rest - 1)
      ++ones[j * codes.bits + static_cast<std::size_t>(std::countr_zero(rest))];
  }
  step.centroids.assign(centroids.begin(), centroids.end());
  std::vector<bool> used(codes.size(), false);
  for (std::size_t j = 0; j < c; ++j) {
    if (counts[j] == 0) {
      const std::size_t donor = detail::farthest_member(codes, step.assignments, centroids, used,
                                                        [](std::size_t) { return true; });
      if (donor < codes.size()) {
        used[donor] = true;
        step.centroids[j] = codes.codes[donor];
      }
      continue;
    }
    HashCode code = 0;
    for (std::size_t b = 0; b < codes.bits; ++b)
      if (2 * ones[j * codes.bits + b] > counts[j]) code |= HashCode{1} << b;
    step.centroids[j] = code;
  }
  return step;
}

template <std::floating_point T = float>
struct Clustering {
  std::vector<std::size_t> assignments;
  std::vector<std::size_t> counts;
  BasicMatrix<T> centroids;
  std::vector<HashCode> binary_centroids;
  // Lloyd objective per iteration, measured before each centroid update.
  std::vector<std::size_t> objectives;
  bool init_had_duplicates = false;

  std::size_t num_clusters() const noexcept { return counts.size(); }
  std::size_t num_queries() const noexcept { return assignments.size(); }

  std::vector<std::vector<std::size_t>> members() const {
    std::vector<std::vector<std::size_t>> out(counts.size());
    for (std::size_t i = 0; i < assignments.size(); ++i) out[assignments[i]].push_back(i);
    return out;
  }
};

// Builds a Clustering from a fixed assignment vector. Centroids are the member
// means (accumulated in double); every cluster must be nonempty.
template <std::floating_point T>
Clustering<T> clustering_from_assignments(const BasicMatrix<T>& q, std::vector<std::size_t> assignments,
                                          std::size_t c) {
  detail::require(assignments.size() == q.rows(), "clustering: one assignment per query required");
  detail::require(c >= 1, "clustering: need at least one cluster");
  Clustering<T> out;
  out.counts.assign(c, 0);
  std::vector<double> sums(c * q.cols(), 0.0);
  for (std::size_t i = 0; i < q.rows(); ++i) {
    const std::size_t j = assignments[i];
    detail::require(j < c, "clustering: assignment out of range");
    ++out.counts[j];
    const auto row = q.row(i);
    for (std::size_t d = 0; d < q.cols(); ++d) sums[j * q.cols() + d] += row[d];
  }
  out.centroids = BasicMatrix<T>(c, q.cols());
  for (std::size_t j = 0; j < c; ++j) {
    detail::require(out.counts[j] > 0, "clustering: empty cluster");
    for (std::size_t d = 0; d < q.cols(); ++d)
      out.centroids(j, d) = static_cast<T>(sums[j * q.cols() + d] / static_cast<double>(out.counts[j]));
  }
  out.assignments = std::move(assignments);
  return out;
}

struct ClusterOptions {
  std::size_t bits = kDefaultHashBits;
  std::size_t lloyd_iters = kDefaultLloydIters;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
};

// make_planes -> hash_queries -> init_centroids -> lloyd_step x L, then a final
// Hamming assignment. Clusters left empty by that assignment take the member
// farthest from its centroid out of a cluster with at least two members, so
// every cluster in the result is nonempty.
template <std::floating_point T>
Clustering<T> cluster_queries(const BasicMatrix<T>& q, std::size_t c, const ClusterOptions& opts = {}) {
  detail::require(c >= 1 && c <= q.rows(), "cluster_queries: need 1 <= c <= N");
  const auto planes = make_planes<T>(q.cols(), opts.bits, opts.seed);
  const HashCodes codes = hash_queries(q, planes);
  CentroidInit init = init_centroids(codes, c, opts.seed ^ 0x9e3779b97f4a7c15ULL);

  std::vector<HashCode> centroids = std::move(init.centroids);
  std::vector<std::size_t> objectives;
  for (std::size_t it = 0; it < opts.lloyd_iters; ++it) {
    LloydStep step = lloyd_step(codes, centroids, opts.threads);
    objectives.push_back(step.objective);
    centroids = std::move(step.centroids);
  }

  std::vector<std::size_t> assignments = detail::assign_all(codes, centroids, opts.threads);
  std::vector<std::size_t> counts(c, 0);
  for (std::size_t a : assignments) ++counts[a];
  const std::vector<HashCode> frozen = centroids;
  std::vector<bool> moved(codes.size(), false);
  for (std::size_t j = 0; j < c; ++j) {
    if (counts[j] != 0) continue;
    const std::size_t donor = detail::farthest_member(codes, assignments, frozen, moved,
                                                      [&](std::size_t i) { return counts[assignments[i]] >= 2; });
    --counts[assignments[donor]];
    assignments[donor] = j;
    ++counts[j];
    moved[donor] = true;
    centroids[j] = codes.codes[donor];
  }

  Clustering<T> out = clustering_from_assignments(q, std::move(assignments), c);
  out.binary_centroids = std::move(centroids);
  out.objectives = std::move(objectives);
  out.init_had_duplicates = init.has_duplicates;
  return out;
}

template <std::floating_point T>
Clustering<T> cluster_queries(const BasicMatrix<T>& q, std::size_t c, std::size_t bits, std::size_t lloyd_iters,
                              std::uint64_t seed) {
  return cluster_queries(q, c, ClusterOptions{bits, lloyd_iters, seed, 1});
}

}  // namespace clattn
