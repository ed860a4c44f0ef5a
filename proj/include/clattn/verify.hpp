#pragma once

// Batch verification behind `clattn verify`: for each instance, cluster the
// queries, run both bound checks and compare every approximate kernel with
// full attention. Results serialize to JSON.

#include <clattn/diagnostics.hpp>
#include <clattn/synthetic.hpp>

#include <json.hpp>

namespace clattn {

struct VerifyConfig {
  std::size_t instances = 100;
  std::size_t seq_len = 64;
  std::size_t clusters = 8;
  std::size_t topk = kDefaultTopK;
  std::size_t bits = kDefaultHashBits;
  std::size_t lloyd_iters = kDefaultLloydIters;
  std::size_t dk = 16;
  std::size_t dv = 16;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
};

struct InstanceVerdict {
  std::size_t index = 0;
  std::uint64_t seed = 0;
  std::size_t seq_len = 0;
  std::size_t clusters = 0;
  std::size_t topk = 0;
  std::size_t prop1_violations = 0;
  std::size_t thm2_violations = 0;
  std::size_t mass_identity_violations = 0;
  double prop1_max_slack = 0.0;
  double thm2_max_slack = 0.0;
  ErrorSummary clustered;
  ErrorSummary improved;
  ErrorSummary oracle_top;
};

struct VerifySummary {
  std::vector<InstanceVerdict> instances;

  std::size_t prop1_violations() const {
    std::size_t s = 0;
    for (const auto& v : instances) s += v.prop1_violations;
    return s;
  }
  std::size_t thm2_violations() const {
    std::size_t s = 0;
    for (const auto& v : instances) s += v.thm2_violations + v.mass_identity_violations;
    return s;
  }
  bool ok() const { return prop1_violations() == 0 && thm2_violations() == 0; }
};

inline InstanceVerdict verify_instance(const Matrix& q, const Matrix& k, const Matrix& v, const VerifyConfig& cfg,
                                       std::size_t index, std::uint64_t seed) {
  detail::require(cfg.clusters >= 1 && cfg.clusters <= q.rows(), "verify: need 1 <= clusters <= seq_len");
  detail::require(cfg.topk >= 1 && cfg.topk <= k.rows(), "verify: need 1 <= topk <= seq_len");
  const auto clustering = cluster_queries(q, cfg.clusters, ClusterOptions{cfg.bits, cfg.lloyd_iters, seed, cfg.threads});
  AttentionOptions opts;
  opts.threads = cfg.threads;

  InstanceVerdict out;
  out.index = index;
  out.seed = seed;
  out.seq_len = q.rows();
  out.clusters = cfg.clusters;
  out.topk = cfg.topk;

  const ApproxReport prop1 = check_lipschitz_bound(q, k, clustering);
  out.prop1_violations = prop1.count(ViolationKind::LipschitzBound);
  out.prop1_max_slack = prop1.max_slack;

  const ApproxReport thm2 = check_l1_dominance(q, k, clustering, cfg.topk, opts);
  out.thm2_violations = thm2.count(ViolationKind::L1Dominance);
  out.mass_identity_violations = thm2.count(ViolationKind::MassIdentity);
  out.thm2_max_slack = thm2.max_slack;

  const auto full = full_attention(q, k, v, opts);
  out.clustered = error_summary(clustered_attention(q, k, v, clustering, opts), full);
  out.improved = error_summary(improved_clustered_attention(q, k, v, clustering, cfg.topk, opts), full);
  out.oracle_top = error_summary(oracle_top_attention(q, k, v, cfg.topk, opts), full);
  return out;
}

// Random instances: Q, K, V i.i.d. N(0, 1), instance i seeded with seed + i.
inline VerifySummary verify_random(const VerifyConfig& cfg) {
  VerifySummary summary;
  for (std::size_t i = 0; i < cfg.instances; ++i) {
    const std::uint64_t seed = cfg.seed + i;
    const auto f = make_gaussian_qkv<float>(cfg.seq_len, cfg.dk, cfg.dv, 1, 1.0, seed);
    summary.instances.push_back(verify_instance(f.q, f.k, f.v, cfg, i, seed));
  }
  return summary;
}

inline nlohmann::json to_json(const ErrorSummary& s) {
  return {{"mean_l1", s.mean_l1}, {"max_l1", s.max_l1}, {"mean_l2", s.mean_l2}, {"max_l2", s.max_l2}};
}

inline nlohmann::json to_json(const ApproxReport& r) {
  nlohmann::json violations = nlohmann::json::array();
  for (const auto& v : r.violations)
    violations.push_back({{"query", v.query}, {"slack", v.slack}, {"kind", to_string(v.kind)}});
  nlohmann::json masses = nlohmann::json::array();
  for (const auto& [m, m_hat] : r.masses) masses.push_back({m, m_hat});
  return {{"per_query_l1", r.per_query_l1},
          {"per_query_l2", r.per_query_l2},
          {"per_query_bound", r.per_query_bound},
          {"violations", violations},
          {"masses", masses},
          {"max_slack", r.max_slack},
          {"spectral_norm", r.spectral_norm},
          {"spectral_norm_converged", r.spectral_norm_converged}};
}

inline nlohmann::json to_json(const VerifySummary& s) {
  nlohmann::json instances = nlohmann::json::array();
  double clustered_max = 0, improved_max = 0, oracle_max = 0;
  double clustered_mean = 0, improved_mean = 0, oracle_mean = 0;
  double prop1_slack = -std::numeric_limits<double>::infinity();
  double thm2_slack = -std::numeric_limits<double>::infinity();
  for (const auto& v : s.instances) {
    instances.push_back({{"index", v.index},
                         {"seed", v.seed},
                         {"seq_len", v.seq_len},
                         {"clusters", v.clusters},
                         {"topk", v.topk},
                         {"prop1_violations", v.prop1_violations},
                         {"thm2_violations", v.thm2_violations},
                         {"mass_identity_violations", v.mass_identity_violations},
                         {"prop1_max_slack", v.prop1_max_slack},
                         {"thm2_max_slack", v.thm2_max_slack},
                         {"clustered", to_json(v.clustered)},
                         {"improved", to_json(v.improved)},
                         {"oracle_top", to_json(v.oracle_top)}});
    clustered_max = std::max(clustered_max, v.clustered.max_l1);
    improved_max = std::max(improved_max, v.improved.max_l1);
    oracle_max = std::max(oracle_max, v.oracle_top.max_l1);
    clustered_mean += v.clustered.mean_l1;
    improved_mean += v.improved.mean_l1;
    oracle_mean += v.oracle_top.mean_l1;
    prop1_slack = std::max(prop1_slack, v.prop1_max_slack);
    thm2_slack = std::max(thm2_slack, v.thm2_max_slack);
  }
  const double n = s.instances.empty() ? 1.0 : static_cast<double>(s.instances.size());
  return {{"instances", instances},
          {"instance_count", s.instances.size()},
          {"prop1_violations", s.prop1_violations()},
          {"thm2_violations", s.thm2_violations()},
          {"prop1_max_slack", s.instances.empty() ? 0.0 : prop1_slack},
          {"thm2_max_slack", s.instances.empty() ? 0.0 : thm2_slack},
          {"clustered_mean_l1", clustered_mean / n},
          {"clustered_max_l1", clustered_max},
          {"improved_mean_l1", improved_mean / n},
          {"improved_max_l1", improved_max},
          {"oracle_top_mean_l1", oracle_mean / n},
          {"oracle_top_max_l1", oracle_max},
          {"ok", s.ok()}};
}

}  // namespace clattn
