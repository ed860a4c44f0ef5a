#include "oracles.hpp"

#include <clattn/attention.hpp>
#include <clattn/synthetic.hpp>

#include <gtest/gtest.h>

using clattn::Matrix;

namespace {

struct Instance {
  Matrix q, k, v;
};

Instance random_instance(std::size_t n, std::size_t dk, std::size_t dv, std::mt19937_64& rng) {
  return {oracle::random_matrix(n, dk, rng), oracle::random_matrix(n, dk, rng), oracle::random_matrix(n, dv, rng)};
}

std::vector<std::size_t> random_assignments(std::size_t n, std::size_t c, std::mt19937_64& rng) {
  // Every cluster gets at least one member.
  std::vector<std::size_t> a(n);
  for (std::size_t i = 0; i < n; ++i) a[i] = i % c;
  std::shuffle(a.begin(), a.end(), rng);
  return a;
}

clattn::Clustering<float> singletons(const Matrix& q) {
  std::vector<std::size_t> a(q.rows());
  std::iota(a.begin(), a.end(), std::size_t{0});
  return clattn::clustering_from_assignments(q, a, q.rows());
}

void expect_rows_stochastic(const Matrix& a, double tol) {
  for (std::size_t r = 0; r < a.rows(); ++r) {
    double s = 0;
    for (float x : a.row(r)) {
      EXPECT_GE(x, 0.0f);
      s += x;
    }
    EXPECT_NEAR(s, 1.0, tol) << "row " << r;
  }
}

}  // namespace

TEST(FullAttention, SingleKeyCopiesValue) {
  const Matrix q{{0.3f, -1}, {2, 5}};
  const Matrix k{{1, 1}};
  const Matrix v{{4, -2, 7}};
  const auto r = clattn::full_attention(q, k, v, {.diagnostic = true});
  ASSERT_TRUE(r.attn);
  EXPECT_EQ(r.attn->rows(), 2u);
  EXPECT_EQ((*r.attn)(0, 0), 1.0f);
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t d = 0; d < 3; ++d) EXPECT_FLOAT_EQ(r.values(i, d), v(0, d));
}

TEST(FullAttention, OrthogonalQueriesAverageValues) {
  const Matrix q{{1, 0}, {2, 0}};
  const Matrix k{{0, 1}, {0, -3}, {0, 2}};
  const Matrix v{{1, 10}, {2, 20}, {6, 60}};
  const auto r = clattn::full_attention(q, k, v);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_NEAR(r.values(i, 0), 3.0, 1e-6);
    EXPECT_NEAR(r.values(i, 1), 30.0, 1e-5);
  }
}

TEST(FullAttention, MatchesScalarOracle) {
  std::mt19937_64 rng(100);
  for (int trial = 0; trial < 10; ++trial) {
    const auto x = random_instance(8, 4, 3, rng);
    for (bool scale : {true, false}) {
      const auto r = clattn::full_attention(x.q, x.k, x.v, {.scale = scale, .diagnostic = true});
      EXPECT_LT(oracle::max_abs_diff(r.values, oracle::attention(x.q, x.k, x.v, scale)), 1e-5);
      expect_rows_stochastic(*r.attn, 1e-5);
    }
  }
}

TEST(FullAttention, RejectsDimensionMismatch) {
  EXPECT_THROW(clattn::full_attention(Matrix(2, 3), Matrix(2, 4), Matrix(2, 1)), clattn::InvalidArgument);
  EXPECT_THROW(clattn::full_attention(Matrix(2, 3), Matrix(2, 3), Matrix(3, 1)), clattn::InvalidArgument);
}

TEST(FullAttention, ThreadCountDoesNotChangeBits) {
  std::mt19937_64 rng(1);
  const auto x = random_instance(37, 8, 5, rng);
  const auto one = clattn::full_attention(x.q, x.k, x.v, {.threads = 1});
  const auto many = clattn::full_attention(x.q, x.k, x.v, {.threads = 5});
  EXPECT_EQ(one.values, many.values);
}

TEST(ClusteredAttention, SingletonClustersEqualFull) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 10; ++trial) {
    const auto x = random_instance(12, 6, 4, rng);
    const auto full = clattn::full_attention(x.q, x.k, x.v);
    const auto cl = clattn::clustered_attention(x.q, x.k, x.v, singletons(x.q));
    EXPECT_LT(oracle::max_abs_diff(cl.values, full.values), 1e-6);
  }
}

TEST(ClusteredAttention, IdenticalQueriesOneClusterIsExact) {
  std::mt19937_64 rng(3);
  Matrix q(9, 5);
  const Matrix one = oracle::random_matrix(1, 5, rng);
  for (std::size_t i = 0; i < 9; ++i) std::copy(one.row(0).begin(), one.row(0).end(), q.row(i).begin());
  const Matrix k = oracle::random_matrix(9, 5, rng), v = oracle::random_matrix(9, 3, rng);
  const auto clustering = clattn::clustering_from_assignments(q, std::vector<std::size_t>(9, 0), 1);
  const auto full = clattn::full_attention(q, k, v);
  const auto cl = clattn::clustered_attention(q, k, v, clustering);
  EXPECT_LT(oracle::max_abs_diff(cl.values, full.values), 1e-6);
  for (std::size_t i = 1; i < 9; ++i)
    EXPECT_TRUE(std::equal(cl.values.row(i).begin(), cl.values.row(i).end(), cl.values.row(0).begin()));
}

TEST(ClusteredAttention, MatchesStagedComposition) {
  // centroids -> A^c = softmax(Q^c K^T / sqrt(Dk)) -> V^c = A^c V -> broadcast,
  // each step with the plain Matrix ops.
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    const auto x = random_instance(6, 4, 3, rng);
    const auto assign = random_assignments(6, 2, rng);
    const auto clustering = clattn::clustering_from_assignments(x.q, assign, 2);

    const Matrix qc = oracle::centroids(x.q, assign, 2);
    Matrix logits = clattn::matmul(qc, clattn::transpose(x.k));
    for (auto& e : logits.data()) e /= 2.0f;  // sqrt(4)
    const Matrix ac = clattn::softmax_rows(logits);
    const Matrix vc = clattn::matmul(ac, x.v);
    Matrix expected(6, 3);
    for (std::size_t i = 0; i < 6; ++i) std::copy(vc.row(assign[i]).begin(), vc.row(assign[i]).end(), expected.row(i).begin());

    const auto r = clattn::clustered_attention(x.q, x.k, x.v, clustering, {.diagnostic = true});
    EXPECT_LT(oracle::max_abs_diff(r.values, expected), 1e-6);
    ASSERT_TRUE(r.attn);
    EXPECT_EQ(r.attn->rows(), 2u);
    EXPECT_LT(oracle::max_abs_diff(*r.attn, ac), 1e-6);
    expect_rows_stochastic(*r.attn, 1e-5);
  }
}

TEST(ClusteredAttention, RejectsMismatchedClustering) {
  std::mt19937_64 rng(5);
  const auto x = random_instance(6, 4, 3, rng);
  const auto other = clattn::clustering_from_assignments(Matrix(5, 4), {0, 0, 1, 1, 0}, 2);
  EXPECT_THROW(clattn::clustered_attention(x.q, x.k, x.v, other), clattn::InvalidArgument);
}

TEST(TopK, HandExample) {
  const Matrix ac{{0.5f, 0.3f, 0.2f}};
  const auto t = clattn::topk_per_cluster(ac, 2);
  EXPECT_EQ(t.indices[0], (std::vector<std::size_t>{0, 1}));
  EXPECT_NEAR(t.masses[0], 0.8, 1e-7);
}

TEST(TopK, FullKHasUnitMass) {
  const Matrix ac = clattn::softmax_rows(Matrix{{0.1f, 2, -1, 0.5f}, {3, 3, 3, 3}});
  const auto t = clattn::topk_per_cluster(ac, 4);
  for (std::size_t j = 0; j < 2; ++j) {
    EXPECT_EQ(t.indices[j], (std::vector<std::size_t>{0, 1, 2, 3}));
    EXPECT_NEAR(t.masses[j], 1.0, 1e-6);
  }
}

TEST(TopK, TiesGoToLowestIndex) {
  const Matrix ac{{0.25f, 0.25f, 0.25f, 0.25f}};
  EXPECT_EQ(clattn::topk_per_cluster(ac, 2).indices[0], (std::vector<std::size_t>{0, 1}));
}

TEST(TopK, MatchesFullSort) {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix ac = clattn::softmax_rows(oracle::random_matrix(3, 16, rng));
    const auto t = clattn::topk_per_cluster(ac, 4);
    for (std::size_t j = 0; j < 3; ++j) {
      const auto row = ac.row(j);
      EXPECT_EQ(t.indices[j], oracle::topk_by_sort(row, 4));
      double mass = 0;
      for (auto l : t.indices[j]) mass += row[l];
      EXPECT_NEAR(t.masses[j], mass, 1e-6);
    }
  }
}

TEST(TopK, RejectsOutOfRange) {
  EXPECT_THROW(clattn::topk_per_cluster(Matrix(2, 3), 0), clattn::InvalidArgument);
  EXPECT_THROW(clattn::topk_per_cluster(Matrix(2, 3), 4), clattn::InvalidArgument);
}

TEST(ImprovedAttention, FullTopKEqualsFull) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    const auto x = random_instance(10, 4, 3, rng);
    const auto clustering = clattn::clustering_from_assignments(x.q, random_assignments(10, 3, rng), 3);
    const auto full = clattn::full_attention(x.q, x.k, x.v);
    const auto imp = clattn::improved_clustered_attention(x.q, x.k, x.v, clustering, 10);
    EXPECT_LT(oracle::max_abs_diff(imp.values, full.values), 1e-5);
  }
}

TEST(ImprovedAttention, SingletonClustersEqualFullForAnyK) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 10; ++trial) {
    const auto x = random_instance(8, 4, 3, rng);
    const auto full = clattn::full_attention(x.q, x.k, x.v);
    for (std::size_t k = 1; k <= 8; ++k) {
      const auto imp = clattn::improved_clustered_attention(x.q, x.k, x.v, singletons(x.q), k);
      EXPECT_LT(oracle::max_abs_diff(imp.values, full.values), 1e-5) << "k " << k;
    }
  }
}

TEST(ImprovedAttention, MatchesDenseFormulaOracle) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    const auto x = random_instance(6, 4, 3, rng);
    const auto assign = random_assignments(6, 2, rng);
    const auto clustering = clattn::clustering_from_assignments(x.q, assign, 2);
    const auto dense = oracle::improved_matrix(x.q, x.k, assign, 2, 2);
    const auto imp = clattn::improved_clustered_attention(x.q, x.k, x.v, clustering, 2, {.diagnostic = true});
    EXPECT_LT(oracle::max_abs_diff(imp.values, oracle::apply_weights(dense, x.v)), 1e-5);

    const Matrix at = clattn::improved_attention_matrix(x.q, x.k, clustering, 2);
    for (std::size_t i = 0; i < 6; ++i)
      for (std::size_t l = 0; l < 6; ++l) EXPECT_NEAR(at(i, l), static_cast<double>(dense[i][l]), 1e-6);
    ASSERT_TRUE(imp.attn);
    EXPECT_EQ(*imp.attn, at);
  }
}

TEST(ImprovedAttentionMatrix, RowsAndTopMassAreConserved) {
  std::mt19937_64 rng(10);
  for (int trial = 0; trial < 20; ++trial) {
    const auto x = random_instance(24, 8, 4, rng);
    const std::size_t c = 1 + trial % 6, k = 1 + trial % 9;
    const auto clustering = clattn::clustering_from_assignments(x.q, random_assignments(24, c, rng), c);
    const Matrix at = clattn::improved_attention_matrix(x.q, x.k, clustering, k);
    expect_rows_stochastic(at, 1e-5);

    const auto r = clattn::clustered_attention(x.q, x.k, x.v, clustering, {.diagnostic = true});
    const auto top = clattn::topk_per_cluster(*r.attn, k);
    for (std::size_t i = 0; i < 24; ++i) {
      const std::size_t j = clustering.assignments[i];
      double mass = 0;
      for (auto l : top.indices[j]) mass += at(i, l);
      EXPECT_NEAR(mass, top.masses[j], 1e-6);
      // Off the top-k columns the row is the cluster's row.
      std::vector<char> in_top(24, 0);
      for (auto l : top.indices[j]) in_top[l] = 1;
      for (std::size_t l = 0; l < 24; ++l) {
        if (!in_top[l]) {
          EXPECT_EQ(at(i, l), (*r.attn)(j, l));
        }
      }
    }

    const auto imp = clattn::improved_clustered_attention(x.q, x.k, x.v, clustering, k);
    EXPECT_LT(oracle::max_rel_diff(imp.values, clattn::matmul(at, x.v)), 1e-5);
  }
}

TEST(ImprovedAttention, ExtremeLogitsStayFinite) {
  // The cluster row puts all float mass on key 0; the rest of A^c underflows
  // to exactly 0.
  const Matrix q{{100, 0}, {100, 0}};
  const Matrix k{{1, 0}, {-1, 0}, {-1, 0}};
  const Matrix v{{1, 2}, {3, 4}, {5, 6}};
  const auto clustering = clattn::clustering_from_assignments(q, {0, 0}, 1);
  for (std::size_t topk : {1u, 2u, 3u}) {
    const auto imp = clattn::improved_clustered_attention(q, k, v, clustering, topk, {.scale = false});
    EXPECT_TRUE(imp.values.all_finite());
    EXPECT_NEAR(imp.values(0, 0), 1.0, 1e-6);
    EXPECT_NEAR(imp.values(1, 1), 2.0, 1e-6);
  }
}

TEST(ImprovedAttention, RejectsBadTopK) {
  std::mt19937_64 rng(11);
  const auto x = random_instance(5, 3, 2, rng);
  const auto clustering = singletons(x.q);
  EXPECT_THROW(clattn::improved_clustered_attention(x.q, x.k, x.v, clustering, 0), clattn::InvalidArgument);
  EXPECT_THROW(clattn::improved_clustered_attention(x.q, x.k, x.v, clustering, 6), clattn::InvalidArgument);
  EXPECT_THROW(clattn::improved_attention_matrix(x.q, x.k, clustering, 6), clattn::InvalidArgument);
}

TEST(OracleTop, FullKIsBitIdenticalToFull) {
  std::mt19937_64 rng(12);
  const auto x = random_instance(16, 8, 4, rng);
  EXPECT_EQ(clattn::oracle_top_attention(x.q, x.k, x.v, 16).values, clattn::full_attention(x.q, x.k, x.v).values);
}

TEST(OracleTop, DominantLogitSelectsItsValue) {
  const Matrix q{{1, 0}};
  const Matrix k{{50, 0}, {1, 0}, {0, 1}, {-2, 0}};
  const Matrix v{{1, -1}, {5, 5}, {7, 7}, {9, 9}};
  const auto r = clattn::oracle_top_attention(q, k, v, 1, {.scale = false});
  EXPECT_NEAR(r.values(0, 0), 1.0, 1e-4);
  EXPECT_NEAR(r.values(0, 1), -1.0, 1e-4);
}

TEST(OracleTop, MatchesSortZeroRenormalize) {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 10; ++trial) {
    const auto x = random_instance(8, 4, 3, rng);
    auto a = oracle::attention_matrix(x.q, x.k);
    for (auto& row : a) {
      const auto keep = oracle::topk_by_sort(row, 3);
      std::vector<long double> kept(row.size(), 0);
      long double s = 0;
      for (auto l : keep) s += row[l];
      for (auto l : keep) kept[l] = row[l] / s;
      row = kept;
    }
    const auto r = clattn::oracle_top_attention(x.q, x.k, x.v, 3, {.diagnostic = true});
    EXPECT_LT(oracle::max_abs_diff(r.values, oracle::apply_weights(a, x.v)), 1e-6);
    expect_rows_stochastic(*r.attn, 1e-5);
  }
}

TEST(Attention, PermutingKeysWithValuesIsInvariant) {
  std::mt19937_64 rng(14);
  for (int trial = 0; trial < 10; ++trial) {
    const auto x = random_instance(20, 6, 4, rng);
    std::vector<std::size_t> perm(20);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    Matrix kp(20, 6), vp(20, 4);
    for (std::size_t l = 0; l < 20; ++l) {
      std::copy(x.k.row(perm[l]).begin(), x.k.row(perm[l]).end(), kp.row(l).begin());
      std::copy(x.v.row(perm[l]).begin(), x.v.row(perm[l]).end(), vp.row(l).begin());
    }
    const auto clustering = clattn::clustering_from_assignments(x.q, random_assignments(20, 4, rng), 4);
    EXPECT_LT(oracle::max_abs_diff(clattn::full_attention(x.q, kp, vp).values,
                                   clattn::full_attention(x.q, x.k, x.v).values), 1e-6);
    EXPECT_LT(oracle::max_abs_diff(clattn::clustered_attention(x.q, kp, vp, clustering).values,
                                   clattn::clustered_attention(x.q, x.k, x.v, clustering).values), 1e-6);
    // Continuous inputs: no ties in A^c, so the top-k set maps through perm.
    EXPECT_LT(oracle::max_abs_diff(clattn::improved_clustered_attention(x.q, kp, vp, clustering, 5).values,
                                   clattn::improved_clustered_attention(x.q, x.k, x.v, clustering, 5).values), 1e-6);
  }
}

TEST(Attention, ClusteredKernelsAvoidQuadraticStorage) {
  const std::size_t n = 2048, c = 16, k = 32, dk = 32, dv = 32;
  const auto fx = clattn::make_gaussian_qkv<float>(n, dk, dv, 4, 0.3, 1);
  const auto clustering = clattn::cluster_queries(fx.q, c, clattn::ClusterOptions{.seed = 1});
  const std::size_t quadratic = n * n * sizeof(float);
  // Output plus A^c (float) plus per-cluster bottom branch (double) plus a
  // handful of N- and k-sized scratch rows.
  const std::size_t linear_budget =
      n * dv * sizeof(float) + c * n * sizeof(float) + c * dv * sizeof(double) + 8 * n * sizeof(double) +
      c * k * sizeof(std::size_t) + 4096;
  {
    clattn::PeakAllocationScope scope;
    clattn::clustered_attention(fx.q, fx.k, fx.v, clustering);
    EXPECT_LE(scope.peak_bytes(), linear_budget);
    EXPECT_LT(scope.peak_bytes(), quadratic / 8);
  }
  {
    clattn::PeakAllocationScope scope;
    clattn::improved_clustered_attention(fx.q, fx.k, fx.v, clustering, k);
    EXPECT_LE(scope.peak_bytes(), linear_budget);
  }
  {
    clattn::PeakAllocationScope scope;
    clattn::full_attention(fx.q, fx.k, fx.v, {.diagnostic = true});
    EXPECT_GE(scope.peak_bytes(), quadratic);
  }
}

TEST(Attention, ThreadCountDoesNotChangeBits) {
  const auto fx = clattn::make_gaussian_qkv<float>(150, 16, 8, 3, 0.2, 5);
  const auto clustering = clattn::cluster_queries(fx.q, 10, clattn::ClusterOptions{.seed = 5});
  for (std::size_t t : {2u, 3u, 7u}) {
    EXPECT_EQ(clattn::clustered_attention(fx.q, fx.k, fx.v, clustering, {.threads = t}).values,
              clattn::clustered_attention(fx.q, fx.k, fx.v, clustering).values);
    EXPECT_EQ(clattn::improved_clustered_attention(fx.q, fx.k, fx.v, clustering, 16, {.threads = t}).values,
              clattn::improved_clustered_attention(fx.q, fx.k, fx.v, clustering, 16).values);
    EXPECT_EQ(clattn::oracle_top_attention(fx.q, fx.k, fx.v, 16, {.threads = t}).values,
              clattn::oracle_top_attention(fx.q, fx.k, fx.v, 16).values);
  }
}

TEST(Attention, DoublePrecisionKernelsInstantiate) {
  const auto fx = clattn::make_gaussian_qkv<double>(32, 8, 4, 2, 0.1, 3);
  const auto clustering = clattn::cluster_queries(fx.q, 4, clattn::ClusterOptions{.seed = 3});
  const auto full = clattn::full_attention(fx.q, fx.k, fx.v);
  const auto imp = clattn::improved_clustered_attention(fx.q, fx.k, fx.v, clustering, 32);
  double m = 0;
  for (std::size_t i = 0; i < full.values.size(); ++i)
    m = std::max(m, std::abs(full.values.data()[i] - imp.values.data()[i]));
  EXPECT_LT(m, 1e-12);
}
