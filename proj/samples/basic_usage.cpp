// Clusters 1024 queries into 32 groups and compares clustered and improved
// clustered attention against exact softmax attention.

#include <clattn/clattn.hpp>

#include <iostream>

int main() {
  const auto fx = clattn::make_gaussian_qkv<float>(1024, 64, 64, 16, 0.2, 42);
  const auto clustering = clattn::cluster_queries(fx.q, 32, clattn::ClusterOptions{.seed = 42});

  const auto exact = clattn::full_attention(fx.q, fx.k, fx.v);
  const auto clustered = clattn::clustered_attention(fx.q, fx.k, fx.v, clustering);
  const auto improved = clattn::improved_clustered_attention(fx.q, fx.k, fx.v, clustering, 32);

  const auto e_c = clattn::error_summary(clustered, exact);
  const auto e_i = clattn::error_summary(improved, exact);
  std::cout << "clustered: mean L1 " << e_c.mean_l1 << ", max L1 " << e_c.max_l1 << '\n';
  std::cout << "improved:  mean L1 " << e_i.mean_l1 << ", max L1 " << e_i.max_l1 << '\n';
}
