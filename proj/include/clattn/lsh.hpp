#pragma once

// Sign-random-projection hashing: bit b of a query's code is set iff the query
// lies on the positive side of random hyperplane b.

#include <clattn/matrix.hpp>

#include <bit>
#include <cstdint>
#include <random>
#include <vector>

namespace clattn {

using HashCode = std::uint64_t;

inline constexpr std::size_t kMaxHashBits = 63;
inline constexpr std::size_t kDefaultHashBits = 63;

template <std::floating_point T = float>
class ProjectionSet {
 public:
  // Wraps caller-provided hyperplane normals, one per row.
  explicit ProjectionSet(BasicMatrix<T> planes, std::uint64_t seed = 0) : planes_(std::move(planes)), seed_(seed) {
    detail::require(planes_.rows() >= 1 && planes_.rows() <= kMaxHashBits, "projection set: bits must be in [1, 63]");
    detail::require(planes_.cols() >= 1, "projection set: dimension must be >= 1");
    for (std::size_t b = 0; b < planes_.rows(); ++b)
      detail::require(dot(planes_.row(b), planes_.row(b)) > 0.0, "projection set: plane with zero norm");
  }

  std::size_t bits() const noexcept { return planes_.rows(); }
  std::size_t dim() const noexcept { return planes_.cols(); }
  std::uint64_t seed() const noexcept { return seed_; }
  const BasicMatrix<T>& planes() const noexcept { return planes_; }

 private:
  BasicMatrix<T> planes_;
  std::uint64_t seed_;
};

struct HashCodes {
  std::vector<HashCode> codes;
  std::size_t bits = 0;

  std::size_t size() const noexcept { return codes.size(); }
};

// bits x dk matrix of i.i.d. standard normals from mt19937_64(seed).
template <std::floating_point T = float>
ProjectionSet<T> make_planes(std::size_t dk, std::size_t bits, std::uint64_t seed) {
  detail::require(bits >= 1 && bits <= kMaxHashBits, "make_planes: bits must be in [1, 63]");
  detail::require(dk >= 1, "make_planes: dk must be >= 1");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  BasicMatrix<T> planes(bits, dk);
  for (std::size_t b = 0; b < bits; ++b) {
    // Redraw the (measure-zero) all-zero row so the plane invariant holds.
    do {
      for (T& x : planes.row(b)) x = static_cast<T>(normal(rng));
    } while (dot(planes.row(b), planes.row(b)) == 0.0);
  }
  return ProjectionSet<T>(std::move(planes), seed);
}

template <std::floating_point T>
HashCode hash_vector(std::span<const T> v, const ProjectionSet<T>& planes) noexcept {
  HashCode code = 0;
  for (std::size_t b = 0; b < planes.bits(); ++b)
    if (dot(v, planes.planes().row(b)) > 0.0) code |= HashCode{1} << b;
  return code;
}

template <std::floating_point T>
HashCodes hash_queries(const BasicMatrix<T>& q, const ProjectionSet<T>& planes) {
  detail::require(q.cols() == planes.dim(), "hash_queries: query width does not match plane dimension");
  HashCodes out;
  out.bits = planes.bits();
  out.codes.resize(q.rows());
  for (std::size_t i = 0; i < q.rows(); ++i) out.codes[i] = hash_vector(q.row(i), planes);
  return out;
}

constexpr std::size_t hamming_distance(HashCode a, HashCode b) noexcept {
  return static_cast<std::size_t>(std::popcount(a ^ b));
}

}  // namespace clattn
