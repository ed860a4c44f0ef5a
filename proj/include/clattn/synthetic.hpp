#pragma once

// Fixture generators: the masked-copy sequence task and Gaussian-mixture
// query/key/value tensors.

#include <clattn/matrix.hpp>

#include <cmath>
#include <numeric>
#include <optional>
#include <ostream>
#include <string>

namespace clattn {

inline constexpr int kSeparatorToken = 0;
inline constexpr std::size_t kDefaultNumSymbols = 10;
inline constexpr double kDefaultMaskRate = 0.2;

// Sequences of length 2L+2 laid out as [0, w, 0, w]. Tokens 1..num_symbols are
// symbols and num_symbols+1 is the mask token.
struct MaskedCopyInstance {
  std::vector<int> input;
  std::vector<int> target;
  std::size_t length = 0;
  int mask_token = 0;
};

inline MaskedCopyInstance generate_masked_copy(std::size_t len, std::size_t num_symbols, double mask_rate,
                                               std::uint64_t seed) {
  detail::require(len >= 1, "generate_masked_copy: length must be >= 1");
  detail::require(num_symbols >= 1, "generate_masked_copy: need at least one symbol");
  detail::require(mask_rate >= 0.0 && mask_rate <= 0.5, "generate_masked_copy: mask rate must be in [0, 0.5]");

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> symbol(1, static_cast<int>(num_symbols));

  MaskedCopyInstance inst;
  inst.length = len;
  inst.mask_token = static_cast<int>(num_symbols) + 1;
  inst.target.assign(2 * len + 2, kSeparatorToken);
  for (std::size_t o = 0; o < len; ++o) {
    const int s = symbol(rng);
    inst.target[1 + o] = s;
    inst.target[len + 2 + o] = s;
  }
  inst.input = inst.target;

  // Distinct offsets, each masked in exactly one half. mask_rate <= 0.5 keeps
  // the count within len.
  const auto masked = static_cast<std::size_t>(std::lround(mask_rate * 2.0 * static_cast<double>(len)));
  std::vector<std::size_t> offsets(len);
  std::iota(offsets.begin(), offsets.end(), std::size_t{0});
  std::bernoulli_distribution second_half(0.5);
  for (std::size_t m = 0; m < masked; ++m) {
    std::uniform_int_distribution<std::size_t> pick(m, len - 1);
    std::swap(offsets[m], offsets[pick(rng)]);
    const std::size_t base = second_half(rng) ? len + 2 : 1;
    inst.input[base + offsets[m]] = inst.mask_token;
  }
  return inst;
}

// Rebuilds the target from the input alone, filling each masked slot from
// its twin in the other half. Returns nullopt if the input is malformed or a
// slot is masked in both halves.
inline std::optional<std::vector<int>> reconstruct_masked_copy(std::span<const int> input, std::size_t len,
                                                               int mask_token) {
  if (input.size() != 2 * len + 2) return std::nullopt;
  if (input[0] != kSeparatorToken || input[len + 1] != kSeparatorToken) return std::nullopt;
  std::vector<int> out(input.begin(), input.end());
  for (std::size_t o = 0; o < len; ++o) {
    int& a = out[1 + o];
    int& b = out[len + 2 + o];
    if (a == mask_token && b == mask_token) return std::nullopt;
    if (a == mask_token) a = b;
    if (b == mask_token) b = a;
    if (a != b) return std::nullopt;
  }
  return out;
}

struct CopyTaskCheck {
  bool ok = true;
  std::string reason;
};

// Structural validator: separators at 0 and L+1, target of the form 0w0w with
// symbols in range, unmasked input tokens equal the target, and the target is
// recoverable from the input.
inline CopyTaskCheck validate_masked_copy(const MaskedCopyInstance& inst, std::size_t num_symbols) {
  const std::size_t len = inst.length;
  auto fail = [](std::string why) { return CopyTaskCheck{false, std::move(why)}; };
  if (inst.target.size() != 2 * len + 2 || inst.input.size() != 2 * len + 2) return fail("sequence length");
  if (inst.target[0] != kSeparatorToken || inst.target[len + 1] != kSeparatorToken) return fail("target separator");
  for (std::size_t o = 0; o < len; ++o) {
    const int s = inst.target[1 + o];
    if (s < 1 || s > static_cast<int>(num_symbols)) return fail("target symbol out of range");
    if (inst.target[len + 2 + o] != s) return fail("target halves differ");
  }
  for (std::size_t p = 0; p < inst.input.size(); ++p) {
    if (inst.input[p] == inst.mask_token) {
      if (p == 0 || p == len + 1) return fail("separator masked");
      continue;
    }
    if (inst.input[p] != inst.target[p]) return fail("unmasked input differs from target");
  }
  const auto rebuilt = reconstruct_masked_copy(inst.input, len, inst.mask_token);
  if (!rebuilt) return fail("input not recoverable");
  if (*rebuilt != inst.target) return fail("reconstruction differs from target");
  return {};
}

inline void write_csv_line(std::ostream& os, std::span<const int> tokens) {
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) os << ',';
    os << tokens[i];
  }
  os << '\n';
}

template <std::floating_point T = float>
struct QkvFixture {
  BasicMatrix<T> q, k, v;
  // Mode index of each query.
  std::vector<std::size_t> modes;
};

// Queries are drawn around num_modes unit-norm centers with per-coordinate
// std `spread` (query i uses mode i % num_modes); K and V are i.i.d. N(0, 1).
template <std::floating_point T = float>
QkvFixture<T> make_gaussian_qkv(std::size_t n, std::size_t dk, std::size_t dv, std::size_t num_modes, double spread,
                                std::uint64_t seed) {
  detail::require(n >= 1 && dk >= 1 && dv >= 1 && num_modes >= 1, "make_gaussian_qkv: counts must be >= 1");
  detail::require(spread >= 0.0, "make_gaussian_qkv: spread must be >= 0");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  std::vector<double> centers(num_modes * dk);
  for (std::size_t m = 0; m < num_modes; ++m) {
    double norm = 0.0;
    do {
      norm = 0.0;
      for (std::size_t d = 0; d < dk; ++d) {
        centers[m * dk + d] = normal(rng);
        norm += centers[m * dk + d] * centers[m * dk + d];
      }
    } while (norm == 0.0);
    norm = std::sqrt(norm);
    for (std::size_t d = 0; d < dk; ++d) centers[m * dk + d] /= norm;
  }

  QkvFixture<T> f{BasicMatrix<T>(n, dk), BasicMatrix<T>(n, dk), BasicMatrix<T>(n, dv), std::vector<std::size_t>(n)};
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t m = i % num_modes;
    f.modes[i] = m;
    for (std::size_t d = 0; d < dk; ++d) f.q(i, d) = static_cast<T>(centers[m * dk + d] + spread * normal(rng));
  }
  for (T& x : f.k.data()) x = static_cast<T>(normal(rng));
  for (T& x : f.v.data()) x = static_cast<T>(normal(rng));
  return f;
}

// i.i.d. N(0, stddev^2) matrix.
template <std::floating_point T = float>
BasicMatrix<T> random_normal_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed, double stddev = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, stddev);
  BasicMatrix<T> m(rows, cols);
  for (T& x : m.data()) x = static_cast<T>(normal(rng));
  return m;
}

}  // namespace clattn
