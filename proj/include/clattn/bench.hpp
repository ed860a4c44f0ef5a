#pragma once

// Scaling benchmark harness: times one forward pass per (method, seq_len),
// reports wall time and allocator-accounted peak bytes per sequence element,
// and fits log-log slopes of total time against sequence length.

#include <clattn/attention.hpp>
#include <clattn/synthetic.hpp>

#include <chrono>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>

namespace clattn {

enum class Method { Full, Clustered, Improved, OracleTop };

inline constexpr std::array<Method, 4> kAllMethods{Method::Full, Method::Clustered, Method::Improved,
                                                   Method::OracleTop};

inline const char* to_string(Method m) {
  switch (m) {
    case Method::Full: return "full";
    case Method::Clustered: return "clustered";
    case Method::Improved: return "improved";
    case Method::OracleTop: return "oracle_top";
  }
  return "unknown";
}

inline Method parse_method(std::string_view name) {
  for (Method m : kAllMethods)
    if (name == to_string(m)) return m;
  throw InvalidArgument("unknown method '" + std::string(name) + "'");
}

struct BenchRecord {
  Method method = Method::Full;
  std::size_t seq_len = 0;
  std::size_t clusters = 0;
  std::size_t topk = 0;
  std::size_t bits = 0;
  std::size_t lloyd_iters = 0;
  double wall_time_per_element = 0.0;  // seconds
  double peak_bytes_per_element = 0.0;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  std::size_t batch = 1;

  double total_time() const noexcept { return wall_time_per_element * static_cast<double>(seq_len); }
};

// Memory is the allocator-accounted peak of the kernel call, not process RSS.
inline constexpr std::string_view kBenchCsvHeader =
    "method,seq_len,clusters,topk,bits,lloyd_iters,wall_time_per_element,alloc_peak_bytes_per_element,seed,threads,"
    "batch";

inline constexpr std::size_t kDefaultFullCap = std::size_t{1} << 14;

struct BenchConfig {
  std::vector<Method> methods{Method::Clustered};
  std::vector<std::size_t> seq_lens{512, 1024, 2048, 4096};
  std::size_t clusters = 100;
  std::size_t topk = kDefaultTopK;
  std::size_t bits = kDefaultHashBits;
  std::size_t lloyd_iters = kDefaultLloydIters;
  std::size_t dk = 64;
  std::size_t dv = 64;
  std::size_t repeats = 3;
  std::size_t warmup = 1;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  std::size_t full_cap = kDefaultFullCap;
};

namespace detail {

// One forward pass, clustering included for the clustered variants.
inline Matrix run_method(Method method, const Matrix& q, const Matrix& k, const Matrix& v, const BenchConfig& cfg) {
  AttentionOptions opts;
  opts.threads = cfg.threads;
  const std::size_t n = q.rows();
  switch (method) {
    case Method::Full: return full_attention(q, k, v, opts).values;
    case Method::OracleTop: return oracle_top_attention(q, k, v, std::min(cfg.topk, n), opts).values;
    case Method::Clustered:
    case Method::Improved: {
      const auto clustering =
          cluster_queries(q, std::min(cfg.clusters, n), ClusterOptions{cfg.bits, cfg.lloyd_iters, cfg.seed, cfg.threads});
      if (method == Method::Clustered) return clustered_attention(q, k, v, clustering, opts).values;
      return improved_clustered_attention(q, k, v, clustering, std::min(cfg.topk, n), opts).values;
    }
  }
  return {};
}

inline double median(std::vector<double> xs) {
  std::sort(xs.begin(), xs.end());
  const std::size_t m = xs.size() / 2;
  return xs.size() % 2 ? xs[m] : 0.5 * (xs[m - 1] + xs[m]);
}

}  // namespace detail

inline BenchRecord bench_one(Method method, std::size_t seq_len, const BenchConfig& cfg) {
  detail::require(seq_len >= 1, "bench: seq_len must be >= 1");
  detail::require(cfg.repeats >= 1, "bench: repeats must be >= 1");
  const auto fixture = make_gaussian_qkv<float>(seq_len, cfg.dk, cfg.dv, 1, 1.0, cfg.seed + seq_len);

  for (std::size_t w = 0; w < cfg.warmup; ++w) detail::run_method(method, fixture.q, fixture.k, fixture.v, cfg);

  std::vector<double> times;
  std::size_t peak = 0;
  for (std::size_t r = 0; r < cfg.repeats; ++r) {
    PeakAllocationScope scope;
    const auto start = std::chrono::steady_clock::now();
    const Matrix out = detail::run_method(method, fixture.q, fixture.k, fixture.v, cfg);
    const auto stop = std::chrono::steady_clock::now();
    peak = std::max(peak, scope.peak_bytes());
    times.push_back(std::chrono::duration<double>(stop - start).count());
  }

  BenchRecord rec;
  rec.method = method;
  rec.seq_len = seq_len;
  rec.clusters = std::min(cfg.clusters, seq_len);
  rec.topk = std::min(cfg.topk, seq_len);
  rec.bits = cfg.bits;
  rec.lloyd_iters = cfg.lloyd_iters;
  // Clamp so sub-resolution timings still satisfy the positive-time contract.
  rec.wall_time_per_element = std::max(detail::median(times), 1e-9) / static_cast<double>(seq_len);
  rec.peak_bytes_per_element = static_cast<double>(peak) / static_cast<double>(seq_len);
  rec.seed = cfg.seed;
  rec.threads = cfg.threads;
  return rec;
}

// Full attention above cfg.full_cap is skipped, not recorded.
inline std::vector<BenchRecord> run_benchmark(const BenchConfig& cfg) {
  std::vector<BenchRecord> out;
  for (Method m : cfg.methods)
    for (std::size_t n : cfg.seq_lens) {
      if (m == Method::Full && n > cfg.full_cap) continue;
      out.push_back(bench_one(m, n, cfg));
    }
  return out;
}

inline void write_bench_csv(std::ostream& os, std::span<const BenchRecord> records, bool header = true) {
  if (header) os << kBenchCsvHeader << '\n';
  std::ostringstream line;
  for (const auto& r : records) {
    line.str({});
    line.precision(9);
    line << to_string(r.method) << ',' << r.seq_len << ',' << r.clusters << ',' << r.topk << ',' << r.bits << ','
         << r.lloyd_iters << ',' << r.wall_time_per_element << ',' << r.peak_bytes_per_element << ',' << r.seed << ','
         << r.threads << ',' << r.batch;
    os << line.str() << '\n';
  }
}

inline std::vector<BenchRecord> read_bench_csv(std::istream& in) {
  std::vector<BenchRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.rfind("method,", 0) == 0) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
    if (f.size() < 9) throw IoError("csv line " + std::to_string(lineno) + ": expected at least 9 fields", "fields");
    try {
      BenchRecord r;
      r.method = parse_method(f[0]);
      r.seq_len = std::stoull(f[1]);
      r.clusters = std::stoull(f[2]);
      r.topk = std::stoull(f[3]);
      r.bits = std::stoull(f[4]);
      r.lloyd_iters = std::stoull(f[5]);
      r.wall_time_per_element = std::stod(f[6]);
      r.peak_bytes_per_element = std::stod(f[7]);
      r.seed = std::stoull(f[8]);
      if (f.size() > 9) r.threads = std::stoull(f[9]);
      if (f.size() > 10) r.batch = std::stoull(f[10]);
      out.push_back(r);
    } catch (const std::logic_error& e) {
      throw IoError("csv line " + std::to_string(lineno) + ": " + e.what(), "value");
    }
  }
  return out;
}

struct SlopeFit {
  Method method = Method::Full;
  double slope = 0.0;
  double intercept = 0.0;
  // Root-mean-square residual of the fit in log space.
  double residual = 0.0;
  std::size_t points = 0;
};

// Least-squares fit of log(total time) = slope * log(N) + intercept, per
// method in order of first appearance.
inline std::vector<SlopeFit> fit_slopes(std::span<const BenchRecord> records) {
  std::vector<Method> order;
  std::map<Method, std::vector<std::pair<double, double>>> points;
  for (const auto& r : records) {
    detail::require(r.seq_len >= 1 && r.wall_time_per_element > 0.0, "fit: records need positive seq_len and time");
    if (!points.count(r.method)) order.push_back(r.method);
    points[r.method].emplace_back(std::log(static_cast<double>(r.seq_len)), std::log(r.total_time()));
  }
  std::vector<SlopeFit> fits;
  for (Method m : order) {
    const auto& pts = points[m];
    std::vector<double> xs;
    for (const auto& p : pts) xs.push_back(p.first);
    std::sort(xs.begin(), xs.end());
    const auto distinct = static_cast<std::size_t>(std::distance(xs.begin(), std::unique(xs.begin(), xs.end())));
    detail::require(distinct >= 3, std::string("fit: method ") + to_string(m) + " needs >= 3 distinct seq_lens");

    const double n = static_cast<double>(pts.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (const auto& [x, y] : pts) {
      sx += x;
      sy += y;
      sxx += x * x;
      sxy += x * y;
    }
    SlopeFit fit;
    fit.method = m;
    fit.points = pts.size();
    fit.slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    fit.intercept = (sy - fit.slope * sx) / n;
    double ss = 0;
    for (const auto& [x, y] : pts) {
      const double e = y - (fit.slope * x + fit.intercept);
      ss += e * e;
    }
    fit.residual = std::sqrt(ss / n);
    fits.push_back(fit);
  }
  return fits;
}

}  // namespace clattn
