// clattn: benchmarks, bound verification and fixture generation for the
// clustered attention kernels.
//
// Exit codes: 0 success, 1 verification failures, 2 usage errors, 3 I/O errors.

#include <clattn/clattn.hpp>

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

namespace {

constexpr int kExitOk = 0;
constexpr int kExitVerifyFailed = 1;
constexpr int kExitUsage = 2;
constexpr int kExitIo = 3;

std::vector<clattn::Method> parse_methods(const std::vector<std::string>& names) {
  std::vector<clattn::Method> out;
  for (const auto& name : names) {
    if (name == "all") {
      out.assign(clattn::kAllMethods.begin(), clattn::kAllMethods.end());
      continue;
    }
    out.push_back(clattn::parse_method(name));
  }
  return out;
}

int cmd_bench(const clattn::BenchConfig& cfg) {
  for (std::size_t n : cfg.seq_lens)
    if (std::find(cfg.methods.begin(), cfg.methods.end(), clattn::Method::Full) != cfg.methods.end() &&
        n > cfg.full_cap)
      std::cerr << "note: skipping full attention at seq_len " << n << " (cap " << cfg.full_cap << ")\n";
  std::cout << clattn::kBenchCsvHeader << '\n';
  for (clattn::Method m : cfg.methods)
    for (std::size_t n : cfg.seq_lens) {
      if (m == clattn::Method::Full && n > cfg.full_cap) continue;
      const clattn::BenchRecord rec = clattn::bench_one(m, n, cfg);
      clattn::write_bench_csv(std::cout, std::span(&rec, 1), false);
      std::cout.flush();
    }
  return kExitOk;
}

int cmd_fit(const std::string& input) {
  std::vector<clattn::BenchRecord> records;
  if (input.empty() || input == "-") {
    records = clattn::read_bench_csv(std::cin);
  } else {
    std::ifstream in(input);
    if (!in) throw clattn::IoError(input + ": cannot open for reading");
    records = clattn::read_bench_csv(in);
  }
  const auto fits = clattn::fit_slopes(records);
  std::cout << "method,slope,intercept,residual,points\n";
  for (const auto& f : fits)
    std::cout << clattn::to_string(f.method) << ',' << f.slope << ',' << f.intercept << ',' << f.residual << ','
              << f.points << '\n';
  return kExitOk;
}

int cmd_verify(const clattn::VerifyConfig& cfg, const std::vector<std::string>& qkv) {
  clattn::VerifySummary summary;
  if (!qkv.empty()) {
    const clattn::Matrix q = clattn::load_tensor(qkv[0]);
    const clattn::Matrix k = clattn::load_tensor(qkv[1]);
    const clattn::Matrix v = clattn::load_tensor(qkv[2]);
    summary.instances.push_back(clattn::verify_instance(q, k, v, cfg, 0, cfg.seed));
  } else {
    summary = clattn::verify_random(cfg);
  }
  std::cout << clattn::to_json(summary).dump(2) << '\n';
  return summary.ok() ? kExitOk : kExitVerifyFailed;
}

int cmd_copytask(std::size_t length, std::size_t symbols, double mask_rate, std::size_t count, std::uint64_t seed) {
  for (std::size_t i = 0; i < count; ++i) {
    const auto inst = clattn::generate_masked_copy(length, symbols, mask_rate, seed + i);
    clattn::write_csv_line(std::cout, inst.input);
    clattn::write_csv_line(std::cout, inst.target);
  }
  return kExitOk;
}

int cmd_gen_qkv(std::size_t n, std::size_t dk, std::size_t dv, std::size_t modes, double spread, std::uint64_t seed,
                const std::string& prefix) {
  const auto f = clattn::make_gaussian_qkv<float>(n, dk, dv, modes, spread, seed);
  clattn::save_tensor(prefix + "q.clt", f.q);
  clattn::save_tensor(prefix + "k.clt", f.k);
  clattn::save_tensor(prefix + "v.clt", f.v);
  std::cout << prefix << "q.clt " << prefix << "k.clt " << prefix << "v.clt\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Clustered attention kernels: benchmarks, verification and fixtures"};
  app.require_subcommand(1);

  clattn::BenchConfig bench;
  std::vector<std::string> method_names{"clustered"};
  auto* bench_cmd = app.add_subcommand("bench", "Time one forward pass per (method, seq_len); CSV to stdout");
  bench_cmd->add_option("--method", method_names, "full, clustered, improved, oracle_top or all (comma list)")
      ->delimiter(',');
  bench_cmd->add_option("--seq-lens", bench.seq_lens, "Comma list of sequence lengths")->delimiter(',');
  bench_cmd->add_option("--clusters", bench.clusters, "Number of clusters")->capture_default_str();
  bench_cmd->add_option("--topk", bench.topk, "Top-k keys per cluster")->capture_default_str();
  bench_cmd->add_option("--bits", bench.bits, "Hash bits")->capture_default_str()->check(CLI::Range(1, 63));
  bench_cmd->add_option("--lloyd", bench.lloyd_iters, "Lloyd iterations")->capture_default_str();
  bench_cmd->add_option("--dk", bench.dk, "Query/key width")->capture_default_str();
  bench_cmd->add_option("--dv", bench.dv, "Value width")->capture_default_str();
  bench_cmd->add_option("--repeats", bench.repeats, "Timed runs; the median is reported")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  bench_cmd->add_option("--warmup", bench.warmup, "Untimed warmup runs")->capture_default_str();
  bench_cmd->add_option("--seed", bench.seed, "Seed")->capture_default_str();
  bench_cmd->add_option("--threads", bench.threads, "Kernel threads")->capture_default_str()->check(CLI::PositiveNumber);
  bench_cmd->add_option("--full-cap", bench.full_cap, "Largest seq_len benchmarked for full attention")
      ->capture_default_str();

  std::string fit_input;
  auto* fit_cmd = app.add_subcommand("fit", "Fit log-log slopes of total time vs seq_len from bench CSV");
  fit_cmd->add_option("input", fit_input, "Bench CSV file (default: stdin)");

  clattn::VerifyConfig verify;
  std::vector<std::string> qkv;
  auto* verify_cmd = app.add_subcommand("verify", "Check the approximation bounds; JSON to stdout");
  verify_cmd->add_option("--instances", verify.instances, "Random instances")->capture_default_str();
  verify_cmd->add_option("--seq-len", verify.seq_len, "Sequence length")->capture_default_str();
  verify_cmd->add_option("--clusters", verify.clusters, "Number of clusters")->capture_default_str();
  verify_cmd->add_option("--topk", verify.topk, "Top-k keys per cluster")->capture_default_str();
  verify_cmd->add_option("--bits", verify.bits, "Hash bits")->capture_default_str()->check(CLI::Range(1, 63));
  verify_cmd->add_option("--lloyd", verify.lloyd_iters, "Lloyd iterations")->capture_default_str();
  verify_cmd->add_option("--dk", verify.dk, "Query/key width")->capture_default_str();
  verify_cmd->add_option("--dv", verify.dv, "Value width")->capture_default_str();
  verify_cmd->add_option("--seed", verify.seed, "Seed")->capture_default_str();
  verify_cmd->add_option("--threads", verify.threads, "Kernel threads")->capture_default_str();
  verify_cmd->add_option("--qkv", qkv, "Q, K and V TensorFiles instead of random instances")->expected(3);

  std::size_t copy_length = 31, copy_symbols = clattn::kDefaultNumSymbols, copy_count = 1;
  double copy_mask_rate = clattn::kDefaultMaskRate;
  std::uint64_t copy_seed = 0;
  auto* copy_cmd = app.add_subcommand("copytask", "Masked-copy instances as CSV (input line, target line)");
  copy_cmd->add_option("--length", copy_length, "Symbols per half")->capture_default_str();
  copy_cmd->add_option("--symbols", copy_symbols, "Alphabet size")->capture_default_str();
  copy_cmd->add_option("--mask-rate", copy_mask_rate, "Fraction of symbol tokens masked")->capture_default_str();
  copy_cmd->add_option("--count", copy_count, "Number of instances")->capture_default_str();
  copy_cmd->add_option("--seed", copy_seed, "Seed of the first instance")->capture_default_str();

  std::size_t gen_n = 128, gen_dk = 16, gen_dv = 16, gen_modes = 4;
  double gen_spread = 0.1;
  std::uint64_t gen_seed = 0;
  std::string gen_prefix = "./";
  auto* gen_cmd = app.add_subcommand("gen-qkv", "Write Gaussian-mixture Q, K, V as TensorFiles");
  gen_cmd->add_option("--seq-len", gen_n, "Sequence length")->capture_default_str();
  gen_cmd->add_option("--dk", gen_dk, "Query/key width")->capture_default_str();
  gen_cmd->add_option("--dv", gen_dv, "Value width")->capture_default_str();
  gen_cmd->add_option("--modes", gen_modes, "Query modes")->capture_default_str();
  gen_cmd->add_option("--spread", gen_spread, "Per-mode standard deviation")->capture_default_str();
  gen_cmd->add_option("--seed", gen_seed, "Seed")->capture_default_str();
  gen_cmd->add_option("--prefix", gen_prefix, "Output path prefix")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*bench_cmd) {
      bench.methods = parse_methods(method_names);
      return cmd_bench(bench);
    }
    if (*fit_cmd) return cmd_fit(fit_input);
    if (*verify_cmd) return cmd_verify(verify, qkv);
    if (*copy_cmd) return cmd_copytask(copy_length, copy_symbols, copy_mask_rate, copy_count, copy_seed);
    if (*gen_cmd) return cmd_gen_qkv(gen_n, gen_dk, gen_dv, gen_modes, gen_spread, gen_seed, gen_prefix);
  } catch (const clattn::IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const clattn::InvalidArgument& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}
