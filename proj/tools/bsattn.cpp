// bsattn: generate workloads, run the golden model or the simulator, sweep
// alpha, verify against the oracles and emit reports.
//
// Exit codes: 0 ok, 2 usage/config/parse, 3 runtime (deadlock), 4 verification.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "bsattn/besf.hpp"
#include "bsattn/bitplanes.hpp"
#include "bsattn/bstr_io.hpp"
#include "bsattn/manifest.hpp"
#include "bsattn/metrics.hpp"
#include "bsattn/oracle.hpp"
#include "bsattn/quantize.hpp"
#include "bsattn/report_io.hpp"
#include "bsattn/sim/simulator.hpp"
#include "bsattn/synthetic.hpp"

namespace fs = std::filesystem;
using namespace bsattn;
using nlohmann::json;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitRuntime = 3;
constexpr int kExitVerify = 4;

// Thrown after a verification report was written; carries nothing else.
struct VerifyFailed {};

struct UsageError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

std::pair<std::size_t, std::size_t> parse_shape(const std::string& s) {
  const auto x = s.find('x');
  if (x == std::string::npos) throw UsageError("--shape expects SxH, got '" + s + "'");
  try {
    std::size_t used = 0;
    const auto rows = std::stoull(s.substr(0, x), &used);
    if (used != x) throw UsageError("--shape expects SxH, got '" + s + "'");
    const auto tail = s.substr(x + 1);
    const auto cols = std::stoull(tail, &used);
    if (used != tail.size()) throw UsageError("--shape expects SxH, got '" + s + "'");
    return {rows, cols};
  } catch (const std::logic_error&) {
    throw UsageError("--shape expects SxH, got '" + s + "'");
  }
}

struct SynthArgs {
  std::string shape;
  std::size_t queries = 8;
  std::string dist = "peaked";
  std::size_t hot = 8;
  double hot_gain = 3.0;
  double base_std = 1.0;
  double mean = 0.0;
  double std_dev = 1.0;
  std::uint64_t seed = 0;

  void add_to(CLI::App* app) {
    app->add_option("--shape", shape, "key/value shape SxH, e.g. 256x64");
    app->add_option("--queries", queries, "number of query rows")->capture_default_str();
    app->add_option("--dist", dist, "gaussian or peaked")
        ->check(CLI::IsMember({"gaussian", "peaked"}))
        ->capture_default_str();
    app->add_option("--hot", hot, "hot keys (peaked)")->capture_default_str();
    app->add_option("--hot-gain", hot_gain, "hot key gain (peaked)")->capture_default_str();
    app->add_option("--base-std", base_std, "background std (peaked)")->capture_default_str();
    app->add_option("--mean", mean, "mean (gaussian)")->capture_default_str();
    app->add_option("--std", std_dev, "std (gaussian)")->capture_default_str();
    app->add_option("--seed", seed, "64-bit seed")->capture_default_str();
  }

  SyntheticInput build() const {
    SyntheticInput in;
    const auto [rows, cols] = parse_shape(shape);
    in.spec.rows = rows;
    in.spec.cols = cols;
    in.spec.seed = seed;
    if (dist == "peaked") {
      in.spec.distribution = Peaked{hot, hot_gain, base_std};
    } else {
      in.spec.distribution = Gaussian{mean, std_dev};
    }
    in.num_queries = queries;
    return in;
  }
};

// Inputs shared by run/sweep/verify/report: a manifest, or flags that build one.
struct InputArgs {
  std::string manifest;
  std::string config;
  std::string q, k, v;
  std::string out;
  std::string mode;
  SynthArgs synth;
  CLI::App* app = nullptr;

  void add_to(CLI::App* sub) {
    app = sub;
    sub->add_option("--manifest", manifest, "run manifest JSON");
    sub->add_option("--config", config, "simulator config JSON (overrides the manifest)");
    sub->add_option("--q", q, "query tensor (BSTR)");
    sub->add_option("--k", k, "key tensor (BSTR)");
    sub->add_option("--v", v, "value tensor (BSTR)");
    sub->add_option("--out", out, "output directory (overrides the manifest)");
    sub->add_option("--mode", mode, "dense, besf_sync or besf_bap")
        ->check(CLI::IsMember({"dense", "besf_sync", "besf_bap"}));
    synth.add_to(sub);
  }

  RunManifest build() const {
    const bool have_tensors = !q.empty() || !k.empty() || !v.empty();
    const bool have_synth = !synth.shape.empty();
    RunManifest m;
    if (!manifest.empty()) {
      if (have_tensors || have_synth) {
        throw UsageError("--manifest cannot be combined with --q/--k/--v or --shape");
      }
      m = load_manifest(manifest);
    } else {
      if (have_tensors == have_synth) {
        throw UsageError("give exactly one input: --manifest, --q/--k/--v, or --shape");
      }
      if (have_tensors) {
        if (q.empty() || k.empty() || v.empty()) throw UsageError("--q, --k and --v go together");
        m.tensors = TensorPaths{q, k, v};
      } else {
        m.synthetic = synth.build();
        m.seed = synth.seed;
      }
    }
    if (!config.empty()) m.config = fs::path(config);
    if (!out.empty()) m.out_dir = out;
    if (!mode.empty()) m.mode = sim::parse_sim_mode(mode);
    m.validate();
    return m;
  }
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  os << text;
  if (!os) throw std::runtime_error("cannot write " + path.string());
}

double logit_scale_of(const QuantizedMatrix& q, const QuantizedMatrix& k) {
  return q.params.scale * k.params.scale / std::sqrt(static_cast<double>(k.cols()));
}

// Soundness, tail bound and decision replay for one set of traces.
void check_traces(const std::vector<PruneTrace>& traces, const RowMatrix<std::int64_t>& exact,
                  const PruneConfig& prune, std::int64_t gap, double logit_scale,
                  oracle::ViolationReport& out) {
  for (const auto& t : traces) {
    const auto row = exact.row(static_cast<Eigen::Index>(t.query));
    std::vector<std::int64_t> r(row.data(), row.data() + row.size());
    out.merge(oracle::check_prune_soundness(t, r));
    if (prune.prune_enabled) {
      out.merge(oracle::check_tail_bound(t, r, logit_scale, static_cast<double>(gap) * logit_scale));
    }
    const auto mismatches = sim::replay_decisions(t, prune.keep_rule);
    ++out.cases;
    if (mismatches != 0) {
      std::cerr << "query " << t.query << ": " << mismatches << " decisions disagree with the keep rule\n";
      out.violations.push_back({"replay", t.query});
    }
  }
}

void finish_verify(const oracle::ViolationReport& rep, const fs::path& path) {
  write_text(path, dump(to_json(rep)));
  std::cout << "verify: " << rep.cases << " checks, " << rep.violations.size() << " violations\n"
            << "report: " << path.string() << "\n";
  if (!rep.passed()) throw VerifyFailed{};
}

// ---- gen -------------------------------------------------------------------

int cmd_gen(const SynthArgs& a, const std::string& out) {
  if (a.shape.empty()) throw UsageError("gen needs --shape SxH");
  const auto in = a.build();
  const auto w = gen_workload(in.spec, in.num_queries, in.query);
  fs::create_directories(out);
  const fs::path dir(out);
  save_tensor(w.q, dir / "q.bstr");
  save_tensor(w.k, dir / "k.bstr");
  save_tensor(w.v, dir / "v.bstr");
  std::cout << "q: " << w.q.rows() << "x" << w.q.cols() << "  k: " << w.k.rows() << "x"
            << w.k.cols() << "  v: " << w.v.rows() << "x" << w.v.cols() << "  seed: " << a.seed
            << "\n";
  for (const char* n : {"q.bstr", "k.bstr", "v.bstr"}) std::cout << (dir / n).string() << "\n";
  return 0;
}

// ---- run -------------------------------------------------------------------

int cmd_run(const InputArgs& in, bool verify, bool events) {
  const auto m = in.build();
  const auto cfg = resolve_config(m);
  const auto w = load_workload(m);
  fs::create_directories(m.out_dir);

  std::vector<sim::SimEvent> log;
  sim::RunOptions opts;
  if (events) opts.events = &log;
  const auto res = sim::run_sim(cfg, w.q, w.k, w.v, opts);
  const auto dense_cycles = cfg.mode == sim::SimMode::kDense
                                ? res.stats.total_cycles
                                : sim::run_dense_baseline(cfg, w.q, w.k, w.v).total_cycles;
  const double speedup =
      static_cast<double>(dense_cycles) / static_cast<double>(std::max<std::uint64_t>(1, res.stats.total_cycles));

  json j;
  j["schema_version"] = 1;
  j["manifest"] = to_json(m);
  j["config"] = to_json(cfg);
  j["stats"] = to_json(res.stats, cfg.clock_ghz);
  j["dense_cycles"] = dense_cycles;
  j["speedup_vs_dense"] = speedup;

  std::optional<oracle::ViolationReport> rep;
  if (verify) {
    rep.emplace();
    const auto qq = quantize(w.q, cfg.bits);
    const auto kq = quantize(w.k, cfg.bits);
    const auto exact = oracle::exact_scores(qq, kq);
    check_traces(res.traces, exact, cfg.prune, res.gap, logit_scale_of(qq, kq), *rep);
    j["verify"] = to_json(*rep);
  }

  const fs::path dir = m.out_dir;
  const auto stats_path = dir / "stats.json";
  const auto trace_path = dir / "trace.jsonl";
  const auto output_path = dir / "output.bstr";
  write_text(stats_path, dump(j));
  {
    std::ofstream os(trace_path, std::ios::binary);
    write_trace_jsonl(os, res.traces);
    if (!os) throw std::runtime_error("cannot write " + trace_path.string());
  }
  const auto& rows = res.output.rows;
  save_tensor(TensorF32::from_matrix(RowMatrix<float>(rows.cast<float>())), output_path);

  std::printf("mode %s: %llu cycles, utilization %.4f\n", sim::to_string(cfg.mode),
              static_cast<unsigned long long>(res.stats.total_cycles), res.stats.lane_utilization);
  std::printf("speedup vs dense: %.4fx (dense %llu cycles / %s %llu cycles)\n", speedup,
              static_cast<unsigned long long>(dense_cycles), sim::to_string(cfg.mode),
              static_cast<unsigned long long>(res.stats.total_cycles));
  std::cout << stats_path.string() << "\n" << trace_path.string() << "\n" << output_path.string() << "\n";
  if (events) {
    const auto ev_path = dir / "events.csv";
    std::ofstream os(ev_path, std::ios::binary);
    sim::write_events_csv(os, log);
    if (!os) throw std::runtime_error("cannot write " + ev_path.string());
    std::cout << ev_path.string() << "\n";
  }
  if (rep) {
    std::cout << "verify: " << rep->cases << " checks, " << rep->violations.size() << " violations\n";
    if (!rep->passed()) throw VerifyFailed{};
  }
  return 0;
}

// ---- sweep -----------------------------------------------------------------

int cmd_sweep(const InputArgs& in, std::vector<double> alphas, std::size_t jobs, bool simulate,
              std::size_t recall_k) {
  const auto m = in.build();
  const auto cfg = resolve_config(m);
  const auto w = load_workload(m);
  if (alphas.empty()) alphas = metrics::default_alphas();

  metrics::SweepOptions opts;
  opts.bits = cfg.bits;
  opts.prune = cfg.prune;
  opts.recall_k = recall_k;
  opts.jobs = jobs;
  if (simulate) opts.sim = cfg;
  const auto result = metrics::sweep_alpha(w, alphas, opts);

  fs::create_directories(m.out_dir);
  const auto csv = m.out_dir / "sweep.csv";
  const auto js = m.out_dir / "sweep.json";
  metrics::emit(result, metrics::Format::kCsv, csv);
  metrics::emit(result, metrics::Format::kJson, js);
  std::cout << result.rows.size() << " alpha points\n" << csv.string() << "\n" << js.string() << "\n";
  return 0;
}

// ---- verify ----------------------------------------------------------------

// Random queries checked against every key of the given width (or a sample of
// 4096 keys when the full key space is too large).
int cmd_verify_fuzz(std::size_t cases, int bits, std::size_t head_dim, std::uint64_t seed,
                    const fs::path& out_dir) {
  validate_bits(bits);
  if (head_dim == 0) throw UsageError("--head-dim must be >= 1");
  check_accumulator_width(head_dim, bits);
  const std::int32_t qmin = -(1 << (bits - 1));
  const std::int32_t qmax = (1 << (bits - 1)) - 1;
  const double space = std::pow(2.0, bits * static_cast<double>(head_dim));
  const bool exhaustive = space <= 65536.0;

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::int32_t> val(qmin, qmax);

  QuantizedMatrix keys;
  keys.params.bits = bits;
  const auto n = exhaustive ? static_cast<std::size_t>(space) : std::size_t{4096};
  keys.values.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(head_dim));
  for (std::size_t r = 0; r < n; ++r) {
    std::size_t code = r;
    for (std::size_t h = 0; h < head_dim; ++h) {
      std::int32_t x;
      if (exhaustive) {
        x = qmin + static_cast<std::int32_t>(code % (std::size_t{1} << bits));
        code >>= bits;
      } else {
        x = val(rng);
      }
      keys.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(h)) = x;
    }
  }
  const auto store = decompose_bitplanes(keys);

  QuantizedMatrix q;
  q.params.bits = bits;
  q.values.resize(static_cast<Eigen::Index>(cases), static_cast<Eigen::Index>(head_dim));
  for (Eigen::Index i = 0; i < q.values.size(); ++i) q.values.data()[i] = val(rng);

  auto rep = oracle::verify_bounds(q, store);

  // Pruning soundness on the same corpus with a random integer gap per query.
  const auto exact = oracle::exact_scores(q, keys);
  std::uniform_int_distribution<std::int64_t> gap_dist(0, std::int64_t{1} << (bits + 2));
  for (std::size_t i = 0; i < cases; ++i) {
    PruneConfig pc;
    pc.radius_units = RadiusUnits::kInteger;
    const auto gap = gap_dist(rng);
    const auto row = q.values.row(static_cast<Eigen::Index>(i));
    std::vector<std::int32_t> qi(row.data(), row.data() + row.size());
    const auto res = besf_query(qi, store, pc, gap, i);
    const auto er = exact.row(static_cast<Eigen::Index>(i));
    rep.merge(oracle::check_prune_soundness(res.trace, std::vector<std::int64_t>(er.data(), er.data() + er.size())));
  }

  fs::create_directories(out_dir);
  std::cout << (exhaustive ? "exhaustive" : "sampled") << " key space: " << n << " keys x " << cases
            << " queries, INT" << bits << ", H=" << head_dim << "\n";
  finish_verify(rep, out_dir / "verify.json");
  return 0;
}

int cmd_verify_trace(const InputArgs& in, const fs::path& trace_path) {
  const auto m = in.build();
  const auto cfg = resolve_config(m);
  const auto w = load_workload(m);
  const auto qq = quantize(w.q, cfg.bits);
  const auto kq = quantize(w.k, cfg.bits);

  std::ifstream is(trace_path);
  if (!is) throw UsageError("cannot open trace " + trace_path.string());
  auto traces = read_trace_jsonl(is, static_cast<std::size_t>(kq.rows()), cfg.bits);
  // The file carries decisions only; the gap they were judged against comes
  // from the config.
  const auto gap = threshold_gap(cfg.prune, static_cast<std::size_t>(kq.cols()), qq.params.scale,
                                 kq.params.scale);
  for (auto& t : traces) {
    t.gap = gap;
    if (t.query >= static_cast<std::size_t>(qq.rows())) {
      throw ParseError("trace query " + std::to_string(t.query) + " exceeds the workload's " +
                       std::to_string(qq.rows()) + " queries");
    }
  }
  oracle::ViolationReport rep;
  const auto exact = oracle::exact_scores(qq, kq);
  for (const auto& t : traces) {
    const auto er = exact.row(static_cast<Eigen::Index>(t.query));
    rep.merge(oracle::check_prune_soundness(t, std::vector<std::int64_t>(er.data(), er.data() + er.size())));
  }
  fs::create_directories(m.out_dir);
  finish_verify(rep, m.out_dir / "verify.json");
  return 0;
}

int cmd_verify(const InputArgs& in) {
  const auto m = in.build();
  const auto cfg = resolve_config(m);
  const auto w = load_workload(m);
  oracle::ViolationReport rep;

  const auto qq = quantize(w.q, cfg.bits);
  const auto kq = quantize(w.k, cfg.bits);
  rep.merge(oracle::verify_bounds(qq, decompose_bitplanes(kq)));

  const auto exact = oracle::exact_scores(qq, kq);
  const auto pruned = besf_attention(w.q, w.k, w.v, cfg.bits, cfg.prune);
  const auto gap = threshold_gap(cfg.prune, static_cast<std::size_t>(kq.cols()), qq.params.scale,
                                 kq.params.scale);
  check_traces(pruned.traces, exact, cfg.prune, gap, logit_scale_of(qq, kq), rep);

  // No-prune equivalence: golden vs dense oracle, and simulator dense vs golden.
  PruneConfig off = cfg.prune;
  off.prune_enabled = false;
  const auto full = besf_attention(w.q, w.k, w.v, cfg.bits, off);
  const auto dense = oracle::dense_attention_quant(qq, kq, w.v);
  const double err = (full.output.rows - dense).cwiseAbs().maxCoeff();
  ++rep.cases;
  if (!(err <= 1e-5)) {
    std::cerr << "no-prune output differs from the dense oracle by " << err << "\n";
    rep.violations.push_back({"no_prune"});
  }
  auto dcfg = cfg;
  dcfg.mode = sim::SimMode::kDense;
  const auto simd = sim::run_sim(dcfg, w.q, w.k, w.v);
  ++rep.cases;
  if (simd.output.rows != full.output.rows) {
    std::cerr << "simulator dense output differs from the golden model\n";
    rep.violations.push_back({"sim_dense"});
  }

  fs::create_directories(m.out_dir);
  finish_verify(rep, m.out_dir / "verify.json");
  return 0;
}

// ---- report ----------------------------------------------------------------

int cmd_report(const InputArgs& in, const std::string& format, std::size_t recall_k) {
  const auto m = in.build();
  const auto cfg = resolve_config(m);
  const auto w = load_workload(m);
  const auto res = besf_attention(w.q, w.k, w.v, cfg.bits, cfg.prune);
  const auto num_keys = static_cast<std::size_t>(w.k.rows());
  const auto head_dim = static_cast<std::size_t>(w.k.cols());
  const auto cx = metrics::complexity_report(res.traces, num_keys, cfg.bits, head_dim,
                                             cfg.vpu_macs_per_cycle);
  const auto exact = oracle::exact_scores(res.q, res.k);
  const double ls = logit_scale_of(res.q, res.k);
  const auto gap = threshold_gap(cfg.prune, head_dim, res.q.params.scale, res.k.params.scale);
  const auto acc = metrics::accuracy_report(res.output.rows, oracle::dense_attention_f32(w.q, w.k, w.v),
                                            res.traces, exact, ls,
                                            cfg.prune.prune_enabled ? static_cast<double>(gap) * ls : 0.0,
                                            std::min(recall_k, num_keys));

  fs::create_directories(m.out_dir);
  std::vector<fs::path> written;
  auto out = [&](const char* stem, const auto& report) {
    if (format == "json" || format == "both") {
      written.push_back(m.out_dir / (std::string(stem) + ".json"));
      metrics::emit(report, metrics::Format::kJson, written.back());
    }
    if (format == "csv" || format == "both") {
      written.push_back(m.out_dir / (std::string(stem) + ".csv"));
      metrics::emit(report, metrics::Format::kCsv, written.back());
    }
  };
  out("complexity", cx);
  out("accuracy", acc);
  std::printf("io_reduction %.4f  compute_reduction %.4f  recall@%zu %.4f  max_abs_err %.3g\n",
              cx.io_reduction, cx.compute_reduction, acc.recall_k, acc.survivor_recall, acc.max_abs_err);
  for (const auto& p : written) std::cout << p.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"bit-serial early-termination attention: golden model, simulator and reports"};
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("gen", "write synthetic Q, K, V tensors as BSTR files");
  SynthArgs gen_args;
  gen_args.add_to(gen);
  std::string gen_out = ".";
  gen->add_option("--out", gen_out, "output directory")->capture_default_str();

  auto* run = app.add_subcommand("run", "simulate one mode and write stats, traces and output");
  InputArgs run_in;
  run_in.add_to(run);
  bool run_verify = false, run_events = false;
  run->add_flag("--verify", run_verify, "check traces against the oracles");
  run->add_flag("--events", run_events, "also write the per-event CSV log");

  auto* sweep = app.add_subcommand("sweep", "sweep alpha and write CSV + JSON");
  InputArgs sweep_in;
  sweep_in.add_to(sweep);
  std::vector<double> alphas;
  std::size_t jobs = 1, sweep_k = 8;
  bool simulate = false;
  sweep->add_option("--alphas", alphas, "comma-separated alphas (default 0.2..0.8)")->delimiter(',');
  sweep->add_option("--jobs", jobs, "concurrent sweep points")->check(CLI::PositiveNumber)->capture_default_str();
  sweep->add_option("--recall-k", sweep_k, "k for survivor recall")->capture_default_str();
  sweep->add_flag("--simulate", simulate, "also simulate each point and report speedup");

  auto* verify = app.add_subcommand("verify", "check bounds, pruning soundness and no-prune equivalence");
  InputArgs verify_in;
  verify_in.add_to(verify);
  std::size_t cases = 0, fuzz_h = 2;
  int fuzz_bits = 4;
  std::string trace_file;
  verify->add_option("--cases", cases, "fuzz mode: number of random queries");
  verify->add_option("--bits", fuzz_bits, "fuzz mode: bit width")->capture_default_str();
  verify->add_option("--head-dim", fuzz_h, "fuzz mode: head dimension")->capture_default_str();
  verify->add_option("--trace", trace_file, "check a trace JSONL file against the workload");

  auto* report = app.add_subcommand("report", "complexity and accuracy reports for the golden model");
  InputArgs report_in;
  report_in.add_to(report);
  std::string format = "json";
  std::size_t report_k = 8;
  report->add_option("--format", format, "json, csv or both")
      ->check(CLI::IsMember({"json", "csv", "both"}))
      ->capture_default_str();
  report->add_option("--recall-k", report_k, "k for survivor recall")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }

  try {
    if (*gen) return cmd_gen(gen_args, gen_out);
    if (*run) return cmd_run(run_in, run_verify, run_events);
    if (*sweep) return cmd_sweep(sweep_in, alphas, jobs, simulate, sweep_k);
    if (*verify) {
      if (cases > 0) {
        const fs::path out = verify_in.out.empty() ? fs::path("out") : fs::path(verify_in.out);
        return cmd_verify_fuzz(cases, fuzz_bits, fuzz_h, verify_in.synth.seed, out);
      }
      if (!trace_file.empty()) return cmd_verify_trace(verify_in, trace_file);
      return cmd_verify(verify_in);
    }
    if (*report) return cmd_report(report_in, format, report_k);
  } catch (const VerifyFailed&) {
    return kExitVerify;
  } catch (const sim::DeadlockError& e) {
    std::cerr << "deadlock: " << e.what() << "\n";
    return kExitRuntime;
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const FormatError& e) {
    std::cerr << "tensor format error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
