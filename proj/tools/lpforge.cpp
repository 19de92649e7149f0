// lpforge: analyzers, low-precision kernels, accelerator simulator and the
// toy training harness behind one batch-mode command line.

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "lpforge/accel_sim.hpp"
#include "lpforge/linalg.hpp"
#include "lpforge/netspec.hpp"
#include "lpforge/quant.hpp"
#include "lpforge/toytrain.hpp"

namespace {

using json = nlohmann::ordered_json;
namespace linalg = lpforge::linalg;
namespace accel = lpforge::accel;
namespace netspec = lpforge::netspec;
namespace toytrain = lpforge::toytrain;

constexpr uint64_t kDefaultSeed = 1;

int env_threads() {
  const char* v = std::getenv("LPFORGE_THREADS");
  if (!v) return 1;
  const int n = std::atoi(v);
  return n >= 1 ? n : 1;
}

uint64_t fnv1a64(const int32_t* values, std::size_t count) {
  uint64_t h = 1469598103934665603ULL;
  for (std::size_t i = 0; i < count; ++i) {
    const auto u = static_cast<uint32_t>(values[i]);
    for (int b = 0; b < 4; ++b) {
      h ^= (u >> (8 * b)) & 0xffu;
      h *= 1099511628211ULL;
    }
  }
  return h;
}

// Shared operand generator so `gemm` and `sim` checksums agree per seed.
void generate_operands(int m, int n, int k, uint64_t seed,
                       linalg::ActivationMatrix& a, linalg::CodeMatrix& b) {
  std::mt19937_64 rng(seed);
  a = linalg::ActivationMatrix(m, k);
  for (auto& v : a.data) v = static_cast<uint8_t>(rng() % 256);
  b = linalg::CodeMatrix(k, n);
  for (auto& v : b.data) v = static_cast<int32_t>(rng() % 3) - 1;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::vector<double> parse_values(const std::string& csv) {
  std::vector<double> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    out.push_back(std::stod(item));
  }
  return out;
}

netspec::NetworkSpec load_topology(const std::string& path) {
  const auto base = path.find_last_of('/');
  return netspec::parse_topology(
      read_file(path), base == std::string::npos ? path : path.substr(base + 1));
}

struct CommonOpts {
  std::string format = "table";
};

void add_format_flag(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("--format", opts.format, "Output format")
      ->check(CLI::IsMember({"table", "json"}))
      ->capture_default_str();
}

void emit(const CommonOpts& opts, const json& j, const std::string& table) {
  if (opts.format == "json") {
    std::cout << j.dump() << '\n';
  } else {
    std::cout << table;
  }
}

int run_quantize(const std::string& kind, int bits, const std::string& values,
                 const CommonOpts& opts) {
  const auto input = parse_values(values);
  json j;
  std::ostringstream table;
  if (kind == "weights") {
    const auto q = lpforge::quant::quantize_weights(input, bits);
    const auto deq = lpforge::quant::dequantize(q);
    j = {{"kind", "weights"}, {"bits", bits}, {"scale", q.scale},
         {"codes", q.codes}, {"dequantized", deq}};
    table << "kind weights bits " << bits << " scale " << q.scale << "\ncodes:";
    for (const auto c : q.codes) table << ' ' << c;
    table << '\n';
  } else {
    const auto q = lpforge::quant::quantize_activations(input, bits);
    const auto deq = lpforge::quant::dequantize(q);
    j = {{"kind", "activations"}, {"bits", bits}, {"scale", q.scale},
         {"codes", q.codes}, {"dequantized", deq}};
    table << "kind activations bits " << bits << " scale " << q.scale << "\ncodes:";
    for (const auto c : q.codes) table << ' ' << c;
    table << '\n';
  }
  emit(opts, j, table.str());
  return 0;
}

int run_gemm(int m, int n, int k, uint64_t seed, const std::string& backend,
             const CommonOpts& opts) {
  linalg::ActivationMatrix a;
  linalg::CodeMatrix b;
  generate_operands(m, n, k, seed, a, b);
  linalg::AccMatrix c;
  if (backend == "ref") {
    c = linalg::gemm_int_oracle(a, b);
  } else {
    c = linalg::gemm_ternary(a, linalg::pack_ternary(b), env_threads());
  }
  const uint64_t checksum = fnv1a64(c.data.data(), c.data.size());
  json j = {{"backend", backend}, {"m", m}, {"n", n}, {"k", k},
            {"seed", seed}, {"checksum", checksum}};
  std::ostringstream table;
  table << "backend " << backend << " m " << m << " n " << n << " k " << k
        << " seed " << seed << "\nchecksum " << checksum << '\n';
  emit(opts, j, table.str());
  return 0;
}

int run_sim(int m, int n, int k, uint64_t seed, int rows, int cols,
            const CommonOpts& opts) {
  accel::ArrayConfig cfg;
  cfg.rows = rows;
  cfg.cols = cols;
  linalg::ActivationMatrix a;
  linalg::CodeMatrix b;
  generate_operands(m, n, k, seed, a, b);
  const auto res = accel::simulate(a, linalg::pack_ternary(b), cfg);
  json j = json::parse(accel::report_json(res, m, n, k, cfg));
  j["seed"] = seed;
  j["checksum"] = fnv1a64(res.output.data.data(), res.output.data.size());
  std::ostringstream table;
  for (const auto& [key, value] : j.items()) {
    table << key << ' ' << value.dump() << '\n';
  }
  emit(opts, j, table.str());
  return 0;
}

int run_analyze(const std::string& topology, int batch, const std::string& mode,
                int wbits, int abits, const CommonOpts& opts) {
  const auto spec = load_topology(topology);
  const auto m = mode == "training" ? netspec::FootprintMode::kTraining
                                    : netspec::FootprintMode::kInference;
  const auto rep = netspec::footprint(spec, batch, m, {wbits, abits});
  emit(opts, json::parse(netspec::footprint_json(rep, spec)),
       netspec::footprint_table(rep));
  return 0;
}

int run_widen(const std::string& topology, double factor, double fraction,
              const std::string& out_path, const CommonOpts& opts) {
  const auto spec = load_topology(topology);
  const auto wide = netspec::widen(spec, factor, fraction);
  const auto text = netspec::emit_topology(wide);
  if (!out_path.empty()) {
    std::ofstream out(out_path);
    if (!out) throw std::runtime_error("cannot open output file: " + out_path);
    out << text;
  }
  emit(opts, json{{"name", wide.name}, {"factor", factor},
                  {"fraction", fraction}, {"topology", text}},
       text);
  return 0;
}

int run_cost(const std::string& topology, int wbits, int abits,
             const std::string& ref_topology, int ref_wbits, int ref_abits,
             const CommonOpts& opts) {
  const auto spec = load_topology(topology);
  const auto rep = netspec::compute_cost(spec, {wbits, abits});
  json j = json::parse(netspec::cost_json(rep, spec));
  std::ostringstream table;
  table << netspec::cost_table(rep);
  if (!ref_topology.empty()) {
    const auto ref = netspec::compute_cost(load_topology(ref_topology),
                                           {ref_wbits, ref_abits});
    const double ratio =
        static_cast<double>(rep.cost) / static_cast<double>(ref.cost);
    j["cost_ratio_vs_ref"] = ratio;
    table << "cost_ratio_vs_ref " << ratio << '\n';
  }
  emit(opts, j, table.str());
  return 0;
}

int run_train(const std::string& scheme_name, const toytrain::TrainConfig& cfg,
              const std::string& teacher_path, const std::string& history_path,
              const std::string& checkpoint_path, const CommonOpts& opts) {
  const auto scheme = toytrain::scheme_from_string(scheme_name);
  toytrain::ToyNet teacher;
  const toytrain::ToyNet* teacher_ptr = nullptr;
  if (scheme == toytrain::Scheme::kApprentice ||
      scheme == toytrain::Scheme::kWrpnApprentice) {
    if (!teacher_path.empty()) {
      teacher = toytrain::load_checkpoint(teacher_path);
    } else {
      teacher = toytrain::train_teacher(cfg).first;
    }
    teacher_ptr = &teacher;
  }
  const auto [net, history] = toytrain::train(cfg, scheme, teacher_ptr);
  if (!history_path.empty()) {
    std::ofstream out(history_path);
    if (!out) throw std::runtime_error("cannot open history file: " + history_path);
    out << toytrain::history_jsonl(history);
  }
  if (!checkpoint_path.empty()) {
    toytrain::save_checkpoint(net, checkpoint_path);
  }
  json j = {{"scheme", scheme_name},
            {"seed", cfg.seed},
            {"epochs", cfg.epochs},
            {"final_train_loss", history.train_loss.back()},
            {"final_eval_accuracy", history.eval_accuracy.back()},
            {"epochs_to_0.9", history.epochs_to_threshold(0.9)}};
  std::ostringstream table;
  table << "scheme " << scheme_name << " seed " << cfg.seed << '\n'
        << "final_eval_accuracy " << history.eval_accuracy.back() << '\n'
        << "epochs_to_0.9 " << history.epochs_to_threshold(0.9) << '\n';
  emit(opts, j, table.str());
  return 0;
}

int run_bench(int m, int n, int k, int reps, uint64_t seed, const CommonOpts& opts) {
  linalg::ActivationMatrix a;
  linalg::CodeMatrix b;
  generate_operands(m, n, k, seed, a, b);
  const auto packed = linalg::pack_ternary(b);
  linalg::Mat af(m, k), bf(k, n);
  for (std::size_t i = 0; i < af.data.size(); ++i) af.data[i] = a.data[i];
  for (std::size_t i = 0; i < bf.data.size(); ++i) bf.data[i] = b.data[i];

  const double macs = static_cast<double>(m) * n * k * reps;
  json j = {{"m", m}, {"n", n}, {"k", k}, {"reps", reps}};
  std::ostringstream table;

  using clock = std::chrono::steady_clock;
  {
    const auto t0 = clock::now();
    for (int r = 0; r < reps; ++r) {
      volatile double sink = linalg::gemm_ref(af, bf).data[0];
      (void)sink;
    }
    const double sec = std::chrono::duration<double>(clock::now() - t0).count();
    j["ref_float_mmacs_per_s"] = macs / sec / 1e6;
    table << "ref-float " << macs / sec / 1e6 << " MMAC/s\n";
  }
  {
    const auto t0 = clock::now();
    for (int r = 0; r < reps; ++r) {
      volatile int32_t sink = linalg::gemm_ternary(a, packed, env_threads()).data[0];
      (void)sink;
    }
    const double sec = std::chrono::duration<double>(clock::now() - t0).count();
    j["ternary_packed_mmacs_per_s"] = macs / sec / 1e6;
    table << "ternary-packed " << macs / sec / 1e6 << " MMAC/s\n";
  }
  emit(opts, j, table.str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"lpforge: low-precision DNN analytics, kernels and training"};
  app.require_subcommand(1);

  CommonOpts opts;

  // quantize
  auto* quantize = app.add_subcommand("quantize", "Quantize a value list");
  std::string q_kind = "weights";
  int q_bits = 2;
  std::string q_values;
  quantize->add_option("--kind", q_kind)->check(CLI::IsMember({"weights", "acts"}));
  quantize->add_option("--bits", q_bits)->required();
  quantize->add_option("--values", q_values, "Comma-separated reals")->required();
  add_format_flag(quantize, opts);

  // gemm
  auto* gemm = app.add_subcommand("gemm", "Seeded integer GEMM with checksum");
  int g_m = 8, g_n = 8, g_k = 16;
  uint64_t g_seed = kDefaultSeed;
  std::string g_backend = "ternary";
  gemm->add_option("--m", g_m);
  gemm->add_option("--n", g_n);
  gemm->add_option("--k", g_k);
  gemm->add_option("--seed", g_seed);
  gemm->add_option("--backend", g_backend)->check(CLI::IsMember({"ref", "ternary"}));
  add_format_flag(gemm, opts);

  // sim
  auto* sim = app.add_subcommand("sim", "Systolic array simulation report");
  int s_m = 8, s_n = 8, s_k = 16, s_rows = 8, s_cols = 8;
  uint64_t s_seed = kDefaultSeed;
  sim->add_option("--m", s_m);
  sim->add_option("--n", s_n);
  sim->add_option("--k", s_k);
  sim->add_option("--seed", s_seed);
  sim->add_option("--rows", s_rows);
  sim->add_option("--cols", s_cols);
  add_format_flag(sim, opts);

  // analyze
  auto* analyze = app.add_subcommand("analyze", "Memory footprint report");
  std::string a_topology, a_mode = "inference";
  int a_batch = 1, a_wbits = 32, a_abits = 32;
  analyze->add_option("--topology", a_topology)->required();
  analyze->add_option("--batch", a_batch);
  analyze->add_option("--mode", a_mode)->check(CLI::IsMember({"training", "inference"}));
  analyze->add_option("--wbits", a_wbits);
  analyze->add_option("--abits", a_abits);
  add_format_flag(analyze, opts);

  // widen
  auto* widen = app.add_subcommand("widen", "WRPN filter widening transform");
  std::string w_topology, w_out;
  double w_factor = 2.0, w_fraction = 1.0;
  widen->add_option("--topology", w_topology)->required();
  widen->add_option("--factor", w_factor);
  widen->add_option("--fraction", w_fraction);
  widen->add_option("--out", w_out, "Write the widened topology to a file");
  add_format_flag(widen, opts);

  // cost
  auto* cost = app.add_subcommand("cost", "Compute-cost report");
  std::string c_topology, c_ref_topology;
  int c_wbits = 32, c_abits = 32, c_ref_wbits = 32, c_ref_abits = 32;
  cost->add_option("--topology", c_topology)->required();
  cost->add_option("--wbits", c_wbits);
  cost->add_option("--abits", c_abits);
  cost->add_option("--ref-topology", c_ref_topology,
                   "Baseline topology for a cost ratio");
  cost->add_option("--ref-wbits", c_ref_wbits);
  cost->add_option("--ref-abits", c_ref_abits);
  add_format_flag(cost, opts);

  // train
  auto* train = app.add_subcommand("train", "Toy training run");
  std::string t_scheme = "baseline", t_teacher, t_history, t_checkpoint;
  toytrain::TrainConfig t_cfg;
  train->add_option("--scheme", t_scheme)
      ->check(CLI::IsMember({"baseline", "low_precision", "wrpn", "apprentice",
                             "wrpn_apprentice"}));
  train->add_option("--seed", t_cfg.seed);
  train->add_option("--epochs", t_cfg.epochs);
  train->add_option("--batch-size", t_cfg.batch_size);
  train->add_option("--lr", t_cfg.learning_rate);
  train->add_option("--momentum", t_cfg.momentum);
  train->add_option("--wbits", t_cfg.weight_bits);
  train->add_option("--abits", t_cfg.act_bits);
  train->add_option("--width-factor", t_cfg.width_factor);
  train->add_option("--widen-fraction", t_cfg.widen_fraction);
  train->add_option("--alpha", t_cfg.alpha);
  train->add_option("--beta", t_cfg.beta);
  train->add_option("--temperature", t_cfg.temperature);
  train->add_option("--classes", t_cfg.dataset.classes);
  train->add_option("--samples-per-class", t_cfg.dataset.samples_per_class);
  train->add_option("--sigma", t_cfg.dataset.sigma);
  train->add_option("--teacher", t_teacher, "Teacher checkpoint path");
  train->add_option("--history", t_history, "Write per-epoch JSON lines here");
  train->add_option("--checkpoint", t_checkpoint, "Write the trained net here");
  add_format_flag(train, opts);

  // bench
  auto* bench = app.add_subcommand("bench", "GEMM backend throughput");
  int b_m = 64, b_n = 64, b_k = 64, b_reps = 20;
  uint64_t b_seed = kDefaultSeed;
  bench->add_option("--m", b_m);
  bench->add_option("--n", b_n);
  bench->add_option("--k", b_k);
  bench->add_option("--reps", b_reps);
  bench->add_option("--seed", b_seed);
  add_format_flag(bench, opts);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    std::ostringstream usage;
    app.exit(e, usage, usage);
    std::cerr << usage.str();
    return 1;
  }

  try {
    if (*quantize) return run_quantize(q_kind, q_bits, q_values, opts);
    if (*gemm) return run_gemm(g_m, g_n, g_k, g_seed, g_backend, opts);
    if (*sim) return run_sim(s_m, s_n, s_k, s_seed, s_rows, s_cols, opts);
    if (*analyze)
      return run_analyze(a_topology, a_batch, a_mode, a_wbits, a_abits, opts);
    if (*widen) return run_widen(w_topology, w_factor, w_fraction, w_out, opts);
    if (*cost)
      return run_cost(c_topology, c_wbits, c_abits, c_ref_topology, c_ref_wbits,
                      c_ref_abits, opts);
    if (*train)
      return run_train(t_scheme, t_cfg, t_teacher, t_history, t_checkpoint, opts);
    if (*bench) return run_bench(b_m, b_n, b_k, b_reps, b_seed, opts);
    std::cerr << "no subcommand selected\n";
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::domain_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::logic_error& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}
