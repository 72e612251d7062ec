#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "fedvalue/errors.hpp"
#include "fedvalue/federation.hpp"
#include "fedvalue/infotheory.hpp"
#include "fedvalue/psi.hpp"
#include "fedvalue/shapley.hpp"
#include "fedvalue/tabular.hpp"
#include "fedvalue/transport.hpp"
#include "synthetic.hpp"

using nlohmann::json;
using namespace fedvalue;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitParse = 3;
constexpr int kExitMisbehavior = 4;
constexpr int kExitScale = 5;

struct RunConfig {
  std::string input;
  std::string label;
  std::string id_column;
  std::uint32_t bins = 5;
  std::uint32_t pca_components = 0;  // 0 = off
  int n_parties = 2;
  int features_per_party = 1;
  std::uint64_t seed = 42;
  std::string mode = "centralized";
  std::string method = "exact";
  std::uint64_t samples = 1000;
  std::uint32_t q = 3;
  std::uint32_t nr_min = 1;
  std::uint32_t nr_max = 4;
  std::string transport = "inproc";
  std::string listen;
  std::string connect;
  std::string out = "-";
  std::string format = "text";
  std::uint64_t n_samples = 1000;  // synthetic data size when no input
};

void add_common_flags(CLI::App* cmd, RunConfig& cfg) {
  cmd->add_option("--input", cfg.input, "CSV input (header row required)");
  cmd->add_option("--label", cfg.label, "label column name");
  cmd->add_option("--id-column", cfg.id_column, "sample id column name");
  cmd->add_option("--bins", cfg.bins, "equal-width bins per numeric feature");
  cmd->add_option("--pca", cfg.pca_components,
                  "reduce each party's features to this many components");
  cmd->add_option("--parties", cfg.n_parties, "number of data parties")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--features-per-party", cfg.features_per_party,
                  "feature columns per party")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--seed", cfg.seed, "partition / sampling seed");
  cmd->add_option("--mode", cfg.mode, "centralized | federated")
      ->check(CLI::IsMember({"centralized", "federated"}));
  cmd->add_option("--method", cfg.method, "exact | permutations | sampled")
      ->check(CLI::IsMember({"exact", "permutations", "sampled"}));
  cmd->add_option("--samples", cfg.samples,
                  "permutation samples (sampled method)");
  cmd->add_option("--q", cfg.q, "encryption IDs per sample")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--nr-min", cfg.nr_min, "adversarial sample count, lower bound");
  cmd->add_option("--nr-max", cfg.nr_max, "adversarial sample count, upper bound");
  cmd->add_option("--transport", cfg.transport, "inproc | tcp")
      ->check(CLI::IsMember({"inproc", "tcp"}));
  cmd->add_option("--listen", cfg.listen, "host:port to bind the TCP hub");
  cmd->add_option("--connect", cfg.connect, "host:port of a running hub");
  cmd->add_option("--out", cfg.out, "output path, - for stdout");
  cmd->add_option("--format", cfg.format, "text | jsonl")
      ->check(CLI::IsMember({"text", "jsonl"}));
  cmd->add_option("--n-samples", cfg.n_samples,
                  "synthetic sample count when --input is omitted");
}

PsiConfig psi_from(const RunConfig& cfg) {
  PsiConfig psi;
  psi.q = cfg.q;
  psi.n_r_min = cfg.nr_min;
  psi.n_r_max = cfg.nr_max;
  psi.shared_key = "fedvalue-shared-key";
  psi.group_key = "fedvalue-group-key";
  if (const char* k = std::getenv("FEDVALUE_SHARED_KEY")) psi.shared_key = k;
  if (const char* k = std::getenv("FEDVALUE_GROUP_KEY")) psi.group_key = k;
  psi.validate();
  return psi;
}

ShapleyMethod method_from(const std::string& name) {
  if (name == "exact") return ShapleyMethod::Exact;
  if (name == "permutations") return ShapleyMethod::Permutations;
  return ShapleyMethod::Sampled;
}

double round12(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return std::strtod(buf, nullptr);
}

/// Loads and prepares the party fixture from the CSV flags, or generates the
/// synthetic binary fixture when --input is omitted.
std::pair<PartyData, std::vector<PartyData>> build_fixture(const RunConfig& cfg) {
  CategoricalTable table;
  std::string label_name;
  if (!cfg.input.empty()) {
    if (cfg.label.empty()) throw DomainError("--label is required with --input");
    std::optional<std::string> id_col;
    if (!cfg.id_column.empty()) id_col = cfg.id_column;
    RawTable raw = load_csv(cfg.input, cfg.label, id_col);

    // Split features from the label; the label is always re-coded densely,
    // never range-binned.
    RawTable features;
    features.sample_ids = raw.sample_ids;
    RawColumn label_col;
    for (auto& col : raw.columns) {
      if (col.name == cfg.label) {
        label_col = col;
      } else {
        features.columns.push_back(std::move(col));
      }
    }
    if (cfg.pca_components > 0) {
      features = local_pca(features, cfg.pca_components);
    }
    if (label_col.is_numeric()) {
      const auto& nums = std::get<std::vector<double>>(label_col.cells);
      std::vector<std::string> as_text;
      as_text.reserve(nums.size());
      for (double v : nums) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        as_text.emplace_back(buf);
      }
      label_col.cells = std::move(as_text);
    }
    features.columns.push_back(std::move(label_col));
    table = discretize(features, BinningSpec{cfg.bins});
    label_name = cfg.label;
  } else {
    const std::size_t n_cols =
        static_cast<std::size_t>(cfg.n_parties + 1) * cfg.features_per_party;
    table = tools::synthetic_binary_table(cfg.n_samples, n_cols, cfg.seed);
    label_name = "y";
  }
  return partition(table, label_name, cfg.n_parties, cfg.features_per_party,
                   cfg.seed);
}

struct TcpContext {
  std::unique_ptr<TcpHub> hub;
  TransportFactory factory;
};

TcpContext make_transport(const RunConfig& cfg) {
  TcpContext ctx;
  if (cfg.transport == "inproc") {
    ctx.factory = in_process_factory(std::make_shared<InProcessTransport>());
    return ctx;
  }
  if (!cfg.connect.empty()) {
    auto [host, port] = parse_address(cfg.connect);
    ctx.factory = tcp_factory(host, port);
    return ctx;
  }
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;
  if (!cfg.listen.empty()) {
    auto [h, p] = parse_address(cfg.listen);
    host = h;
    port = p;
  }
  ctx.hub = std::make_unique<TcpHub>();
  const std::uint16_t bound = ctx.hub->start(host, port);
  ctx.factory = tcp_factory(host, bound);
  return ctx;
}

json config_json(const RunConfig& cfg) {
  return json{{"input", cfg.input},
              {"label", cfg.label},
              {"bins", cfg.bins},
              {"pca", cfg.pca_components},
              {"parties", cfg.n_parties},
              {"features_per_party", cfg.features_per_party},
              {"seed", cfg.seed},
              {"mode", cfg.mode},
              {"method", cfg.method},
              {"samples", cfg.samples},
              {"q", cfg.q},
              {"nr_min", cfg.nr_min},
              {"nr_max", cfg.nr_max},
              {"transport", cfg.transport},
              {"n_samples", cfg.n_samples}};
}

void write_output(const RunConfig& cfg, const json& record,
                  const std::string& text) {
  std::ostream* os = &std::cout;
  std::ofstream file;
  if (cfg.out != "-") {
    file.open(cfg.out);
    if (!file) throw DomainError("cannot open output file " + cfg.out);
    os = &file;
  }
  if (cfg.format == "jsonl") {
    *os << record.dump() << "\n";
  } else {
    *os << text;
  }
}

int cmd_valuate(const RunConfig& cfg) {
  auto [task, data_parties] = build_fixture(cfg);

  ValuationOptions options;
  options.mode = cfg.mode == "federated" ? Mode::Federated : Mode::Centralized;
  options.method = method_from(cfg.method);
  options.sample_count = cfg.samples;
  options.seed = cfg.seed;
  options.psi = psi_from(cfg);
  TcpContext tcp;
  if (options.mode == Mode::Federated) {
    tcp = make_transport(cfg);
    options.transport = tcp.factory;
  }

  auto [report, run] = run_valuation(task, data_parties, options);

  double sum_phi = 0.0;
  json phi = json::object();
  for (const auto& [id, value] : report.phi) {
    phi[std::to_string(id)] = round12(value);
    sum_phi += value;
  }
  json record{{"kind", "valuation"},
              {"config", config_json(cfg)},
              {"phi", phi},
              {"total_cmi", round12(report.total_cmi)},
              {"sum_phi", round12(sum_phi)},
              {"cmi_evaluations", report.cmi_evaluations},
              {"psi_rounds", run.psi_rounds},
              {"cells_enumerated", run.cells_enumerated},
              {"short_circuits", run.short_circuits},
              {"cache_hits", run.cache_hits},
              {"wall_seconds", run.wall_seconds}};

  std::string text;
  text += "mode: " + to_string(run.mode) + "  method: " + to_string(run.method) +
          "\n";
  for (const auto& [id, value] : report.phi) {
    char buf[96];
    std::snprintf(buf, sizeof(buf), "party %-3d phi = %.12g nats\n", id, value);
    text += buf;
  }
  {
    char buf[192];
    std::snprintf(buf, sizeof(buf),
                  "sum(phi) = %.12g  total CMI = %.12g  cmi evals = %llu  psi "
                  "rounds = %llu  wall = %.3fs\n",
                  sum_phi, report.total_cmi,
                  static_cast<unsigned long long>(report.cmi_evaluations),
                  static_cast<unsigned long long>(run.psi_rounds),
                  run.wall_seconds);
    text += buf;
  }
  write_output(cfg, record, text);
  return 0;
}

int cmd_bench(const RunConfig& base, const std::string& sweep,
              const std::vector<std::uint64_t>& values, int reps) {
  const std::vector<std::string> known = {"n_parties", "features_per_party",
                                          "n_samples", "q", "n_r"};
  if (std::find(known.begin(), known.end(), sweep) == known.end()) {
    throw DomainError("unknown sweep parameter: " + sweep);
  }

  json rows = json::array();
  std::string text = "sweep " + sweep + "\n";
  text += "value\twall_seconds\tpsi_rounds\tcells\n";
  for (std::uint64_t v : values) {
    RunConfig cfg = base;
    if (sweep == "n_parties") cfg.n_parties = static_cast<int>(v);
    if (sweep == "features_per_party") cfg.features_per_party = static_cast<int>(v);
    if (sweep == "n_samples") cfg.n_samples = v;
    if (sweep == "q") cfg.q = static_cast<std::uint32_t>(v);
    if (sweep == "n_r") {
      cfg.nr_min = static_cast<std::uint32_t>(v);
      cfg.nr_max = static_cast<std::uint32_t>(v);
    }

    std::vector<double> times;
    std::uint64_t psi_rounds = 0, cells = 0;
    for (int rep = 0; rep < reps; ++rep) {
      auto [task, data_parties] = build_fixture(cfg);
      ValuationOptions options;
      options.mode = Mode::Federated;
      options.method = cfg.n_parties <= 8 ? method_from(cfg.method)
                                          : ShapleyMethod::Sampled;
      options.sample_count = cfg.samples;
      options.seed = cfg.seed + rep;
      options.psi = psi_from(cfg);
      auto [report, run] = run_valuation(task, data_parties, options);
      (void)report;
      times.push_back(run.wall_seconds);
      psi_rounds = run.psi_rounds;
      cells = run.cells_enumerated;
    }
    std::sort(times.begin(), times.end());
    const double median = times[times.size() / 2];
    rows.push_back(json{{"value", v},
                        {"wall_seconds", median},
                        {"psi_rounds", psi_rounds},
                        {"cells_enumerated", cells}});
    char buf[128];
    std::snprintf(buf, sizeof(buf), "%llu\t%.4f\t%llu\t%llu\n",
                  static_cast<unsigned long long>(v), median,
                  static_cast<unsigned long long>(psi_rounds),
                  static_cast<unsigned long long>(cells));
    text += buf;
  }
  json record{{"kind", "bench"},
              {"sweep", sweep},
              {"config", config_json(base)},
              {"rows", rows}};
  write_output(base, record, text);
  return 0;
}

int cmd_attack_sim(const RunConfig& base, const std::string& behavior_name,
                   std::uint64_t trials) {
  // Constant-valued fixture: every cell query matches all rows, so every
  // trial exercises a full PSI round.
  const std::size_t n = std::max<std::uint64_t>(base.n_samples, 8);
  CategoricalTable table;
  for (std::size_t i = 0; i < n; ++i) {
    table.sample_ids.push_back("s" + std::to_string(i));
  }
  for (int c = 0; c < base.n_parties + 2; ++c) {
    CategoricalColumn col;
    col.name = c == 0 ? "y" : "f" + std::to_string(c);
    col.arity = 1;
    col.codes.assign(n, 0);
    table.columns.push_back(std::move(col));
  }
  auto [task, data_parties] = partition(table, "y", base.n_parties, 1, base.seed);

  ServerBehavior behavior = parse_behavior(behavior_name);
  if (auto* d = std::get_if<DropRandom>(&behavior)) d->seed = base.seed;
  if (auto* f = std::get_if<ForgeCardinality>(&behavior)) {
    f->seed = base.seed;
    f->forged_size = base.q * (n / 2 + 1);
  }
  if (auto* i = std::get_if<InjectRandom>(&behavior)) i->seed = base.seed;

  PsiConfig psi = psi_from(base);
  auto fabric = std::make_shared<InProcessTransport>();
  FederationHarness harness(in_process_factory(fabric), task, data_parties, psi,
                            behavior);
  auto& orch = harness.orchestrator();

  std::map<int, ValueAssignment> selections;
  ValueAssignment task_sel;
  task_sel.add(task.party_id, 0, 0);
  task_sel.add(task.party_id, kLabelColumn, 0);
  task_sel.normalize();
  selections[task.party_id] = task_sel;
  for (const auto& p : data_parties) {
    ValueAssignment sel;
    sel.add(p.party_id, 0, 0);
    selections[p.party_id] = sel;
  }

  std::uint64_t detected = 0, count_mismatches = 0;
  for (std::uint64_t t = 0; t < trials; ++t) {
    try {
      const std::uint64_t count = orch.federated_count(selections, false);
      if (count != n) ++count_mismatches;
    } catch (const MisbehaviorError&) {
      ++detected;
    }
  }
  const double rate = trials ? double(detected) / double(trials) : 0.0;

  json record{{"kind", "attack_sim"},
              {"behavior", behavior_name},
              {"trials", trials},
              {"detected", detected},
              {"detection_rate", rate},
              {"count_mismatches", count_mismatches},
              {"config", config_json(base)}};
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "behavior=%s trials=%llu detected=%llu rate=%.4f mismatches=%llu\n",
                behavior_name.c_str(), static_cast<unsigned long long>(trials),
                static_cast<unsigned long long>(detected), rate,
                static_cast<unsigned long long>(count_mismatches));
  write_output(base, record, buf);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"FedValue: task-specific model-free data valuation for "
               "vertical federated learning"};
  app.require_subcommand(1);

  RunConfig cfg;
  auto* valuate = app.add_subcommand("valuate", "run a Shapley-CMI valuation");
  add_common_flags(valuate, cfg);

  RunConfig bench_cfg;
  std::string sweep = "n_samples";
  std::vector<std::uint64_t> sweep_values = {1000, 2000, 4000};
  int reps = 3;
  auto* bench = app.add_subcommand("bench", "timed parameter sweeps");
  add_common_flags(bench, bench_cfg);
  bench->add_option("--sweep", sweep,
                    "n_parties | features_per_party | n_samples | q | n_r");
  bench->add_option("--values", sweep_values, "sweep values");
  bench->add_option("--reps", reps, "repetitions per value (median reported)");

  RunConfig attack_cfg;
  std::string behavior = "honest";
  std::uint64_t trials = 100;
  auto* attack = app.add_subcommand("attack-sim",
                                    "measure malicious-server detection rate");
  add_common_flags(attack, attack_cfg);
  attack->add_option("--behavior", behavior,
                     "honest | forge | drop | inject | zero");
  attack->add_option("--trials", trials, "number of federated counts to run");

  std::string hub_listen = "127.0.0.1:7700";
  auto* hub = app.add_subcommand("hub", "run a standalone TCP message hub");
  hub->add_option("--listen", hub_listen, "host:port to bind");

  CLI11_PARSE(app, argc, argv);

  try {
    if (valuate->parsed()) return cmd_valuate(cfg);
    if (bench->parsed()) return cmd_bench(bench_cfg, sweep, sweep_values, reps);
    if (attack->parsed()) return cmd_attack_sim(attack_cfg, behavior, trials);
    if (hub->parsed()) {
      auto [host, port] = parse_address(hub_listen);
      TcpHub h;
      const std::uint16_t bound = h.start(host, port);
      std::cout << "hub listening on " << host << ":" << bound << std::endl;
      for (;;) std::this_thread::sleep_for(std::chrono::seconds(3600));
    }
  } catch (const MisbehaviorError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitMisbehavior;
  } catch (const ScaleError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitScale;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitParse;
  } catch (const DuplicateIdError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitParse;
  } catch (const SchemaError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitParse;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  return 0;
}
