#include "cli.hpp"

#include <CLI11.hpp>

#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "deparadox/dataset.hpp"
#include "deparadox/deparadox_tree.hpp"
#include "deparadox/error.hpp"
#include "deparadox/metrics.hpp"
#include "deparadox/simulate.hpp"
#include "deparadox/tree_document.hpp"

namespace deparadox::cli {
namespace {

using json = nlohmann::ordered_json;

enum class LogLevel { kError = 0, kWarn = 1, kInfo = 2, kDebug = 3 };

LogLevel log_level_from_env() {
  const char* v = std::getenv("DEPARADOX_LOG_LEVEL");
  if (!v) return LogLevel::kWarn;
  std::string s(v);
  if (s == "error") return LogLevel::kError;
  if (s == "info") return LogLevel::kInfo;
  if (s == "debug") return LogLevel::kDebug;
  return LogLevel::kWarn;
}

class Logger {
 public:
  explicit Logger(std::ostream& err) : err_(err), level_(log_level_from_env()) {}
  void info(const std::string& msg) const { emit(LogLevel::kInfo, "info", msg); }
  void warn(const std::string& msg) const { emit(LogLevel::kWarn, "warn", msg); }

 private:
  void emit(LogLevel at, const char* tag, const std::string& msg) const {
    if (static_cast<int>(at) <= static_cast<int>(level_)) err_ << "[" << tag << "] " << msg << '\n';
  }
  std::ostream& err_;
  LogLevel level_;
};

Bandwidth parse_bandwidth(const std::string& text) {
  if (text == "auto") return Bandwidth::automatic();
  double v = 0.0;
  auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || p != text.data() + text.size() || !(v > 0.0)) {
    throw ValidationError("--bandwidth expects 'auto' or a positive number, got '" + text + "'");
  }
  return Bandwidth::fixed(v);
}

void write_text(const std::string& path, const std::string& text, std::ostream& out) {
  if (path.empty() || path == "-") {
    out << text;
    return;
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw SchemaError("cannot write '" + path + "'");
  f << text;
}

json nullable(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json report_to_json(const EvaluationReport& r) {
  json j;
  j["n_leaves"] = r.n_leaves;
  j["kernel_balance"] = nullable(r.kernel_balance);
  j["kernel_balance_unweighted"] = nullable(r.kernel_balance_unweighted);
  j["ks_mean"] = nullable(r.ks_mean);
  j["effect_mse"] = nullable(r.effect_mse);
  j["coverage"] = nullable(r.coverage);
  j["regret"] = nullable(r.regret);
  j["error_rate"] = nullable(r.error_rate);
  j["regret_flagged"] = r.regret_flagged;
  return j;
}

std::filesystem::path truth_sidecar(const std::string& out) {
  std::filesystem::path p(out);
  return p.parent_path() / (p.stem().string() + ".truth.csv");
}

std::string replicate_path(const std::string& out, int r) {
  std::filesystem::path p(out);
  return (p.parent_path() / (p.stem().string() + "_" + std::to_string(r) + p.extension().string()))
      .string();
}

struct FitArgs {
  std::string data, treatment = "treatment", outcome = "outcome", out;
  std::uint64_t seed = 42;
  int d1 = 4, d2 = 2;
  std::size_t min_leaf = 30, min_treated = 15, min_control = 15;
  double eps_rel = 0.05;
  double balance_alpha = 0.05;
  int permutations = 199;
  std::string bandwidth = "auto";
  int folds = 3;
  double clip = 0.01, lambda = 0.01;
  std::string estimator = "dr";
  double policy_alpha = 0.05;
};

struct SimulateArgs {
  int f_design = 0, g_design = 0;
  std::size_t n = 2000, dim_w = 2, dim_v = 2;
  std::uint64_t seed = 42;
  std::string out;
  bool voting = false;
  int replicates = 1;
};

struct InjectArgs {
  double px = 0.0, py = 0.0;
  std::uint64_t seed = 42;
  std::string in, out, treatment = "treatment", outcome = "outcome";
};

struct EvaluateArgs {
  std::vector<std::string> trees, data, truths;
  std::string treatment = "treatment", outcome = "outcome", out;
};

struct ExportArgs {
  std::string tree, format = "dot", out;
};

int do_fit(const FitArgs& a, std::ostream& out, const Logger& log) {
  DeparadoxConfig cfg;
  cfg.balance.max_depth = a.d1;
  cfg.balance.min_leaf = a.min_leaf;
  cfg.balance.min_treated = a.min_treated;
  cfg.balance.min_control = a.min_control;
  cfg.balance.min_relative_improvement = a.eps_rel;
  cfg.balance.significance = a.balance_alpha;
  cfg.balance.permutations = a.permutations;
  cfg.balance.seed = a.seed;
  cfg.bandwidth = parse_bandwidth(a.bandwidth);
  cfg.policy_depth = a.d2;
  cfg.nuisance.folds = a.folds;
  cfg.nuisance.clip = a.clip;
  cfg.nuisance.lambda = a.lambda;
  cfg.nuisance.seed = a.seed;
  cfg.estimator = parse_estimator(a.estimator);
  cfg.policy_significance = a.policy_alpha;
  cfg.validate();

  Dataset ds = load_csv(a.data, a.treatment, a.outcome);
  log.info("loaded " + std::to_string(ds.size()) + " units, " +
           std::to_string(ds.num_features()) + " features");
  TreeDocument doc;
  doc.tree = fit_deparadox(ds, cfg);
  doc.config = config_to_json(cfg);
  doc.config["treatment"] = a.treatment;
  doc.config["outcome"] = a.outcome;
  doc.config["bandwidth_used"] = doc.tree.bandwidth();
  log.info("fitted tree with " + std::to_string(doc.tree.nodes().size()) + " nodes");
  write_text(a.out, dump_document(doc), out);
  return 0;
}

int do_simulate(const SimulateArgs& a, std::ostream& out, const Logger& log) {
  if (a.replicates < 1) throw ValidationError("--replicates must be at least 1");
  if (a.replicates > 1 && (a.out.empty() || a.out == "-")) {
    throw ValidationError("--replicates needs --out so that each dataset gets its own file");
  }
  for (int r = 0; r < a.replicates; ++r) {
    // Replicate r uses the master seed offset by r.
    std::uint64_t seed = a.seed + static_cast<std::uint64_t>(r);
    std::string path = a.replicates > 1 ? replicate_path(a.out, r) : a.out;
    if (a.voting) {
      Dataset ds = generate_voting(a.n, seed);
      std::ostringstream os;
      write_csv(ds, os);
      write_text(path, os.str(), out);
      continue;
    }
    SimulationSpec spec = SimulationSpec::draw(a.f_design, a.g_design, a.n, a.dim_w, a.dim_v, seed);
    SimulatedData sim = generate(spec);
    std::ostringstream os;
    write_csv(sim.data, os);
    write_text(path, os.str(), out);
    if (!path.empty() && path != "-") {
      save_truth_csv(sim.truth, truth_sidecar(path));
      log.info("wrote " + path + " and " + truth_sidecar(path).string());
    }
  }
  return 0;
}

int do_inject(const InjectArgs& a, std::ostream& out) {
  InjectionSpec spec{a.px, a.py, a.seed};
  spec.validate();
  Dataset ds = load_csv(a.in, a.treatment, a.outcome);
  Dataset injected = inject_hybrid(ds, spec);
  std::ostringstream os;
  write_csv(injected, os, a.treatment, a.outcome);
  write_text(a.out, os.str(), out);
  return 0;
}

int do_evaluate(const EvaluateArgs& a, std::ostream& out) {
  if (a.trees.size() != a.data.size()) {
    throw ValidationError("--tree and --data must be given the same number of times");
  }
  if (!a.truths.empty() && a.truths.size() != a.trees.size()) {
    throw ValidationError("--truth must be given once per --tree or not at all");
  }
  std::vector<EvaluationReport> reports;
  for (std::size_t r = 0; r < a.trees.size(); ++r) {
    TreeDocument doc = load_document(a.trees[r]);
    Dataset ds = load_csv(a.data[r], a.treatment, a.outcome);
    std::optional<GroundTruth> truth;
    if (!a.truths.empty()) truth = load_truth_csv(a.truths[r]);
    reports.push_back(evaluate(doc.tree, ds, truth ? &*truth : nullptr));
  }
  if (reports.size() == 1) {
    write_text(a.out, report_to_json(reports.front()).dump(2) + "\n", out);
  } else {
    std::ostringstream os;
    write_batch_csv(reports, os);
    write_text(a.out, os.str(), out);
  }
  return 0;
}

int do_export(const ExportArgs& a, std::ostream& out) {
  TreeDocument doc = load_document(a.tree);
  if (a.format == "dot") {
    write_text(a.out, export_dot(doc), out);
  } else if (a.format == "ascii") {
    write_text(a.out, export_ascii(doc), out);
  } else {
    write_text(a.out, dump_document(doc), out);
  }
  return 0;
}

}  // namespace

int run(int argc, char** argv, std::ostream& out, std::ostream& err) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args, out, err);
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Two-stage balance and opposite-effects trees", "deparadox"};
  app.require_subcommand(1);

  FitArgs fit;
  auto* fit_cmd = app.add_subcommand("fit", "Fit a tree and write it as JSON");
  fit_cmd->add_option("--data", fit.data, "Input CSV")->required();
  fit_cmd->add_option("--treatment", fit.treatment, "Treatment column")->capture_default_str();
  fit_cmd->add_option("--outcome", fit.outcome, "Outcome column")->capture_default_str();
  fit_cmd->add_option("--out", fit.out, "Output JSON (stdout when omitted)");
  fit_cmd->add_option("--seed", fit.seed)->capture_default_str();
  fit_cmd->add_option("--d1", fit.d1, "Balance tree depth, root counts as 1")->capture_default_str();
  fit_cmd->add_option("--d2", fit.d2, "Policy tree depth, a single leaf counts as 1")
      ->capture_default_str();
  fit_cmd->add_option("--min-leaf", fit.min_leaf)->capture_default_str();
  fit_cmd->add_option("--min-treated", fit.min_treated)->capture_default_str();
  fit_cmd->add_option("--min-control", fit.min_control)->capture_default_str();
  fit_cmd->add_option("--eps-rel", fit.eps_rel, "Relative improvement needed to split")
      ->capture_default_str();
  fit_cmd->add_option("--balance-alpha", fit.balance_alpha,
                      "Permutation test level for balance splits; 1 disables")
      ->capture_default_str();
  fit_cmd->add_option("--permutations", fit.permutations)->capture_default_str();
  fit_cmd->add_option("--bandwidth", fit.bandwidth, "RBF bandwidth or 'auto'")->capture_default_str();
  fit_cmd->add_option("--folds", fit.folds)->capture_default_str();
  fit_cmd->add_option("--clip", fit.clip)->capture_default_str();
  fit_cmd->add_option("--lambda", fit.lambda)->capture_default_str();
  fit_cmd->add_option("--estimator", fit.estimator)
      ->check(CLI::IsMember({"dr", "dm", "ips"}))
      ->capture_default_str();
  fit_cmd->add_option("--policy-alpha", fit.policy_alpha,
                      "Held-out gain test level for policy subtrees; 1 disables")
      ->capture_default_str();

  SimulateArgs sim;
  auto* sim_cmd = app.add_subcommand("simulate", "Generate a synthetic dataset");
  sim_cmd->add_option("--f-design", sim.f_design)->check(CLI::Range(0, 2))->capture_default_str();
  sim_cmd->add_option("--g-design", sim.g_design)->check(CLI::Range(0, 2))->capture_default_str();
  sim_cmd->add_option("--n", sim.n)->capture_default_str();
  sim_cmd->add_option("--dim-w", sim.dim_w)->capture_default_str();
  sim_cmd->add_option("--dim-v", sim.dim_v)->capture_default_str();
  sim_cmd->add_option("--seed", sim.seed)->capture_default_str();
  sim_cmd->add_option("--out", sim.out, "Output CSV; ground truth goes to <stem>.truth.csv");
  sim_cmd->add_flag("--voting", sim.voting, "Voting-schema households instead");
  sim_cmd->add_option("--replicates", sim.replicates, "Datasets to write, seeds seed..seed+R-1")
      ->capture_default_str();

  InjectArgs inj;
  auto* inj_cmd = app.add_subcommand("inject", "Inject confounding and effect heterogeneity");
  inj_cmd->add_option("--px", inj.px, "Treatment flip probability")->capture_default_str();
  inj_cmd->add_option("--py", inj.py, "Outcome flip probability")->capture_default_str();
  inj_cmd->add_option("--seed", inj.seed)->capture_default_str();
  inj_cmd->add_option("--in", inj.in)->required();
  inj_cmd->add_option("--out", inj.out);
  inj_cmd->add_option("--treatment", inj.treatment)->capture_default_str();
  inj_cmd->add_option("--outcome", inj.outcome)->capture_default_str();

  EvaluateArgs ev;
  auto* ev_cmd = app.add_subcommand(
      "evaluate", "Score fitted trees; several --tree/--data pairs produce a batch CSV");
  ev_cmd->add_option("--tree", ev.trees)->required();
  ev_cmd->add_option("--data", ev.data)->required();
  ev_cmd->add_option("--truth", ev.truths);
  ev_cmd->add_option("--treatment", ev.treatment)->capture_default_str();
  ev_cmd->add_option("--outcome", ev.outcome)->capture_default_str();
  ev_cmd->add_option("--out", ev.out);

  ExportArgs ex;
  auto* ex_cmd = app.add_subcommand("export", "Render a tree as DOT, ASCII or JSON");
  ex_cmd->add_option("--tree", ex.tree)->required();
  ex_cmd->add_option("--format", ex.format)
      ->check(CLI::IsMember({"dot", "ascii", "json"}))
      ->capture_default_str();
  ex_cmd->add_option("--out", ex.out);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, err, err);
    if (e.get_exit_code() != 0) err << app.help();
    return e.get_exit_code() == 0 ? 0 : 1;
  }

  Logger log(err);
  try {
    if (*fit_cmd) return do_fit(fit, out, log);
    if (*sim_cmd) return do_simulate(sim, out, log);
    if (*inj_cmd) return do_inject(inj, out);
    if (*ev_cmd) return do_evaluate(ev, out);
    if (*ex_cmd) return do_export(ex, out);
  } catch (const InputError& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return 2;
  }
  return 2;
}

}  // namespace deparadox::cli
