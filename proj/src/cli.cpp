#include "transport/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <random>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "transport/csv_io.hpp"
#include "transport/inference.hpp"

namespace transport::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kMomentsCaveat =
    "target covariates were supplied as moments only. Intervals treat those moments as "
    "fixed, so they describe the target sample average treatment effect (SATE). They "
    "ignore the sampling variability of the moments and will under-cover the population "
    "effect (PATE), badly so when the trial is large relative to the target sample.";

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> parts;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (b == std::string::npos) continue;
    parts.push_back(item.substr(b, e - b + 1));
  }
  return parts;
}

std::uint64_t fresh_seed() {
  std::random_device rd;
  return (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
}

struct Inputs {
  TrialSample trial;
  TargetInfo target;
  BalanceSpec spec;
};

Inputs load_inputs(const RunConfig& cfg) {
  Inputs in;
  in.trial = csv::read_trial(cfg.trial_path);
  const auto d = in.trial.covariates();
  in.spec = cfg.spec_text.empty() ? BalanceSpec::main_effects(d)
                                  : BalanceSpec::parse(cfg.spec_text);
  if (!cfg.target_path.empty()) {
    auto target = csv::read_target(cfg.target_path);
    if (target.x.cols() != in.trial.x.cols()) {
      throw Error(ErrorKind::Dimension, "target has " + std::to_string(target.x.cols()) +
                                            " covariates but the trial has " +
                                            std::to_string(in.trial.x.cols()));
    }
    in.target = std::move(target);
  } else {
    in.target = csv::read_moments(cfg.moments_path, in.spec);
  }
  // Surfaces out-of-range terms and dimension problems before any fitting.
  apply_balance_spec(in.spec, in.trial.x.topRows(1));
  resolve_target_moments(in.target, in.spec);
  return in;
}

json balance_json(const BalanceReport& report) {
  json features = json::array();
  for (const auto& f : report.features) {
    json j{{"feature", f.label}, {"defined", f.defined}};
    if (f.defined) {
      j["smd_before"] = f.smd_before;
      j["smd_after"] = f.smd_after;
    }
    features.push_back(std::move(j));
  }
  return {{"features", features},
          {"ess_treated", report.ess_treated},
          {"ess_control", report.ess_control},
          {"max_abs_smd_after", report.max_abs_smd_after()}};
}

void print_balance(std::ostream& out, Method method, const BalanceReport& report) {
  out << "balance (" << to_string(method) << "): ESS treated " << std::fixed
      << std::setprecision(1) << report.ess_treated << ", control " << report.ess_control
      << '\n';
  out << "  " << std::left << std::setw(16) << "feature" << std::right << std::setw(12)
      << "smd_before" << std::setw(12) << "smd_after" << '\n';
  out << std::setprecision(4);
  for (const auto& f : report.features) {
    out << "  " << std::left << std::setw(16) << f.label << std::right;
    if (f.defined) {
      out << std::setw(12) << f.smd_before << std::setw(12) << f.smd_after << '\n';
    } else {
      out << std::setw(12) << "n/a" << std::setw(12) << "n/a" << '\n';
    }
  }
  out.unsetf(std::ios::floatfield);
  out << std::left;
}

json diagnostics_json(const EstimateResult& r) {
  json d = json::object();
  if (!r.duals.empty()) {
    json duals = json::array();
    for (const auto& s : r.duals) {
      duals.push_back({{"status", std::string(to_string(s.status))},
                       {"iterations", s.iterations},
                       {"grad_norm", s.grad_norm}});
    }
    d["duals"] = duals;
  }
  if (r.sampling) {
    d["sampling_model"] = {{"converged", r.sampling->converged},
                           {"iterations", r.sampling->iterations},
                           {"score_norm", r.sampling->score_norm}};
  }
  if (r.fluctuation) {
    d["fluctuation"] = {{"eps0", r.fluctuation->first}, {"eps1", r.fluctuation->second}};
  }
  return d;
}

void write_json(const std::string& path, const json& report) {
  if (path.empty()) return;
  const fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream f(p);
  if (!f) throw Error(ErrorKind::Config, "cannot write report to " + path);
  f << report.dump(2) << '\n';
}

void report_error(std::ostream& err, const std::string& where, const Error& e) {
  err << "error";
  if (!where.empty()) err << " [" << where << "]";
  err << " (" << to_string(e.kind()) << "): " << e.what() << '\n';
}

int merge(int current, int next) { return current != kOk ? current : next; }

fs::path out_dir(const RunConfig& cfg) {
  fs::path dir = cfg.out.empty() ? fs::path(".") : fs::path(cfg.out);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Config:
    case ErrorKind::Parse:
    case ErrorKind::Dimension: return kUsage;
    case ErrorKind::Infeasible: return kInfeasible;
    case ErrorKind::EstimandUnavailable: return kEstimandUnavailable;
    default: return kFailure;
  }
}

void RunConfig::validate() const {
  if (subcommand == "transport" || subcommand == "balance") {
    if (trial_path.empty()) throw Error(ErrorKind::Config, "--trial is required");
    if (target_path.empty() == moments_path.empty()) {
      throw Error(ErrorKind::Config, "give exactly one of --target or --target-moments");
    }
    if (methods.empty()) throw Error(ErrorKind::Config, "--method list is empty");
    if (!target_path.empty()) return;
    for (Method m : methods) {
      if (m == Method::IOSW || m == Method::TMLE) {
        throw Error(ErrorKind::EstimandUnavailable,
                    "--method " + std::string(to_string(m)) +
                        " needs individual-level target rows (--target), not moments");
      }
    }
  }
  if (!(level > 0.0 && level < 1.0)) throw Error(ErrorKind::Config, "--level must be in (0, 1)");
  if (subcommand == "simulate" || subcommand == "coverage") {
    if (reps < 2) throw Error(ErrorKind::Config, "--reps must be at least 2");
    if (!(sigma > 0.0)) throw Error(ErrorKind::Config, "--sigma must be positive");
  }
}

int cmd_transport(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  cfg.validate();
  const Inputs in = load_inputs(cfg);
  const TargetMode mode = mode_of(in.target);
  const bool moments_only = mode == TargetMode::MomentsOnly;
  const bool need_seed =
      !moments_only && cfg.bootstrap > 0 && cfg.estimand == Estimand::SATE &&
      std::find(cfg.methods.begin(), cfg.methods.end(), Method::IOSW) != cfg.methods.end();
  const std::uint64_t seed = cfg.seed.value_or(need_seed ? fresh_seed() : 0);

  json report{{"command", "transport"},
              {"estimand", std::string(to_string(cfg.estimand))},
              {"target_mode", std::string(to_string(mode))},
              {"spec", in.spec.to_string()},
              {"n1", in.trial.size()},
              {"level", cfg.level}};
  if (need_seed) report["seed"] = seed;

  out << "estimand " << to_string(cfg.estimand) << ", target " << to_string(mode);
  if (const auto* rows = std::get_if<TargetIndividual>(&in.target)) {
    out << " (n0 = " << rows->size() << ")";
  } else if (const auto& m = std::get<TargetMoments>(in.target); m.n0) {
    out << " (n0 = " << *m.n0 << ")";
  }
  out << ", spec " << in.spec.to_string() << '\n';
  out << "trial n1 = " << in.trial.size() << " (treated " << in.trial.treated_count()
      << ", control " << in.trial.control_count() << ")\n";
  if (need_seed) out << "seed " << seed << '\n';
  out << '\n';

  int code = kOk;
  json methods = json::array();
  std::vector<std::pair<Method, BalanceReport>> balances;
  std::ostringstream table;
  table << std::left << std::setw(6) << "method" << std::right << std::setw(12) << "tau_hat"
        << std::setw(12) << "std_err" << std::setw(26) << "interval" << "  kind\n";

  for (Method method : cfg.methods) {
    json entry{{"method", std::string(to_string(method))}};
    EstimateResult r;
    try {
      r = estimate(method, in.trial, in.target, in.spec, cfg.solver);
    } catch (const Error& e) {
      report_error(err, std::string(to_string(method)), e);
      code = merge(code, exit_code_for(e.kind()));
      entry["error"] = {{"kind", std::string(to_string(e.kind()))}, {"message", e.what()}};
      methods.push_back(std::move(entry));
      table << std::left << std::setw(6) << to_string(method) << std::right << std::setw(12)
            << "failed" << '\n';
      continue;
    }
    entry["tau_hat"] = r.tau_hat;
    entry["diagnostics"] = diagnostics_json(r);

    std::optional<IntervalResult> iv;
    std::optional<BootstrapInterval> boot;
    std::string kind;
    try {
      if (method == Method::EB) {
        const EbFit fit{*r.weights, r.duals.at(0), r.duals.at(1)};
        iv = sandwich(eb_stack(in.trial, in.target, in.spec, fit, r.tau_hat, cfg.estimand),
                      cfg.level);
        kind = "sandwich";
      } else if (method == Method::OM) {
        iv = sandwich(
            om_stack(in.trial, in.target, in.spec, *r.outcome, r.tau_hat, cfg.estimand),
            cfg.level);
        kind = "sandwich";
      } else if (method == Method::IOSW && need_seed) {
        const TargetInfo target = in.target;
        const BalanceSpec spec = in.spec;
        boot = bootstrap_interval(
            [&](const TrialSample& t) { return estimate_iosw(t, target, spec).tau_hat; },
            in.trial, cfg.bootstrap, seed, cfg.level);
        kind = "percentile bootstrap";
      }
    } catch (const Error& e) {
      report_error(err, std::string(to_string(method)) + " interval", e);
      code = merge(code, exit_code_for(e.kind()));
      entry["interval_error"] = {{"kind", std::string(to_string(e.kind()))},
                                 {"message", e.what()}};
    }

    table << std::left << std::setw(6) << to_string(method) << std::right << std::fixed
          << std::setprecision(4) << std::setw(12) << r.tau_hat;
    if (iv || boot) {
      const double se = iv ? iv->std_err : boot->std_err;
      const double lo = iv ? iv->ci_lower : boot->ci_lower;
      const double hi = iv ? iv->ci_upper : boot->ci_upper;
      std::ostringstream ci;
      ci << std::fixed << std::setprecision(4) << '[' << lo << ", " << hi << ']';
      table << std::setw(12) << se << std::setw(26) << ci.str() << "  " << kind;
      entry["interval"] = {{"std_err", se},     {"lower", lo},
                           {"upper", hi},       {"level", cfg.level},
                           {"kind", kind},      {"estimand", std::string(to_string(cfg.estimand))}};
      if (boot) {
        entry["interval"]["resamples"] = boot->resamples;
        entry["interval"]["failures"] = boot->failures;
      }
    } else {
      table << std::setw(12) << "-" << std::setw(26) << "-";
    }
    table << '\n';
    table.unsetf(std::ios::floatfield);

    if (r.weights) {
      const BalanceReport b = balance_report(in.trial, *r.weights, in.target, in.spec);
      entry["balance"] = balance_json(b);
      balances.emplace_back(method, b);
    }
    methods.push_back(std::move(entry));
  }
  report["methods"] = methods;

  out << table.str();
  for (const auto& [method, b] : balances) {
    out << '\n';
    print_balance(out, method, b);
  }
  if (moments_only) {
    out << "\nnote: " << kMomentsCaveat << '\n';
    report["caveat"] = kMomentsCaveat;
  }
  write_json(cfg.out, report);
  return code;
}

int cmd_balance(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  cfg.validate();
  const Inputs in = load_inputs(cfg);
  json report{{"command", "balance"},
              {"target_mode", std::string(to_string(mode_of(in.target)))},
              {"spec", in.spec.to_string()}};
  json methods = json::array();
  int code = kOk;
  bool first = true;
  for (Method method : cfg.methods) {
    if (method == Method::OM || method == Method::TMLE) {
      err << "note: " << to_string(method) << " produces no weights; skipped\n";
      continue;
    }
    try {
      const EstimateResult r = estimate(method, in.trial, in.target, in.spec, cfg.solver);
      const BalanceReport b = balance_report(in.trial, *r.weights, in.target, in.spec);
      if (!first) out << '\n';
      first = false;
      print_balance(out, method, b);
      json entry = balance_json(b);
      entry["method"] = std::string(to_string(method));
      methods.push_back(std::move(entry));
    } catch (const Error& e) {
      report_error(err, std::string(to_string(method)), e);
      code = merge(code, exit_code_for(e.kind()));
    }
  }
  report["methods"] = methods;
  write_json(cfg.out, report);
  return code;
}

int cmd_simulate(const RunConfig& cfg, std::ostream& out, std::ostream&) {
  cfg.validate();
  sim::Table1Options opt;
  if (!cfg.scenarios.empty()) opt.scenarios = cfg.scenarios;
  if (!cfg.n0.empty()) opt.n0 = cfg.n0;
  if (!cfg.n1.empty()) opt.n1 = cfg.n1;
  opt.replicates = cfg.reps;
  opt.seed = cfg.seed.value_or(fresh_seed());
  opt.sigma = cfg.sigma;
  opt.variant = cfg.variant;
  opt.threads = cfg.threads;
  opt.oracle_draws = cfg.oracle_draws;
  opt.solver = cfg.solver;

  out << "seed " << opt.seed << '\n';
  const auto rows = sim::run_table1(opt);
  const fs::path dir = out_dir(cfg);
  {
    std::ofstream f(dir / "table1.csv");
    sim::write_table1_csv(f, rows);
  }
  {
    std::ofstream f(dir / "replicates.csv");
    sim::write_table1_replicates_csv(f, rows);
  }
  sim::print_table1(out, rows);
  out << "wrote " << (dir / "table1.csv").string() << " and "
      << (dir / "replicates.csv").string() << '\n';
  return kOk;
}

int cmd_coverage(const RunConfig& cfg, std::ostream& out, std::ostream&) {
  cfg.validate();
  sim::Table2Options opt;
  if (!cfg.n0.empty()) opt.n0 = cfg.n0;
  if (!cfg.n1.empty()) opt.n1 = cfg.n1;
  if (!cfg.scenarios.empty()) {
    if (cfg.scenarios.size() != 1) {
      throw Error(ErrorKind::Config, "coverage runs one scenario at a time");
    }
    opt.scenario = cfg.scenarios.front();
  }
  opt.replicates = cfg.reps;
  opt.seed = cfg.seed.value_or(fresh_seed());
  opt.sigma = cfg.sigma;
  opt.variant = cfg.variant;
  opt.threads = cfg.threads;
  opt.level = cfg.level;
  opt.solver = cfg.solver;

  out << "seed " << opt.seed << '\n';
  const auto rows = sim::run_table2(opt);
  const fs::path dir = out_dir(cfg);
  {
    std::ofstream f(dir / "table2.csv");
    sim::write_table2_csv(f, rows);
  }
  {
    std::ofstream f(dir / "replicates.csv");
    sim::write_table2_replicates_csv(f, rows);
  }
  sim::print_table2(out, rows);
  for (const auto& row : rows) {
    if (row.excluded > 0) {
      out << "n0=" << row.cell.n0 << " n1=" << row.cell.n1 << ": " << row.excluded
          << " replicates excluded (EB did not converge)\n";
    }
  }
  out << "wrote " << (dir / "table2.csv").string() << " and "
      << (dir / "replicates.csv").string() << '\n';
  return kOk;
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Transport randomized-trial treatment effects to a target population"};
  app.require_subcommand(1);

  RunConfig cfg;
  std::string methods_text;
  std::string estimand_text = "sate";
  std::string scenario_text;
  std::string variant_text = "calibrated";
  std::uint64_t seed = 0;

  auto add_solver = [&](CLI::App* sub) {
    sub->add_option("--tol", cfg.solver.tol, "dual convergence tolerance")
        ->check(CLI::PositiveNumber);
    sub->add_option("--max-iter", cfg.solver.max_iter, "dual iteration cap")
        ->check(CLI::PositiveNumber);
  };
  auto add_data = [&](CLI::App* sub) {
    sub->add_option("--trial", cfg.trial_path, "trial CSV (y, z, x1..xd)")->required();
    sub->add_option("--target", cfg.target_path, "target CSV (x1..xd, optional q)");
    sub->add_option("--target-moments", cfg.moments_path,
                    "target moments CSV, one column per balance feature");
    sub->add_option("--method", methods_text, "comma list of iosw, om, tmle, mom, eb");
    sub->add_option("--spec", cfg.spec_text, "balance features, e.g. 'x1 + x2 + x1:x2 + x1^2'");
    sub->add_option("--out", cfg.out, "write a JSON report here");
    add_solver(sub);
  };
  auto add_grid = [&](CLI::App* sub) {
    sub->add_option("--scenario", scenario_text,
                    "comma list of baseline, interaction, positivity, sparse");
    sub->add_option("--n0", cfg.n0, "target sample sizes")->delimiter(',');
    sub->add_option("--n1", cfg.n1, "trial sample sizes")->delimiter(',');
    sub->add_option("--reps", cfg.reps, "replicates per cell");
    sub->add_option("--sigma", cfg.sigma, "outcome noise sd");
    sub->add_option("--variant", variant_text, "calibrated or literal scenario laws");
    sub->add_option("--threads", cfg.threads, "worker threads (0: all cores)");
    sub->add_option("--out", cfg.out, "output directory");
    sub->add_option("--level", cfg.level, "interval level");
    add_solver(sub);
  };

  auto* transport = app.add_subcommand("transport", "estimate the transported effect");
  add_data(transport);
  transport->add_option("--estimand", estimand_text, "sate or pate")
      ->check(CLI::IsMember({"sate", "pate"}, CLI::ignore_case));
  transport->add_option("--level", cfg.level, "interval level");
  transport->add_option("--bootstrap", cfg.bootstrap, "IOSW bootstrap resamples (0: off)")
      ->check(CLI::NonNegativeNumber);
  CLI::Option* transport_seed = transport->add_option("--seed", seed, "bootstrap seed");

  auto* balance = app.add_subcommand("balance", "report covariate balance of the weights");
  add_data(balance);

  auto* simulate = app.add_subcommand("simulate", "run the estimator comparison grid");
  add_grid(simulate);
  simulate->add_option("--oracle-draws", cfg.oracle_draws, "draws for the true PATE oracle");
  CLI::Option* simulate_seed = simulate->add_option("--seed", seed, "master seed");

  auto* coverage = app.add_subcommand("coverage", "run the interval coverage grid");
  add_grid(coverage);
  CLI::Option* coverage_seed = coverage->add_option("--seed", seed, "master seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return kOk;
    }
    err << "error: " << e.what() << '\n';
    for (auto* sub : app.get_subcommands()) err << sub->help();
    return kUsage;
  }

  try {
    cfg.subcommand = app.get_subcommands().front()->get_name();
    if (*transport_seed || *simulate_seed || *coverage_seed) cfg.seed = seed;
    cfg.estimand = estimand_text == "pate" || estimand_text == "PATE" ? Estimand::PATE
                                                                       : Estimand::SATE;
    if (!methods_text.empty()) {
      cfg.methods.clear();
      for (const auto& m : split_list(methods_text)) cfg.methods.push_back(parse_method(m));
    } else if (cfg.subcommand == "balance" && !cfg.target_path.empty()) {
      cfg.methods = {Method::EB, Method::IOSW};
    }
    for (const auto& s : split_list(scenario_text)) {
      cfg.scenarios.push_back(sim::parse_scenario(s));
    }
    cfg.variant = sim::parse_variant(variant_text);

    if (cfg.subcommand == "transport") return cmd_transport(cfg, out, err);
    if (cfg.subcommand == "balance") return cmd_balance(cfg, out, err);
    if (cfg.subcommand == "simulate") return cmd_simulate(cfg, out, err);
    return cmd_coverage(cfg, out, err);
  } catch (const Error& e) {
    report_error(err, "", e);
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kFailure;
  }
}

}  // namespace transport::cli
