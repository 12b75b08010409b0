#include "rmot/cli.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "rmot/diagnostics.hpp"
#include "rmot/io.hpp"
#include "rmot/oracle.hpp"

namespace rmot {
namespace {

struct ProblemArgs {
  std::string problem_path;
  std::string generator;
  std::vector<std::size_t> shape;
  std::uint64_t seed = 0;
  double scale = 1.0;
};

struct ConfigArgs {
  double eta = 1.0;
  std::vector<std::size_t> tau{1};
  double epsilon = 1e-9;
  std::string variant = "greedy-batch";
  std::string stopping = "max";
  std::optional<std::uint64_t> max_iter;
  std::size_t refresh_every = 0;
  bool no_timing = false;
  std::optional<double> oracle_tol;
  std::optional<double> m1;
  std::optional<double> m2;
  std::string trace_out;
  std::string record_out;
};

void add_problem_options(CLI::App& app, ProblemArgs& p) {
  auto* file = app.add_option("--problem", p.problem_path, "problem file (JSON)");
  auto* gen = app.add_option("--generator", p.generator,
                             "random-uniform or symmetric-toy")
                  ->check(CLI::IsMember({"random-uniform", "symmetric-toy"}));
  file->excludes(gen);
  app.add_option("--shape", p.shape, "extents for a generated problem")
      ->delimiter(',');
  app.add_option("--seed", p.seed, "generator seed");
  app.add_option("--scale", p.scale, "generator cost scale");
}

void add_config_options(CLI::App& app, ConfigArgs& c, bool with_tau) {
  app.add_option("--eta", c.eta, "entropic regularization");
  if (with_tau) {
    app.add_option("--tau", c.tau, "batch sizes, comma list or one value")
        ->delimiter(',');
  }
  app.add_option("--epsilon", c.epsilon, "stopping tolerance");
  app.add_option("--variant", c.variant)
      ->check(CLI::IsMember({"greedy-batch", "greedy-full", "cyclic-full"}));
  app.add_option("--stopping", c.stopping)->check(CLI::IsMember({"max", "sum"}));
  app.add_option("--max-iter", c.max_iter, "iteration cap");
  app.add_option("--refresh-every", c.refresh_every,
                 "recompute marginals from scratch every N steps");
  app.add_flag("--no-timing", c.no_timing, "write zero wall times");
  app.add_option("--oracle-tol", c.oracle_tol, "reference solver tolerance");
  app.add_option("--m1", c.m1, "constant for the general rate");
  app.add_option("--m2", c.m2, "constant for the general iteration bound");
}

Problem resolve_problem(const ProblemArgs& p) {
  if (!p.problem_path.empty()) return load_problem(p.problem_path);
  if (p.generator.empty()) {
    throw ValidationError("one of --problem or --generator is required");
  }
  if (p.generator == "symmetric-toy") return symmetric_toy_problem();
  if (p.shape.empty()) throw ValidationError("--generator needs --shape");
  Shape shape;
  try {
    shape = Shape(p.shape);
  } catch (const InvalidArgument& e) {
    throw ValidationError(std::string("--shape: ") + e.what());
  }
  return generated_problem(p.generator, shape, p.seed, p.scale);
}

SolverConfig make_config(const ConfigArgs& c) {
  SolverConfig config;
  config.eta = c.eta;
  config.tau = c.tau;
  config.epsilon = c.epsilon;
  config.variant = parse_variant(c.variant);
  config.stopping = parse_stopping_mode(c.stopping);
  config.max_iter = c.max_iter;
  config.refresh_every = c.refresh_every;
  return config;
}

std::uint64_t resolved_max_iter(const SolverConfig& config, const Problem& p) {
  if (config.max_iter) return *config.max_iter;
  auto bound = default_max_iter(config, p.shape(), p.cost.max_abs());
  if (!bound) {
    throw InvalidArgument(
        "no closed-form iteration bound applies here; pass --max-iter");
  }
  return *bound;
}

struct Run {
  SolverConfig config;
  Solution solution;
  std::optional<DenseTensor> reference;
  std::uint64_t max_iter = 0;
  double max_gap = 0.0;
};

Run run_solver(const Problem& problem, const ConfigArgs& args,
               std::optional<double> oracle_tol, bool track_gap) {
  Run run;
  run.config = make_config(args);
  validate(run.config, problem.shape());
  run.max_iter = resolved_max_iter(run.config, problem);
  run.config.max_iter = run.max_iter;

  SolveOptions options;
  options.record_timing = !args.no_timing;
  if (oracle_tol) {
    run.reference = reference_solution(problem.cost, problem.marginals,
                                       run.config.eta, *oracle_tol);
    options.reference_plan = &*run.reference;
  }
  if (track_gap) {
    options.on_iterate = [&run](const SolverState& s) {
      for (const auto& v : s.potentials.vectors) {
        const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
        run.max_gap = std::max(run.max_gap, *hi - *lo);
      }
    };
  }
  run.solution = solve(problem.cost, problem.marginals, run.config, options);
  return run;
}

OutputPaths output_paths(const ConfigArgs& c) {
  OutputPaths paths;
  if (!c.record_out.empty()) paths.record = c.record_out;
  if (!c.trace_out.empty()) paths.trace = c.trace_out;
  return paths;
}

int cmd_solve(const ProblemArgs& pa, const ConfigArgs& ca, std::ostream& out) {
  const Problem problem = resolve_problem(pa);
  Run run = run_solver(problem, ca, ca.oracle_tol, false);
  RunRecord record = make_record(problem, run.config, run.max_iter, run.solution);
  const OutputPaths paths = output_paths(ca);
  write_outputs(record, run.solution.trace, paths);
  if (!paths.record) {
    if (paths.trace) record.trace_path = paths.trace->string();
    out << dump_record(record);
  } else {
    out << "status=" << to_string(record.status)
        << " iterations=" << record.iterations
        << " d_t=" << format_double(record.final_metric)
        << " t_bar=" << format_double(record.normalized_cycles) << '\n';
  }
  return kExitOk;
}

int cmd_compare(const ProblemArgs& pa, ConfigArgs ca,
                std::vector<std::size_t> taus, std::ostream& out) {
  const Problem problem = resolve_problem(pa);
  if (taus.empty()) {
    const auto dims = problem.shape().dims();
    const std::size_t n = *std::max_element(dims.begin(), dims.end());
    taus = {1, std::max<std::size_t>(1, n / 4), std::max<std::size_t>(1, n / 2), n};
    std::sort(taus.begin(), taus.end());
    taus.erase(std::unique(taus.begin(), taus.end()), taus.end());
  }
  out << "tau,b_tau,status,iterations,t_bar,t_normalized,final_metric\n";
  for (std::size_t tau : taus) {
    ca.tau = {tau};
    Run run = run_solver(problem, ca, std::nullopt, false);
    const auto eff = effective_batch_sizes(run.config, problem.shape());
    const std::size_t b = batch_count(eff, problem.shape());
    const auto& s = run.solution;
    out << tau << ',' << b << ',' << to_string(s.status) << ',' << s.iterations
        << ',' << format_double(normalized_cycles(s.iterations, b)) << ','
        << format_double(normalized_iterations(s.iterations,
                                               problem.shape().order(), b))
        << ',' << format_double(s.final_metric) << '\n';
  }
  return kExitOk;
}

constexpr double kPythagorasTolerance = 1e-9;
constexpr double kKktTolerance = 1e-10;

int cmd_verify(const ProblemArgs& pa, const ConfigArgs& ca, std::ostream& out) {
  const Problem problem = resolve_problem(pa);
  const double tol = ca.oracle_tol.value_or(kReferenceTolerance);
  const bool full = parse_variant(ca.variant) == Variant::kGreedyFull;
  Run run = run_solver(problem, ca, tol, full);
  const auto& sol = run.solution;
  const double cost_sup = problem.cost.max_abs();

  AnalysisParams params = AnalysisParams::from(run.config, problem.shape(), cost_sup);
  params.m1 = ca.m1;
  params.m2 = ca.m2;
  const RateVerdict verdict = analyze_trace(sol.trace, params);

  bool ok = true;
  auto report = [&](std::string_view name, bool pass, const std::string& detail) {
    out << (pass ? "PASS " : "FAIL ") << name << ": " << detail << '\n';
    ok = ok && pass;
  };

  report("converged", sol.status == SolveStatus::kConverged,
         "status=" + std::string(to_string(sol.status)) +
             " iterations=" + std::to_string(sol.iterations) +
             " d_t=" + format_double(sol.final_metric));
  report("monotone", verdict.monotone, "KL to the reference never increases");
  if (verdict.rate_applicable) {
    report("rate", verdict.pass_rate,
           "max ratio " + format_double(verdict.observed_max_ratio) + " <= " +
               format_double(verdict.theoretical_factor) + " over " +
               std::to_string(verdict.ratios_checked) + " ratios");
  } else {
    out << "SKIP rate: no closed-form factor applies\n";
  }
  if (verdict.bound_applicable) {
    const std::string observed = verdict.observed_iterations
                                     ? std::to_string(*verdict.observed_iterations)
                                     : std::string("not reached");
    report("iteration bound", verdict.pass_bound,
           observed + " <= " + format_double(*verdict.iteration_bound));
  } else {
    out << "SKIP iteration bound: needs max stopping, eta > epsilon and a "
           "greedy variant\n";
  }

  double worst = 0.0;
  const auto& rows = sol.trace.rows;
  for (std::size_t i = 0; i + 1 < rows.size(); ++i) {
    const double kl = *rows[i].kl_to_opt;
    const double drop = kl - *rows[i + 1].kl_to_opt;
    worst = std::max(worst, std::abs(drop - rows[i].block_distance) /
                                std::max(1.0, kl));
  }
  report("pythagoras", worst <= kPythagorasTolerance,
         "worst relative defect " + format_double(worst));

  const KktReport kkt =
      kkt_residual(problem.cost, problem.marginals, run.config.eta, sol.plan);
  report("kkt", kkt.range_residual <= kKktTolerance,
         "range residual " + format_double(kkt.range_residual) +
             ", feasibility " + format_double(kkt.feasibility_residual));

  if (full) {
    const double bound = 2.0 * cost_sup / run.config.eta;
    report("potential gap", run.max_gap <= bound + 1e-12,
           format_double(run.max_gap) + " <= " + format_double(bound));
  }

  RunRecord record = make_record(problem, run.config, run.max_iter, sol);
  record.verdict = verdict;
  write_outputs(record, sol.trace, output_paths(ca));
  out << (ok ? "verify: PASS\n" : "verify: FAIL\n");
  return ok ? kExitOk : kExitCheckFailed;
}

int cmd_plot_data(const std::string& trace_in, std::optional<std::size_t> b_tau,
                  const std::string& record_in, const std::string& out_path,
                  std::ostream& out) {
  if (!b_tau) {
    if (record_in.empty()) throw ValidationError("need --b-tau or --record-in");
    b_tau = load_record(record_in).b_tau;
  }
  if (*b_tau == 0) throw ValidationError("--b-tau must be positive");
  const ConvergenceTrace trace = load_trace(trace_in);

  std::ostringstream text;
  text << "t,t_bar,d_t,kl_to_opt\n";
  for (const auto& row : trace.rows) {
    text << row.t << ',' << format_double(normalized_cycles(row.t, *b_tau)) << ','
         << format_double(row.stopping_metric) << ','
         << (row.kl_to_opt ? format_double(*row.kl_to_opt) : std::string()) << '\n';
  }
  if (out_path.empty()) {
    out << text.str();
  } else {
    std::ofstream f(out_path, std::ios::binary | std::ios::trunc);
    f << text.str();
    if (!f) throw IoError("cannot write " + out_path);
  }
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out,
            std::ostream& err) {
  CLI::App app{"Greedy batch Sinkhorn for entropic multimarginal transport",
               "rmot"};
  app.require_subcommand(1);

  ProblemArgs problem;
  ConfigArgs config;

  auto* solve_cmd = app.add_subcommand("solve", "run one configuration");
  add_problem_options(*solve_cmd, problem);
  add_config_options(*solve_cmd, config, true);
  solve_cmd->add_option("--trace-out", config.trace_out, "trace file");
  solve_cmd->add_option("--record-out", config.record_out, "run record file");

  std::vector<std::size_t> taus;
  auto* compare_cmd = app.add_subcommand("compare", "sweep batch sizes");
  add_problem_options(*compare_cmd, problem);
  add_config_options(*compare_cmd, config, false);
  compare_cmd->add_option("--taus", taus, "batch sizes to sweep")->delimiter(',');

  auto* verify_cmd =
      app.add_subcommand("verify", "check a run against the reference and bounds");
  add_problem_options(*verify_cmd, problem);
  add_config_options(*verify_cmd, config, true);
  verify_cmd->add_option("--trace-out", config.trace_out, "trace file");
  verify_cmd->add_option("--record-out", config.record_out, "run record file");

  std::string trace_in, record_in, plot_out;
  std::optional<std::size_t> b_tau;
  auto* plot_cmd = app.add_subcommand("plot-data", "columnar text from a trace");
  plot_cmd->add_option("--trace-in", trace_in, "trace file")->required();
  auto* b_opt = plot_cmd->add_option("--b-tau", b_tau, "batch count b_tau");
  plot_cmd->add_option("--record-in", record_in, "run record carrying b_tau")
      ->excludes(b_opt);
  plot_cmd->add_option("--out", plot_out, "output file (default stdout)");

  // The vector overload of parse() wants arguments reversed; argv is simpler.
  std::vector<std::string> argv_store;
  argv_store.reserve(args.size() + 1);
  argv_store.emplace_back("rmot");
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const auto& a : argv_store) argv.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*solve_cmd) return cmd_solve(problem, config, out);
    if (*compare_cmd) return cmd_compare(problem, config, taus, out);
    if (*verify_cmd) return cmd_verify(problem, config, out);
    return cmd_plot_data(trace_in, b_tau, record_in, plot_out, out);
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const InvalidArgument& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const IoError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

}  // namespace rmot
