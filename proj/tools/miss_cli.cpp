// Command-line front end: generate, run, evaluate, bench.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "miss/harness.hpp"
#include "miss/miss.hpp"

namespace {

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, sep)) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<double> parse_numbers(const std::string& text) {
  std::vector<double> out;
  for (const auto& tok : split(text, ',')) out.push_back(std::stod(tok));
  return out;
}

// "--dist normal,uniform --params '1,1;0,1'" -> one spec per listed distribution.
std::vector<miss::DistributionSpec> parse_distributions(const std::vector<std::string>& names,
                                                        const std::string& params) {
  std::vector<std::string> names_flat;
  for (const auto& n : names) {
    for (const auto& part : split(n, ',')) names_flat.push_back(part);
  }
  const auto param_sets = split(params, ';');
  std::vector<miss::DistributionSpec> out;
  for (std::size_t i = 0; i < names_flat.size(); ++i) {
    std::vector<double> p;
    if (!param_sets.empty()) p = parse_numbers(param_sets[std::min(i, param_sets.size() - 1)]);
    out.push_back(miss::DistributionSpec::parse(names_flat[i], p));
  }
  if (out.empty()) throw miss::InvalidArgument("at least one --dist is required");
  return out;
}

struct MissOptions {
  std::size_t resamples = 500;
  std::size_t init_lo = 4000;
  std::size_t init_hi = 8000;
  std::size_t init_len = 0;
  double tau = miss::kDefaultTau;
  std::size_t kmax = 0;
  std::size_t pilot_reps = 5;
  std::uint64_t seed = 1;

  void add(CLI::App* app) {
    app->add_option("--B", resamples, "Bootstrap resamples")->check(CLI::PositiveNumber);
    app->add_option("--init-lo", init_lo, "Initialization interval lower end");
    app->add_option("--init-hi", init_hi, "Initialization interval upper end");
    app->add_option("--init-len", init_len, "Initialization length l (0: max(20, 5(m+1)))");
    app->add_option("--tau", tau, "Diagnostic threshold");
    app->add_option("--kmax", kmax, "Iteration cap (0: max(100, l+20))");
    app->add_option("--pilot-reps", pilot_reps, "Pilot repetitions for ordering/relative bounds");
    app->add_option("--seed", seed, "Master seed");
  }

  miss::MissConfig config() const {
    miss::MissConfig c;
    c.resamples = resamples;
    c.init_min = init_lo;
    c.init_max = init_hi;
    c.init_length = init_len;
    c.tau = tau;
    c.max_iterations = kmax;
    c.pilot_reps = pilot_reps;
    c.seed = seed;
    return c;
  }
};

miss::AnalyticalFunction function_from_cli(const std::string& name, std::size_t measures,
                                           const std::string& predicate, double q, double alpha) {
  using miss::AnalyticalFunction;
  if (name == "AVG") return AnalyticalFunction::avg();
  if (name == "VAR") return AnalyticalFunction::var();
  if (name == "SUM") return AnalyticalFunction::sum();
  if (name == "MEDIAN") return AnalyticalFunction::median();
  if (name == "QUANTILE") return AnalyticalFunction::quantile(q);
  if (name == "MAX" || name == "MAX_APPROX") return AnalyticalFunction::max_approx(alpha);
  if (name == "PROPORTION" || name == "COUNT") {
    if (predicate.empty()) throw miss::InvalidArgument(name + " requires --predicate");
    const auto p = miss::Predicate::parse(0, predicate);
    return name == "COUNT" ? AnalyticalFunction::count(p) : AnalyticalFunction::proportion(p);
  }
  if (name == "LINREG" || name == "LOGREG") {
    if (measures < 2) throw miss::InvalidArgument(name + " needs feature columns and a target column");
    std::vector<std::size_t> features;
    for (std::size_t j = 0; j + 1 < measures; ++j) features.push_back(j);
    return name == "LINREG" ? AnalyticalFunction::linreg(features, measures - 1)
                            : AnalyticalFunction::logreg(features, measures - 1);
  }
  throw miss::InvalidArgument("unknown function '" + name + "'");
}

miss::ConversionRequest metric_from_cli(const std::string& name, double eps, double p) {
  using Metric = miss::ConversionRequest::Metric;
  if (name == "L2") return {Metric::L2, eps, 2.0};
  if (name == "Linf") return {Metric::Linf, eps, 2.0};
  if (name == "L1") return {Metric::L1, eps, 1.0};
  if (name == "Lp") return {Metric::Lp, eps, p};
  if (name == "MaxDifference") return {Metric::MaxDifference, eps, 2.0};
  if (name == "Ordering") return {Metric::Ordering, 0.0, 2.0};
  throw miss::InvalidArgument("unknown metric '" + name + "'");
}

int exit_code(miss::MissStatus s) {
  switch (s) {
    case miss::MissStatus::Satisfied: return 0;
    case miss::MissStatus::UnrecoverableFailure: return 2;
    case miss::MissStatus::PopulationExhausted: return 3;
    case miss::MissStatus::IterationCapExceeded: return 4;
  }
  return 1;
}

double l2_norm(const std::vector<double>& v) {
  double ss = 0.0;
  for (double x : v) ss += x * x;
  return std::sqrt(ss);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sample size optimization for approximate query processing"};
  app.require_subcommand(1);

  // generate
  auto* gen = app.add_subcommand("generate", "Write a synthetic dataset as CSV");
  std::vector<std::string> gen_dists{"normal"};
  std::string gen_params;
  std::size_t gen_rows = 1'000'000;
  std::size_t gen_groups = 1;
  double gen_bias = 0.0;
  std::uint64_t gen_seed = 1;
  std::string gen_out;
  std::string gen_target = "none";
  gen->add_option("--dist", gen_dists, "Distribution name(s); groups cycle through the list");
  gen->add_option("--params", gen_params, "Parameters, e.g. '0,1' or '1,1;0,1' per distribution");
  gen->add_option("--rows", gen_rows, "Rows per group")->check(CLI::PositiveNumber);
  gen->add_option("--groups", gen_groups, "Number of groups")->check(CLI::PositiveNumber);
  gen->add_option("--bias", gen_bias, "Group g is shifted by g*bias times its reference mean");
  gen->add_option("--seed", gen_seed, "Seed");
  gen->add_option("--target", gen_target, "Append a response column: none|linear|logistic");
  gen->add_option("--out", gen_out, "Output CSV path")->required();

  // run
  auto* run = app.add_subcommand("run", "Find a near-minimal sample size for a query");
  std::string run_data;
  std::string run_group_col = "group";
  std::vector<std::string> run_measures{"value"};
  std::string run_fn = "AVG";
  std::string run_metric = "L2";
  std::string run_predicate;
  double run_q = 0.5;
  double run_alpha = 0.01;
  double run_p = 2.0;
  std::optional<double> run_eps;
  std::optional<double> run_eps_rel;
  double run_delta = 0.05;
  std::string run_trace;
  std::string run_profile;
  MissOptions run_opts;
  run->add_option("--data", run_data, "Input CSV")->required();
  run->add_option("--group-col", run_group_col, "Group-by column");
  run->add_option("--measure-cols", run_measures, "Measure columns (regressions: features..., target)");
  run->add_option("--fn", run_fn, "AVG|VAR|SUM|COUNT|PROPORTION|QUANTILE|MEDIAN|MAX|LINREG|LOGREG");
  run->add_option("--predicate", run_predicate, "Comparator and constant on the first measure, e.g. '>0.9'");
  run->add_option("--q", run_q, "Quantile level for QUANTILE");
  run->add_option("--alpha", run_alpha, "Tail fraction for MAX");
  run->add_option("--metric", run_metric, "L2|Linf|L1|Lp|Ordering|MaxDifference");
  run->add_option("--p", run_p, "p for the Lp metric");
  auto* eps_opt = run->add_option("--eps", run_eps, "Absolute error bound");
  auto* eps_rel_opt = run->add_option("--eps-rel", run_eps_rel, "Error bound relative to a pilot estimate");
  eps_opt->excludes(eps_rel_opt);
  run->add_option("--delta", run_delta, "Error probability");
  run->add_option("--trace", run_trace, "Write the iteration trace (JSON lines) here");
  run->add_option("--profile", run_profile, "Write the error profile (JSON lines) here");
  run_opts.add(run);

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "Measure simulated confidence on synthetic data");
  std::vector<std::string> ev_fns{"AVG"};
  std::vector<std::string> ev_dists{"normal"};
  std::string ev_params;
  std::size_t ev_rows = 1'000'000;
  double ev_bias = 0.0;
  std::optional<double> ev_eps;
  double ev_eps_rel = 0.01;
  double ev_delta = 0.05;
  std::size_t ev_reps = 1000;
  std::size_t ev_alg_reps = 1;
  bool ev_grid = false;
  MissOptions ev_opts;
  ev->add_option("--fn", ev_fns, "Function name(s)");
  ev->add_option("--dist", ev_dists, "Distribution per group (or per grid column with --grid)");
  ev->add_option("--params", ev_params, "Distribution parameters");
  ev->add_option("--rows", ev_rows, "Rows per group");
  ev->add_option("--bias", ev_bias, "Group bias");
  ev->add_option("--eps", ev_eps, "Absolute error bound");
  ev->add_option("--eps-rel", ev_eps_rel, "Bound relative to the true result norm");
  ev->add_option("--delta", ev_delta, "Error probability");
  ev->add_option("--reps", ev_reps, "Confidence draws R_conf");
  ev->add_option("--alg-reps", ev_alg_reps, "Algorithm repetitions R_alg");
  ev->add_flag("--grid", ev_grid, "Every function x every single distribution");
  ev_opts.add(ev);

  // bench
  auto* bench = app.add_subcommand("bench", "Parameter sweep written as CSV");
  std::string bench_factor = "delta";
  std::vector<double> bench_values;
  std::string bench_fn = "AVG";
  std::vector<std::string> bench_dists{"normal"};
  std::string bench_params = "1,1";
  std::size_t bench_rows = 1'000'000;
  std::size_t bench_groups = 1;
  double bench_bias = 0.0;
  std::optional<double> bench_eps;
  double bench_eps_rel = 0.01;
  double bench_delta = 0.05;
  std::size_t bench_reps = 200;
  std::size_t bench_alg_reps = 3;
  bool bench_ordering = false;
  std::string bench_out;
  MissOptions bench_opts;
  bench->add_option("--sweep", bench_factor, "eps|delta|m|N")->required();
  bench->add_option("--values", bench_values, "Values of the swept factor")->required();
  bench->add_option("--fn", bench_fn, "Function");
  bench->add_option("--dist", bench_dists, "Distribution shared by all groups");
  bench->add_option("--params", bench_params, "Distribution parameters");
  bench->add_option("--rows", bench_rows, "Rows per group");
  bench->add_option("--groups", bench_groups, "Groups when m is not swept");
  bench->add_option("--bias", bench_bias, "Group bias");
  bench->add_option("--eps", bench_eps, "Absolute error bound");
  bench->add_option("--eps-rel", bench_eps_rel, "Relative error bound");
  bench->add_option("--delta", bench_delta, "Error probability");
  bench->add_option("--reps", bench_reps, "Confidence draws R_conf");
  bench->add_option("--alg-reps", bench_alg_reps, "Repetitions per value");
  bench->add_flag("--ordering", bench_ordering, "Also run the ordering variant");
  bench->add_option("--out", bench_out, "CSV output path")->required();
  bench_opts.add(bench);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      const auto dists = parse_distributions(gen_dists, gen_params);
      auto spec = miss::GeneratorSpec::make(dists, gen_rows, gen_groups, gen_bias, gen_seed);
      if (gen_target == "linear") spec.target = {miss::TargetSpec::Kind::Linear, 1.0, 2.0, 1.0};
      else if (gen_target == "logistic") spec.target = {miss::TargetSpec::Kind::Logistic, -1.0, 1.0, 0.0};
      else if (gen_target != "none") throw miss::InvalidArgument("unknown --target '" + gen_target + "'");
      miss::write_csv(miss::generate_synthetic(spec), gen_out);
      return 0;
    }

    if (*run) {
      if (!run_eps && !run_eps_rel && run_metric != "Ordering")
        throw miss::InvalidArgument("one of --eps or --eps-rel is required");
      const miss::Dataset data = miss::load_csv(run_data, run_group_col, run_measures);
      const miss::GroupIndex index = miss::build_index(data);
      const auto f = function_from_cli(run_fn, data.num_measures(), run_predicate, run_q, run_alpha);
      const auto cfg = run_opts.config();
      double eps = run_eps.value_or(0.0);
      if (run_eps_rel) {
        cfg.validate(data.group_sizes());
        const auto pilot = miss::pilot_estimate(data, index, f, cfg.init_max, cfg.pilot_reps, cfg.seed);
        eps = *run_eps_rel * l2_norm(pilot);
      }
      const auto out = miss::run_with_metric(data, index, f, metric_from_cli(run_metric, eps, run_p),
                                             run_delta, cfg);
      if (!run_trace.empty()) std::ofstream(run_trace) << out.trace_jsonl();
      if (!run_profile.empty()) std::ofstream(run_profile) << out.profile.to_jsonl();
      std::cout << out.to_json() << '\n';
      return exit_code(out.status);
    }

    if (*ev) {
      miss::HarnessConfig hc;
      hc.miss = ev_opts.config();
      hc.delta = ev_delta;
      hc.confidence_draws = ev_reps;
      hc.algorithm_reps = ev_alg_reps;
      hc.seed = ev_opts.seed;
      const auto dists = parse_distributions(ev_dists, ev_params);
      nlohmann::json reports = nlohmann::json::array();
      if (ev_grid) {
        for (const auto& r : miss::run_grid(ev_fns, dists, ev_rows, hc))
          reports.push_back(nlohmann::json::parse(r.to_json()));
      } else {
        for (const auto& fn : ev_fns) {
          miss::GridCase c;
          c.function = fn;
          c.distributions = dists;
          c.rows_per_group = ev_rows;
          c.bias = ev_bias;
          c.relative_epsilon = ev_eps_rel;
          c.absolute_epsilon = ev_eps;
          reports.push_back(nlohmann::json::parse(miss::run_case(c, hc).to_json()));
        }
      }
      std::cout << (reports.size() == 1 ? reports[0] : reports).dump(2) << '\n';
      return 0;
    }

    if (*bench) {
      miss::SweepSpec spec;
      spec.factor = miss::SweepSpec::parse_factor(bench_factor);
      spec.values = bench_values;
      spec.base.function = bench_fn;
      spec.base.distributions = parse_distributions(bench_dists, bench_params);
      spec.base.rows_per_group = bench_rows;
      spec.base.bias = bench_bias;
      spec.base.relative_epsilon = bench_eps_rel;
      spec.base.absolute_epsilon = bench_eps;
      spec.groups = bench_groups;
      spec.include_ordering = bench_ordering;
      spec.harness.miss = bench_opts.config();
      spec.harness.delta = bench_delta;
      spec.harness.confidence_draws = bench_reps;
      spec.harness.algorithm_reps = bench_alg_reps;
      spec.harness.seed = bench_opts.seed;
      std::ofstream(bench_out) << miss::sweep_csv(miss::run_sweep(spec));
      return 0;
    }
  } catch (const miss::ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
