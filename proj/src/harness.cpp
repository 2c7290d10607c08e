#include "miss/harness.hpp"

#include <algorithm>
#include <boost/math/distributions/normal.hpp>
#include <chrono>
#include <cmath>
#include <exception>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "miss/random.hpp"

namespace miss {

namespace {

// Estimator actually reported to users: SUM/COUNT go through their scaled
// consistent counterparts.
class ReportedEstimator {
 public:
  ReportedEstimator(const AnalyticalFunction& f, std::span<const std::size_t> group_sizes)
      : function_(f) {
    if (f.kind() == FunctionKind::Sum || f.kind() == FunctionKind::Count) {
      auto t = transform_inconsistent(f, group_sizes);
      function_ = t.function;
      scales_ = std::move(t.scales);
    }
  }

  ResultVector operator()(std::span<const GroupColumns> groups) const {
    ResultVector r = evaluate(function_, groups);
    for (std::size_t g = 0; g < scales_.size() && g < r.size(); ++g) r[g] *= scales_[g];
    return r;
  }

 private:
  AnalyticalFunction function_;
  std::vector<double> scales_;
};

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

double l2_norm(std::span<const double> v) {
  double ss = 0.0;
  for (double x : v) ss += x * x;
  return std::sqrt(ss);
}

void mean_stddev(const std::vector<double>& xs, double& mean, double& sd) {
  mean = xs.empty() ? 0.0 : std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  sd = xs.size() > 1 ? std::sqrt(ss / static_cast<double>(xs.size() - 1)) : 0.0;
}

std::vector<std::size_t> sort_order(const ResultVector& v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  return idx;
}

nlohmann::json config_json(const HarnessConfig& cfg) {
  nlohmann::json j;
  j["B"] = cfg.miss.resamples;
  j["init_min"] = cfg.miss.init_min;
  j["init_max"] = cfg.miss.init_max;
  j["init_length"] = cfg.miss.init_length;
  j["tau"] = cfg.miss.tau;
  j["max_iterations"] = cfg.miss.max_iterations;
  j["pilot_reps"] = cfg.miss.pilot_reps;
  j["delta"] = cfg.delta;
  j["algorithm_reps"] = cfg.algorithm_reps;
  j["confidence_draws"] = cfg.confidence_draws;
  j["seed"] = cfg.seed;
  return j;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

std::vector<ResultVector> verification_estimates(const Dataset& dataset, const GroupIndex& index,
                                                 const AnalyticalFunction& f, const SizeVector& n,
                                                 std::size_t draws, std::uint64_t seed) {
  n.validate(dataset.group_sizes());
  const ReportedEstimator estimator(f, dataset.group_sizes());
  std::vector<ResultVector> out(draws);
  std::exception_ptr failure;
  const auto count = static_cast<std::ptrdiff_t>(draws);
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t r = 0; r < count; ++r) {
    try {
      const Sample s = stratified_sample(dataset, index, n, derive_seed(seed, static_cast<std::uint64_t>(r)));
      out[static_cast<std::size_t>(r)] = estimator(s.groups);
    } catch (...) {
#pragma omp critical(miss_verification_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

std::vector<ResultVector> verification_estimates_serial(const Dataset& dataset,
                                                        const GroupIndex& index,
                                                        const AnalyticalFunction& f,
                                                        const SizeVector& n, std::size_t draws,
                                                        std::uint64_t seed) {
  n.validate(dataset.group_sizes());
  const ReportedEstimator estimator(f, dataset.group_sizes());
  std::vector<ResultVector> out;
  out.reserve(draws);
  for (std::size_t r = 0; r < draws; ++r) {
    const Sample s = stratified_sample(dataset, index, n, derive_seed(seed, r));
    out.push_back(estimator(s.groups));
  }
  return out;
}

ConfidenceEstimate simulated_confidence(const Dataset& dataset, const GroupIndex& index,
                                        const AnalyticalFunction& f, const ErrorMetric& d,
                                        double epsilon, const SizeVector& n,
                                        const ResultVector& truth, std::size_t draws,
                                        std::uint64_t seed) {
  if (draws < 1) throw InvalidArgument("simulated confidence needs R >= 1");
  const auto estimates = verification_estimates(dataset, index, f, n, draws, seed);
  std::size_t hits = 0;
  for (const auto& est : estimates) hits += metric_eval(d, est, truth) <= epsilon ? 1 : 0;
  ConfidenceEstimate c;
  c.draws = draws;
  c.c_hat = static_cast<double>(hits) / static_cast<double>(draws);
  c.std_error = std::sqrt(c.c_hat * (1.0 - c.c_hat) / static_cast<double>(draws));
  return c;
}

double order_preservation_rate(const std::vector<ResultVector>& estimates, const ResultVector& truth) {
  if (estimates.empty()) return 0.0;
  const auto order = sort_order(truth);
  std::size_t kept = 0;
  for (const auto& est : estimates) {
    bool ok = true;
    for (std::size_t i = 1; i < order.size() && ok; ++i) ok = est[order[i - 1]] <= est[order[i]];
    kept += ok ? 1 : 0;
  }
  return static_cast<double>(kept) / static_cast<double>(estimates.size());
}

SizeVector clt_baseline_size(std::span<const double> sigmas, double epsilon, double delta,
                             std::span<const std::size_t> group_sizes) {
  ErrorConstraint{epsilon, delta}.validate();
  if (sigmas.size() != group_sizes.size()) throw InvalidArgument("one sigma per group required");
  const double z = boost::math::quantile(boost::math::normal(), 1.0 - delta / 2.0);
  const double m = static_cast<double>(sigmas.size());
  std::vector<std::size_t> out(sigmas.size());
  for (std::size_t g = 0; g < sigmas.size(); ++g) {
    const double root = z * sigmas[g] * std::sqrt(m) / epsilon;
    // Guard against 1e4 * (1 + 1e-16) rounding up to 10001.
    const double n = std::ceil(root * root * (1.0 - 1e-12));
    out[g] = static_cast<std::size_t>(std::clamp(n, 1.0, static_cast<double>(group_sizes[g])));
  }
  return SizeVector(std::move(out));
}

std::vector<double> group_stddevs(const Dataset& dataset, const GroupIndex& index,
                                  std::size_t column) {
  const auto col = dataset.measure(column);
  std::vector<double> out(index.num_groups());
  for (std::size_t g = 0; g < out.size(); ++g) {
    const auto list = index.list(g);
    double mean = 0.0;
    for (auto pos : list) mean += col[pos];
    mean /= static_cast<double>(list.size());
    double ss = 0.0;
    for (auto pos : list) ss += (col[pos] - mean) * (col[pos] - mean);
    out[g] = std::sqrt(ss / static_cast<double>(list.size()));
  }
  return out;
}

std::string GridCase::id() const {
  std::string out = function + "-";
  for (std::size_t i = 0; i < distributions.size(); ++i) {
    if (i > 0) out += "-";
    out += distributions[i].name();
  }
  return out;
}

bool GridCase::bootstrap_inconsistent() const {
  if (function == "MAX") return true;
  return std::any_of(distributions.begin(), distributions.end(), [](const DistributionSpec& d) {
    return d.kind == DistributionSpec::Kind::Pareto && d.a <= 2.0;
  });
}

std::string HarnessConfig::hash() const {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << fnv1a(config_json(*this).dump());
  return os.str();
}

std::string EvalReport::to_json() const {
  nlohmann::json j;
  j["case"] = case_id;
  j["bootstrap_inconsistent"] = inconsistent;
  j["epsilon"] = epsilon;
  j["delta"] = delta;
  j["c_hat"] = c_hat;
  j["c_hat_std_error"] = c_hat_std_error;
  j["r2"] = r2 ? nlohmann::json(*r2) : nlohmann::json(nullptr);
  j["size_mean"] = size_mean;
  j["size_stddev"] = size_stddev;
  j["time_mean_s"] = time_mean;
  j["time_stddev_s"] = time_stddev;
  j["status_counts"] = status_counts;
  j["config_hash"] = config_hash;
  nlohmann::json runs_json = nlohmann::json::array();
  for (const auto& r : runs) {
    nlohmann::json rj;
    rj["status"] = to_string(r.status);
    rj["total_size"] = r.total_size;
    rj["sizes"] = std::vector<std::size_t>(r.sizes.values().begin(), r.sizes.values().end());
    rj["wall_s"] = r.wall_seconds;
    rj["r2"] = r.r2 ? nlohmann::json(*r.r2) : nlohmann::json(nullptr);
    rj["c_hat"] = r.c_hat;
    rj["iterations"] = r.iterations;
    rj["prediction_iterations"] = r.prediction_iterations;
    rj["touched_ratio"] = r.touched_ratio;
    rj["config_hash"] = config_hash;
    runs_json.push_back(std::move(rj));
  }
  j["runs"] = std::move(runs_json);
  return j.dump(2);
}

Dataset make_case_dataset(const GridCase& c, std::uint64_t seed) {
  if (c.distributions.empty()) throw InvalidArgument("case needs at least one distribution");
  GeneratorSpec spec = GeneratorSpec::make(c.distributions, c.rows_per_group,
                                           c.distributions.size(), c.bias, seed);
  if (c.function == "LINREG") spec.target = {TargetSpec::Kind::Linear, 1.0, 2.0, 1.0};
  if (c.function == "LOGREG") spec.target = {TargetSpec::Kind::Logistic, -1.0, 1.0, 0.0};
  return generate_synthetic(spec);
}

AnalyticalFunction make_case_function(const GridCase& c, const Dataset& dataset) {
  const std::string& name = c.function;
  if (name == "AVG") return AnalyticalFunction::avg();
  if (name == "VAR") return AnalyticalFunction::var();
  if (name == "MEDIAN") return AnalyticalFunction::median();
  if (name == "SUM") return AnalyticalFunction::sum();
  if (name == "MAX") return AnalyticalFunction::max_approx(0.01);
  if (name == "PROPORTION" || name == "COUNT") {
    // Upper decile of the first group's distribution: p = 0.1 before bias.
    const Predicate p{0, Comparator::Greater, c.distributions.front().quantile(0.9)};
    return name == "COUNT" ? AnalyticalFunction::count(p) : AnalyticalFunction::proportion(p);
  }
  if (name == "LINREG") return AnalyticalFunction::linreg({0}, dataset.measure_index("target"));
  if (name == "LOGREG") return AnalyticalFunction::logreg({0}, dataset.measure_index("target"));
  throw InvalidArgument("unknown function '" + name + "'");
}

EvalReport run_case(const GridCase& c, const HarnessConfig& cfg) {
  const std::uint64_t case_seed = derive_seed(cfg.seed, fnv1a(c.id()));
  const Dataset dataset = make_case_dataset(c, case_seed);
  const GroupIndex index = build_index(dataset);
  const AnalyticalFunction f = make_case_function(c, dataset);
  const ResultVector truth = true_result(dataset, index, f);
  const double epsilon = c.absolute_epsilon ? *c.absolute_epsilon : c.relative_epsilon * l2_norm(truth);

  EvalReport report;
  report.case_id = c.id();
  report.inconsistent = c.bootstrap_inconsistent();
  report.epsilon = epsilon;
  report.delta = cfg.delta;
  report.config_hash = cfg.hash();

  std::vector<double> sizes;
  std::vector<double> times;
  std::vector<double> r2s;
  double c_sum = 0.0;
  for (std::size_t rep = 0; rep < cfg.algorithm_reps; ++rep) {
    MissConfig mc = cfg.miss;
    mc.seed = derive_seed(case_seed, 1, rep);
    const auto start = std::chrono::steady_clock::now();
    const MissOutcome out = l2miss(dataset, index, f, epsilon, cfg.delta, mc);
    RunRecord run;
    run.wall_seconds = seconds_since(start);
    run.status = out.status;
    run.sizes = out.sizes;
    run.total_size = out.sizes.total();
    run.r2 = out.final_r2;
    run.iterations = out.iterations();
    run.prediction_iterations = out.prediction_iterations();
    for (const auto& it : out.trace) {
      if (it.sizes.num_groups() == 0 || it.sizes.total() == 0) continue;
      run.touched_ratio = std::max(run.touched_ratio, static_cast<double>(it.list_entries_touched) /
                                                          static_cast<double>(it.sizes.total()));
    }
    if (out.sizes.num_groups() > 0) {
      run.c_hat = simulated_confidence(dataset, index, f, ErrorMetric::l2(), epsilon, out.sizes,
                                       truth, cfg.confidence_draws, derive_seed(case_seed, 2, rep))
                      .c_hat;
    }
    sizes.push_back(static_cast<double>(run.total_size));
    times.push_back(run.wall_seconds);
    if (run.r2) r2s.push_back(*run.r2);
    c_sum += run.c_hat;
    ++report.status_counts[to_string(run.status)];
    report.runs.push_back(std::move(run));
  }
  const double reps = static_cast<double>(std::max<std::size_t>(1, cfg.algorithm_reps));
  report.c_hat = c_sum / reps;
  report.c_hat_std_error =
      std::sqrt(report.c_hat * (1.0 - report.c_hat) / (reps * static_cast<double>(cfg.confidence_draws)));
  if (!r2s.empty()) report.r2 = std::accumulate(r2s.begin(), r2s.end(), 0.0) / static_cast<double>(r2s.size());
  mean_stddev(sizes, report.size_mean, report.size_stddev);
  mean_stddev(times, report.time_mean, report.time_stddev);
  return report;
}

std::vector<EvalReport> run_grid(const std::vector<std::string>& functions,
                                 const std::vector<DistributionSpec>& distributions,
                                 std::size_t rows, const HarnessConfig& cfg) {
  std::vector<EvalReport> reports;
  for (const auto& fn : functions) {
    for (const auto& dist : distributions) {
      GridCase c;
      c.function = fn;
      c.distributions = {dist};
      c.rows_per_group = rows;
      c.relative_epsilon = (fn == "PROPORTION" || fn == "LOGREG") ? 0.05 : 0.01;
      try {
        reports.push_back(run_case(c, cfg));
      } catch (const Error& e) {
        EvalReport failed;
        failed.case_id = c.id();
        failed.inconsistent = c.bootstrap_inconsistent();
        failed.config_hash = cfg.hash();
        ++failed.status_counts[std::string("Error: ") + e.what()];
        reports.push_back(std::move(failed));
      }
    }
  }
  std::sort(reports.begin(), reports.end(),
            [](const EvalReport& a, const EvalReport& b) { return a.case_id < b.case_id; });
  return reports;
}

SweepSpec::Factor SweepSpec::parse_factor(const std::string& name) {
  if (name == "eps" || name == "epsilon") return Factor::Epsilon;
  if (name == "delta") return Factor::Delta;
  if (name == "m" || name == "groups") return Factor::Groups;
  if (name == "N" || name == "rows") return Factor::Rows;
  throw InvalidArgument("unknown sweep factor '" + name + "'");
}

std::vector<SweepRow> run_sweep(const SweepSpec& spec) {
  if (spec.values.empty()) throw InvalidArgument("sweep needs at least one value");
  static constexpr const char* kFactorNames[] = {"eps", "delta", "m", "N"};
  const char* factor_name = kFactorNames[static_cast<int>(spec.factor)];
  const std::string hash = spec.harness.hash();

  std::vector<SweepRow> rows;
  for (std::size_t vi = 0; vi < spec.values.size(); ++vi) {
    const double value = spec.values[vi];
    GridCase c = spec.base;
    HarnessConfig hc = spec.harness;
    std::size_t m = spec.groups;
    switch (spec.factor) {
      case SweepSpec::Factor::Epsilon:
        if (c.absolute_epsilon) c.absolute_epsilon = value;
        else c.relative_epsilon = value;
        break;
      case SweepSpec::Factor::Delta:
        hc.delta = value;
        break;
      case SweepSpec::Factor::Groups:
        m = static_cast<std::size_t>(value);
        break;
      case SweepSpec::Factor::Rows:
        c.rows_per_group = static_cast<std::size_t>(value);
        break;
    }
    if (m < 1) throw InvalidArgument("sweep needs m >= 1");
    c.distributions.assign(m, spec.base.distributions.front());

    const std::uint64_t value_seed = derive_seed(hc.seed, vi);
    const Dataset dataset = make_case_dataset(c, value_seed);
    const GroupIndex index = build_index(dataset);
    const AnalyticalFunction f = make_case_function(c, dataset);
    const ResultVector truth = true_result(dataset, index, f);
    const double epsilon = c.absolute_epsilon ? *c.absolute_epsilon : c.relative_epsilon * l2_norm(truth);

    for (std::size_t rep = 0; rep < hc.algorithm_reps; ++rep) {
      MissConfig mc = hc.miss;
      mc.seed = derive_seed(value_seed, 1, rep);
      const auto add_row = [&](const std::string& algorithm, const SizeVector& sizes, double secs,
                               const std::string& status, double c_hat) {
        rows.push_back({factor_name, value, rep, algorithm, sizes.total(), secs, c_hat, status, hash});
      };

      auto start = std::chrono::steady_clock::now();
      const MissOutcome out = l2miss(dataset, index, f, epsilon, hc.delta, mc);
      double secs = seconds_since(start);
      double c_hat = simulated_confidence(dataset, index, f, ErrorMetric::l2(), epsilon, out.sizes,
                                          truth, hc.confidence_draws, derive_seed(value_seed, 2, rep))
                         .c_hat;
      add_row("l2miss", out.sizes, secs, to_string(out.status), c_hat);

      if (f.kind() == FunctionKind::Avg) {
        start = std::chrono::steady_clock::now();
        const auto sigmas = group_stddevs(dataset, index);
        const SizeVector baseline = clt_baseline_size(sigmas, epsilon, hc.delta, dataset.group_sizes());
        secs = seconds_since(start);
        c_hat = simulated_confidence(dataset, index, f, ErrorMetric::l2(), epsilon, baseline, truth,
                                     hc.confidence_draws, derive_seed(value_seed, 3, rep))
                    .c_hat;
        add_row("clt_baseline", baseline, secs, "Computed", c_hat);
      }

      if (spec.include_ordering && m >= 2) {
        start = std::chrono::steady_clock::now();
        try {
          const MissOutcome ord = run_with_metric(dataset, index, f,
                                                  {ConversionRequest::Metric::Ordering, 0.0, 2.0},
                                                  hc.delta, mc);
          secs = seconds_since(start);
          const auto draws = verification_estimates(dataset, index, f, ord.sizes, hc.confidence_draws,
                                                    derive_seed(value_seed, 4, rep));
          add_row("ordering", ord.sizes, secs, to_string(ord.status),
                  order_preservation_rate(draws, truth));
        } catch (const IndistinguishableGroups&) {
          add_row("ordering", SizeVector(std::vector<std::size_t>(m, 0)), seconds_since(start),
                  "IndistinguishableGroups", 0.0);
        }
      }
    }
  }
  std::stable_sort(rows.begin(), rows.end(), [](const SweepRow& a, const SweepRow& b) {
    if (a.value != b.value) return a.value < b.value;
    if (a.rep != b.rep) return a.rep < b.rep;
    return a.algorithm < b.algorithm;
  });
  return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::ostringstream os;
  os << "factor,value,rep,algorithm,total_size,wall_seconds,c_hat,status,config_hash\n";
  os << std::setprecision(10);
  for (const auto& r : rows) {
    os << r.factor << ',' << r.value << ',' << r.rep << ',' << r.algorithm << ',' << r.total_size
       << ',' << r.wall_seconds << ',' << r.c_hat << ',' << r.status << ',' << r.config_hash << '\n';
  }
  return os.str();
}

}  // namespace miss
