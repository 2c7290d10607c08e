#include "miss/miss.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "json.hpp"
#include "miss/random.hpp"

namespace miss {

namespace {

// Seed streams, kept distinct so that changing one phase does not shift another.
enum Stream : std::uint64_t { kInit = 1, kSample = 2, kBootstrap = 3, kPilot = 4, kExtraInit = 5 };

nlohmann::json sizes_json(const SizeVector& s) {
  return std::vector<std::size_t>(s.values().begin(), s.values().end());
}

bool all_at_capacity(const SizeVector& sizes, std::span<const std::size_t> group_sizes) {
  for (std::size_t g = 0; g < group_sizes.size(); ++g) {
    if (sizes[g] < group_sizes[g]) return false;
  }
  return true;
}

MissOutcome run_loop(const Dataset& dataset, const GroupIndex& index,
                     const AnalyticalFunction& f, double epsilon, double delta,
                     const MissConfig& cfg) {
  const auto group_sizes = dataset.group_sizes();
  const std::size_t m = dataset.num_groups();
  const std::size_t l = cfg.effective_init_length(m);
  const std::size_t k_max = cfg.effective_max_iterations(m);
  const ErrorMetric l2 = ErrorMetric::l2();

  MissOutcome out;
  out.function = f.name();
  out.epsilon = epsilon;
  out.delta = delta;

  const auto init = initialize_sizes(cfg.init_min, cfg.init_max, l, m, derive_seed(cfg.seed, kInit));
  std::size_t extra_inits = 0;

  for (std::size_t k = 1; k <= k_max; ++k) {
    IterationRecord rec;
    rec.iteration = k;
    SizeVector sizes;

    if (k <= l) {
      sizes = init[k - 1];
    } else {
      std::optional<ModelParams> fitted;
      try {
        fitted = fit_wls(out.profile);
      } catch (const FitError& e) {
        rec.note = e.what();
      }
      if (!fitted) {
        // The random initialization did not span the design; draw another point.
        sizes = initialize_sizes(cfg.init_min, cfg.init_max, 1, m,
                                 derive_seed(cfg.seed, kExtraInit, extra_inits++))
                    .front();
      } else {
        rec.prediction_phase = true;
        rec.fitted = fitted;
        try {
          rec.r2 = r2_score(out.profile, *fitted);
        } catch (const FitError&) {
        }
        const auto calibrated = diagnose(*fitted, cfg.tau);
        if (!calibrated) {
          out.status = MissStatus::UnrecoverableFailure;
          out.failure_params = fitted;
          rec.note = "unrecoverable: slope sum " + std::to_string(fitted->slope_sum()) +
                     " <= tau " + std::to_string(cfg.tau);
          rec.sizes = out.sizes;
          rec.error = out.error;
          out.trace.push_back(std::move(rec));
          break;
        }
        rec.calibrated = calibrated;
        sizes = predict_sizes(*calibrated, epsilon, group_sizes);

        const IterationRecord* prev = out.trace.empty() ? nullptr : &out.trace.back();
        if (prev != nullptr && prev->prediction_phase) {
          for (std::size_t g = 0; g < m; ++g) {
            if (sizes[g] <= prev->sizes[g]) rec.grew_without_guard = false;
            const std::size_t floor = std::min(prev->sizes[g] + 1, group_sizes[g]);
            if (sizes[g] < floor) {
              sizes[g] = floor;
              rec.guard_applied = true;
            }
          }
        }
      }
    }

    Sample sample = stratified_sample(dataset, index, sizes, derive_seed(cfg.seed, kSample, k));
    const double e = bootstrap_error(sample.groups, f, l2, delta,
                                     {cfg.resamples, derive_seed(cfg.seed, kBootstrap, k)});
    out.profile.append({sizes, e});

    rec.sizes = sizes;
    rec.error = e;
    rec.list_entries_touched = sample.stats.list_entries_touched;
    out.trace.push_back(std::move(rec));
    out.sizes = sizes;
    out.error = e;
    out.sample = std::move(sample);

    if (e <= epsilon) {
      out.status = MissStatus::Satisfied;
      break;
    }
    if (all_at_capacity(sizes, group_sizes)) {
      out.status = MissStatus::PopulationExhausted;
      break;
    }
    out.status = MissStatus::IterationCapExceeded;
  }

  try {
    out.final_model = fit_wls(out.profile);
    out.final_r2 = r2_score(out.profile, *out.final_model);
  } catch (const FitError&) {
  }
  if (!out.sample.groups.empty()) out.estimate = evaluate(f, out.sample.groups);
  return out;
}

}  // namespace

std::size_t MissConfig::effective_init_length(std::size_t m) const {
  return init_length != 0 ? init_length : std::max<std::size_t>(20, 5 * (m + 1));
}

std::size_t MissConfig::effective_max_iterations(std::size_t m) const {
  return max_iterations != 0 ? max_iterations
                             : std::max<std::size_t>(100, effective_init_length(m) + 20);
}

void MissConfig::validate(std::span<const std::size_t> group_sizes) const {
  const std::size_t m = group_sizes.size();
  if (m == 0) throw InvalidArgument("dataset has no groups");
  const std::size_t smallest = *std::min_element(group_sizes.begin(), group_sizes.end());
  if (resamples < 1) throw InvalidArgument("B must be >= 1");
  if (init_min < 1 || init_min > init_max)
    throw InvalidArgument("initialization interval requires 1 <= n_min <= n_max");
  if (init_max > smallest)
    throw InvalidArgument("n_max " + std::to_string(init_max) + " exceeds the smallest group (" +
                          std::to_string(smallest) + " rows)");
  const std::size_t l = effective_init_length(m);
  if (l < m + 2) throw InvalidArgument("initialization length must be >= m + 2");
  if (effective_max_iterations(m) <= l)
    throw InvalidArgument("iteration cap must exceed the initialization length");
  if (!(tau > 0.0)) throw InvalidArgument("tau must be positive");
  if (pilot_reps < 1) throw InvalidArgument("pilot_reps must be >= 1");
}

const char* to_string(MissStatus status) {
  switch (status) {
    case MissStatus::Satisfied: return "Satisfied";
    case MissStatus::UnrecoverableFailure: return "UnrecoverableFailure";
    case MissStatus::IterationCapExceeded: return "IterationCapExceeded";
    case MissStatus::PopulationExhausted: return "PopulationExhausted";
  }
  return "?";
}

std::size_t MissOutcome::prediction_iterations() const noexcept {
  return static_cast<std::size_t>(std::count_if(
      trace.begin(), trace.end(), [](const IterationRecord& r) { return r.prediction_phase; }));
}

std::string MissOutcome::trace_jsonl() const {
  std::string out;
  for (std::size_t j = 0; j < trace.size(); ++j) {
    const auto& r = trace[j];
    nlohmann::json line;
    line["iteration"] = r.iteration;
    line["phase"] = r.prediction_phase ? "predict" : "init";
    line["sizes"] = sizes_json(r.sizes);
    line["e"] = r.error;
    line["beta"] = r.calibrated ? nlohmann::json(r.calibrated->beta) : nlohmann::json(nullptr);
    line["beta_fit"] = r.fitted ? nlohmann::json(r.fitted->beta) : nlohmann::json(nullptr);
    line["r2"] = r.r2 ? nlohmann::json(*r.r2) : nlohmann::json(nullptr);
    line["guard_applied"] = r.guard_applied;
    line["epsilon"] = epsilon;
    line["status"] = j + 1 == trace.size() ? to_string(status) : "Running";
    if (!r.note.empty()) line["note"] = r.note;
    out += line.dump();
    out += '\n';
  }
  return out;
}

std::string MissOutcome::to_json() const {
  nlohmann::json j;
  j["status"] = to_string(status);
  j["function"] = function;
  j["metric"] = metric;
  j["user_epsilon"] = user_epsilon ? nlohmann::json(*user_epsilon) : nlohmann::json(nullptr);
  j["epsilon"] = epsilon;
  j["delta"] = delta;
  j["sizes"] = sizes_json(sizes);
  j["total_size"] = sizes.total();
  j["error"] = error;
  j["estimate"] = estimate;
  if (!scales.empty()) j["scales"] = scales;
  j["iterations"] = iterations();
  j["prediction_iterations"] = prediction_iterations();
  j["final_beta"] = final_model ? nlohmann::json(final_model->beta) : nlohmann::json(nullptr);
  j["final_r2"] = final_r2 ? nlohmann::json(*final_r2) : nlohmann::json(nullptr);
  if (failure_params) j["failure_beta"] = failure_params->beta;
  nlohmann::json trace_json = nlohmann::json::array();
  std::string lines = trace_jsonl();
  std::size_t start = 0;
  while (start < lines.size()) {
    const auto end = lines.find('\n', start);
    trace_json.push_back(nlohmann::json::parse(lines.substr(start, end - start)));
    start = end + 1;
  }
  j["trace"] = std::move(trace_json);
  return j.dump(2);
}

std::vector<SizeVector> initialize_sizes(std::size_t n_min, std::size_t n_max, std::size_t length,
                                         std::size_t m, std::uint64_t seed) {
  if (n_min < 1 || n_min > n_max) throw InvalidArgument("initialization interval requires 1 <= n_min <= n_max");
  const double p_min = static_cast<double>(n_max) / static_cast<double>(n_min + n_max);
  Rng rng = make_rng(seed);
  std::vector<SizeVector> out;
  out.reserve(length);
  for (std::size_t j = 0; j < length; ++j) {
    std::vector<std::size_t> sizes(m);
    for (auto& s : sizes) s = uniform_unit(rng) < p_min ? n_min : n_max;
    out.emplace_back(std::move(sizes));
  }
  return out;
}

MissOutcome l2miss(const Dataset& dataset, const GroupIndex& index, const AnalyticalFunction& f,
                   double epsilon, double delta, const MissConfig& cfg) {
  ErrorConstraint{epsilon, delta}.validate();
  cfg.validate(dataset.group_sizes());
  if (f.kind() == FunctionKind::Sum || f.kind() == FunctionKind::Count) {
    auto t = transform_inconsistent(f, dataset.group_sizes());
    const double max_scale = *std::max_element(t.scales.begin(), t.scales.end());
    MissOutcome out = run_loop(dataset, index, t.function, epsilon / max_scale, delta, cfg);
    out.function = f.name();
    out.user_epsilon = epsilon;
    for (std::size_t g = 0; g < out.estimate.size(); ++g) out.estimate[g] *= t.scales[g];
    out.scales = std::move(t.scales);
    return out;
  }
  return run_loop(dataset, index, f, epsilon, delta, cfg);
}

std::string ConversionRequest::name() const {
  switch (metric) {
    case Metric::L2: return "L2";
    case Metric::Linf: return "Linf";
    case Metric::Lp: return "L" + std::to_string(p);
    case Metric::L1: return "L1";
    case Metric::Ordering: return "Ordering";
    case Metric::MaxDifference: return "MaxDifference";
  }
  return "?";
}

double convert_bound(const ConversionRequest& req, std::size_t entries,
                     const std::optional<ResultVector>& pilot) {
  using Metric = ConversionRequest::Metric;
  if (req.metric == Metric::Ordering) {
    if (!pilot) throw InvalidArgument("ordering bound requires a pilot estimate");
    return order_bound(*pilot);
  }
  if (!(req.epsilon > 0.0)) throw InvalidArgument("error bound must be positive");
  switch (req.metric) {
    case Metric::L2:
    case Metric::Linf:
      return req.epsilon;
    case Metric::L1:
      return req.epsilon / std::sqrt(static_cast<double>(entries));
    case Metric::Lp:
      if (!(req.p >= 1.0)) throw InvalidArgument("Lp metric requires p >= 1");
      // ||x||_p <= m^(1/p - 1/2) ||x||_2 for p < 2, and ||x||_p <= ||x||_2 for p >= 2.
      if (req.p >= 2.0) return req.epsilon;
      return req.epsilon / std::pow(static_cast<double>(entries), 1.0 / req.p - 0.5);
    case Metric::MaxDifference:
      return req.epsilon / std::sqrt(2.0);
    case Metric::Ordering:
      break;
  }
  return req.epsilon;
}

double order_bound(std::span<const double> estimate) {
  if (estimate.size() < 2) throw InvalidArgument("ordering needs at least two groups");
  std::vector<double> sorted(estimate.begin(), estimate.end());
  std::sort(sorted.begin(), sorted.end());
  double gap = sorted[1] - sorted[0];
  for (std::size_t i = 2; i < sorted.size(); ++i) gap = std::min(gap, sorted[i] - sorted[i - 1]);
  if (!(gap > 0.0)) throw IndistinguishableGroups("indistinguishable groups: equal estimates");
  return gap / std::sqrt(2.0);
}

ResultVector pilot_estimate(const Dataset& dataset, const GroupIndex& index,
                            const AnalyticalFunction& f, std::size_t n, std::size_t reps,
                            std::uint64_t seed) {
  if (reps < 1) throw InvalidArgument("pilot needs at least one repetition");
  std::vector<std::size_t> sizes(dataset.num_groups());
  for (std::size_t g = 0; g < sizes.size(); ++g) sizes[g] = std::min(n, dataset.group_size(g));
  const SizeVector pilot_sizes(std::move(sizes));
  ResultVector mean;
  for (std::size_t r = 0; r < reps; ++r) {
    const Sample s = stratified_sample(dataset, index, pilot_sizes, derive_seed(seed, kPilot, r));
    const ResultVector est = evaluate(f, s.groups);
    if (mean.empty()) mean.assign(est.size(), 0.0);
    for (std::size_t i = 0; i < est.size(); ++i) mean[i] += est[i];
  }
  for (auto& v : mean) v /= static_cast<double>(reps);
  return mean;
}

MissOutcome run_with_metric(const Dataset& dataset, const GroupIndex& index,
                            const AnalyticalFunction& f, const ConversionRequest& req,
                            double delta, const MissConfig& cfg) {
  std::optional<ResultVector> pilot;
  if (req.metric == ConversionRequest::Metric::Ordering) {
    cfg.validate(dataset.group_sizes());
    pilot = pilot_estimate(dataset, index, f, cfg.init_max, cfg.pilot_reps, cfg.seed);
  }
  const std::size_t entries = dataset.num_groups() * f.block_size();
  const double bound = convert_bound(req, entries, pilot);
  MissOutcome out = l2miss(dataset, index, f, bound, delta, cfg);
  out.metric = req.name();
  if (req.metric != ConversionRequest::Metric::Ordering) out.user_epsilon = req.epsilon;
  return out;
}

}  // namespace miss
