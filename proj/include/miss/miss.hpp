#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "miss/analytics.hpp"
#include "miss/dataset.hpp"
#include "miss/errors.hpp"
#include "miss/estimation.hpp"
#include "miss/model.hpp"
#include "miss/sampling.hpp"

namespace miss {

/// Two or more groups share the same estimate, so no finite error bound can
/// guarantee their order.
class IndistinguishableGroups : public Error {
 public:
  using Error::Error;
};

struct MissConfig {
  std::size_t resamples = 500;
  std::size_t init_min = 4000;
  std::size_t init_max = 8000;
  std::size_t init_length = 0;     // 0: max(20, 5(m+1))
  double tau = kDefaultTau;
  std::size_t max_iterations = 0;  // 0: max(100, l + 20)
  std::size_t pilot_reps = 5;
  std::uint64_t seed = 0;

  std::size_t effective_init_length(std::size_t m) const;
  std::size_t effective_max_iterations(std::size_t m) const;
  /// Throws InvalidArgument when an invariant fails for these group sizes.
  void validate(std::span<const std::size_t> group_sizes) const;
};

enum class MissStatus { Satisfied, UnrecoverableFailure, IterationCapExceeded, PopulationExhausted };

const char* to_string(MissStatus status);

struct IterationRecord {
  std::size_t iteration = 0;          // 1-based k
  bool prediction_phase = false;
  SizeVector sizes;
  double error = 0.0;
  std::optional<ModelParams> fitted;      // WLS estimate before the diagnostic
  std::optional<ModelParams> calibrated;  // after the diagnostic
  std::optional<double> r2;
  bool grew_without_guard = true;  // every n_i already exceeded the previous prediction
  bool guard_applied = false;
  std::size_t list_entries_touched = 0;
  std::string note;
};

struct MissOutcome {
  MissStatus status = MissStatus::IterationCapExceeded;
  std::string function;
  std::string metric = "L2";
  std::optional<double> user_epsilon;  // bound in the requested metric, when one was given
  double epsilon = 0.0;                // L2 bound the loop enforced
  double delta = 0.05;

  Sample sample;
  SizeVector sizes;
  double error = 0.0;  // estimated error of the final sample
  ResultVector estimate;             // f on the final sample (rescaled for SUM/COUNT)
  std::vector<double> scales;        // SUM/COUNT rescaling, empty otherwise

  ErrorProfile profile;
  std::vector<IterationRecord> trace;
  std::optional<ModelParams> final_model;  // fit over the full profile
  std::optional<double> final_r2;
  std::optional<ModelParams> failure_params;  // raw fit that tripped the diagnostic

  std::size_t iterations() const noexcept { return trace.size(); }
  std::size_t prediction_iterations() const noexcept;
  /// Single JSON document with the outcome and its trace.
  std::string to_json() const;
  /// One JSON object per iteration: iteration, sizes, e, beta, r2, status.
  std::string trace_jsonl() const;
};

/// l size vectors whose coordinates are independently n_min with probability
/// n_max / (n_min + n_max) and n_max otherwise.
std::vector<SizeVector> initialize_sizes(std::size_t n_min, std::size_t n_max, std::size_t length,
                                         std::size_t m, std::uint64_t seed);

/// Finds a near-minimal stratified sample whose L2 error is within epsilon
/// with probability 1 - delta. SUM and COUNT are optimized through their
/// consistent AVG / PROPORTION counterparts.
MissOutcome l2miss(const Dataset& dataset, const GroupIndex& index, const AnalyticalFunction& f,
                   double epsilon, double delta, const MissConfig& cfg);

struct ConversionRequest {
  enum class Metric { L2, Linf, Lp, L1, Ordering, MaxDifference };
  Metric metric = Metric::L2;
  double epsilon = 0.0;  // unused for Ordering
  double p = 2.0;        // only for Lp

  std::string name() const;
};

/// Equivalent L2 bound for the requested metric. `entries` is the result
/// dimension (needed by L1/Lp); Ordering requires `pilot`.
double convert_bound(const ConversionRequest& req, std::size_t entries,
                     const std::optional<ResultVector>& pilot = std::nullopt);

/// Minimum adjacent gap of the sorted estimates divided by sqrt(2).
double order_bound(std::span<const double> estimate);

/// Entrywise mean of f over `reps` samples of min(n, |D|_i) rows per group.
ResultVector pilot_estimate(const Dataset& dataset, const GroupIndex& index,
                            const AnalyticalFunction& f, std::size_t n, std::size_t reps,
                            std::uint64_t seed);

/// Converts the request to an L2 bound and runs l2miss with it.
MissOutcome run_with_metric(const Dataset& dataset, const GroupIndex& index,
                            const AnalyticalFunction& f, const ConversionRequest& req,
                            double delta, const MissConfig& cfg);

}  // namespace miss
