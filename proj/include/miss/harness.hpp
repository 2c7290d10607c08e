#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "miss/analytics.hpp"
#include "miss/dataset.hpp"
#include "miss/estimation.hpp"
#include "miss/miss.hpp"
#include "miss/sampling.hpp"

namespace miss {

/// Estimates of f on R independent stratified samples of size n; draw r uses
/// the stream derive_seed(seed, r). Parallel over draws.
std::vector<ResultVector> verification_estimates(const Dataset& dataset, const GroupIndex& index,
                                                 const AnalyticalFunction& f, const SizeVector& n,
                                                 std::size_t draws, std::uint64_t seed);

/// Single-threaded reference for verification_estimates.
std::vector<ResultVector> verification_estimates_serial(const Dataset& dataset,
                                                        const GroupIndex& index,
                                                        const AnalyticalFunction& f,
                                                        const SizeVector& n, std::size_t draws,
                                                        std::uint64_t seed);

struct ConfidenceEstimate {
  double c_hat = 0.0;
  double std_error = 0.0;  // sqrt(c(1-c)/R)
  std::size_t draws = 0;
};

/// Fraction of R fresh samples of size n whose d-error against `truth` is <= epsilon.
ConfidenceEstimate simulated_confidence(const Dataset& dataset, const GroupIndex& index,
                                        const AnalyticalFunction& f, const ErrorMetric& d,
                                        double epsilon, const SizeVector& n,
                                        const ResultVector& truth, std::size_t draws,
                                        std::uint64_t seed);

/// Fraction of the estimates whose sort order matches `truth`.
double order_preservation_rate(const std::vector<ResultVector>& estimates, const ResultVector& truth);

/// Normal-theory sizes for AVG with the error split equally across groups:
/// n_i = ceil((z_{1-delta/2} sigma_i sqrt(m) / epsilon)^2), clamped to [1, |D|_i].
SizeVector clt_baseline_size(std::span<const double> sigmas, double epsilon, double delta,
                             std::span<const std::size_t> group_sizes);

/// Per-group population standard deviations of a measure column.
std::vector<double> group_stddevs(const Dataset& dataset, const GroupIndex& index,
                                  std::size_t column = 0);

/// Function names understood by the grid and CLI: AVG, VAR, MEDIAN,
/// PROPORTION, MAX, SUM, COUNT, LINREG, LOGREG.
struct GridCase {
  std::string function = "AVG";
  std::vector<DistributionSpec> distributions;  // one per group
  std::size_t rows_per_group = 1'000'000;
  double bias = 0.0;
  double relative_epsilon = 0.01;
  std::optional<double> absolute_epsilon;

  std::string id() const;
  /// Bootstrap is theoretically inconsistent: MAX proxy, or Pareto with shape <= 2.
  bool bootstrap_inconsistent() const;
};

struct HarnessConfig {
  MissConfig miss;
  double delta = 0.05;
  std::size_t algorithm_reps = 1;   // R_alg
  std::size_t confidence_draws = 1000;  // R_conf
  std::uint64_t seed = 42;

  std::string hash() const;
};

struct RunRecord {
  MissStatus status = MissStatus::IterationCapExceeded;
  std::size_t total_size = 0;
  SizeVector sizes;
  double wall_seconds = 0.0;
  std::optional<double> r2;
  double c_hat = 0.0;
  std::size_t iterations = 0;
  std::size_t prediction_iterations = 0;
  double touched_ratio = 0.0;  // max over iterations of list entries touched / C(n)
};

struct EvalReport {
  std::string case_id;
  bool inconsistent = false;
  double epsilon = 0.0;
  double delta = 0.05;
  double c_hat = 0.0;          // mean over algorithm runs
  double c_hat_std_error = 0.0;
  std::optional<double> r2;    // mean of final r2 over runs that have one
  double size_mean = 0.0;
  double size_stddev = 0.0;
  double time_mean = 0.0;
  double time_stddev = 0.0;
  std::map<std::string, std::size_t> status_counts;
  std::vector<RunRecord> runs;
  std::string config_hash;

  std::string to_json() const;
};

/// Builds the synthetic dataset for a case (target column added for regressions).
Dataset make_case_dataset(const GridCase& c, std::uint64_t seed);

/// The analytical function a case names, bound to the dataset's columns.
AnalyticalFunction make_case_function(const GridCase& c, const Dataset& dataset);

/// Runs l2miss R_alg times and measures simulated confidence at each returned size.
EvalReport run_case(const GridCase& c, const HarnessConfig& cfg);

std::vector<EvalReport> run_grid(const std::vector<std::string>& functions,
                                 const std::vector<DistributionSpec>& distributions,
                                 std::size_t rows, const HarnessConfig& cfg);

struct SweepSpec {
  enum class Factor { Epsilon, Delta, Groups, Rows };
  Factor factor = Factor::Delta;
  std::vector<double> values;
  GridCase base;                 // defaults for everything not swept
  std::size_t groups = 1;        // m when not swept (groups share base.distributions[0])
  bool include_ordering = false; // needs m >= 2 and base.bias > 0
  HarnessConfig harness;

  static Factor parse_factor(const std::string& name);
};

struct SweepRow {
  std::string factor;
  double value = 0.0;
  std::size_t rep = 0;
  std::string algorithm;
  std::size_t total_size = 0;
  double wall_seconds = 0.0;
  double c_hat = 0.0;
  std::string status;
  std::string config_hash;
};

std::vector<SweepRow> run_sweep(const SweepSpec& spec);
std::string sweep_csv(const std::vector<SweepRow>& rows);

}  // namespace miss
