#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "miss/sampling.hpp"

namespace miss {

/// One observation (n, e) of the error profile.
struct ErrorRecord {
  SizeVector sizes;
  double error = 0.0;
};

/// Append-only list of error records sharing the same group count.
class ErrorProfile {
 public:
  void append(ErrorRecord record);
  std::span<const ErrorRecord> records() const noexcept { return records_; }
  std::size_t size() const noexcept { return records_.size(); }
  bool empty() const noexcept { return records_.empty(); }
  std::size_t num_groups() const noexcept {
    return records_.empty() ? 0 : records_.front().sizes.num_groups();
  }

  /// One JSON object per line: {"iteration", "sizes", "error"}.
  std::string to_jsonl() const;

 private:
  std::vector<ErrorRecord> records_;
};

/// Parameters (beta_0, beta_1, ..., beta_m) of the log-linear error model
/// log e ~ beta_0 - sum_i beta_i log n_i.
struct ModelParams {
  std::vector<double> beta;

  std::size_t num_groups() const noexcept { return beta.empty() ? 0 : beta.size() - 1; }
  double slope_sum() const noexcept;
  /// Model prediction of log error at `sizes`.
  double predict_log_error(const SizeVector& sizes) const;
};

enum class WeightScheme {
  TotalSize,  // w_j = C(n^(j)), the engine's default
  Uniform,    // ordinary least squares
};

/// [1, -log n_1, ..., -log n_m]
std::vector<double> design_row(const SizeVector& sizes);

/// Weighted least-squares fit of log e onto the design rows. Records with
/// e <= 0 are skipped. Throws FitError (Underdetermined or DegenerateProfile).
ModelParams fit_wls(const ErrorProfile& profile, WeightScheme weights = WeightScheme::TotalSize);

/// Unweighted coefficient of determination on log-error targets.
double r2_score(const ErrorProfile& profile, const ModelParams& params);

inline constexpr double kDefaultTau = 0.01;

/// Returns nullopt on unrecoverable failure (slope sum <= tau); replaces
/// non-positive slopes by their mean; otherwise returns params unchanged.
std::optional<ModelParams> diagnose(const ModelParams& params, double tau = kDefaultTau);

/// Real-valued minimizer of C(n) subject to H(n; beta) = log epsilon.
std::vector<double> predict_sizes_continuous(const ModelParams& params, double epsilon);

/// predict_sizes_continuous rounded to the nearest integer and clamped to [1, |D|_i].
SizeVector predict_sizes(const ModelParams& params, double epsilon,
                         std::span<const std::size_t> group_sizes);

}  // namespace miss
