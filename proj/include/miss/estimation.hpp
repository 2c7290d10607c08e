#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "miss/analytics.hpp"
#include "miss/columns.hpp"

namespace miss {

/// Distance between an approximate and a true result vector.
struct ErrorMetric {
  enum class Kind { L2, Linf, L1, Lp, GeometricMean, MaxDifference };
  Kind kind = Kind::L2;
  double p = 2.0;  // only for Lp

  static ErrorMetric l2() { return {Kind::L2, 2.0}; }
  static ErrorMetric linf() { return {Kind::Linf, 0.0}; }
  static ErrorMetric l1() { return {Kind::L1, 1.0}; }
  static ErrorMetric lp(double p);
  static ErrorMetric geometric_mean() { return {Kind::GeometricMean, 0.0}; }
  static ErrorMetric max_difference() { return {Kind::MaxDifference, 0.0}; }

  std::string name() const;
};

/// Pr[d(estimate, truth) <= epsilon] >= 1 - delta.
struct ErrorConstraint {
  double epsilon = 0.0;
  double delta = 0.05;
  void validate() const;
};

struct BootstrapConfig {
  std::size_t resamples = 500;
  std::uint64_t seed = 0;
};

/// Throws InvalidArgument when the two vectors differ in length.
double metric_eval(const ErrorMetric& d, std::span<const double> estimate,
                   std::span<const double> truth);

/// Order statistic of ascending `sorted` at 1-based rank ceil(level * size).
double upper_quantile(std::span<const double> sorted, double level);

/// Sorted distances d(T*_b, T) over B stratified resamples (with replacement,
/// same per-group sizes). Resample b uses the stream derive_seed(cfg.seed, b),
/// and resamples whose evaluation fails are dropped. Parallel over b.
std::vector<double> bootstrap_distances(std::span<const GroupColumns> sample,
                                        const AnalyticalFunction& f, const ErrorMetric& d,
                                        const BootstrapConfig& cfg);

/// Single-threaded reference for bootstrap_distances; identical output.
std::vector<double> bootstrap_distances_serial(std::span<const GroupColumns> sample,
                                               const AnalyticalFunction& f, const ErrorMetric& d,
                                               const BootstrapConfig& cfg);

/// Bootstrap estimate of the (1 - delta) error quantile.
double bootstrap_error(std::span<const GroupColumns> sample, const AnalyticalFunction& f,
                       const ErrorMetric& d, double delta, const BootstrapConfig& cfg);

double bootstrap_error_serial(std::span<const GroupColumns> sample, const AnalyticalFunction& f,
                              const ErrorMetric& d, double delta, const BootstrapConfig& cfg);

}  // namespace miss
