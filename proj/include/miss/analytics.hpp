#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "miss/columns.hpp"

namespace miss {

enum class Comparator { Less, LessEqual, Greater, GreaterEqual, Equal, NotEqual };

/// (column, comparator, constant) filter used by PROPORTION and COUNT.
struct Predicate {
  std::size_t column = 0;
  Comparator op = Comparator::Greater;
  double constant = 0.0;

  bool test(double v) const noexcept {
    switch (op) {
      case Comparator::Less: return v < constant;
      case Comparator::LessEqual: return v <= constant;
      case Comparator::Greater: return v > constant;
      case Comparator::GreaterEqual: return v >= constant;
      case Comparator::Equal: return v == constant;
      case Comparator::NotEqual: return v != constant;
    }
    return false;
  }

  /// Parses "<op><constant>", e.g. ">0.9" or "<=1.5".
  static Predicate parse(std::size_t column, std::string_view text);
};

enum class FunctionKind {
  Avg, Var, Proportion, Sum, Count, Quantile, Median, MaxApprox, LinReg, LogReg
};

/// An analytical function applied per group. Aggregates produce one value per
/// group; regressions produce (intercept, slopes...) and are single-group only.
class AnalyticalFunction {
 public:
  static AnalyticalFunction avg(std::size_t column = 0);
  static AnalyticalFunction var(std::size_t column = 0);
  static AnalyticalFunction sum(std::size_t column = 0);
  static AnalyticalFunction proportion(Predicate p);
  static AnalyticalFunction count(Predicate p);
  static AnalyticalFunction quantile(double q, std::size_t column = 0);
  static AnalyticalFunction median(std::size_t column = 0);
  /// Upper (1 - alpha) quantile standing in for MAX.
  static AnalyticalFunction max_approx(double alpha = 0.01, std::size_t column = 0);
  static AnalyticalFunction linreg(std::vector<std::size_t> features, std::size_t target);
  static AnalyticalFunction logreg(std::vector<std::size_t> features, std::size_t target);

  FunctionKind kind() const noexcept { return kind_; }
  std::size_t column() const noexcept { return column_; }
  const Predicate& predicate() const noexcept { return predicate_; }
  /// q for QUANTILE, alpha for MAX_APPROX.
  double parameter() const noexcept { return parameter_; }
  std::span<const std::size_t> features() const noexcept { return features_; }
  std::size_t target() const noexcept { return target_; }

  bool is_regression() const noexcept {
    return kind_ == FunctionKind::LinReg || kind_ == FunctionKind::LogReg;
  }
  /// Entries per group in the flattened result.
  std::size_t block_size() const noexcept { return is_regression() ? features_.size() + 1 : 1; }
  /// Measure columns read by evaluate (others may be left empty in resamples).
  std::vector<std::size_t> columns_used() const;
  std::string name() const;

 private:
  AnalyticalFunction(FunctionKind kind) : kind_(kind) {}

  FunctionKind kind_;
  std::size_t column_ = 0;
  Predicate predicate_;
  double parameter_ = 0.0;
  std::vector<std::size_t> features_;
  std::size_t target_ = 0;
};

/// Plug-in estimate of f on every group; result blocks are concatenated in group order.
ResultVector evaluate(const AnalyticalFunction& f, std::span<const GroupColumns> groups);

/// Reusable scratch space so repeated evaluations (bootstrap) do not allocate.
class Evaluator {
 public:
  explicit Evaluator(const AnalyticalFunction& f) : f_(f) {}
  void evaluate_into(std::span<const GroupColumns> groups, ResultVector& out);

 private:
  void evaluate_group(const GroupColumns& group, ResultVector& out);

  const AnalyticalFunction& f_;
  std::vector<double> scratch_;
};

struct TransformedFunction {
  AnalyticalFunction function;
  std::vector<double> scales;  // per-group multiplier turning f' results back into f results
};

/// SUM -> (AVG, |D|_i) and COUNT(p) -> (PROPORTION(p), |D|_i).
TransformedFunction transform_inconsistent(const AnalyticalFunction& f,
                                           std::span<const std::size_t> group_sizes);

/// Order statistic at 1-based rank ceil(q * n); reorders `values`.
double quantile_in_place(std::span<double> values, double q);

/// Empirical (1 - alpha) quantile, alpha in (0, 0.5).
double max_approx(std::span<const double> values, double alpha);

}  // namespace miss
