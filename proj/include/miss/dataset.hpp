#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "miss/columns.hpp"

namespace miss {

class AnalyticalFunction;

/// A measure distribution for synthetic data.
///
/// Parameters by kind: Normal(mean, stddev), Exponential(scale),
/// Uniform(lo, hi), Pareto(shape) with minimum 1.
struct DistributionSpec {
  enum class Kind { Normal, Exponential, Uniform, Pareto };

  Kind kind = Kind::Normal;
  double a = 0.0;
  double b = 1.0;

  static DistributionSpec normal(double mean, double stddev) { return {Kind::Normal, mean, stddev}; }
  static DistributionSpec exponential(double scale) { return {Kind::Exponential, scale, 0.0}; }
  static DistributionSpec uniform(double lo, double hi) { return {Kind::Uniform, lo, hi}; }
  static DistributionSpec pareto(double shape) { return {Kind::Pareto, shape, 1.0}; }

  /// Parses "normal", "exp"/"exponential", "uniform", "pareto" with a
  /// parameter list; missing parameters take the standard defaults.
  static DistributionSpec parse(std::string_view name, std::span<const double> params);

  void validate() const;
  std::optional<double> analytic_mean() const;
  std::optional<double> analytic_stddev() const;
  /// Inverse CDF at q in (0, 1).
  double quantile(double q) const;
  std::string name() const;
};

/// Optional response column appended to synthetic data for regression queries.
struct TargetSpec {
  enum class Kind { None, Linear, Logistic };
  Kind kind = Kind::None;
  double intercept = 0.0;
  double slope = 1.0;
  double noise = 1.0;  // stddev of the additive noise (linear only)
};

struct GroupSpec {
  DistributionSpec distribution;
  std::size_t rows = 0;
  double bias = 0.0;  // additive offset as a fraction of the group's reference mean
};

struct GeneratorSpec {
  std::vector<GroupSpec> groups;
  TargetSpec target;
  std::uint64_t seed = 0;

  /// m groups cycling through `dists`; group g is shifted by g * bias.
  static GeneratorSpec make(std::span<const DistributionSpec> dists, std::size_t rows_per_group,
                            std::size_t m, double bias, std::uint64_t seed);
  void validate() const;
};

/// Immutable columnar table with one group-by column and real measure columns.
class Dataset {
 public:
  Dataset(std::vector<std::string> group_names, std::vector<std::uint32_t> group_ids,
          std::vector<std::string> measure_names, std::vector<std::vector<double>> measures);

  std::size_t rows() const noexcept { return group_ids_.size(); }
  std::size_t num_groups() const noexcept { return group_sizes_.size(); }
  std::size_t num_measures() const noexcept { return measures_.size(); }

  std::span<const std::uint32_t> group_ids() const noexcept { return group_ids_; }
  std::span<const std::size_t> group_sizes() const noexcept { return group_sizes_; }
  std::size_t group_size(std::size_t g) const { return group_sizes_.at(g); }
  const std::vector<std::string>& group_names() const noexcept { return group_names_; }

  const std::vector<std::string>& measure_names() const noexcept { return measure_names_; }
  std::span<const double> measure(std::size_t col) const { return measures_.at(col); }
  /// Throws InvalidArgument when the column does not exist.
  std::size_t measure_index(std::string_view name) const;

 private:
  std::vector<std::string> group_names_;
  std::vector<std::uint32_t> group_ids_;
  std::vector<std::size_t> group_sizes_;
  std::vector<std::string> measure_names_;
  std::vector<std::vector<double>> measures_;
};

/// Inverted lists: for each group id, the ascending row positions of that group.
class GroupIndex {
 public:
  explicit GroupIndex(std::vector<std::vector<std::size_t>> lists) : lists_(std::move(lists)) {}

  std::size_t num_groups() const noexcept { return lists_.size(); }
  std::span<const std::size_t> list(std::size_t g) const { return lists_.at(g); }

 private:
  std::vector<std::vector<std::size_t>> lists_;
};

Dataset generate_synthetic(const GeneratorSpec& spec);

/// Reads a comma-separated file with a header row. Group labels receive dense
/// ids in order of first appearance.
Dataset load_csv(const std::string& path, std::string_view group_column,
                 std::span<const std::string> measure_columns);

/// Writes the dataset in the shape load_csv reads (group column named `group_column`).
void write_csv(const Dataset& dataset, const std::string& path,
               std::string_view group_column = "group");

GroupIndex build_index(const Dataset& dataset);

/// Materializes every group's rows (used for ground truth and exhaustive evaluation).
std::vector<GroupColumns> gather_groups(const Dataset& dataset, const GroupIndex& index);

/// Evaluates `f` on the full data of every group.
ResultVector true_result(const Dataset& dataset, const GroupIndex& index,
                         const AnalyticalFunction& f);

}  // namespace miss
