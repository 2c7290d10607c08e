#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <vector>

#include "miss/columns.hpp"
#include "miss/dataset.hpp"
#include "miss/random.hpp"

namespace miss {

/// Per-group sample sizes n_i.
class SizeVector {
 public:
  SizeVector() = default;
  explicit SizeVector(std::vector<std::size_t> sizes) : sizes_(std::move(sizes)) {}
  SizeVector(std::initializer_list<std::size_t> sizes) : sizes_(sizes) {}

  std::size_t num_groups() const noexcept { return sizes_.size(); }
  std::size_t operator[](std::size_t g) const { return sizes_[g]; }
  std::size_t& operator[](std::size_t g) { return sizes_[g]; }
  std::span<const std::size_t> values() const noexcept { return sizes_; }
  /// C(n), the sum of all group sizes.
  std::size_t total() const noexcept;

  /// Throws InvalidArgument unless 1 <= n_i <= |D|_i for every group.
  void validate(std::span<const std::size_t> group_sizes) const;

  friend bool operator==(const SizeVector&, const SizeVector&) = default;

 private:
  std::vector<std::size_t> sizes_;
};

struct SamplingStats {
  std::size_t list_entries_touched = 0;  // inverted-list entries read, including discarded ones
  std::size_t rows_read = 0;             // dataset rows materialized into the sample
};

/// A stratified sample: group g holds n_g distinct rows of that group.
struct Sample {
  SizeVector sizes;
  std::vector<GroupColumns> groups;
  std::vector<std::vector<std::size_t>> positions;  // dataset row positions per group
  SamplingStats stats;
};

/// Draws k distinct entries of `list` uniformly without replacement. Low
/// sampling fractions use geometric skips over the list followed by an exact
/// trim or top-up; higher fractions use a sparse partial Fisher-Yates shuffle.
/// Adds the number of list entries read to `touched`.
std::vector<std::size_t> sample_positions(std::span<const std::size_t> list, std::size_t k,
                                          Rng& rng, std::size_t& touched);

/// Uniform stratified sample of `sizes` rows per group. Group g draws from
/// the stream derive_seed(seed, g), so results do not depend on thread count.
Sample stratified_sample(const Dataset& dataset, const GroupIndex& index, const SizeVector& sizes,
                         std::uint64_t seed);

}  // namespace miss
