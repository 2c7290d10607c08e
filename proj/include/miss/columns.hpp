#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace miss {

/// Measure values of one group (stratum), stored column-major. Column j holds
/// the same measure as column j of the owning dataset.
struct GroupColumns {
  std::vector<std::vector<double>> columns;

  /// Row count; columns a function does not read may be left empty.
  std::size_t size() const noexcept {
    for (const auto& c : columns) {
      if (!c.empty()) return c.size();
    }
    return 0;
  }
  std::span<const double> column(std::size_t j) const { return columns.at(j); }
};

using ResultVector = std::vector<double>;

}  // namespace miss
