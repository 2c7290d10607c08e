#include "miss/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_map>
#include <unordered_set>

#include "miss/errors.hpp"

namespace miss {

namespace {

constexpr double kSkipFractionLimit = 0.1;

// Bernoulli pass over the list with geometric gaps, then exact correction.
std::vector<std::size_t> skip_sample(std::span<const std::size_t> list, std::size_t k, Rng& rng,
                                     std::size_t& touched) {
  const std::size_t n = list.size();
  const double kd = static_cast<double>(k);
  // Inflate the rate slightly so that a top-up is rarely needed.
  const double rate = std::min(1.0, (kd + 3.0 * std::sqrt(kd) + 10.0) / static_cast<double>(n));

  std::vector<std::size_t> picked;  // offsets into `list`, ascending
  picked.reserve(static_cast<std::size_t>(rate * static_cast<double>(n)) + 16);
  if (rate >= 1.0) {
    picked.resize(n);
    std::iota(picked.begin(), picked.end(), std::size_t{0});
  } else {
    const double log_q = std::log1p(-rate);
    std::size_t next = 0;
    while (true) {
      const double u = 1.0 - uniform_unit(rng);  // (0, 1]
      const double gap = std::floor(std::log(u) / log_q);
      if (gap >= static_cast<double>(n - next)) break;
      next += static_cast<std::size_t>(gap);
      picked.push_back(next);
      ++next;
      if (next >= n) break;
    }
  }
  touched += picked.size();

  if (picked.size() > k) {
    // A uniform k-subset of a uniform K-subset is a uniform k-subset.
    for (std::size_t i = 0; i < k; ++i) {
      const auto j = i + static_cast<std::size_t>(uniform_below(rng, picked.size() - i));
      std::swap(picked[i], picked[j]);
    }
    picked.resize(k);
    std::sort(picked.begin(), picked.end());
  } else if (picked.size() < k) {
    std::unordered_set<std::size_t> taken(picked.begin(), picked.end());
    while (picked.size() < k) {
      const auto j = static_cast<std::size_t>(uniform_below(rng, n));
      ++touched;
      if (taken.insert(j).second) picked.push_back(j);
    }
  }

  std::vector<std::size_t> out;
  out.reserve(k);
  for (auto off : picked) out.push_back(list[off]);
  return out;
}

// Fisher-Yates restricted to the first k slots, with displaced entries kept in
// a map. Returns k distinct offsets in [0, n).
std::vector<std::size_t> shuffle_offsets(std::size_t n, std::size_t k, Rng& rng) {
  std::unordered_map<std::size_t, std::size_t> displaced;
  displaced.reserve(2 * k);
  const auto slot = [&](std::size_t i) {
    auto it = displaced.find(i);
    return it == displaced.end() ? i : it->second;
  };
  std::vector<std::size_t> out;
  out.reserve(k);
  for (std::size_t i = 0; i < k; ++i) {
    const auto j = i + static_cast<std::size_t>(uniform_below(rng, n - i));
    out.push_back(slot(j));
    displaced[j] = slot(i);
  }
  return out;
}

std::vector<std::size_t> shuffle_sample(std::span<const std::size_t> list, std::size_t k, Rng& rng,
                                        std::size_t& touched) {
  std::vector<std::size_t> out;
  out.reserve(k);
  for (auto off : shuffle_offsets(list.size(), k, rng)) out.push_back(list[off]);
  touched += k;
  return out;
}

// k > n/2: choose the n - k excluded entries instead; the complement of a
// uniform subset is uniform.
std::vector<std::size_t> complement_sample(std::span<const std::size_t> list, std::size_t k,
                                           Rng& rng, std::size_t& touched) {
  const std::size_t n = list.size();
  std::vector<bool> excluded(n, false);
  for (auto off : shuffle_offsets(n, n - k, rng)) excluded[off] = true;
  std::vector<std::size_t> out;
  out.reserve(k);
  for (std::size_t i = 0; i < n; ++i) {
    if (!excluded[i]) out.push_back(list[i]);
  }
  touched += n;
  return out;
}

}  // namespace

std::size_t SizeVector::total() const noexcept {
  return std::accumulate(sizes_.begin(), sizes_.end(), std::size_t{0});
}

void SizeVector::validate(std::span<const std::size_t> group_sizes) const {
  if (sizes_.size() != group_sizes.size())
    throw InvalidArgument("size vector has " + std::to_string(sizes_.size()) +
                          " entries but the dataset has " + std::to_string(group_sizes.size()) +
                          " groups");
  for (std::size_t g = 0; g < sizes_.size(); ++g) {
    if (sizes_[g] == 0) throw InvalidArgument("group " + std::to_string(g) + ": sample size 0");
    if (sizes_[g] > group_sizes[g])
      throw InvalidArgument("group " + std::to_string(g) + ": sample size " +
                            std::to_string(sizes_[g]) + " exceeds group size " +
                            std::to_string(group_sizes[g]));
  }
}

std::vector<std::size_t> sample_positions(std::span<const std::size_t> list, std::size_t k,
                                          Rng& rng, std::size_t& touched) {
  if (k > list.size()) throw InvalidArgument("sample size exceeds list length");
  if (k == 0) return {};
  if (static_cast<double>(k) <= kSkipFractionLimit * static_cast<double>(list.size()))
    return skip_sample(list, k, rng, touched);
  if (2 * k > list.size()) return complement_sample(list, k, rng, touched);
  return shuffle_sample(list, k, rng, touched);
}

Sample stratified_sample(const Dataset& dataset, const GroupIndex& index, const SizeVector& sizes,
                         std::uint64_t seed) {
  sizes.validate(dataset.group_sizes());
  const std::size_t m = sizes.num_groups();
  const std::size_t cols = dataset.num_measures();

  Sample sample;
  sample.sizes = sizes;
  sample.groups.resize(m);
  sample.positions.resize(m);
  std::vector<std::size_t> touched(m, 0);

#pragma omp parallel for schedule(dynamic)
  for (std::size_t g = 0; g < m; ++g) {
    Rng rng = make_rng(derive_seed(seed, g));
    auto positions = sample_positions(index.list(g), sizes[g], rng, touched[g]);
    auto& group = sample.groups[g];
    group.columns.resize(cols);
    for (std::size_t j = 0; j < cols; ++j) {
      const auto col = dataset.measure(j);
      auto& out = group.columns[j];
      out.resize(positions.size());
      for (std::size_t i = 0; i < positions.size(); ++i) out[i] = col[positions[i]];
    }
    sample.positions[g] = std::move(positions);
  }

  for (std::size_t g = 0; g < m; ++g) {
    sample.stats.list_entries_touched += touched[g];
    sample.stats.rows_read += sizes[g];
  }
  return sample;
}

}  // namespace miss
