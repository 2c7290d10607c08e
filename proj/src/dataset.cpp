#include "miss/dataset.hpp"

#include <algorithm>
#include <boost/math/distributions/normal.hpp>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "miss/analytics.hpp"
#include "miss/errors.hpp"
#include "miss/random.hpp"

namespace miss {

namespace {

double param_or(std::span<const double> params, std::size_t i, double fallback) {
  return i < params.size() ? params[i] : fallback;
}

double draw(const DistributionSpec& d, Rng& rng, std::normal_distribution<double>& normal) {
  switch (d.kind) {
    case DistributionSpec::Kind::Normal:
      return d.a + d.b * normal(rng);
    case DistributionSpec::Kind::Exponential:
      return -d.a * std::log1p(-uniform_unit(rng));
    case DistributionSpec::Kind::Uniform:
      return d.a + (d.b - d.a) * uniform_unit(rng);
    case DistributionSpec::Kind::Pareto:
      return std::pow(1.0 - uniform_unit(rng), -1.0 / d.a);
  }
  return 0.0;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur.push_back('"');
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  fields.push_back(std::move(cur));
  return fields;
}

std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

std::optional<double> parse_real(const std::string& text) {
  const std::string t = trim(text);
  if (t.empty()) return std::nullopt;
  double value = 0.0;
  const auto* first = t.data();
  const auto* last = t.data() + t.size();
  if (*first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last) return std::nullopt;
  return value;
}

std::string quote_if_needed(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

}  // namespace

DistributionSpec DistributionSpec::parse(std::string_view name, std::span<const double> params) {
  DistributionSpec d;
  if (name == "normal") {
    d = normal(param_or(params, 0, 0.0), param_or(params, 1, 1.0));
  } else if (name == "exp" || name == "exponential") {
    d = exponential(param_or(params, 0, 1.0));
  } else if (name == "uniform") {
    d = uniform(param_or(params, 0, 0.0), param_or(params, 1, 1.0));
  } else if (name == "pareto") {
    d = pareto(param_or(params, 0, 1.0));
  } else {
    throw InvalidArgument("unknown distribution '" + std::string(name) + "'");
  }
  d.validate();
  return d;
}

void DistributionSpec::validate() const {
  switch (kind) {
    case Kind::Normal:
      if (!(b > 0.0)) throw InvalidArgument("normal: stddev must be positive");
      break;
    case Kind::Exponential:
      if (!(a > 0.0)) throw InvalidArgument("exponential: scale must be positive");
      break;
    case Kind::Uniform:
      if (!(a < b)) throw InvalidArgument("uniform: requires lo < hi");
      break;
    case Kind::Pareto:
      if (!(a > 0.0)) throw InvalidArgument("pareto: shape must be positive");
      break;
  }
}

std::optional<double> DistributionSpec::analytic_mean() const {
  switch (kind) {
    case Kind::Normal:
      return a;
    case Kind::Exponential:
      return a;
    case Kind::Uniform:
      return 0.5 * (a + b);
    case Kind::Pareto:
      if (a > 1.0) return a / (a - 1.0);
      return std::nullopt;
  }
  return std::nullopt;
}

std::optional<double> DistributionSpec::analytic_stddev() const {
  switch (kind) {
    case Kind::Normal:
      return b;
    case Kind::Exponential:
      return a;
    case Kind::Uniform:
      return (b - a) / std::sqrt(12.0);
    case Kind::Pareto:
      if (a > 2.0) return std::sqrt(a / ((a - 1.0) * (a - 1.0) * (a - 2.0)));
      return std::nullopt;
  }
  return std::nullopt;
}

double DistributionSpec::quantile(double q) const {
  if (!(q > 0.0 && q < 1.0)) throw InvalidArgument("quantile level must be in (0, 1)");
  switch (kind) {
    case Kind::Normal:
      return boost::math::quantile(boost::math::normal(a, b), q);
    case Kind::Exponential:
      return -a * std::log1p(-q);
    case Kind::Uniform:
      return a + (b - a) * q;
    case Kind::Pareto:
      return std::pow(1.0 - q, -1.0 / a);
  }
  return 0.0;
}

std::string DistributionSpec::name() const {
  std::ostringstream os;
  switch (kind) {
    case Kind::Normal:
      os << "Normal(" << a << "," << b << ")";
      break;
    case Kind::Exponential:
      os << "Exp(" << a << ")";
      break;
    case Kind::Uniform:
      os << "Uniform(" << a << "," << b << ")";
      break;
    case Kind::Pareto:
      os << "Pareto(" << a << ")";
      break;
  }
  return os.str();
}

GeneratorSpec GeneratorSpec::make(std::span<const DistributionSpec> dists,
                                  std::size_t rows_per_group, std::size_t m, double bias,
                                  std::uint64_t seed) {
  if (dists.empty()) throw InvalidArgument("at least one distribution is required");
  GeneratorSpec spec;
  spec.seed = seed;
  for (std::size_t g = 0; g < m; ++g) {
    spec.groups.push_back({dists[g % dists.size()], rows_per_group, bias * static_cast<double>(g)});
  }
  return spec;
}

void GeneratorSpec::validate() const {
  if (groups.empty()) throw InvalidArgument("generator needs at least one group");
  for (const auto& g : groups) {
    if (g.rows < 1) throw InvalidArgument("rows per group must be >= 1");
    g.distribution.validate();
  }
}

Dataset::Dataset(std::vector<std::string> group_names, std::vector<std::uint32_t> group_ids,
                 std::vector<std::string> measure_names, std::vector<std::vector<double>> measures)
    : group_names_(std::move(group_names)),
      group_ids_(std::move(group_ids)),
      measure_names_(std::move(measure_names)),
      measures_(std::move(measures)) {
  if (group_ids_.empty()) throw InvalidArgument("empty dataset");
  if (measure_names_.size() != measures_.size())
    throw InvalidArgument("measure names and columns differ in count");
  for (const auto& col : measures_) {
    if (col.size() != group_ids_.size()) throw InvalidArgument("ragged measure column");
  }
  group_sizes_.assign(group_names_.size(), 0);
  for (auto id : group_ids_) {
    if (id >= group_sizes_.size()) throw InvalidArgument("group id out of range");
    ++group_sizes_[id];
  }
  for (auto s : group_sizes_) {
    if (s == 0) throw InvalidArgument("every group must contain at least one row");
  }
}

std::size_t Dataset::measure_index(std::string_view name) const {
  for (std::size_t j = 0; j < measure_names_.size(); ++j) {
    if (measure_names_[j] == name) return j;
  }
  throw InvalidArgument("no measure column named '" + std::string(name) + "'");
}

Dataset generate_synthetic(const GeneratorSpec& spec) {
  spec.validate();
  const std::size_t m = spec.groups.size();
  std::size_t total = 0;
  for (const auto& g : spec.groups) total += g.rows;

  std::vector<std::uint32_t> ids;
  std::vector<double> values;
  ids.reserve(total);
  values.reserve(total);
  for (std::size_t g = 0; g < m; ++g) {
    const auto& gs = spec.groups[g];
    Rng rng = make_rng(derive_seed(spec.seed, g));
    std::normal_distribution<double> normal;
    const std::size_t begin = values.size();
    for (std::size_t r = 0; r < gs.rows; ++r) {
      values.push_back(draw(gs.distribution, rng, normal));
      ids.push_back(static_cast<std::uint32_t>(g));
    }
    if (gs.bias != 0.0) {
      double reference = 0.0;
      if (auto mean = gs.distribution.analytic_mean()) {
        reference = *mean;
      } else {
        reference = std::accumulate(values.begin() + static_cast<std::ptrdiff_t>(begin),
                                    values.end(), 0.0) /
                    static_cast<double>(gs.rows);
      }
      const double offset = gs.bias * reference;
      for (std::size_t r = begin; r < values.size(); ++r) values[r] += offset;
    }
  }

  // Interleave groups so that group membership is only discoverable via the index.
  if (m > 1) {
    Rng rng = make_rng(derive_seed(spec.seed, 0x5f3759dfULL));
    for (std::size_t i = total - 1; i > 0; --i) {
      const auto j = static_cast<std::size_t>(uniform_below(rng, i + 1));
      std::swap(ids[i], ids[j]);
      std::swap(values[i], values[j]);
    }
  }

  std::vector<std::string> names;
  for (std::size_t g = 0; g < m; ++g) names.push_back("g" + std::to_string(g));
  std::vector<std::string> measure_names{"value"};
  std::vector<std::vector<double>> measures;

  if (spec.target.kind != TargetSpec::Kind::None) {
    Rng rng = make_rng(derive_seed(spec.seed, 0x7a26e7ULL));
    std::normal_distribution<double> normal;
    std::vector<double> target(total);
    for (std::size_t r = 0; r < total; ++r) {
      const double eta = spec.target.intercept + spec.target.slope * values[r];
      if (spec.target.kind == TargetSpec::Kind::Linear) {
        target[r] = eta + spec.target.noise * normal(rng);
      } else {
        const double p = 1.0 / (1.0 + std::exp(-eta));
        target[r] = uniform_unit(rng) < p ? 1.0 : 0.0;
      }
    }
    measures.push_back(std::move(values));
    measures.push_back(std::move(target));
    measure_names.emplace_back("target");
  } else {
    measures.push_back(std::move(values));
  }
  return Dataset(std::move(names), std::move(ids), std::move(measure_names), std::move(measures));
}

Dataset load_csv(const std::string& path, std::string_view group_column,
                 std::span<const std::string> measure_columns) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'", 0);

  std::string line;
  if (!std::getline(in, line)) throw ParseError("empty dataset", 0);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  const auto header = split_csv_line(line);

  const auto find_column = [&](std::string_view name) {
    for (std::size_t j = 0; j < header.size(); ++j) {
      if (trim(header[j]) == name) return j;
    }
    throw ParseError("missing column '" + std::string(name) + "'", 0);
  };
  const std::size_t group_col = find_column(group_column);
  std::vector<std::size_t> measure_cols;
  for (const auto& name : measure_columns) measure_cols.push_back(find_column(name));

  std::vector<std::string> group_names;
  std::unordered_map<std::string, std::uint32_t> ids_by_label;
  std::vector<std::uint32_t> ids;
  std::vector<std::vector<double>> measures(measure_cols.size());

  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    ++row;
    const auto fields = split_csv_line(line);
    if (fields.size() != header.size()) {
      throw ParseError("row " + std::to_string(row) + ": expected " +
                           std::to_string(header.size()) + " fields, found " +
                           std::to_string(fields.size()),
                       row);
    }
    const std::string label = trim(fields[group_col]);
    auto [it, inserted] =
        ids_by_label.try_emplace(label, static_cast<std::uint32_t>(group_names.size()));
    if (inserted) group_names.push_back(label);
    ids.push_back(it->second);
    for (std::size_t k = 0; k < measure_cols.size(); ++k) {
      const auto value = parse_real(fields[measure_cols[k]]);
      if (!value) {
        throw ParseError("row " + std::to_string(row) + ": cannot parse '" +
                             fields[measure_cols[k]] + "' in column '" + measure_columns[k] +
                             "' as a real number",
                         row);
      }
      measures[k].push_back(*value);
    }
  }
  if (ids.empty()) throw ParseError("empty dataset", 0);
  return Dataset(std::move(group_names), std::move(ids),
                 std::vector<std::string>(measure_columns.begin(), measure_columns.end()),
                 std::move(measures));
}

void write_csv(const Dataset& dataset, const std::string& path, std::string_view group_column) {
  std::ofstream out(path);
  if (!out) throw InvalidArgument("cannot write '" + path + "'");
  out << group_column;
  for (const auto& name : dataset.measure_names()) out << ',' << quote_if_needed(name);
  out << '\n';
  out.precision(std::numeric_limits<double>::max_digits10);
  const auto ids = dataset.group_ids();
  for (std::size_t r = 0; r < dataset.rows(); ++r) {
    out << quote_if_needed(dataset.group_names()[ids[r]]);
    for (std::size_t j = 0; j < dataset.num_measures(); ++j) out << ',' << dataset.measure(j)[r];
    out << '\n';
  }
}

GroupIndex build_index(const Dataset& dataset) {
  std::vector<std::vector<std::size_t>> lists(dataset.num_groups());
  for (std::size_t g = 0; g < lists.size(); ++g) lists[g].reserve(dataset.group_size(g));
  const auto ids = dataset.group_ids();
  for (std::size_t r = 0; r < ids.size(); ++r) lists[ids[r]].push_back(r);
  return GroupIndex(std::move(lists));
}

std::vector<GroupColumns> gather_groups(const Dataset& dataset, const GroupIndex& index) {
  std::vector<GroupColumns> groups(index.num_groups());
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const auto list = index.list(g);
    groups[g].columns.resize(dataset.num_measures());
    for (std::size_t j = 0; j < dataset.num_measures(); ++j) {
      const auto col = dataset.measure(j);
      auto& out = groups[g].columns[j];
      out.reserve(list.size());
      for (auto pos : list) out.push_back(col[pos]);
    }
  }
  return groups;
}

ResultVector true_result(const Dataset& dataset, const GroupIndex& index,
                         const AnalyticalFunction& f) {
  return evaluate(f, gather_groups(dataset, index));
}

}  // namespace miss
