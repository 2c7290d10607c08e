#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "miss/analytics.hpp"
#include "miss/dataset.hpp"
#include "miss/errors.hpp"
#include "test_util.hpp"

using namespace miss;

namespace {

double mean_of(std::span<const double> v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double stderr_of(std::span<const double> v) {
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1)) / std::sqrt(static_cast<double>(v.size()));
}

Dataset tiny(std::vector<std::uint32_t> ids, std::vector<double> values, std::size_t m) {
  std::vector<std::string> names;
  for (std::size_t g = 0; g < m; ++g) names.push_back("g" + std::to_string(g));
  return Dataset(names, std::move(ids), {"value"}, {std::move(values)});
}

}  // namespace

TEST_CASE("generate_synthetic: distribution means") {
  SUBCASE("Pareto(3) mean is 1.5") {
    const std::vector<DistributionSpec> d{DistributionSpec::pareto(3.0)};
    const auto data = generate_synthetic(GeneratorSpec::make(d, 1'000'000, 1, 0.0, 11));
    const auto v = data.measure(0);
    CHECK(std::abs(mean_of(v) - 1.5) <= 3.0 * stderr_of(v));
    CHECK(*std::min_element(v.begin(), v.end()) >= 1.0);
  }
  SUBCASE("Uniform(0,1) mean is 0.5") {
    const std::vector<DistributionSpec> d{DistributionSpec::uniform(0.0, 1.0)};
    const auto data = generate_synthetic(GeneratorSpec::make(d, 1'000'000, 1, 0.0, 12));
    const auto v = data.measure(0);
    CHECK(std::abs(mean_of(v) - 0.5) <= 3.0 * stderr_of(v));
    const auto idx = build_index(data);
    const auto theta = true_result(data, idx, AnalyticalFunction::avg());
    CHECK(theta.at(0) == doctest::Approx(0.5).epsilon(0.01));
  }
}

TEST_CASE("generate_synthetic is bit-reproducible for a fixed seed") {
  const std::vector<DistributionSpec> d{DistributionSpec::normal(0.0, 1.0), DistributionSpec::exponential(1.0)};
  const auto spec = GeneratorSpec::make(d, 5000, 3, 0.05, 99);
  const auto a = generate_synthetic(spec);
  const auto b = generate_synthetic(spec);
  REQUIRE(a.rows() == b.rows());
  CHECK(std::equal(a.measure(0).begin(), a.measure(0).end(), b.measure(0).begin()));
  CHECK(std::equal(a.group_ids().begin(), a.group_ids().end(), b.group_ids().begin()));

  auto other = spec;
  other.seed = 100;
  const auto c = generate_synthetic(other);
  CHECK_FALSE(std::equal(a.measure(0).begin(), a.measure(0).end(), c.measure(0).begin()));
}

TEST_CASE("generate_synthetic: group bias shifts by a fraction of the reference mean") {
  const std::vector<DistributionSpec> d{DistributionSpec::normal(2.0, 0.5)};
  const auto data = generate_synthetic(GeneratorSpec::make(d, 200'000, 2, 0.05, 5));
  const auto idx = build_index(data);
  const auto theta = true_result(data, idx, AnalyticalFunction::avg());
  // offset = 0.05 * 2.0 for group 1
  CHECK(theta[1] - theta[0] == doctest::Approx(0.1).epsilon(0.05));
}

TEST_CASE("generate_synthetic: invalid parameters") {
  CHECK_THROWS_AS(DistributionSpec::uniform(1.0, 1.0).validate(), InvalidArgument);
  CHECK_THROWS_AS(DistributionSpec::pareto(0.0).validate(), InvalidArgument);
  CHECK_THROWS_AS(DistributionSpec::normal(0.0, -1.0).validate(), InvalidArgument);
  const std::vector<double> params{2.0, 1.0};
  CHECK_THROWS_AS(DistributionSpec::parse("uniform", params), InvalidArgument);
  CHECK_THROWS_AS(DistributionSpec::parse("cauchy", {}), InvalidArgument);
  GeneratorSpec empty_rows;
  empty_rows.groups.push_back({DistributionSpec::normal(0, 1), 0, 0.0});
  CHECK_THROWS_AS(generate_synthetic(empty_rows), InvalidArgument);
}

TEST_CASE("generate_synthetic: group sizes sum to the row count") {
  const std::vector<DistributionSpec> d{DistributionSpec::exponential(1.0)};
  const auto data = generate_synthetic(GeneratorSpec::make(d, 777, 4, 0.0, 3));
  CHECK(data.num_groups() == 4);
  CHECK(std::accumulate(data.group_sizes().begin(), data.group_sizes().end(), std::size_t{0}) == data.rows());
  for (auto id : data.group_ids()) CHECK(id < 4);
}

TEST_CASE("load_csv") {
  SUBCASE("dense ids in first-appearance order") {
    const auto path = test::write_temp("three.csv", "grp,value\na,1\na,2\nb,3\n");
    const std::vector<std::string> cols{"value"};
    const auto data = load_csv(path, "grp", cols);
    CHECK(data.num_groups() == 2);
    CHECK(data.group_size(0) == 2);
    CHECK(data.group_size(1) == 1);
    CHECK(data.group_names()[0] == "a");
  }
  SUBCASE("header only is an empty dataset") {
    const auto path = test::write_temp("header.csv", "grp,value\n");
    const std::vector<std::string> cols{"value"};
    try {
      load_csv(path, "grp", cols);
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(std::string(e.what()).find("empty dataset") != std::string::npos);
    }
  }
  SUBCASE("unparsable cell reports its row") {
    std::string content = "grp,value\n";
    for (int r = 1; r <= 9; ++r) content += "a," + std::string(r == 7 ? "x" : "1.5") + "\n";
    const auto path = test::write_temp("bad.csv", content);
    const std::vector<std::string> cols{"value"};
    try {
      load_csv(path, "grp", cols);
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(e.row() == 7);
      CHECK(std::string(e.what()).find("row 7") != std::string::npos);
    }
  }
  SUBCASE("missing column") {
    const auto path = test::write_temp("cols.csv", "grp,value\na,1\n");
    const std::vector<std::string> cols{"price"};
    CHECK_THROWS_AS(load_csv(path, "grp", cols), ParseError);
  }
}

TEST_CASE("write_csv then load_csv reproduces the dataset") {
  const std::vector<DistributionSpec> d{DistributionSpec::normal(0, 1), DistributionSpec::uniform(0, 1)};
  auto spec = GeneratorSpec::make(d, 50, 2, 0.0, 8);
  spec.target = {TargetSpec::Kind::Linear, 1.0, 2.0, 0.5};
  const auto data = generate_synthetic(spec);
  const auto path = test::write_temp("roundtrip.csv", "");
  write_csv(data, path);
  const std::vector<std::string> cols{"value", "target"};
  const auto back = load_csv(path, "group", cols);
  REQUIRE(back.rows() == data.rows());
  for (std::size_t j = 0; j < 2; ++j) {
    CHECK(std::equal(data.measure(j).begin(), data.measure(j).end(), back.measure(j).begin()));
  }
}

TEST_CASE("build_index") {
  SUBCASE("groups {a,b,a}") {
    const auto data = tiny({0, 1, 0}, {1, 2, 3}, 2);
    const auto idx = build_index(data);
    CHECK(std::vector<std::size_t>(idx.list(0).begin(), idx.list(0).end()) == std::vector<std::size_t>{0, 2});
    CHECK(std::vector<std::size_t>(idx.list(1).begin(), idx.list(1).end()) == std::vector<std::size_t>{1});
  }
  SUBCASE("single group is the whole range") {
    const auto data = tiny({0, 0, 0, 0}, {1, 2, 3, 4}, 1);
    const auto idx = build_index(data);
    CHECK(idx.list(0).size() == 4);
    CHECK(idx.list(0).back() == 3);
  }
  SUBCASE("flatten and sort reproduces 0..N-1") {
    const std::vector<DistributionSpec> d{DistributionSpec::normal(0, 1)};
    const auto data = generate_synthetic(GeneratorSpec::make(d, 1000, 7, 0.0, 21));
    const auto idx = build_index(data);
    std::vector<std::size_t> all;
    for (std::size_t g = 0; g < idx.num_groups(); ++g) {
      CHECK(idx.list(g).size() == data.group_size(g));
      CHECK(std::is_sorted(idx.list(g).begin(), idx.list(g).end()));
      all.insert(all.end(), idx.list(g).begin(), idx.list(g).end());
    }
    std::sort(all.begin(), all.end());
    std::vector<std::size_t> expected(data.rows());
    std::iota(expected.begin(), expected.end(), std::size_t{0});
    CHECK(all == expected);
  }
}

TEST_CASE("true_result") {
  CHECK(true_result(tiny({0, 0, 0}, {1, 2, 3}, 1), build_index(tiny({0, 0, 0}, {1, 2, 3}, 1)),
                    AnalyticalFunction::avg()) == ResultVector{2.0});
  const auto signs = tiny({0, 0, 0}, {-1, 1, 1}, 1);
  const auto p = true_result(signs, build_index(signs),
                             AnalyticalFunction::proportion({0, Comparator::Greater, 0.0}));
  CHECK(p[0] == doctest::Approx(2.0 / 3.0));
  const auto flat = tiny({0, 0, 0}, {1, 1, 1}, 1);
  CHECK(true_result(flat, build_index(flat), AnalyticalFunction::var()) == ResultVector{0.0});
}

TEST_CASE("Dataset rejects inconsistent construction") {
  CHECK_THROWS_AS(tiny({}, {}, 1), InvalidArgument);
  CHECK_THROWS_AS(tiny({0, 2}, {1, 2}, 2), InvalidArgument);
  CHECK_THROWS_AS(tiny({0, 0}, {1, 2}, 2), InvalidArgument);  // group 1 empty
}
