#include "miss/estimation.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <sstream>

#include "miss/errors.hpp"
#include "miss/random.hpp"

namespace miss {

namespace {

// Per-worker buffers for one resample at a time.
class Resampler {
 public:
  Resampler(std::span<const GroupColumns> sample, const AnalyticalFunction& f,
            const ErrorMetric& d, const ResultVector& reference)
      : sample_(sample),
        d_(d),
        reference_(reference),
        columns_(f.columns_used()),
        evaluator_(f),
        buffer_(sample.size()) {
    for (std::size_t g = 0; g < sample.size(); ++g) {
      buffer_[g].columns.resize(sample[g].columns.size());
      for (auto c : columns_) buffer_[g].columns[c].resize(sample[g].size());
    }
  }

  // NaN when the resample cannot be evaluated.
  double distance(std::uint64_t seed) {
    Rng rng = make_rng(seed);
    for (std::size_t g = 0; g < sample_.size(); ++g) {
      const std::size_t n = sample_[g].size();
      auto& out = buffer_[g];
      for (std::size_t i = 0; i < n; ++i) {
        const auto src = static_cast<std::size_t>(uniform_below(rng, n));
        for (auto c : columns_) out.columns[c][i] = sample_[g].columns[c][src];
      }
    }
    try {
      evaluator_.evaluate_into(buffer_, result_);
    } catch (const EvaluationError&) {
      return std::numeric_limits<double>::quiet_NaN();
    }
    return metric_eval(d_, result_, reference_);
  }

 private:
  std::span<const GroupColumns> sample_;
  const ErrorMetric& d_;
  const ResultVector& reference_;
  std::vector<std::size_t> columns_;
  Evaluator evaluator_;
  std::vector<GroupColumns> buffer_;
  ResultVector result_;
};

std::vector<double> finish(std::vector<double> distances) {
  std::erase_if(distances, [](double v) { return std::isnan(v); });
  if (distances.empty()) throw EvaluationError("bootstrap: every resample failed to evaluate");
  std::sort(distances.begin(), distances.end());
  return distances;
}

void check_inputs(std::span<const GroupColumns> sample, const BootstrapConfig& cfg) {
  if (cfg.resamples < 1) throw InvalidArgument("bootstrap needs B >= 1");
  if (sample.empty()) throw InvalidArgument("bootstrap of an empty sample");
}

}  // namespace

ErrorMetric ErrorMetric::lp(double p) {
  if (!(p >= 1.0)) throw InvalidArgument("Lp metric requires p >= 1");
  return {Kind::Lp, p};
}

std::string ErrorMetric::name() const {
  switch (kind) {
    case Kind::L2: return "L2";
    case Kind::Linf: return "Linf";
    case Kind::L1: return "L1";
    case Kind::Lp: {
      std::ostringstream os;
      os << "L" << p;
      return os.str();
    }
    case Kind::GeometricMean: return "GeometricMean";
    case Kind::MaxDifference: return "MaxDifference";
  }
  return "?";
}

void ErrorConstraint::validate() const {
  if (!(epsilon > 0.0)) throw InvalidArgument("error bound must be positive");
  if (!(delta > 0.0 && delta < 1.0)) throw InvalidArgument("error probability must be in (0, 1)");
}

double metric_eval(const ErrorMetric& d, std::span<const double> estimate,
                   std::span<const double> truth) {
  if (estimate.size() != truth.size())
    throw InvalidArgument("result layouts differ: " + std::to_string(estimate.size()) + " vs " +
                          std::to_string(truth.size()));
  const std::size_t m = estimate.size();
  if (m == 0) return 0.0;
  switch (d.kind) {
    case ErrorMetric::Kind::L2: {
      double ss = 0.0;
      for (std::size_t i = 0; i < m; ++i) ss += (estimate[i] - truth[i]) * (estimate[i] - truth[i]);
      return std::sqrt(ss);
    }
    case ErrorMetric::Kind::Linf: {
      double mx = 0.0;
      for (std::size_t i = 0; i < m; ++i) mx = std::max(mx, std::abs(estimate[i] - truth[i]));
      return mx;
    }
    case ErrorMetric::Kind::L1: {
      double s = 0.0;
      for (std::size_t i = 0; i < m; ++i) s += std::abs(estimate[i] - truth[i]);
      return s;
    }
    case ErrorMetric::Kind::Lp: {
      double s = 0.0;
      for (std::size_t i = 0; i < m; ++i) s += std::pow(std::abs(estimate[i] - truth[i]), d.p);
      return std::pow(s, 1.0 / d.p);
    }
    case ErrorMetric::Kind::GeometricMean: {
      double log_sum = 0.0;
      for (std::size_t i = 0; i < m; ++i) {
        const double e = std::abs(estimate[i] - truth[i]);
        if (e == 0.0) return 0.0;
        log_sum += std::log(e);
      }
      return std::exp(log_sum / static_cast<double>(m));
    }
    case ErrorMetric::Kind::MaxDifference: {
      // max_{i,j} |diff_i - diff_j| = max diff - min diff
      double lo = std::numeric_limits<double>::infinity();
      double hi = -lo;
      for (std::size_t i = 0; i < m; ++i) {
        const double e = estimate[i] - truth[i];
        lo = std::min(lo, e);
        hi = std::max(hi, e);
      }
      return hi - lo;
    }
  }
  return 0.0;
}

double upper_quantile(std::span<const double> sorted, double level) {
  if (sorted.empty()) throw InvalidArgument("quantile of empty input");
  const double pos = level * static_cast<double>(sorted.size());
  auto rank = static_cast<std::size_t>(std::ceil(pos - 1e-9 * std::max(1.0, pos)));
  rank = std::clamp<std::size_t>(rank, 1, sorted.size());
  return sorted[rank - 1];
}

std::vector<double> bootstrap_distances(std::span<const GroupColumns> sample,
                                        const AnalyticalFunction& f, const ErrorMetric& d,
                                        const BootstrapConfig& cfg) {
  check_inputs(sample, cfg);
  const ResultVector reference = evaluate(f, sample);
  const auto count = static_cast<std::ptrdiff_t>(cfg.resamples);
  std::vector<double> distances(cfg.resamples);
  std::exception_ptr failure;

#pragma omp parallel
  {
    Resampler worker(sample, f, d, reference);
#pragma omp for schedule(static)
    for (std::ptrdiff_t b = 0; b < count; ++b) {
      try {
        distances[static_cast<std::size_t>(b)] =
            worker.distance(derive_seed(cfg.seed, static_cast<std::uint64_t>(b)));
      } catch (...) {
#pragma omp critical(miss_bootstrap_failure)
        if (!failure) failure = std::current_exception();
      }
    }
  }
  if (failure) std::rethrow_exception(failure);
  return finish(std::move(distances));
}

std::vector<double> bootstrap_distances_serial(std::span<const GroupColumns> sample,
                                               const AnalyticalFunction& f, const ErrorMetric& d,
                                               const BootstrapConfig& cfg) {
  check_inputs(sample, cfg);
  const ResultVector reference = evaluate(f, sample);
  Resampler worker(sample, f, d, reference);
  std::vector<double> distances(cfg.resamples);
  for (std::size_t b = 0; b < cfg.resamples; ++b) distances[b] = worker.distance(derive_seed(cfg.seed, b));
  return finish(std::move(distances));
}

double bootstrap_error(std::span<const GroupColumns> sample, const AnalyticalFunction& f,
                       const ErrorMetric& d, double delta, const BootstrapConfig& cfg) {
  return upper_quantile(bootstrap_distances(sample, f, d, cfg), 1.0 - delta);
}

double bootstrap_error_serial(std::span<const GroupColumns> sample, const AnalyticalFunction& f,
                              const ErrorMetric& d, double delta, const BootstrapConfig& cfg) {
  return upper_quantile(bootstrap_distances_serial(sample, f, d, cfg), 1.0 - delta);
}

}  // namespace miss
