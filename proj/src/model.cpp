#include "miss/model.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>

#include "json.hpp"

#include "miss/errors.hpp"

namespace miss {

namespace {
constexpr double kRankTolerance = 1e-10;
}

void ErrorProfile::append(ErrorRecord record) {
  if (!records_.empty() && record.sizes.num_groups() != num_groups())
    throw InvalidArgument("error record group count does not match the profile");
  records_.push_back(std::move(record));
}

std::string ErrorProfile::to_jsonl() const {
  std::string out;
  for (std::size_t j = 0; j < records_.size(); ++j) {
    nlohmann::json line;
    line["iteration"] = j + 1;
    line["sizes"] = std::vector<std::size_t>(records_[j].sizes.values().begin(),
                                             records_[j].sizes.values().end());
    line["error"] = records_[j].error;
    out += line.dump();
    out += '\n';
  }
  return out;
}

double ModelParams::slope_sum() const noexcept {
  return beta.size() < 2 ? 0.0 : std::accumulate(beta.begin() + 1, beta.end(), 0.0);
}

double ModelParams::predict_log_error(const SizeVector& sizes) const {
  const auto row = design_row(sizes);
  if (row.size() != beta.size()) throw InvalidArgument("size vector does not match the model");
  return std::inner_product(row.begin(), row.end(), beta.begin(), 0.0);
}

std::vector<double> design_row(const SizeVector& sizes) {
  std::vector<double> row;
  row.reserve(sizes.num_groups() + 1);
  row.push_back(1.0);
  for (auto n : sizes.values()) {
    if (n < 1) throw InvalidArgument("design_row needs sizes >= 1");
    row.push_back(-std::log(static_cast<double>(n)));
  }
  return row;
}

ModelParams fit_wls(const ErrorProfile& profile, WeightScheme weights) {
  const std::size_t m = profile.num_groups();
  const std::size_t p = m + 1;
  std::vector<const ErrorRecord*> usable;
  for (const auto& r : profile.records()) {
    if (r.error > 0.0 && std::isfinite(r.error)) usable.push_back(&r);
  }
  if (m == 0 || usable.size() < p)
    throw FitError(FitError::Kind::Underdetermined,
                   "underdetermined: " + std::to_string(usable.size()) +
                       " usable records for " + std::to_string(p) + " parameters");

  // Scaling rows by sqrt(w) turns the weighted problem into ordinary least
  // squares with the same normal equations (N^T W N) b = N^T W E.
  const auto k = static_cast<Eigen::Index>(usable.size());
  Eigen::MatrixXd a(k, static_cast<Eigen::Index>(p));
  Eigen::VectorXd rhs(k);
  for (Eigen::Index j = 0; j < k; ++j) {
    const auto& rec = *usable[static_cast<std::size_t>(j)];
    const double w = weights == WeightScheme::TotalSize ? static_cast<double>(rec.sizes.total()) : 1.0;
    const double sw = std::sqrt(w);
    const auto row = design_row(rec.sizes);
    for (std::size_t c = 0; c < p; ++c) a(j, static_cast<Eigen::Index>(c)) = sw * row[c];
    rhs[j] = sw * std::log(rec.error);
  }

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
  qr.setThreshold(kRankTolerance);
  if (qr.rank() < static_cast<Eigen::Index>(p))
    throw FitError(FitError::Kind::DegenerateProfile,
                   "degenerate profile: design rank " + std::to_string(qr.rank()) + " < " +
                       std::to_string(p));
  const Eigen::VectorXd beta = qr.solve(rhs);
  return ModelParams{std::vector<double>(beta.data(), beta.data() + beta.size())};
}

double r2_score(const ErrorProfile& profile, const ModelParams& params) {
  std::vector<double> targets;
  std::vector<double> fitted;
  for (const auto& r : profile.records()) {
    if (!(r.error > 0.0) || !std::isfinite(r.error)) continue;
    targets.push_back(std::log(r.error));
    fitted.push_back(params.predict_log_error(r.sizes));
  }
  if (targets.size() < 2) throw FitError(FitError::Kind::UndefinedR2, "r2 needs at least two records");
  const double mean = std::accumulate(targets.begin(), targets.end(), 0.0) /
                      static_cast<double>(targets.size());
  double ss_tot = 0.0;
  double ss_res = 0.0;
  for (std::size_t j = 0; j < targets.size(); ++j) {
    ss_tot += (targets[j] - mean) * (targets[j] - mean);
    ss_res += (targets[j] - fitted[j]) * (targets[j] - fitted[j]);
  }
  if (ss_tot == 0.0) throw FitError(FitError::Kind::UndefinedR2, "undefined r2: constant targets");
  return 1.0 - ss_res / ss_tot;
}

std::optional<ModelParams> diagnose(const ModelParams& params, double tau) {
  if (!(tau > 0.0)) throw InvalidArgument("diagnostic threshold must be positive");
  const std::size_t m = params.num_groups();
  if (m == 0) throw InvalidArgument("model has no slope parameters");
  const double sum = params.slope_sum();
  if (sum <= tau) return std::nullopt;
  const double min_slope = *std::min_element(params.beta.begin() + 1, params.beta.end());
  if (min_slope > 0.0) return params;
  ModelParams out = params;
  std::fill(out.beta.begin() + 1, out.beta.end(), sum / static_cast<double>(m));
  return out;
}

std::vector<double> predict_sizes_continuous(const ModelParams& params, double epsilon) {
  if (!(epsilon > 0.0)) throw InvalidArgument("error bound must be positive");
  const std::size_t m = params.num_groups();
  if (m == 0) throw InvalidArgument("model has no slope parameters");
  double sum = 0.0;
  double weighted_log = 0.0;
  for (std::size_t i = 1; i <= m; ++i) {
    const double b = params.beta[i];
    if (!(b > 0.0)) throw InvalidArgument("prediction requires positive slopes; run diagnose first");
    sum += b;
    weighted_log += b * std::log(b);
  }
  const double exponent = (params.beta[0] - weighted_log - std::log(epsilon)) / sum;
  std::vector<double> sizes(m);
  for (std::size_t i = 0; i < m; ++i) sizes[i] = params.beta[i + 1] * std::exp(exponent);
  return sizes;
}

SizeVector predict_sizes(const ModelParams& params, double epsilon,
                         std::span<const std::size_t> group_sizes) {
  const auto raw = predict_sizes_continuous(params, epsilon);
  if (group_sizes.size() != raw.size())
    throw InvalidArgument("group size count does not match the model");
  std::vector<std::size_t> out(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const double cap = static_cast<double>(group_sizes[i]);
    const double rounded = std::round(raw[i]);
    // NaN/inf and huge predictions are clamped before the integer conversion.
    const double clamped = std::isfinite(rounded) ? std::clamp(rounded, 1.0, cap) : cap;
    out[i] = static_cast<std::size_t>(clamped);
  }
  return SizeVector(std::move(out));
}

}  // namespace miss
