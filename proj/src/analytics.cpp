#include "miss/analytics.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "miss/errors.hpp"

namespace miss {

namespace {

constexpr int kLogRegMaxIterations = 100;
constexpr double kLogRegGradientTolerance = 1e-8;

std::size_t quantile_rank(double q, std::size_t n) {
  const double qn = q * static_cast<double>(n);
  // Absorb representation error so that e.g. 0.07 * 100 maps to rank 7.
  auto rank = static_cast<std::size_t>(std::ceil(qn - 1e-9 * std::max(1.0, qn)));
  return std::clamp<std::size_t>(rank, 1, n);
}

Eigen::MatrixXd regression_design(const AnalyticalFunction& f, const GroupColumns& g) {
  const auto n = static_cast<Eigen::Index>(g.size());
  const auto features = f.features();
  Eigen::MatrixXd x(n, static_cast<Eigen::Index>(features.size() + 1));
  x.col(0).setOnes();
  for (std::size_t j = 0; j < features.size(); ++j) {
    const auto col = g.column(features[j]);
    x.col(static_cast<Eigen::Index>(j + 1)) = Eigen::Map<const Eigen::VectorXd>(col.data(), n);
  }
  return x;
}

void fit_linreg(const AnalyticalFunction& f, const GroupColumns& g, ResultVector& out) {
  const std::size_t p = f.block_size();
  if (g.size() < p) throw EvaluationError("LINREG: insufficient data");
  const Eigen::MatrixXd x = regression_design(f, g);
  const auto y_col = g.column(f.target());
  const Eigen::Map<const Eigen::VectorXd> y(y_col.data(), static_cast<Eigen::Index>(y_col.size()));
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
  qr.setThreshold(1e-12);
  if (qr.rank() < static_cast<Eigen::Index>(p)) throw EvaluationError("LINREG: singular design");
  const Eigen::VectorXd beta = qr.solve(y);
  out.insert(out.end(), beta.data(), beta.data() + beta.size());
}

double log_likelihood(const Eigen::VectorXd& eta, const Eigen::VectorXd& y) {
  double ll = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    // log(1 + exp(eta)) computed without overflow.
    const double softplus = eta[i] > 0 ? eta[i] + std::log1p(std::exp(-eta[i]))
                                       : std::log1p(std::exp(eta[i]));
    ll += y[i] * eta[i] - softplus;
  }
  return ll;
}

// Damped iteratively reweighted least squares (Newton with step halving).
void fit_logreg(const AnalyticalFunction& f, const GroupColumns& g, ResultVector& out) {
  const std::size_t p = f.block_size();
  if (g.size() < p) throw EvaluationError("LOGREG: insufficient data");
  const Eigen::MatrixXd x = regression_design(f, g);
  const auto y_col = g.column(f.target());
  const Eigen::Map<const Eigen::VectorXd> y(y_col.data(), static_cast<Eigen::Index>(y_col.size()));
  for (double v : y_col) {
    if (v != 0.0 && v != 1.0) throw EvaluationError("LOGREG: target must be 0/1");
  }
  const double n = static_cast<double>(g.size());

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(p));
  Eigen::VectorXd eta = x * beta;
  double ll = log_likelihood(eta, y);
  for (int iter = 1; iter <= kLogRegMaxIterations; ++iter) {
    const Eigen::VectorXd prob = eta.unaryExpr([](double e) { return 1.0 / (1.0 + std::exp(-e)); });
    const Eigen::VectorXd grad = x.transpose() * (y - prob);
    if (grad.lpNorm<Eigen::Infinity>() / n <= kLogRegGradientTolerance) {
      // On separable data the gradient vanishes only because the coefficients
      // run off to infinity; there is no finite maximizer to report.
      if ((y - prob).lpNorm<Eigen::Infinity>() < 1e-6)
        throw ConvergenceError("LOGREG: perfectly separated data after " + std::to_string(iter) +
                                   " iterations",
                               iter);
      out.insert(out.end(), beta.data(), beta.data() + beta.size());
      return;
    }
    const Eigen::VectorXd w = prob.unaryExpr([](double q) { return q * (1.0 - q); });
    const Eigen::MatrixXd hessian = x.transpose() * w.asDiagonal() * x;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(hessian);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive() ||
        ldlt.vectorD().minCoeff() <= 1e-14 * std::max(1.0, ldlt.vectorD().maxCoeff())) {
      throw ConvergenceError("LOGREG: information matrix became singular after " +
                                 std::to_string(iter) + " iterations",
                             iter);
    }
    const Eigen::VectorXd step = ldlt.solve(grad);
    double scale = 1.0;
    bool improved = false;
    for (int halving = 0; halving < 40; ++halving, scale *= 0.5) {
      const Eigen::VectorXd candidate = beta + scale * step;
      const Eigen::VectorXd candidate_eta = x * candidate;
      const double candidate_ll = log_likelihood(candidate_eta, y);
      if (candidate_ll >= ll) {
        beta = candidate;
        eta = candidate_eta;
        ll = candidate_ll;
        improved = true;
        break;
      }
    }
    if (!improved) break;
  }
  throw ConvergenceError("LOGREG: no convergence within " + std::to_string(kLogRegMaxIterations) +
                             " iterations",
                         kLogRegMaxIterations);
}

}  // namespace

Predicate Predicate::parse(std::size_t column, std::string_view text) {
  Predicate p;
  p.column = column;
  std::size_t skip = 1;
  if (text.starts_with("<=")) {
    p.op = Comparator::LessEqual, skip = 2;
  } else if (text.starts_with(">=")) {
    p.op = Comparator::GreaterEqual, skip = 2;
  } else if (text.starts_with("!=")) {
    p.op = Comparator::NotEqual, skip = 2;
  } else if (text.starts_with("==")) {
    p.op = Comparator::Equal, skip = 2;
  } else if (text.starts_with("<")) {
    p.op = Comparator::Less;
  } else if (text.starts_with(">")) {
    p.op = Comparator::Greater;
  } else if (text.starts_with("=")) {
    p.op = Comparator::Equal;
  } else {
    throw InvalidArgument("predicate must start with a comparator: '" + std::string(text) + "'");
  }
  const std::string rest(text.substr(skip));
  std::size_t used = 0;
  try {
    p.constant = std::stod(rest, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != rest.size())
    throw InvalidArgument("bad predicate constant: '" + std::string(text) + "'");
  return p;
}

AnalyticalFunction AnalyticalFunction::avg(std::size_t column) {
  AnalyticalFunction f(FunctionKind::Avg);
  f.column_ = column;
  return f;
}

AnalyticalFunction AnalyticalFunction::var(std::size_t column) {
  AnalyticalFunction f(FunctionKind::Var);
  f.column_ = column;
  return f;
}

AnalyticalFunction AnalyticalFunction::sum(std::size_t column) {
  AnalyticalFunction f(FunctionKind::Sum);
  f.column_ = column;
  return f;
}

AnalyticalFunction AnalyticalFunction::proportion(Predicate p) {
  AnalyticalFunction f(FunctionKind::Proportion);
  f.column_ = p.column;
  f.predicate_ = p;
  return f;
}

AnalyticalFunction AnalyticalFunction::count(Predicate p) {
  AnalyticalFunction f(FunctionKind::Count);
  f.column_ = p.column;
  f.predicate_ = p;
  return f;
}

AnalyticalFunction AnalyticalFunction::quantile(double q, std::size_t column) {
  if (!(q > 0.0 && q < 1.0)) throw InvalidArgument("QUANTILE requires q in (0, 1)");
  AnalyticalFunction f(FunctionKind::Quantile);
  f.column_ = column;
  f.parameter_ = q;
  return f;
}

AnalyticalFunction AnalyticalFunction::median(std::size_t column) {
  AnalyticalFunction f(FunctionKind::Median);
  f.column_ = column;
  f.parameter_ = 0.5;
  return f;
}

AnalyticalFunction AnalyticalFunction::max_approx(double alpha, std::size_t column) {
  if (!(alpha > 0.0 && alpha < 0.5)) throw InvalidArgument("MAX_APPROX requires alpha in (0, 0.5)");
  AnalyticalFunction f(FunctionKind::MaxApprox);
  f.column_ = column;
  f.parameter_ = alpha;
  return f;
}

AnalyticalFunction AnalyticalFunction::linreg(std::vector<std::size_t> features,
                                              std::size_t target) {
  if (features.empty()) throw InvalidArgument("LINREG needs at least one feature column");
  AnalyticalFunction f(FunctionKind::LinReg);
  f.features_ = std::move(features);
  f.target_ = target;
  return f;
}

AnalyticalFunction AnalyticalFunction::logreg(std::vector<std::size_t> features,
                                              std::size_t target) {
  if (features.empty()) throw InvalidArgument("LOGREG needs at least one feature column");
  AnalyticalFunction f(FunctionKind::LogReg);
  f.features_ = std::move(features);
  f.target_ = target;
  return f;
}

std::vector<std::size_t> AnalyticalFunction::columns_used() const {
  std::vector<std::size_t> cols;
  if (is_regression()) {
    cols.assign(features_.begin(), features_.end());
    cols.push_back(target_);
  } else if (kind_ == FunctionKind::Proportion || kind_ == FunctionKind::Count) {
    cols.push_back(predicate_.column);
  } else {
    cols.push_back(column_);
  }
  std::sort(cols.begin(), cols.end());
  cols.erase(std::unique(cols.begin(), cols.end()), cols.end());
  return cols;
}

std::string AnalyticalFunction::name() const {
  std::ostringstream os;
  switch (kind_) {
    case FunctionKind::Avg: return "AVG";
    case FunctionKind::Var: return "VAR";
    case FunctionKind::Sum: return "SUM";
    case FunctionKind::Proportion: return "PROPORTION";
    case FunctionKind::Count: return "COUNT";
    case FunctionKind::Quantile:
      os << "QUANTILE(" << parameter_ << ")";
      return os.str();
    case FunctionKind::Median: return "MEDIAN";
    case FunctionKind::MaxApprox:
      os << "MAX_APPROX(" << parameter_ << ")";
      return os.str();
    case FunctionKind::LinReg: return "LINREG";
    case FunctionKind::LogReg: return "LOGREG";
  }
  return "?";
}

void Evaluator::evaluate_group(const GroupColumns& group, ResultVector& out) {
  const std::size_t n = group.size();
  if (n == 0) throw EvaluationError(f_.name() + ": empty group");
  switch (f_.kind()) {
    case FunctionKind::Avg:
    case FunctionKind::Sum: {
      const auto v = group.column(f_.column());
      const double total = std::accumulate(v.begin(), v.end(), 0.0);
      out.push_back(f_.kind() == FunctionKind::Avg ? total / static_cast<double>(n) : total);
      return;
    }
    case FunctionKind::Var: {
      if (n < 2) throw EvaluationError("VAR: insufficient data");
      const auto v = group.column(f_.column());
      const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(n);
      double ss = 0.0;
      for (double x : v) ss += (x - mean) * (x - mean);
      out.push_back(ss / static_cast<double>(n - 1));
      return;
    }
    case FunctionKind::Proportion:
    case FunctionKind::Count: {
      const auto v = group.column(f_.predicate().column);
      std::size_t hits = 0;
      for (double x : v) hits += f_.predicate().test(x) ? 1 : 0;
      out.push_back(f_.kind() == FunctionKind::Proportion
                        ? static_cast<double>(hits) / static_cast<double>(n)
                        : static_cast<double>(hits));
      return;
    }
    case FunctionKind::Quantile:
    case FunctionKind::Median:
    case FunctionKind::MaxApprox: {
      const auto v = group.column(f_.column());
      scratch_.assign(v.begin(), v.end());
      const double q =
          f_.kind() == FunctionKind::MaxApprox ? 1.0 - f_.parameter() : f_.parameter();
      out.push_back(quantile_in_place(scratch_, q));
      return;
    }
    case FunctionKind::LinReg:
      fit_linreg(f_, group, out);
      return;
    case FunctionKind::LogReg:
      fit_logreg(f_, group, out);
      return;
  }
}

void Evaluator::evaluate_into(std::span<const GroupColumns> groups, ResultVector& out) {
  out.clear();
  if (groups.empty()) throw EvaluationError("no groups to evaluate");
  if (f_.is_regression() && groups.size() != 1)
    throw EvaluationError(f_.name() + " supports single-group queries only");
  for (const auto& g : groups) evaluate_group(g, out);
}

ResultVector evaluate(const AnalyticalFunction& f, std::span<const GroupColumns> groups) {
  Evaluator ev(f);
  ResultVector out;
  ev.evaluate_into(groups, out);
  return out;
}

TransformedFunction transform_inconsistent(const AnalyticalFunction& f,
                                           std::span<const std::size_t> group_sizes) {
  std::vector<double> scales(group_sizes.begin(), group_sizes.end());
  switch (f.kind()) {
    case FunctionKind::Sum:
      return {AnalyticalFunction::avg(f.column()), std::move(scales)};
    case FunctionKind::Count:
      return {AnalyticalFunction::proportion(f.predicate()), std::move(scales)};
    default:
      throw InvalidArgument(f.name() + " is already consistent");
  }
}

double quantile_in_place(std::span<double> values, double q) {
  if (values.empty()) throw EvaluationError("quantile of empty input");
  const std::size_t rank = quantile_rank(q, values.size());
  auto nth = values.begin() + static_cast<std::ptrdiff_t>(rank - 1);
  std::nth_element(values.begin(), nth, values.end());
  return *nth;
}

double max_approx(std::span<const double> values, double alpha) {
  if (!(alpha > 0.0 && alpha < 0.5)) throw InvalidArgument("MAX_APPROX requires alpha in (0, 0.5)");
  if (values.empty()) throw InvalidArgument("MAX_APPROX of empty input");
  std::vector<double> copy(values.begin(), values.end());
  return quantile_in_place(copy, 1.0 - alpha);
}

}  // namespace miss
