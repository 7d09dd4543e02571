// Apache License, Version 2.0, refer to LICENSE.txt

#include "biaslens/core_math.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "biaslens/error.hpp"

namespace biaslens {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid_argument";
    case ErrorCode::kDegenerate: return "degenerate_distribution";
    case ErrorCode::kNumeric: return "numeric_error";
    case ErrorCode::kSchema: return "schema_violation";
    case ErrorCode::kNotFound: return "not_found";
    case ErrorCode::kSequencing: return "sequencing_error";
    case ErrorCode::kLoad: return "load_error";
    case ErrorCode::kTooLarge: return "model_space_too_large";
  }
  return "unknown";
}

namespace {

// Largest entry; throws on empty, all -inf, or non-finite input.
double checked_max(std::span<const double> values) {
  if (values.empty()) {
    throw Error(ErrorCode::kDegenerate, "degenerate distribution: no values");
  }
  const double top = *std::max_element(values.begin(), values.end());
  if (top == -std::numeric_limits<double>::infinity()) {
    throw Error(ErrorCode::kDegenerate,
                "degenerate distribution: every entry is -inf");
  }
  if (std::isnan(top) || std::isinf(top)) {
    throw Error(ErrorCode::kNumeric, "log_sum_exp on non-finite input");
  }
  return top;
}

}  // namespace

double log_sum_exp(std::span<const double> values) {
  const double top = checked_max(values);
  double acc = 0.0;
  for (double v : values) acc += std::exp(v - top);
  return top + std::log(acc);
}

void exp_normalize(std::span<double> log_weights) {
  const double top = checked_max(log_weights);
  double acc = 0.0;
  for (double& w : log_weights) {
    w = std::exp(w - top);
    acc += w;
  }
  for (double& w : log_weights) w /= acc;
}

void NiwPrior::validate() const {
  const auto p = static_cast<Eigen::Index>(dim());
  if (p == 0) throw Error(ErrorCode::kInvalidArgument, "NIW prior has dimension 0");
  if (psi0.rows() != p || psi0.cols() != p) {
    throw Error(ErrorCode::kInvalidArgument, "NIW scale matrix shape mismatch");
  }
  if (!(kappa0 > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "kappa0 must be positive");
  }
  if (!(nu0 > static_cast<double>(p) + 1.0)) {
    throw Error(ErrorCode::kInvalidArgument,
                "nu0 must exceed dimension + 1 for the predictive to exist");
  }
  if (!psi0.isApprox(psi0.transpose(), 1e-12)) {
    throw Error(ErrorCode::kInvalidArgument, "psi0 must be symmetric");
  }
  if (Eigen::LLT<Matrix>(psi0).info() != Eigen::Success) {
    throw Error(ErrorCode::kInvalidArgument, "psi0 must be positive definite");
  }
}

NiwPrior NiwPrior::slice(std::span<const int> coords) const {
  NiwPrior out;
  const auto p = static_cast<Eigen::Index>(coords.size());
  out.mean0.resize(p);
  out.psi0.resize(p, p);
  for (Eigen::Index i = 0; i < p; ++i) {
    out.mean0(i) = mean0(coords[i]);
    for (Eigen::Index j = 0; j < p; ++j) out.psi0(i, j) = psi0(coords[i], coords[j]);
  }
  out.kappa0 = kappa0;
  out.nu0 = nu0;
  return out;
}

NiwPrior NiwPrior::isotropic(std::size_t dim, double kappa0, double nu0,
                             double psi_scale) {
  NiwPrior prior;
  const auto p = static_cast<Eigen::Index>(dim);
  prior.mean0 = Vector::Zero(p);
  prior.kappa0 = kappa0;
  prior.nu0 = nu0;
  prior.psi0 = psi_scale * Matrix::Identity(p, p);
  return prior;
}

GaussianStats::GaussianStats(std::size_t dim)
    : sum(Vector::Zero(static_cast<Eigen::Index>(dim))),
      scatter(Matrix::Zero(static_cast<Eigen::Index>(dim),
                           static_cast<Eigen::Index>(dim))) {}

void GaussianStats::add(const Vector& x) {
  if (x.size() != sum.size()) {
    throw Error(ErrorCode::kInvalidArgument, "observation dimension mismatch");
  }
  ++n;
  sum += x;
  scatter.noalias() += x * x.transpose();
}

void GaussianStats::add_all(const Matrix& rows) {
  if (rows.cols() != sum.size()) {
    throw Error(ErrorCode::kInvalidArgument, "observation dimension mismatch");
  }
  n += rows.rows();
  sum += rows.colwise().sum().transpose();
  scatter.noalias() += rows.transpose() * rows;
}

GaussianStats GaussianStats::slice(std::span<const int> coords) const {
  GaussianStats out(coords.size());
  out.n = n;
  const auto p = static_cast<Eigen::Index>(coords.size());
  for (Eigen::Index i = 0; i < p; ++i) {
    out.sum(i) = sum(coords[i]);
    for (Eigen::Index j = 0; j < p; ++j) out.scatter(i, j) = scatter(coords[i], coords[j]);
  }
  return out;
}

Vector GaussianStats::mean() const {
  if (n == 0) return Vector::Zero(sum.size());
  return sum / static_cast<double>(n);
}

Matrix GaussianStats::centered_scatter() const {
  if (n == 0) return Matrix::Zero(sum.size(), sum.size());
  Matrix s = scatter - (sum * sum.transpose()) / static_cast<double>(n);
  return 0.5 * (s + s.transpose());
}

StudentTParams niw_posterior(const NiwPrior& prior, const GaussianStats& stats,
                             std::span<const int> coords) {
  if (coords.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "empty continuous block");
  }
  const NiwPrior sp = prior.slice(coords);
  const GaussianStats ss = stats.slice(coords);
  const auto p = static_cast<double>(coords.size());
  const auto n = static_cast<double>(ss.n);

  const double kappa_n = sp.kappa0 + n;
  const double nu_n = sp.nu0 + n;
  const Vector xbar = ss.mean();
  Vector mean_n = (sp.kappa0 * sp.mean0 + n * xbar) / kappa_n;
  Matrix psi_n = sp.psi0;
  if (ss.n > 0) {
    const Vector diff = xbar - sp.mean0;
    psi_n += ss.centered_scatter() + (sp.kappa0 * n / kappa_n) * diff * diff.transpose();
  }

  StudentTParams out;
  out.dof = nu_n - p + 1.0;
  if (!(out.dof > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument,
                "predictive degrees of freedom must be positive");
  }
  out.location = std::move(mean_n);
  out.scale = psi_n * ((kappa_n + 1.0) / (kappa_n * out.dof));
  return out;
}

StudentTParams niw_posterior(const NiwPrior& prior, const GaussianStats& stats) {
  std::vector<int> all(prior.dim());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
  return niw_posterior(prior, stats, all);
}

StudentTDensity::StudentTDensity(StudentTParams params) : params_(std::move(params)) {
  const auto p = params_.location.size();
  if (params_.scale.rows() != p || params_.scale.cols() != p) {
    throw Error(ErrorCode::kInvalidArgument, "Student-t scale shape mismatch");
  }
  if (!(params_.dof > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "Student-t dof must be positive");
  }
  llt_.compute(params_.scale + kScaleJitter * Matrix::Identity(p, p));
  if (llt_.info() != Eigen::Success) {
    throw Error(ErrorCode::kNumeric, "Student-t scale is not positive definite");
  }
  const double nu = params_.dof;
  const double dim = static_cast<double>(p);
  const double log_det_half = llt_.matrixLLT().diagonal().array().log().sum();
  log_norm_ = std::lgamma(0.5 * (nu + dim)) - std::lgamma(0.5 * nu) -
              0.5 * dim * std::log(nu * std::numbers::pi) - log_det_half;
}

double StudentTDensity::log_pdf(const Vector& x) const {
  if (x.size() != params_.location.size()) {
    throw Error(ErrorCode::kInvalidArgument, "Student-t argument dimension mismatch");
  }
  const Vector z = llt_.matrixL().solve(x - params_.location);
  const double nu = params_.dof;
  const double dim = static_cast<double>(x.size());
  return log_norm_ - 0.5 * (nu + dim) * std::log1p(z.squaredNorm() / nu);
}

void StudentTDensity::log_pdf_columns(const Matrix& points, std::span<double> out) const {
  if (points.rows() != params_.location.size() ||
      static_cast<std::size_t>(points.cols()) != out.size()) {
    throw Error(ErrorCode::kInvalidArgument, "Student-t batch shape mismatch");
  }
  Matrix centred = points.colwise() - params_.location;
  llt_.matrixL().solveInPlace(centred);
  const double nu = params_.dof;
  const double half_power = 0.5 * (nu + static_cast<double>(points.rows()));
  for (Eigen::Index j = 0; j < centred.cols(); ++j) {
    out[static_cast<std::size_t>(j)] =
        log_norm_ - half_power * std::log1p(centred.col(j).squaredNorm() / nu);
  }
}

double student_t_log_pdf(const Vector& x, const StudentTParams& params) {
  return StudentTDensity(params).log_pdf(x);
}

DirichletState::DirichletState(std::size_t categories, double pseudocount)
    : alpha(categories, pseudocount), counts(categories, 0) {
  if (!(pseudocount > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "Dirichlet pseudocount must be positive");
  }
}

std::int64_t DirichletState::total() const {
  std::int64_t t = 0;
  for (auto c : counts) t += c;
  return t;
}

void DirichletState::observe(std::size_t category) {
  if (category >= counts.size()) {
    throw Error(ErrorCode::kSchema, "category index outside the schema domain");
  }
  ++counts[category];
}

double categorical_predictive(const DirichletState& state, std::size_t category) {
  if (category >= state.alpha.size()) {
    throw Error(ErrorCode::kSchema, "category index outside the schema domain",
                "category=" + std::to_string(category));
  }
  double denom = 0.0;
  for (std::size_t i = 0; i < state.alpha.size(); ++i) {
    denom += state.alpha[i] + static_cast<double>(state.counts[i]);
  }
  return (state.alpha[category] + static_cast<double>(state.counts[category])) / denom;
}

}  // namespace biaslens
