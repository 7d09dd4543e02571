// Apache License, Version 2.0, refer to LICENSE.txt
//
// Conjugate-Bayesian primitives shared by every model in the model space:
// Normal-Inverse-Wishart updating with its multivariate Student-t posterior
// predictive, the Dirichlet-categorical predictive, and log-space helpers.
// Everything here is a pure function of its arguments.

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

namespace biaslens {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// Added to the diagonal of every scale matrix before factorization.
inline constexpr double kScaleJitter = 1e-9;

// log(sum(exp(v))). Entries may be -inf, but not all of them.
double log_sum_exp(std::span<const double> values);

// Normalizes log-weights in place into probabilities that sum to one.
void exp_normalize(std::span<double> log_weights);

struct NiwPrior {
  Vector mean0;
  double kappa0 = 1.0;
  double nu0 = 0.0;
  Matrix psi0;

  std::size_t dim() const { return static_cast<std::size_t>(mean0.size()); }

  // Throws Error(kInvalidArgument) unless kappa0 > 0, nu0 > dim + 1 and psi0
  // is symmetric positive definite.
  void validate() const;

  // Prior restricted to a coordinate block. Valid as a prior on its own when
  // psi0 is diagonal.
  NiwPrior slice(std::span<const int> coords) const;

  // Isotropic prior: mean0 = 0, psi0 = psi_scale * I.
  static NiwPrior isotropic(std::size_t dim, double kappa0, double nu0,
                            double psi_scale);
};

// Running sufficient statistics of a multivariate Gaussian sample: the
// count, the coordinate sums and the (uncentred) sum of outer products.
struct GaussianStats {
  std::int64_t n = 0;
  Vector sum;
  Matrix scatter;

  GaussianStats() = default;
  explicit GaussianStats(std::size_t dim);

  std::size_t dim() const { return static_cast<std::size_t>(sum.size()); }
  void add(const Vector& x);
  void add_all(const Matrix& rows);  // one observation per row
  GaussianStats slice(std::span<const int> coords) const;

  Vector mean() const;
  // Sum of squared deviations about the sample mean.
  Matrix centered_scatter() const;
};

struct StudentTParams {
  double dof = 1.0;
  Vector location;
  Matrix scale;
};

// Posterior predictive of the NIW model after `stats`, restricted to the
// coordinates in `coords`. With stats.n == 0 this is the prior predictive.
StudentTParams niw_posterior(const NiwPrior& prior, const GaussianStats& stats,
                             std::span<const int> coords);

// Same, over every coordinate of the prior.
StudentTParams niw_posterior(const NiwPrior& prior, const GaussianStats& stats);

double student_t_log_pdf(const Vector& x, const StudentTParams& params);

// A Student-t with its Cholesky factor and normalizing constant computed
// once, for scoring many points against the same predictive.
class StudentTDensity {
 public:
  explicit StudentTDensity(StudentTParams params);

  double log_pdf(const Vector& x) const;
  double log_normalizer() const { return log_norm_; }
  const StudentTParams& params() const { return params_; }

  // Log density of each column of `points` (dim x count) into `out`.
  void log_pdf_columns(const Matrix& points, std::span<double> out) const;

 private:
  StudentTParams params_;
  Eigen::LLT<Matrix> llt_;
  double log_norm_ = 0.0;
};

struct DirichletState {
  std::vector<double> alpha;
  std::vector<std::int64_t> counts;

  DirichletState() = default;
  DirichletState(std::size_t categories, double pseudocount);

  std::size_t size() const { return alpha.size(); }
  std::int64_t total() const;
  void observe(std::size_t category);
};

// (alpha_k + m_k) / sum_i (alpha_i + m_i)
double categorical_predictive(const DirichletState& state, std::size_t category);

}  // namespace biaslens
