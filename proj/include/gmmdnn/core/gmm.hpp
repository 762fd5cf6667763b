#pragma once

#include "gmmdnn/core/common.hpp"
#include "gmmdnn/core/montecarlo.hpp"
#include "gmmdnn/core/rng.hpp"

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace gmmdnn {

// A Gaussian N(mean, covariance) with its factorizations cached.
//
// factor() returns A = L^{-1} where L L^T = covariance, so A^T A is the
// precision matrix. A is lower triangular, not symmetric; only the identity
// A^T A = covariance^{-1} matters for the quadratic form.
class GaussianComponent {
 public:
  // Validates symmetry (max |S - S^T| <= 1e-12) and positive definiteness
  // (smallest eigenvalue > 1e-12 * largest). Throws kNotPositiveDefinite or
  // kDimensionMismatch.
  static GaussianComponent factor(Vector mean, Matrix covariance);

  Eigen::Index dim() const { return mean_.size(); }
  const Vector& mean() const { return mean_; }
  const Matrix& covariance() const { return covariance_; }
  const Matrix& factor() const { return factor_; }
  const Matrix& cholesky() const { return chol_; }
  double log_det() const { return log_det_; }
  double min_eigenvalue() const { return eig_min_; }
  double max_eigenvalue() const { return eig_max_; }

  // g(x) = 1/2 (x - mu)^T Sigma^{-1} (x - mu), always >= 0.
  double quadratic(const Vector& x) const;
  // log N(x; mu, Sigma).
  double log_density(const Vector& x) const;

 private:
  GaussianComponent() = default;

  Vector mean_;
  Matrix covariance_;
  Matrix chol_;
  Matrix factor_;
  double log_det_ = 0.0;
  double eig_min_ = 0.0;
  double eig_max_ = 0.0;
};

double eval_quadratic(const GaussianComponent& component, const Vector& x);

// One class discriminant d(x) = sum_j beta_j exp(-g_j(x)) with
// beta_j = prior * w_j * |2 pi Sigma_j|^{-1/2}. The betas are held as logs.
class Discriminant {
 public:
  struct Term {
    std::size_t component = 0;  // index into the owning spec
    double log_beta = 0.0;
    GaussianComponent gaussian;
  };

  Discriminant(std::size_t class_index, double prior, std::vector<Term> terms);

  std::size_t class_index() const { return class_index_; }
  double prior() const { return prior_; }
  const std::vector<Term>& terms() const { return terms_; }
  Eigen::Index dim() const { return terms_.front().gaussian.dim(); }

  double log_value(const Vector& x) const;
  double value(const Vector& x) const;
  // log of the class-conditional mixture density d(x) / prior.
  double log_density(const Vector& x) const { return log_value(x) - std::log(prior_); }

  BatchFn log_batch() const;
  BatchFn value_batch() const;

 private:
  std::size_t class_index_;
  double prior_;
  std::vector<Term> terms_;
};

double eval_discriminant(const Discriminant& d, const Vector& x);

struct ClassSpec {
  double prior = 0.0;
  std::vector<std::size_t> components;
};

// A c-class problem whose classes are mixtures over a shared pool of k
// Gaussian components (each component belongs to exactly one class).
class GmmSpec {
 public:
  // Throws kInvalidSpec (priors/weights/partition) or kDimensionMismatch.
  static GmmSpec create(std::vector<GaussianComponent> components, std::vector<double> weights,
                        std::vector<ClassSpec> classes);

  Eigen::Index dim() const { return components_.front().dim(); }
  std::size_t num_components() const { return components_.size(); }
  std::size_t num_classes() const { return classes_.size(); }
  const std::vector<GaussianComponent>& components() const { return components_; }
  const std::vector<double>& weights() const { return weights_; }
  const std::vector<ClassSpec>& classes() const { return classes_; }

  // Eigenvalue extremes over every covariance.
  double omega_min() const;
  double omega_max() const;
  double class_omega_max(std::size_t cls) const;

  Discriminant discriminant(std::size_t cls) const;
  // log of the full mixture density p(x) = sum_i d_i(x).
  double log_mixture_density(const Vector& x) const;

  Sampler class_sampler(std::size_t cls) const;
  Sampler mixture_sampler() const;

 private:
  std::vector<GaussianComponent> components_;
  std::vector<double> weights_;
  std::vector<ClassSpec> classes_;
  std::vector<std::size_t> component_class_;
};

// argmax_i log d_i(x); ties go to the lowest class index.
std::size_t bayes_classify(const GmmSpec& spec, const Vector& x);

struct Samples {
  Matrix points;  // count x n
  std::vector<std::size_t> component;
  std::vector<std::size_t> cls;
};

// Draws class by prior, component by within-class weight, then mean + L z.
Samples sample(const GmmSpec& spec, std::size_t count, std::uint64_t seed);

double log_sum_exp(const double* values, std::size_t n);

}  // namespace gmmdnn
