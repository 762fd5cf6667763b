#include "gmmdnn/core/gmm.hpp"

#include <algorithm>
#include <limits>
#include <memory>
#include <numbers>
#include <utility>

namespace gmmdnn {
namespace {

constexpr double kSymmetryTol = 1e-12;
constexpr double kEigenFloor = 1e-12;
constexpr double kFactorTol = 1e-8;
constexpr double kProbabilityTol = 1e-12;

// Shared immutable data behind a sampler closure.
struct MixtureDraw {
  std::vector<Vector> means;
  std::vector<Matrix> chols;
  std::vector<double> cumulative;  // cumulative weights, last == 1
  std::vector<std::size_t> ids;

  std::size_t pick(double u) const {
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
    const auto i = static_cast<std::size_t>(it - cumulative.begin());
    return std::min(i, cumulative.size() - 1);
  }

  void draw(Rng& rng, std::size_t local, RowRef out) const {
    const auto n = means[local].size();
    Vector z(n);
    for (Eigen::Index i = 0; i < n; ++i) z[i] = rng.normal();
    out = (means[local] + chols[local].triangularView<Eigen::Lower>() * z).transpose();
  }
};

std::vector<double> cumulate(const std::vector<double>& w) {
  std::vector<double> c(w.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    acc += w[i];
    c[i] = acc;
  }
  for (auto& v : c) v /= acc;
  c.back() = 1.0;
  return c;
}

}  // namespace

double log_sum_exp(const double* values, std::size_t n) {
  double hi = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) hi = std::max(hi, values[i]);
  if (!std::isfinite(hi)) return hi;
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += std::exp(values[i] - hi);
  return hi + std::log(s);
}

GaussianComponent GaussianComponent::factor(Vector mean, Matrix covariance) {
  const auto n = mean.size();
  if (n < 1) throw Error(ErrorCode::kDimensionMismatch, "component dimension must be >= 1");
  if (covariance.rows() != n || covariance.cols() != n) {
    throw Error(ErrorCode::kDimensionMismatch,
                "covariance must be " + std::to_string(n) + "x" + std::to_string(n));
  }
  if (!mean.allFinite() || !covariance.allFinite()) {
    throw Error(ErrorCode::kNotPositiveDefinite, "mean/covariance contain non-finite entries");
  }
  const double asym = (covariance - covariance.transpose()).cwiseAbs().maxCoeff();
  if (asym > kSymmetryTol) {
    throw Error(ErrorCode::kNotPositiveDefinite,
                "covariance is not symmetric (max asymmetry " + format_double(asym) + ")");
  }

  Eigen::SelfAdjointEigenSolver<Matrix> eig(covariance, Eigen::EigenvaluesOnly);
  const double lo = eig.eigenvalues().minCoeff();
  const double hi = eig.eigenvalues().maxCoeff();
  if (!(hi > 0.0) || !(lo > kEigenFloor * hi)) {
    throw Error(ErrorCode::kNotPositiveDefinite,
                "covariance eigenvalues not bounded away from zero (min " + format_double(lo) +
                    ", max " + format_double(hi) + ")");
  }

  Eigen::LLT<Matrix> llt(covariance);
  if (llt.info() != Eigen::Success) {
    throw Error(ErrorCode::kNotPositiveDefinite, "Cholesky factorization failed");
  }

  GaussianComponent c;
  c.chol_ = llt.matrixL();
  c.factor_ = c.chol_.triangularView<Eigen::Lower>().solve(Matrix::Identity(n, n));
  c.log_det_ = 2.0 * c.chol_.diagonal().array().log().sum();
  c.eig_min_ = lo;
  c.eig_max_ = hi;

  const Matrix check = c.factor_.transpose() * c.factor_ * covariance - Matrix::Identity(n, n);
  if (check.cwiseAbs().maxCoeff() > kFactorTol) {
    throw Error(ErrorCode::kNotPositiveDefinite,
                "covariance too ill-conditioned: |A^T A Sigma - I| = " +
                    format_double(check.cwiseAbs().maxCoeff()));
  }
  c.mean_ = std::move(mean);
  c.covariance_ = std::move(covariance);
  return c;
}

double GaussianComponent::quadratic(const Vector& x) const {
  require_dim(x.size(), dim(), "quadratic");
  const Vector y = chol_.triangularView<Eigen::Lower>().solve(x - mean_);
  return 0.5 * y.squaredNorm();
}

double GaussianComponent::log_density(const Vector& x) const {
  const double n = static_cast<double>(dim());
  return -0.5 * (n * std::log(2.0 * std::numbers::pi) + log_det_) - quadratic(x);
}

double eval_quadratic(const GaussianComponent& component, const Vector& x) {
  return component.quadratic(x);
}

Discriminant::Discriminant(std::size_t class_index, double prior, std::vector<Term> terms)
    : class_index_(class_index), prior_(prior), terms_(std::move(terms)) {
  if (terms_.empty()) throw Error(ErrorCode::kInvalidSpec, "discriminant has no components");
  for (const auto& t : terms_) {
    if (!std::isfinite(t.log_beta)) {
      throw Error(ErrorCode::kInvalidSpec, "non-finite log beta");
    }
  }
}

double Discriminant::log_value(const Vector& x) const {
  require_dim(x.size(), dim(), "discriminant input");
  std::vector<double> parts(terms_.size());
  for (std::size_t j = 0; j < terms_.size(); ++j) {
    parts[j] = terms_[j].log_beta - terms_[j].gaussian.quadratic(x);
  }
  return log_sum_exp(parts.data(), parts.size());
}

double Discriminant::value(const Vector& x) const { return std::exp(log_value(x)); }

BatchFn Discriminant::log_batch() const {
  auto self = std::make_shared<const Discriminant>(*this);
  return [self](const Matrix& points, Vector& out) {
    require_dim(points.cols(), self->dim(), "discriminant batch input");
    const auto rows = points.rows();
    const auto& terms = self->terms();
    Matrix parts(rows, static_cast<Eigen::Index>(terms.size()));
    for (std::size_t j = 0; j < terms.size(); ++j) {
      const auto& g = terms[j].gaussian;
      const Matrix centered = (points.rowwise() - g.mean().transpose()).transpose();
      const Matrix y = g.cholesky().triangularView<Eigen::Lower>().solve(centered);
      parts.col(static_cast<Eigen::Index>(j)) =
          terms[j].log_beta - 0.5 * y.colwise().squaredNorm().transpose().array();
    }
    out.resize(rows);
    std::vector<double> row(terms.size());
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (std::size_t j = 0; j < terms.size(); ++j) row[j] = parts(r, static_cast<Eigen::Index>(j));
      out[r] = log_sum_exp(row.data(), row.size());
    }
  };
}

BatchFn Discriminant::value_batch() const {
  BatchFn logs = log_batch();
  return [logs](const Matrix& points, Vector& out) {
    logs(points, out);
    out = out.array().exp();
  };
}

double eval_discriminant(const Discriminant& d, const Vector& x) { return d.value(x); }

GmmSpec GmmSpec::create(std::vector<GaussianComponent> components, std::vector<double> weights,
                        std::vector<ClassSpec> classes) {
  if (components.empty()) throw Error(ErrorCode::kInvalidSpec, "spec has no components");
  if (classes.empty()) throw Error(ErrorCode::kInvalidSpec, "spec has no classes");
  if (weights.size() != components.size()) {
    throw Error(ErrorCode::kInvalidSpec, "one within-class weight per component required");
  }
  const auto n = components.front().dim();
  for (std::size_t j = 0; j < components.size(); ++j) {
    if (components[j].dim() != n) {
      throw Error(ErrorCode::kDimensionMismatch,
                  "component " + std::to_string(j) + " has dimension " +
                      std::to_string(components[j].dim()) + ", expected " + std::to_string(n));
    }
  }

  GmmSpec spec;
  spec.component_class_.assign(components.size(), components.size());
  double prior_sum = 0.0;
  for (std::size_t i = 0; i < classes.size(); ++i) {
    const auto& cls = classes[i];
    const std::string where = "/classes/" + std::to_string(i);
    if (!(cls.prior > 0.0) || !std::isfinite(cls.prior)) {
      throw Error(ErrorCode::kInvalidSpec, "class prior must be > 0", where + "/prior");
    }
    prior_sum += cls.prior;
    if (cls.components.empty()) {
      throw Error(ErrorCode::kInvalidSpec, "class has no components", where + "/components");
    }
    double wsum = 0.0;
    for (std::size_t j : cls.components) {
      if (j >= components.size()) {
        throw Error(ErrorCode::kInvalidSpec, "component index out of range", where);
      }
      if (spec.component_class_[j] != components.size()) {
        throw Error(ErrorCode::kInvalidSpec,
                    "component " + std::to_string(j) + " assigned to more than one class", where);
      }
      spec.component_class_[j] = i;
      if (!(weights[j] > 0.0) || !std::isfinite(weights[j])) {
        throw Error(ErrorCode::kInvalidSpec, "component weight must be > 0", where);
      }
      wsum += weights[j];
    }
    if (std::abs(wsum - 1.0) > kProbabilityTol) {
      throw Error(ErrorCode::kInvalidSpec,
                  "within-class weights sum to " + format_double(wsum) + ", expected 1", where);
    }
  }
  if (std::abs(prior_sum - 1.0) > kProbabilityTol) {
    throw Error(ErrorCode::kInvalidSpec,
                "class priors sum to " + format_double(prior_sum) + ", expected 1", "/classes");
  }
  for (std::size_t j = 0; j < components.size(); ++j) {
    if (spec.component_class_[j] == components.size()) {
      throw Error(ErrorCode::kInvalidSpec,
                  "component " + std::to_string(j) + " not assigned to any class");
    }
  }
  spec.components_ = std::move(components);
  spec.weights_ = std::move(weights);
  spec.classes_ = std::move(classes);
  return spec;
}

double GmmSpec::omega_min() const {
  double v = std::numeric_limits<double>::infinity();
  for (const auto& c : components_) v = std::min(v, c.min_eigenvalue());
  return v;
}

double GmmSpec::omega_max() const {
  double v = 0.0;
  for (const auto& c : components_) v = std::max(v, c.max_eigenvalue());
  return v;
}

double GmmSpec::class_omega_max(std::size_t cls) const {
  double v = 0.0;
  for (std::size_t j : classes_.at(cls).components) v = std::max(v, components_[j].max_eigenvalue());
  return v;
}

Discriminant GmmSpec::discriminant(std::size_t cls) const {
  if (cls >= classes_.size()) {
    throw Error(ErrorCode::kInvalidArgument, "class index " + std::to_string(cls) + " out of range");
  }
  const auto& c = classes_[cls];
  const double n = static_cast<double>(dim());
  std::vector<Discriminant::Term> terms;
  terms.reserve(c.components.size());
  for (std::size_t j : c.components) {
    const auto& g = components_[j];
    const double log_gamma = -0.5 * (n * std::log(2.0 * std::numbers::pi) + g.log_det());
    terms.push_back({j, std::log(c.prior) + std::log(weights_[j]) + log_gamma, g});
  }
  return Discriminant(cls, c.prior, std::move(terms));
}

double GmmSpec::log_mixture_density(const Vector& x) const {
  std::vector<double> parts(classes_.size());
  for (std::size_t i = 0; i < classes_.size(); ++i) parts[i] = discriminant(i).log_value(x);
  return log_sum_exp(parts.data(), parts.size());
}

Sampler GmmSpec::class_sampler(std::size_t cls) const {
  const auto& c = classes_.at(cls);
  auto data = std::make_shared<MixtureDraw>();
  std::vector<double> w;
  for (std::size_t j : c.components) {
    data->means.push_back(components_[j].mean());
    data->chols.push_back(components_[j].cholesky());
    data->ids.push_back(j);
    w.push_back(weights_[j]);
  }
  data->cumulative = cumulate(w);
  Sampler s;
  s.dim = dim();
  s.draw = [data](Rng& rng, RowRef out) {
    const std::size_t local = data->means.size() == 1 ? 0 : data->pick(rng.uniform());
    data->draw(rng, local, out);
  };
  return s;
}

Sampler GmmSpec::mixture_sampler() const {
  auto data = std::make_shared<MixtureDraw>();
  std::vector<double> w;
  for (const auto& c : classes_) {
    for (std::size_t j : c.components) {
      data->means.push_back(components_[j].mean());
      data->chols.push_back(components_[j].cholesky());
      data->ids.push_back(j);
      w.push_back(c.prior * weights_[j]);
    }
  }
  data->cumulative = cumulate(w);
  Sampler s;
  s.dim = dim();
  s.draw = [data](Rng& rng, RowRef out) {
    data->draw(rng, data->pick(rng.uniform()), out);
  };
  return s;
}

std::size_t bayes_classify(const GmmSpec& spec, const Vector& x) {
  require_dim(x.size(), spec.dim(), "classifier input");
  std::size_t best = 0;
  double best_v = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < spec.num_classes(); ++i) {
    const double v = spec.discriminant(i).log_value(x);
    if (v > best_v) {
      best_v = v;
      best = i;
    }
  }
  return best;
}

Samples sample(const GmmSpec& spec, std::size_t count, std::uint64_t seed) {
  if (count < 1) throw Error(ErrorCode::kInvalidArgument, "sample count must be >= 1");
  const auto n = spec.dim();
  std::vector<double> priors;
  for (const auto& c : spec.classes()) priors.push_back(c.prior);
  const auto class_cum = cumulate(priors);
  std::vector<std::vector<double>> comp_cum;
  for (const auto& c : spec.classes()) {
    std::vector<double> w;
    for (std::size_t j : c.components) w.push_back(spec.weights()[j]);
    comp_cum.push_back(cumulate(w));
  }
  auto pick = [](const std::vector<double>& cum, double u) {
    auto it = std::upper_bound(cum.begin(), cum.end(), u);
    return std::min(static_cast<std::size_t>(it - cum.begin()), cum.size() - 1);
  };

  Samples out;
  out.points.resize(static_cast<Eigen::Index>(count), n);
  out.component.resize(count);
  out.cls.resize(count);
  run_blocks<int>(count, seed, 0x5a3b1e, [&](Rng& rng, std::size_t begin, std::size_t end) {
    Vector z(n);
    for (std::size_t r = begin; r < end; ++r) {
      const std::size_t cls = pick(class_cum, rng.uniform());
      const auto& members = spec.classes()[cls].components;
      const std::size_t j = members[pick(comp_cum[cls], rng.uniform())];
      for (Eigen::Index i = 0; i < n; ++i) z[i] = rng.normal();
      const auto& g = spec.components()[j];
      out.points.row(static_cast<Eigen::Index>(r)) =
          (g.mean() + g.cholesky().triangularView<Eigen::Lower>() * z).transpose();
      out.component[r] = j;
      out.cls[r] = cls;
    }
    return 0;
  });
  return out;
}

}  // namespace gmmdnn
