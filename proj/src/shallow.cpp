#include "gmmdnn/core/shallow.hpp"

#include <cmath>
#include <limits>

namespace gmmdnn {
namespace {

constexpr std::uint64_t kSnnStream = 0xc05e;
constexpr std::uint64_t kL2Stream = 0x12e5;
constexpr std::uint64_t kRmsStream = 0x7a5;

}  // namespace

void ShallowProblem::validate() const {
  if (n < 1) throw Error(ErrorCode::kInvalidArgument, "n must be >= 1");
  if (!(s_x > 0.0) || !(s_f > 0.0) || !std::isfinite(s_x) || !std::isfinite(s_f)) {
    throw Error(ErrorCode::kInvalidArgument, "s_x and s_f must be finite and > 0");
  }
  if (n1 < 1) throw Error(ErrorCode::kInvalidArgument, "n1 must be >= 1");
  if (!(a_norm >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "|a| must be >= 0");
}

double log_mu_c(const ShallowProblem& p, const Vector& x) {
  require_dim(x.size(), p.n, "mu_c input");
  return static_cast<double>(p.n) / 4.0 * std::log(p.alpha()) - x.squaredNorm() / (2.0 * p.s_f);
}

double eval_mu_c(const ShallowProblem& p, const Vector& x) { return std::exp(log_mu_c(p, x)); }

BatchFn mu_c_batch(const ShallowProblem& p) {
  const double lead = static_cast<double>(p.n) / 4.0 * std::log(p.alpha());
  const double s_f = p.s_f;
  const Eigen::Index n = p.n;
  return [lead, s_f, n](const Matrix& points, Vector& out) {
    require_dim(points.cols(), n, "mu_c batch input");
    out = (lead - points.rowwise().squaredNorm().array() / (2.0 * s_f)).exp().matrix();
  };
}

Sampler shallow_sampler(const ShallowProblem& p) {
  Sampler s;
  s.dim = p.n;
  const double sd = std::sqrt(p.s_x);
  s.draw = [sd](Rng& rng, RowRef out) {
    for (Eigen::Index i = 0; i < out.size(); ++i) out[i] = sd * rng.normal();
  };
  return s;
}

ShallowBoundReport eval_lower_bound(const ShallowProblem& p, double epsilon) {
  p.validate();
  ShallowBoundReport r;
  r.alpha = p.alpha();
  r.rho = p.rho();
  const double quarter_n = static_cast<double>(p.n) / 4.0;
  r.rate = std::exp(quarter_n * std::log(r.rho));
  const double c = std::pow(1.0 + p.s_x / p.s_f, 0.25);
  const double root_n1 = std::sqrt(static_cast<double>(p.n1));
  r.bound = 1.0 - 2.0 * root_n1 * p.a_norm * c * std::exp(-quarter_n * std::log(r.rho));
  r.m1 = r.rho;
  r.m2 = r.alpha * r.alpha;
  r.epsilon = epsilon;
  r.A = p.a_norm / root_n1;
  r.min_n1 = r.A > 0.0 ? (1.0 - epsilon) * r.rate / (2.0 * r.A * c)
                       : std::numeric_limits<double>::infinity();
  return r;
}

FeedforwardNet build_cosine_snn(const ShallowProblem& p, std::uint64_t seed) {
  p.validate();
  const auto n1 = static_cast<Eigen::Index>(p.n1);
  Rng rng(seed, kSnnStream);
  Matrix w(n1, p.n);
  for (Eigen::Index i = 0; i < n1; ++i) {
    for (Eigen::Index c = 0; c < p.n; ++c) w(i, c) = rng.normal();
  }
  const double coef =
      std::exp(static_cast<double>(p.n) / 4.0 * std::log(p.alpha())) / static_cast<double>(p.n1);
  std::vector<Layer> layers;
  layers.push_back({std::move(w), Vector::Zero(n1), Activation::cosine(p.s_f)});
  layers.push_back({Matrix::Constant(1, n1, coef), Vector::Zero(1),
                    Activation::of(ActivationTag::kIdentity)});
  NetMetadata meta;
  meta.provenance = "cosine-snn";
  meta.notes.push_back("seed " + std::to_string(seed));
  return FeedforwardNet(p.n, std::move(layers), std::move(meta));
}

L2Estimate estimate_l2_error(const BatchFn& f, const BatchFn& g, const Sampler& sampler,
                             std::size_t count, std::uint64_t seed) {
  if (count < 100) throw Error(ErrorCode::kInvalidArgument, "need at least 100 samples");
  auto parts = run_blocks<PairMoments>(
      count, seed, kL2Stream, [&](Rng& rng, std::size_t begin, std::size_t end) {
        const Matrix pts = sampler.draw_block(rng, static_cast<Eigen::Index>(end - begin));
        Vector fv, gv;
        f(pts, fv);
        g(pts, gv);
        PairMoments m;
        for (Eigen::Index i = 0; i < pts.rows(); ++i) {
          const double e = fv[i] - gv[i];
          m.add(e * e, gv[i] * gv[i]);
        }
        return m;
      });
  PairMoments total;
  for (const auto& part : parts) total.merge(part);
  L2Estimate r;
  r.mse = to_estimate(total.x());
  r.target_ms = to_estimate(total.y());
  r.ratio = total.mean_y > 0.0 ? total.mean_x / total.mean_y : 0.0;
  r.ratio_se = total.ratio_std_error();
  return r;
}

NormalizedSnn normalize_snn(const FeedforwardNet& net, const Sampler& sampler,
                            std::size_t count, std::uint64_t seed) {
  if (net.layers().size() != 2 || net.output_dim() != 1 ||
      net.layers()[1].activation.tag != ActivationTag::kIdentity) {
    throw Error(ErrorCode::kInvalidArgument,
                "expected one hidden layer and a single Identity output");
  }
  require_dim(sampler.dim, net.input_dim(), "sampler");
  const Layer& hidden = net.layers()[0];
  const Layer& out = net.layers()[1];
  const Eigen::Index n1 = hidden.width();

  auto parts = run_blocks<std::vector<Moments>>(
      count, seed, kRmsStream, [&](Rng& rng, std::size_t begin, std::size_t end) {
        const Matrix pts = sampler.draw_block(rng, static_cast<Eigen::Index>(end - begin));
        Matrix h = pts * hidden.weights.transpose();
        h.rowwise() += hidden.bias.transpose();
        hidden.activation.apply(h);
        std::vector<Moments> m(static_cast<std::size_t>(n1));
        for (Eigen::Index i = 0; i < n1; ++i) {
          for (Eigen::Index r = 0; r < h.rows(); ++r) m[static_cast<std::size_t>(i)].add(h(r, i) * h(r, i));
        }
        return m;
      });
  std::vector<Moments> second(static_cast<std::size_t>(n1));
  for (const auto& part : parts) {
    for (std::size_t i = 0; i < part.size(); ++i) second[i].merge(part[i]);
  }

  NormalizedSnn s;
  const bool has_bias = out.bias[0] != 0.0;
  s.nodes = static_cast<std::size_t>(n1) + (has_bias ? 1 : 0);
  s.directions = Matrix::Zero(n1, net.input_dim());
  s.a = Vector::Zero(static_cast<Eigen::Index>(s.nodes));
  for (Eigen::Index i = 0; i < n1; ++i) {
    const double norm = hidden.weights.row(i).norm();
    s.arg_scale.push_back(norm);
    if (norm > 0.0) s.directions.row(i) = hidden.weights.row(i) / norm;
    else s.directions(i, 0) = 1.0;
    const double rms = std::sqrt(second[static_cast<std::size_t>(i)].mean);
    s.rms.push_back(rms);
    s.a[i] = out.weights(0, i) * rms;
  }
  if (has_bias) s.a[n1] = out.bias[0];
  s.a_norm = s.a.norm();
  return s;
}

ConsistencyReport check_lower_bound(const FeedforwardNet& net, const ShallowProblem& p,
                                    std::size_t count, std::uint64_t seed) {
  p.validate();
  require_dim(net.input_dim(), p.n, "network input");
  const Sampler sampler = shallow_sampler(p);
  ConsistencyReport r;
  r.error = estimate_l2_error(net.output_batch(0), mu_c_batch(p), sampler, count, seed);
  r.normalized = normalize_snn(net, sampler, count, seed);
  ShallowProblem q = p;
  q.n1 = r.normalized.nodes;
  q.a_norm = r.normalized.a_norm;
  r.bound = eval_lower_bound(q);
  r.consistent = r.error.mse.mean >= r.bound.bound - 3.0 * r.error.mse.std_error;
  return r;
}

}  // namespace gmmdnn
