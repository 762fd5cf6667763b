#include "gmmdnn/core/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

namespace gmmdnn {
namespace {

constexpr std::uint64_t kVerifyStream = 0xd9;
constexpr std::uint64_t kInflatedStream = 0x1e2;
constexpr std::uint64_t kTailStream = 0x7a1;
constexpr std::uint64_t kConfusionStream = 0xe0;

struct DqPartial {
  std::size_t n = 0;
  std::size_t members = 0;
  std::size_t excluded = 0;
  std::size_t c1 = 0;
  std::size_t c2 = 0;
  double rel_max = 0.0;
  double rel_sum = 0.0;
  double out_max = -std::numeric_limits<double>::infinity();
  double out_min = std::numeric_limits<double>::infinity();
};

std::size_t argmax_row(const Matrix& scores, Eigen::Index r) {
  Eigen::Index best = 0;
  for (Eigen::Index c = 1; c < scores.cols(); ++c) {
    if (scores(r, c) > scores(r, best)) best = c;
  }
  return static_cast<std::size_t>(best);
}

Estimate count_hits(const Sampler& sampler, std::size_t count, std::uint64_t seed,
                    std::uint64_t stream, const std::function<std::size_t(const Matrix&)>& hits) {
  auto parts = run_blocks<std::size_t>(count, seed, stream,
                                       [&](Rng& rng, std::size_t begin, std::size_t end) {
                                         const Matrix pts = sampler.draw_block(
                                             rng, static_cast<Eigen::Index>(end - begin));
                                         return hits(pts);
                                       });
  std::size_t total = 0;
  for (auto h : parts) total += h;
  return proportion(total, count);
}

}  // namespace

ApproxReport verify_dq(const BatchFn& log_d_exact, const BatchFn& d_hat, const Sampler& p,
                       double t, double delta, double q, std::size_t count, std::uint64_t seed) {
  if (!(t > 0.0) || !std::isfinite(t)) throw Error(ErrorCode::kInvalidArgument, "t must be > 0");
  if (count < 1000) throw Error(ErrorCode::kInvalidArgument, "need at least 1000 samples");
  if (!(delta >= 0.0)) throw Error(ErrorCode::kDeltaOutOfRange, "delta must be >= 0");
  const double log_t = std::log(t);
  const double upper = (1.0 + delta) * t;

  auto parts = run_blocks<DqPartial>(
      count, seed, kVerifyStream, [&](Rng& rng, std::size_t begin, std::size_t end) {
        const Matrix pts = p.draw_block(rng, static_cast<Eigen::Index>(end - begin));
        Vector ld, dh;
        log_d_exact(pts, ld);
        d_hat(pts, dh);
        DqPartial part;
        for (Eigen::Index i = 0; i < pts.rows(); ++i) {
          ++part.n;
          if (std::abs(ld[i] - log_t) <= kBoundaryBand * std::max(1.0, std::abs(log_t))) {
            ++part.excluded;
            if (ld[i] >= log_t) ++part.members;
            continue;
          }
          if (ld[i] >= log_t) {
            ++part.members;
            const double d = std::exp(ld[i]);
            const double rel = std::abs(dh[i] - d) / d;
            part.rel_max = std::max(part.rel_max, rel);
            part.rel_sum += rel;
            if (!(rel <= delta + kConditionSlack)) ++part.c1;
          } else {
            part.out_max = std::max(part.out_max, dh[i]);
            part.out_min = std::min(part.out_min, dh[i]);
            if (!(dh[i] <= upper * (1.0 + kConditionSlack) && dh[i] >= -kConditionSlack * upper)) {
              ++part.c2;
            }
          }
        }
        return part;
      });

  ApproxReport r;
  r.delta = delta;
  r.q = q;
  r.t = t;
  r.count = count;
  DqPartial total;
  std::size_t checked_members = 0;
  for (const auto& part : parts) {
    total.members += part.members;
    total.excluded += part.excluded;
    total.c1 += part.c1;
    total.c2 += part.c2;
    total.rel_max = std::max(total.rel_max, part.rel_max);
    total.rel_sum += part.rel_sum;
    total.out_max = std::max(total.out_max, part.out_max);
    total.out_min = std::min(total.out_min, part.out_min);
  }
  checked_members = total.members;
  r.in_set = proportion(total.members, count);
  r.max_rel_error = total.rel_max;
  r.mean_rel_error = checked_members ? total.rel_sum / static_cast<double>(checked_members) : 0.0;
  r.max_outside = std::isfinite(total.out_max) ? total.out_max : 0.0;
  r.min_outside = std::isfinite(total.out_min) ? total.out_min : 0.0;
  r.cond1_violations = total.c1;
  r.cond2_violations = total.c2;
  r.boundary_excluded = total.excluded;
  r.pass = total.c1 == 0 && total.c2 == 0;
  r.coverage_ok = r.in_set.mean >= 1.0 - q - 3.0 * r.in_set.std_error;
  return r;
}

double relative_l2_epsilon(double delta, double q) {
  if (!(q >= 0.0 && q < 1.0)) {
    throw Error(ErrorCode::kQOutOfRange, "q must lie in [0, 1), got " + format_double(q));
  }
  if (!(delta >= 0.0) || !std::isfinite(delta)) {
    throw Error(ErrorCode::kDeltaOutOfRange, "delta must be >= 0, got " + format_double(delta));
  }
  return delta * delta + (1.0 + delta) * (1.0 + delta) * q / (1.0 - q);
}

double error_upper_bound(double e_opt_inflated, double q, double tail_prob) {
  for (double v : {e_opt_inflated, q, tail_prob}) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw Error(ErrorCode::kInvalidArgument, "bound terms must lie in [0, 1]");
    }
  }
  return std::clamp(e_opt_inflated + q + tail_prob, 0.0, 1.0);
}

Estimate e21_opt_inflated(const BatchFn& log_d1, const BatchFn& log_d2, const Sampler& class1,
                          double alpha, std::size_t count, std::uint64_t seed) {
  if (!(alpha >= 1.0)) throw Error(ErrorCode::kInvalidArgument, "alpha must be >= 1");
  const double log_alpha = std::log(alpha);
  return count_hits(class1, count, seed, kInflatedStream, [&](const Matrix& pts) {
    Vector l1, l2;
    log_d1(pts, l1);
    log_d2(pts, l2);
    std::size_t h = 0;
    for (Eigen::Index i = 0; i < pts.rows(); ++i) h += l2[i] > l1[i] - log_alpha ? 1 : 0;
    return h;
  });
}

Estimate superlevel_tail(const BatchFn& log_d1, const Sampler& class1, double level,
                         std::size_t count, std::uint64_t seed) {
  if (!(level > 0.0)) throw Error(ErrorCode::kInvalidArgument, "level must be > 0");
  const double log_level = std::log(level);
  return count_hits(class1, count, seed, kTailStream, [&](const Matrix& pts) {
    Vector l1;
    log_d1(pts, l1);
    std::size_t h = 0;
    for (Eigen::Index i = 0; i < pts.rows(); ++i) h += l1[i] < log_level ? 1 : 0;
    return h;
  });
}

ScoreFn bayes_scores(const GmmSpec& spec) {
  std::vector<BatchFn> fns;
  for (std::size_t c = 0; c < spec.num_classes(); ++c) fns.push_back(spec.discriminant(c).log_batch());
  return [fns](const Matrix& points) {
    Matrix s(points.rows(), static_cast<Eigen::Index>(fns.size()));
    Vector v;
    for (std::size_t c = 0; c < fns.size(); ++c) {
      fns[c](points, v);
      s.col(static_cast<Eigen::Index>(c)) = v;
    }
    return s;
  };
}

ScoreFn network_scores(const FeedforwardNet& net) {
  auto self = std::make_shared<const FeedforwardNet>(net);
  return [self](const Matrix& points) { return self->eval_batch(points); };
}

ConfusionReport empirical_error(const ScoreFn& classifier, const GmmSpec& spec,
                                const std::vector<std::size_t>& per_class_counts,
                                std::uint64_t seed) {
  const std::size_t c = spec.num_classes();
  if (per_class_counts.size() != c) {
    throw Error(ErrorCode::kDimensionMismatch, "need one sample count per class");
  }
  ConfusionReport r;
  r.counts.assign(c, std::vector<std::size_t>(c, 0));
  r.rates.assign(c, std::vector<Estimate>(c));
  r.per_class = per_class_counts;
  double var = 0.0;
  for (std::size_t truth = 0; truth < c; ++truth) {
    const std::size_t count = per_class_counts[truth];
    if (count < 1000) throw Error(ErrorCode::kInvalidArgument, "need at least 1000 samples per class");
    const Sampler sampler = spec.class_sampler(truth);
    auto parts = run_blocks<std::vector<std::size_t>>(
        count, seed, kConfusionStream + truth, [&](Rng& rng, std::size_t begin, std::size_t end) {
          const Matrix pts = sampler.draw_block(rng, static_cast<Eigen::Index>(end - begin));
          const Matrix scores = classifier(pts);
          if (scores.rows() != pts.rows() || scores.cols() != static_cast<Eigen::Index>(c)) {
            throw Error(ErrorCode::kDimensionMismatch, "classifier must return one score per class");
          }
          std::vector<std::size_t> tally(c, 0);
          for (Eigen::Index i = 0; i < pts.rows(); ++i) ++tally[argmax_row(scores, i)];
          return tally;
        });
    for (const auto& part : parts) {
      for (std::size_t k = 0; k < c; ++k) r.counts[truth][k] += part[k];
    }
    for (std::size_t k = 0; k < c; ++k) r.rates[truth][k] = proportion(r.counts[truth][k], count);
    const double prior = spec.classes()[truth].prior;
    const Estimate& correct = r.rates[truth][truth];
    r.total_error += prior * (1.0 - correct.mean);
    var += prior * prior * correct.std_error * correct.std_error;
  }
  r.total_error_se = std::sqrt(var);
  return r;
}

}  // namespace gmmdnn
