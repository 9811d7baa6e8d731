#include "samo/weighting.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Dense>

#include "samo/errors.hpp"

namespace samo {

namespace {

void require_nonempty(std::span<const LayeredParams> gradients, const char* method) {
  if (gradients.empty()) throw ConfigError(std::string(method) + ": no gradients to combine");
}

LayeredParams weighted_sum(std::span<const LayeredParams> gradients, std::span<const double> w) {
  LayeredParams out = LayeredParams::zeros(gradients[0].shape());
  for (std::size_t i = 0; i < gradients.size(); ++i) out = axpy(w[i], gradients[i], out);
  return out;
}

}  // namespace

Combination LinearScalarization::combine(std::span<const LayeredParams> gradients, Rng&) const {
  require_nonempty(gradients, "ls");
  const std::size_t K = gradients.size();
  return {mean(gradients), std::vector<double>(K, 1.0 / static_cast<double>(K)), false};
}

double mgda_two_task_weight(const LayeredParams& g1, const LayeredParams& g2) {
  const LayeredParams diff = axpy(-1.0, g2, g1);
  const double denom = dot(diff, diff);
  if (denom == 0.0) return 0.5;
  return std::clamp(-dot(diff, g2) / denom, 0.0, 1.0);
}

MgdaResult mgda_combine(std::span<const LayeredParams> gradients, const MgdaOptions& options) {
  require_nonempty(gradients, "mgda");
  if (!(options.tol > 0.0)) throw ConfigError("mgda: tol must be positive");
  const std::size_t K = gradients.size();
  MgdaResult result;

  std::vector<double> w(K, 0.0);
  if (K == 1) {
    w[0] = 1.0;
  } else if (K == 2) {
    const double gamma = mgda_two_task_weight(gradients[0], gradients[1]);
    w = {gamma, 1.0 - gamma};
  } else {
    const auto n = static_cast<Eigen::Index>(K);
    Eigen::MatrixXd gram(n, n);
    for (std::size_t i = 0; i < K; ++i) {
      for (std::size_t j = i; j < K; ++j) {
        const double v = dot(gradients[i], gradients[j]);
        gram(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v;
        gram(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = v;
      }
    }
    if (!gram.allFinite()) throw NumericError("mgda: non-finite gradient products");

    Eigen::VectorXd x = Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(K));
    Eigen::VectorXd best = x;
    double best_value = x.dot(gram * x);
    result.gap = std::numeric_limits<double>::infinity();
    bool converged = false;
    for (std::size_t it = 0; it < options.max_iters; ++it) {
      const Eigen::VectorXd mx = gram * x;
      const double value = x.dot(mx);
      Eigen::Index t = 0;
      const double vertex = mx.minCoeff(&t);
      const double gap = value - vertex;
      if (value < best_value) {
        best_value = value;
        best = x;
      }
      result.iterations = it + 1;
      result.gap = gap;
      if (gap <= options.tol) {
        converged = true;
        best = x;
        break;
      }
      // Away vertex: the active coordinate with the largest partial derivative.
      Eigen::Index a = -1;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (x(i) > 0.0 && (a < 0 || mx(i) > mx(a))) a = i;
      }
      const double away_gap = mx(a) - value;
      if (gap >= away_gap || x(a) >= 1.0) {
        const double curvature = value - 2.0 * vertex + gram(t, t);
        const double gamma = curvature <= 0.0 ? 1.0 : std::clamp(gap / curvature, 0.0, 1.0);
        x *= (1.0 - gamma);
        x(t) += gamma;
      } else {
        // Move mass away from vertex a, up to dropping it entirely.
        const double max_step = x(a) / (1.0 - x(a));
        const double curvature = value - 2.0 * mx(a) + gram(a, a);
        const double gamma =
            curvature <= 0.0 ? max_step : std::clamp(away_gap / curvature, 0.0, max_step);
        x *= (1.0 + gamma);
        x(a) -= gamma;
        if (gamma == max_step) x(a) = 0.0;
      }
    }
    if (!converged) {
      const Eigen::VectorXd mx = gram * x;
      if (x.dot(mx) < best_value) best = x;
    }
    result.combination.approximate = !converged;
    for (std::size_t i = 0; i < K; ++i) w[i] = best(static_cast<Eigen::Index>(i));
  }

  result.combination.direction = weighted_sum(gradients, w);
  result.combination.weights = std::move(w);
  result.pareto_stationary = norm(result.combination.direction) <= options.tol;
  return result;
}

Combination Mgda::combine(std::span<const LayeredParams> gradients, Rng&) const {
  return mgda_combine(gradients, options_).combination;
}

LayeredParams pcgrad_combine(std::span<const LayeredParams> gradients, Rng& rng) {
  require_nonempty(gradients, "pcgrad");
  const std::size_t K = gradients.size();
  std::vector<double> sq_norms(K);
  for (std::size_t j = 0; j < K; ++j) sq_norms[j] = dot(gradients[j], gradients[j]);

  std::vector<LayeredParams> projected;
  projected.reserve(K);
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < K; ++i) {
    order.clear();
    for (std::size_t j = 0; j < K; ++j) {
      if (j != i) order.push_back(j);
    }
    std::shuffle(order.begin(), order.end(), rng);
    LayeredParams g = gradients[i];
    for (std::size_t j : order) {
      if (sq_norms[j] < 1e-24) continue;
      const double d = dot(g, gradients[j]);
      if (d < 0.0) g = axpy(-d / sq_norms[j], gradients[j], g);
    }
    projected.push_back(std::move(g));
  }
  return mean(projected);
}

Combination PcGrad::combine(std::span<const LayeredParams> gradients, Rng& rng) const {
  return {pcgrad_combine(gradients, rng), std::nullopt, false};
}

std::unique_ptr<WeightingMethod> make_weighting(std::string_view name) {
  if (name == "ls") return std::make_unique<LinearScalarization>();
  if (name == "mgda") return std::make_unique<Mgda>();
  if (name == "pcgrad") return std::make_unique<PcGrad>();
  throw ConfigError("unknown weighting method '" + std::string(name) + "'");
}

}  // namespace samo
