#include "samo/sam.hpp"

#include <cmath>
#include <future>
#include <numeric>

#include "samo/errors.hpp"

namespace samo {

std::string to_string(SamMode mode) {
  switch (mode) {
    case SamMode::off: return "off";
    case SamMode::global: return "global";
    case SamMode::local: return "local";
    case SamMode::joint: return "joint";
  }
  return "?";
}

std::string to_string(Estimator estimator) {
  return estimator == Estimator::exact ? "exact" : "spsa";
}

std::string to_string(Normalization normalization) {
  switch (normalization) {
    case Normalization::layerwise: return "layerwise";
    case Normalization::global: return "global";
    case Normalization::none: return "none";
  }
  return "?";
}

SamMode parse_sam_mode(std::string_view s) {
  if (s == "off") return SamMode::off;
  if (s == "global") return SamMode::global;
  if (s == "local") return SamMode::local;
  if (s == "joint") return SamMode::joint;
  throw ConfigError("sam.mode: unknown value '" + std::string(s) + "'");
}

Estimator parse_estimator(std::string_view s) {
  if (s == "exact") return Estimator::exact;
  if (s == "spsa") return Estimator::spsa;
  throw ConfigError("sam.estimator: unknown value '" + std::string(s) + "'");
}

Normalization parse_normalization(std::string_view s) {
  if (s == "layerwise") return Normalization::layerwise;
  if (s == "global") return Normalization::global;
  if (s == "none") return Normalization::none;
  throw ConfigError("sam.normalization: unknown value '" + std::string(s) + "'");
}

void SamConfig::validate() const {
  if (!(rho > 0.0) || !std::isfinite(rho)) throw ConfigError("sam.rho must be positive");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("sam.alpha must lie in [0, 1]");
  if (!(mu > 0.0) || !std::isfinite(mu)) throw ConfigError("sam.mu must be positive");
  if (spsa_samples == 0) throw ConfigError("sam.spsa_samples must be at least 1");
}

Perturbation sam_perturbation(const LayeredParams& g, double rho) {
  if (!(rho > 0.0)) throw ConfigError("rho must be positive");
  const double n = norm(g);
  if (!std::isfinite(n)) throw NumericError("sam_perturbation: non-finite gradient norm");
  if (n < kDegenerateNorm) return {LayeredParams::zeros(g.shape()), true};
  return {scale(rho / n, g), false};
}

Perturbation joint_perturbation(const LayeredParams& g0, const LayeredParams& local, double rho,
                                double alpha) {
  if (!g0.same_shape(local)) throw StructuralError("joint_perturbation: layer structure mismatch");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("alpha must lie in [0, 1]");
  if (alpha == 1.0) return sam_perturbation(g0, rho);
  if (alpha == 0.0) return sam_perturbation(local, rho);
  return sam_perturbation(axpy(alpha, g0, scale(1.0 - alpha, local)), rho);
}

LayeredParams layerwise_normalize(const LayeredParams& estimate, const LayeredParams& reference) {
  if (!estimate.same_shape(reference)) {
    throw StructuralError("layerwise_normalize: layer structure mismatch");
  }
  LayeredParams out = estimate;
  for (std::size_t d = 0; d < out.num_layers(); ++d) {
    const double e = layer_norm(estimate, d);
    auto block = out.layer(d);
    if (e < kDegenerateNorm) {
      std::fill(block.begin(), block.end(), 0.0);
      continue;
    }
    const double factor = layer_norm(reference, d) / e;
    for (double& v : block) v *= factor;
  }
  return out;
}

Perturbation global_normalize(const LayeredParams& estimate, const LayeredParams& reference) {
  if (!estimate.same_shape(reference)) {
    throw StructuralError("global_normalize: layer structure mismatch");
  }
  const double e = norm(estimate);
  if (e < kDegenerateNorm) return {LayeredParams::zeros(estimate.shape()), true};
  return {scale(norm(reference) / e, estimate), false};
}

LayeredParams spsa_estimate(const MultiTaskProblem& problem, std::size_t task,
                            const LayeredParams& theta, double mu, Rng& rng,
                            std::span<const std::size_t> layers) {
  if (!(mu > 0.0)) throw ConfigError("spsa: mu must be positive");
  LayeredParams z = LayeredParams::zeros(theta.shape());
  std::normal_distribution<double> gauss;
  for (std::size_t d : layers) {
    for (double& v : z.layer(d)) v = gauss(rng);
  }
  const double plus = problem.loss(task, axpy(mu, z, theta));
  const double minus = problem.loss(task, axpy(-mu, z, theta));
  if (!std::isfinite(plus) || !std::isfinite(minus)) {
    throw NumericError("spsa: non-finite loss at probe point", task);
  }
  return scale((plus - minus) / (2.0 * mu), z);
}

LayeredParams spsa_estimate(const MultiTaskProblem& problem, std::size_t task,
                            const LayeredParams& theta, double mu, Rng& rng) {
  std::vector<std::size_t> all(theta.num_layers());
  std::iota(all.begin(), all.end(), std::size_t{0});
  return spsa_estimate(problem, task, theta, mu, rng, all);
}

namespace {

struct TaskBranch {
  LayeredParams gradient;
  Perturbation perturbation;
};

template <typename Fn>
std::vector<TaskBranch> for_each_task(std::size_t K, bool parallel, Fn&& fn) {
  std::vector<TaskBranch> out;
  out.reserve(K);
  if (!parallel || K < 2) {
    for (std::size_t i = 0; i < K; ++i) out.push_back(fn(i));
    return out;
  }
  std::vector<std::future<TaskBranch>> futures;
  futures.reserve(K);
  for (std::size_t i = 0; i < K; ++i) {
    futures.push_back(std::async(std::launch::async, [&fn, i] { return fn(i); }));
  }
  for (auto& f : futures) out.push_back(f.get());
  return out;
}

// Local term of the joint perturbation for one task (already masked to `layers`).
LayeredParams local_term(const MultiTaskProblem& problem, std::size_t task,
                         const LayeredParams& theta, const LayeredParams& reference,
                         const SamConfig& config, std::span<const std::size_t> layers,
                         std::uint64_t seed, std::uint64_t iteration) {
  if (config.estimator == Estimator::exact) {
    return mask_layers(problem.grad(task, theta), layers);
  }
  Rng rng = substream(seed, "spsa", {iteration, task});
  LayeredParams estimate = spsa_estimate(problem, task, theta, config.mu, rng, layers);
  for (std::size_t s = 1; s < config.spsa_samples; ++s) {
    estimate = axpy(1.0, spsa_estimate(problem, task, theta, config.mu, rng, layers), estimate);
  }
  if (config.spsa_samples > 1) {
    estimate = scale(1.0 / static_cast<double>(config.spsa_samples), estimate);
  }
  switch (config.normalization) {
    case Normalization::layerwise: return layerwise_normalize(estimate, reference);
    case Normalization::global: return global_normalize(estimate, reference).value;
    case Normalization::none: return estimate;
  }
  return estimate;
}

}  // namespace

SamoGradients samo_gradients(const MultiTaskProblem& problem, const LayeredParams& theta,
                             const SamConfig& config, std::span<const std::size_t> layers,
                             std::uint64_t seed, std::uint64_t iteration) {
  config.validate();
  if (config.mode == SamMode::off) throw ConfigError("samo_gradients requires sam.mode != off");
  const std::size_t K = problem.num_tasks();
  SamoGradients out;

  auto perturbed_grad = [&](std::size_t i, const Perturbation& eps) {
    return problem.grad(i, axpy(1.0, eps.value, theta));
  };

  std::vector<TaskBranch> branches;
  if (config.mode == SamMode::global) {
    out.gradients.average = problem.avg_grad(theta);
    const Perturbation eps =
        sam_perturbation(mask_layers(out.gradients.average, layers), config.rho);
    branches = for_each_task(K, config.parallel, [&](std::size_t i) {
      return TaskBranch{perturbed_grad(i, eps), eps};
    });
  } else if (config.mode == SamMode::local) {
    std::vector<LayeredParams> exact(K);
    branches = for_each_task(K, config.parallel, [&](std::size_t i) {
      exact[i] = problem.grad(i, theta);
      const Perturbation eps = sam_perturbation(mask_layers(exact[i], layers), config.rho);
      return TaskBranch{perturbed_grad(i, eps), eps};
    });
    out.gradients.average = mean(exact);
  } else {
    out.gradients.average = problem.avg_grad(theta);
    const LayeredParams reference = mask_layers(out.gradients.average, layers);
    branches = for_each_task(K, config.parallel, [&](std::size_t i) {
      try {
        const LayeredParams local =
            local_term(problem, i, theta, reference, config, layers, seed, iteration);
        const Perturbation eps = joint_perturbation(reference, local, config.rho, config.alpha);
        return TaskBranch{perturbed_grad(i, eps), eps};
      } catch (const NumericError& e) {
        if (e.task()) throw;
        throw NumericError(e.what(), i);
      }
    });
  }

  out.gradients.per_task.reserve(K);
  out.perturbations.reserve(K);
  for (auto& b : branches) {
    out.gradients.per_task.push_back(std::move(b.gradient));
    out.perturbations.push_back(std::move(b.perturbation));
  }
  return out;
}

SamoGradients samo_gradients(const MultiTaskProblem& problem, const LayeredParams& theta,
                             const SamConfig& config, std::uint64_t seed, std::uint64_t iteration) {
  std::vector<std::size_t> all(theta.num_layers());
  std::iota(all.begin(), all.end(), std::size_t{0});
  return samo_gradients(problem, theta, config, all, seed, iteration);
}

}  // namespace samo
