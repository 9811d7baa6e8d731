#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "samo/layered.hpp"
#include "samo/problem.hpp"
#include "samo/rng.hpp"

namespace samo {

enum class SamMode { off, global, local, joint };
enum class Estimator { exact, spsa };
enum class Normalization { layerwise, global, none };

std::string to_string(SamMode mode);
std::string to_string(Estimator estimator);
std::string to_string(Normalization normalization);
SamMode parse_sam_mode(std::string_view s);
Estimator parse_estimator(std::string_view s);
Normalization parse_normalization(std::string_view s);

struct SamConfig {
  SamMode mode = SamMode::joint;
  double rho = 0.001;
  double alpha = 0.5;
  double mu = 0.01;
  Estimator estimator = Estimator::spsa;
  Normalization normalization = Normalization::layerwise;
  /// SPSA estimates averaged per task before normalization.
  std::size_t spsa_samples = 1;
  /// Evaluate the K per-task branches on separate threads.
  bool parallel = false;

  /// Throws ConfigError naming the offending field.
  void validate() const;
};

/// Norms below this are treated as zero wherever a norm divides.
inline constexpr double kDegenerateNorm = 1e-12;

struct Perturbation {
  LayeredParams value;
  bool degenerate = false;
};

/// rho * g / ||g||; zero (flagged degenerate) when ||g|| < kDegenerateNorm.
Perturbation sam_perturbation(const LayeredParams& g, double rho);

/// rho * v / ||v|| with v = alpha g0 + (1 - alpha) local. alpha == 1 and
/// alpha == 0 use g0 and local verbatim.
Perturbation joint_perturbation(const LayeredParams& g0, const LayeredParams& local, double rho,
                                double alpha);

/// Scales each layer of `estimate` so its norm matches the same layer of
/// `reference`. Layers of `estimate` with norm below kDegenerateNorm become zero.
LayeredParams layerwise_normalize(const LayeredParams& estimate, const LayeredParams& reference);

/// Single scalar ||reference|| / ||estimate|| applied to every entry.
Perturbation global_normalize(const LayeredParams& estimate, const LayeredParams& reference);

/// Two-point SPSA estimate ((l(theta + mu z) - l(theta - mu z)) / (2 mu)) z with
/// z standard Gaussian over the listed layers (zero elsewhere), drawn from `rng`
/// in layer order. Exactly 2 forward passes.
LayeredParams spsa_estimate(const MultiTaskProblem& problem, std::size_t task,
                            const LayeredParams& theta, double mu, Rng& rng,
                            std::span<const std::size_t> layers);
/// Same, perturbing every layer.
LayeredParams spsa_estimate(const MultiTaskProblem& problem, std::size_t task,
                            const LayeredParams& theta, double mu, Rng& rng);

struct SamoGradients {
  /// per_task[i] = grad l_i at theta + eps_i; average = grad l_0 at theta.
  GradientSet gradients;
  std::vector<Perturbation> perturbations;
};

/// Sharpness-aware task gradients at `theta` for one optimizer iteration.
///
/// Perturbations live on `layers` only. Pass cost by mode:
///   global        1 + K backward
///   local         2K backward (average is the mean of the exact gradients)
///   joint, exact  1 + 2K backward
///   joint, spsa   1 + K backward, 2K * spsa_samples forward
/// SPSA draws for task i come from substream (seed, "spsa", {iteration, i}), so
/// parallel and sequential evaluation agree bit for bit.
SamoGradients samo_gradients(const MultiTaskProblem& problem, const LayeredParams& theta,
                             const SamConfig& config, std::span<const std::size_t> layers,
                             std::uint64_t seed, std::uint64_t iteration);

/// Same, perturbing every layer.
SamoGradients samo_gradients(const MultiTaskProblem& problem, const LayeredParams& theta,
                             const SamConfig& config, std::uint64_t seed, std::uint64_t iteration);

}  // namespace samo
