#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "samo/layered.hpp"
#include "samo/rng.hpp"

namespace samo {

struct Combination {
  LayeredParams direction;
  /// Simplex/convex weights w with direction = sum_i w_i g_i, when the method has them.
  std::optional<std::vector<double>> weights;
  /// Iterative solver stopped before meeting its tolerance.
  bool approximate = false;
};

/// Gradient-manipulation method M: K task gradients -> one update direction.
class WeightingMethod {
 public:
  virtual ~WeightingMethod() = default;
  virtual std::string name() const = 0;
  virtual Combination combine(std::span<const LayeredParams> gradients, Rng& rng) const = 0;
};

/// Linear scalarization, implemented as the mean of the task gradients.
class LinearScalarization final : public WeightingMethod {
 public:
  std::string name() const override { return "ls"; }
  Combination combine(std::span<const LayeredParams> gradients, Rng& rng) const override;
};

struct MgdaOptions {
  std::size_t max_iters = 250;
  double tol = 1e-7;
};

/// Min-norm point of the convex hull of the gradients.
struct MgdaResult {
  Combination combination;
  /// Final Frank-Wolfe duality gap (0 on the closed-form K <= 2 path).
  double gap = 0.0;
  std::size_t iterations = 0;
  /// ||direction|| <= tol: some convex combination of the gradients vanishes.
  bool pareto_stationary = false;
};

MgdaResult mgda_combine(std::span<const LayeredParams> gradients, const MgdaOptions& options = {});

/// Weight of g1 in the min-norm point of segment [g1, g2]:
/// clip(((g2 - g1) . g2) / ||g1 - g2||^2, 0, 1); 0.5 when g1 == g2.
double mgda_two_task_weight(const LayeredParams& g1, const LayeredParams& g2);

class Mgda final : public WeightingMethod {
 public:
  explicit Mgda(MgdaOptions options = {}) : options_(options) {}
  std::string name() const override { return "mgda"; }
  Combination combine(std::span<const LayeredParams> gradients, Rng& rng) const override;

 private:
  MgdaOptions options_;
};

/// Projects each g_i off every conflicting g_j (g_i . g_j < 0), visiting the
/// other tasks in an order shuffled from `rng`, then averages. Pairs with a
/// zero-norm g_j are skipped.
LayeredParams pcgrad_combine(std::span<const LayeredParams> gradients, Rng& rng);

class PcGrad final : public WeightingMethod {
 public:
  std::string name() const override { return "pcgrad"; }
  Combination combine(std::span<const LayeredParams> gradients, Rng& rng) const override;
};

/// "ls", "mgda" or "pcgrad"; ConfigError otherwise.
std::unique_ptr<WeightingMethod> make_weighting(std::string_view name);

}  // namespace samo
