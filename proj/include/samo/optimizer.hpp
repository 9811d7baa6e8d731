#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "samo/layered.hpp"
#include "samo/problem.hpp"
#include "samo/sam.hpp"
#include "samo/weighting.hpp"

namespace samo {

enum class ScheduleKind { constant, halve_at };
enum class SharedScope { all, trunk_only };

std::string to_string(SharedScope scope);
SharedScope parse_shared_scope(std::string_view s);

struct Schedule {
  ScheduleKind kind = ScheduleKind::halve_at;
  /// Fraction of `steps` after which the rate is halved.
  double fraction = 0.5;
};

struct OptimizerConfig {
  double lr = 1e-4;
  std::size_t steps = 1000;
  Schedule schedule{};
  double momentum = 0.0;
  std::uint64_t seed = 0;
  /// Record every n-th iteration (the first and the final state are always kept).
  std::size_t record_every = 1;
  bool record_params = false;
  SharedScope shared_scope = SharedScope::all;

  void validate() const;
};

/// Learning rate at iteration t: lr, or lr / 2 once t >= fraction * steps.
double step_size(const OptimizerConfig& config, std::size_t t);

struct TrajectoryRecord {
  std::size_t iteration = 0;
  std::vector<double> losses;
  /// ||d_t|| of the applied update direction (before momentum). 0 on the final row.
  double direction_norm = 0.0;
  double lr = 0.0;
  /// Passes spent computing the update at this iteration, excluding logging.
  PassCount passes;
  std::optional<LayeredParams> params;
  std::optional<std::vector<double>> weights;
  std::map<std::string, double> diagnostics;
};

/// Recorded iterations in increasing order. The last record (iteration == steps)
/// is the final state and carries no update.
struct Trajectory {
  std::vector<TrajectoryRecord> records;
  LayeredParams final_params;
  std::vector<double> final_losses;
  /// Sum of per-iteration pass deltas over all T iterations.
  PassCount total_passes;
};

/// Called at every recorded iteration with the parameters the record describes.
/// Passes spent inside a hook are not charged to the iteration.
using TrajectoryHook = std::function<void(const MultiTaskProblem& problem,
                                          const LayeredParams& theta, TrajectoryRecord& record)>;

/// A numeric failure inside `run`; keeps everything recorded so far.
class OptimizationAborted : public std::runtime_error {
 public:
  OptimizationAborted(const std::string& what, std::size_t iteration, LayeredParams last_good,
                      Trajectory partial)
      : std::runtime_error(what),
        iteration_(iteration),
        last_good_(std::move(last_good)),
        partial_(std::move(partial)) {}

  std::size_t iteration() const { return iteration_; }
  const LayeredParams& last_good() const { return last_good_; }
  const Trajectory& partial() const { return partial_; }

 private:
  std::size_t iteration_;
  LayeredParams last_good_;
  Trajectory partial_;
};

/// The training loop: SAM gradients (or exact gradients when sam.mode is off),
/// the weighting method on the shared layers, task heads updated with their own
/// task's gradient, a (momentum) descent step and the problem's projection.
Trajectory run(const MultiTaskProblem& problem, const LayeredParams& theta0,
               const WeightingMethod& weighting, const SamConfig& sam,
               const OptimizerConfig& opt, const std::vector<TrajectoryHook>& hooks = {});

}  // namespace samo
