#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

#include "samo/layered.hpp"

namespace samo {

/// Snapshot of forward/backward pass totals.
struct PassCount {
  std::uint64_t forwards = 0;
  std::uint64_t backwards = 0;

  friend PassCount operator-(PassCount a, PassCount b) {
    return {a.forwards - b.forwards, a.backwards - b.backwards};
  }
  friend PassCount operator+(PassCount a, PassCount b) {
    return {a.forwards + b.forwards, a.backwards + b.backwards};
  }
  friend bool operator==(const PassCount&, const PassCount&) = default;
};

class PassCounters {
 public:
  void add_forward() { forwards_.fetch_add(1, std::memory_order_relaxed); }
  void add_backward() { backwards_.fetch_add(1, std::memory_order_relaxed); }
  PassCount snapshot() const {
    return {forwards_.load(std::memory_order_relaxed), backwards_.load(std::memory_order_relaxed)};
  }

 private:
  std::atomic<std::uint64_t> forwards_{0};
  std::atomic<std::uint64_t> backwards_{0};
};

/// Per-task gradients plus the gradient of the averaged loss.
struct GradientSet {
  std::vector<LayeredParams> per_task;
  LayeredParams average;
};

/// K losses over a layered parameter vector with exact gradients.
///
/// The public evaluation entry points are non-virtual so every call is counted
/// exactly once: `loss`, `losses` count one forward pass; `grad`, `avg_grad`
/// count one backward pass. Implementations override the `eval_*` hooks and
/// must be reentrant (concurrent const calls are allowed).
class MultiTaskProblem {
 public:
  MultiTaskProblem() : counters_(std::make_shared<PassCounters>()) {}
  virtual ~MultiTaskProblem() = default;

  MultiTaskProblem(const MultiTaskProblem&) = delete;
  MultiTaskProblem& operator=(const MultiTaskProblem&) = delete;

  virtual std::size_t num_tasks() const = 0;
  virtual LayerShape shape() const = 0;

  double loss(std::size_t task, const LayeredParams& theta) const;
  std::vector<double> losses(const LayeredParams& theta) const;
  LayeredParams grad(std::size_t task, const LayeredParams& theta) const;
  /// Gradient of l_0 = (1/K) sum_i l_i in a single backward pass.
  LayeredParams avg_grad(const LayeredParams& theta) const;

  /// Task that exclusively owns layer `d` (a task head), or nullopt for shared layers.
  virtual std::optional<std::size_t> layer_owner(std::size_t /*d*/) const { return std::nullopt; }

  /// Feasible-set projection applied after each optimizer update.
  virtual LayeredParams project(const LayeredParams& theta) const { return theta; }

  /// Problem restricted to the mini-batch used at optimizer step `step`, or
  /// nullptr when evaluation is full-batch. Views share this problem's counters.
  virtual std::shared_ptr<const MultiTaskProblem> minibatch(std::uint64_t /*step*/) const {
    return nullptr;
  }

  PassCount passes() const { return counters_->snapshot(); }

 protected:
  explicit MultiTaskProblem(std::shared_ptr<PassCounters> shared_counters)
      : counters_(std::move(shared_counters)) {}

  std::shared_ptr<PassCounters> counters() const { return counters_; }

  virtual double eval_loss(std::size_t task, const LayeredParams& theta) const = 0;
  virtual LayeredParams eval_grad(std::size_t task, const LayeredParams& theta) const = 0;
  virtual std::vector<double> eval_losses(const LayeredParams& theta) const;
  virtual LayeredParams eval_avg_grad(const LayeredParams& theta) const;

 private:
  friend class TaskSubsetProblem;

  void check_task(std::size_t task) const;
  void check_shape(const LayeredParams& theta) const;

  std::shared_ptr<PassCounters> counters_;
};

/// Exact per-task gradients (K backward passes) with `average` their mean.
GradientSet exact_gradients(const MultiTaskProblem& problem, const LayeredParams& theta);

/// Layers not owned by any single task.
std::vector<std::size_t> shared_layers(const MultiTaskProblem& problem);

/// Problem made of a subset of another problem's tasks. Shares the parent's
/// counters and layer ownership is not forwarded (every layer is shared).
class TaskSubsetProblem final : public MultiTaskProblem {
 public:
  TaskSubsetProblem(const MultiTaskProblem& parent, std::vector<std::size_t> tasks);

  std::size_t num_tasks() const override { return tasks_.size(); }
  LayerShape shape() const override { return parent_.shape(); }
  LayeredParams project(const LayeredParams& theta) const override {
    return parent_.project(theta);
  }

 protected:
  double eval_loss(std::size_t task, const LayeredParams& theta) const override;
  LayeredParams eval_grad(std::size_t task, const LayeredParams& theta) const override;

 private:
  const MultiTaskProblem& parent_;
  std::vector<std::size_t> tasks_;
};

struct GradientCheckOptions {
  std::size_t directions = 20;
  double step = 1e-5;
  /// Absolute floor on the denominator of the relative error.
  double abs_floor = 1e-8;
  std::uint64_t seed = 0;
};

struct TaskGradientCheck {
  std::size_t task = 0;
  double max_rel_error = 0.0;
};

/// Compares g_i . u against (l_i(theta + h u) - l_i(theta - h u)) / (2h) for
/// random unit directions u. Relative error is |a - b| / max(|a|, |b|, abs_floor).
std::vector<TaskGradientCheck> check_gradients(const MultiTaskProblem& problem,
                                               const LayeredParams& theta,
                                               const GradientCheckOptions& options = {});

}  // namespace samo
