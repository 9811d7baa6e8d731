#include "samo/problem.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "samo/errors.hpp"
#include "samo/rng.hpp"

namespace samo {

void MultiTaskProblem::check_task(std::size_t task) const {
  if (task >= num_tasks()) {
    throw StructuralError("task index " + std::to_string(task) + " out of range");
  }
}

void MultiTaskProblem::check_shape(const LayeredParams& theta) const {
  if (theta.shape() != shape()) throw StructuralError("parameters do not match problem layout");
}

double MultiTaskProblem::loss(std::size_t task, const LayeredParams& theta) const {
  check_task(task);
  check_shape(theta);
  counters_->add_forward();
  return eval_loss(task, theta);
}

std::vector<double> MultiTaskProblem::losses(const LayeredParams& theta) const {
  check_shape(theta);
  counters_->add_forward();
  return eval_losses(theta);
}

LayeredParams MultiTaskProblem::grad(std::size_t task, const LayeredParams& theta) const {
  check_task(task);
  check_shape(theta);
  counters_->add_backward();
  return eval_grad(task, theta);
}

LayeredParams MultiTaskProblem::avg_grad(const LayeredParams& theta) const {
  check_shape(theta);
  counters_->add_backward();
  return eval_avg_grad(theta);
}

std::vector<double> MultiTaskProblem::eval_losses(const LayeredParams& theta) const {
  std::vector<double> out(num_tasks());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = eval_loss(i, theta);
  return out;
}

LayeredParams MultiTaskProblem::eval_avg_grad(const LayeredParams& theta) const {
  std::vector<LayeredParams> grads;
  grads.reserve(num_tasks());
  for (std::size_t i = 0; i < num_tasks(); ++i) grads.push_back(eval_grad(i, theta));
  return mean(grads);
}

GradientSet exact_gradients(const MultiTaskProblem& problem, const LayeredParams& theta) {
  GradientSet out;
  out.per_task.reserve(problem.num_tasks());
  for (std::size_t i = 0; i < problem.num_tasks(); ++i) {
    out.per_task.push_back(problem.grad(i, theta));
  }
  out.average = mean(out.per_task);
  return out;
}

std::vector<std::size_t> shared_layers(const MultiTaskProblem& problem) {
  std::vector<std::size_t> out;
  const std::size_t n = problem.shape().size();
  for (std::size_t d = 0; d < n; ++d) {
    if (!problem.layer_owner(d)) out.push_back(d);
  }
  return out;
}

TaskSubsetProblem::TaskSubsetProblem(const MultiTaskProblem& parent, std::vector<std::size_t> tasks)
    : MultiTaskProblem(parent.counters()), parent_(parent), tasks_(std::move(tasks)) {
  if (tasks_.empty()) throw ConfigError("task subset must not be empty");
  for (std::size_t t : tasks_) parent_.check_task(t);
}

double TaskSubsetProblem::eval_loss(std::size_t task, const LayeredParams& theta) const {
  return parent_.eval_loss(tasks_[task], theta);
}

LayeredParams TaskSubsetProblem::eval_grad(std::size_t task, const LayeredParams& theta) const {
  return parent_.eval_grad(tasks_[task], theta);
}

std::vector<TaskGradientCheck> check_gradients(const MultiTaskProblem& problem,
                                               const LayeredParams& theta,
                                               const GradientCheckOptions& options) {
  if (!(options.step > 0.0)) throw ConfigError("check_gradients: step must be positive");
  const LayerShape shape = theta.shape();
  const std::size_t m = theta.size();

  std::vector<LayeredParams> directions;
  Rng rng = substream(options.seed, "gradient-check");
  std::normal_distribution<double> gauss;
  for (std::size_t n = 0; n < options.directions; ++n) {
    std::vector<double> u(m);
    for (double& v : u) v = gauss(rng);
    LayeredParams dir = LayeredParams::from_flat(shape, u);
    directions.push_back(scale(1.0 / norm(dir), dir));
  }

  std::vector<TaskGradientCheck> report;
  for (std::size_t i = 0; i < problem.num_tasks(); ++i) {
    const LayeredParams g = problem.grad(i, theta);
    TaskGradientCheck check{i, 0.0};
    for (const auto& u : directions) {
      const double plus = problem.loss(i, axpy(options.step, u, theta));
      const double minus = problem.loss(i, axpy(-options.step, u, theta));
      if (!std::isfinite(plus) || !std::isfinite(minus)) {
        throw NumericError("check_gradients: non-finite loss at probe point", i);
      }
      const double numeric = (plus - minus) / (2.0 * options.step);
      const double analytic = dot(g, u);
      const double denom = std::max({std::abs(numeric), std::abs(analytic), options.abs_floor});
      check.max_rel_error = std::max(check.max_rel_error, std::abs(numeric - analytic) / denom);
    }
    report.push_back(check);
  }
  return report;
}

}  // namespace samo
