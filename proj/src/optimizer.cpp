#include "samo/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "samo/errors.hpp"

namespace samo {

std::string to_string(SharedScope scope) {
  return scope == SharedScope::all ? "all" : "trunk_only";
}

SharedScope parse_shared_scope(std::string_view s) {
  if (s == "all") return SharedScope::all;
  if (s == "trunk_only") return SharedScope::trunk_only;
  throw ConfigError("optimizer.shared_scope: unknown value '" + std::string(s) + "'");
}

void OptimizerConfig::validate() const {
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("optimizer.lr must be positive");
  if (steps == 0) throw ConfigError("optimizer.steps must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) {
    throw ConfigError("optimizer.momentum must lie in [0, 1)");
  }
  if (record_every == 0) throw ConfigError("optimizer.record_every must be positive");
  if (schedule.kind == ScheduleKind::halve_at &&
      !(schedule.fraction >= 0.0 && schedule.fraction <= 1.0)) {
    throw ConfigError("optimizer.halve_fraction must lie in [0, 1]");
  }
}

double step_size(const OptimizerConfig& config, std::size_t t) {
  if (config.schedule.kind == ScheduleKind::constant) return config.lr;
  const double boundary = config.schedule.fraction * static_cast<double>(config.steps);
  return static_cast<double>(t) < boundary ? config.lr : config.lr / 2.0;
}

namespace {

std::vector<std::size_t> weighted_layers(const MultiTaskProblem& problem, SharedScope scope) {
  if (scope == SharedScope::trunk_only) return shared_layers(problem);
  std::vector<std::size_t> all(problem.shape().size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  return all;
}

}  // namespace

Trajectory run(const MultiTaskProblem& problem, const LayeredParams& theta0,
               const WeightingMethod& weighting, const SamConfig& sam,
               const OptimizerConfig& opt, const std::vector<TrajectoryHook>& hooks) {
  sam.validate();
  opt.validate();
  if (theta0.shape() != problem.shape()) {
    throw StructuralError("initial parameters do not match problem layout");
  }
  const std::size_t K = problem.num_tasks();
  const std::vector<std::size_t> shared = weighted_layers(problem, opt.shared_scope);
  if (shared.empty()) throw ConfigError("no shared layers to optimize");
  // Layers outside the weighted set follow their owning task's gradient.
  std::vector<std::pair<std::size_t, std::size_t>> heads;
  for (std::size_t d = 0; d < theta0.num_layers(); ++d) {
    if (std::find(shared.begin(), shared.end(), d) != shared.end()) continue;
    const auto owner = problem.layer_owner(d);
    if (!owner) throw StructuralError("unowned layer outside the shared scope");
    heads.emplace_back(d, *owner);
  }

  Trajectory traj;
  LayeredParams theta = theta0;
  LayeredParams velocity = LayeredParams::zeros(theta.shape());

  auto record_state = [&](TrajectoryRecord& rec) {
    rec.losses = problem.losses(theta);
    if (!all_finite(rec.losses)) throw NumericError("non-finite task loss");
    if (opt.record_params) rec.params = theta;
    for (const auto& hook : hooks) hook(problem, theta, rec);
  };

  for (std::size_t t = 0; t < opt.steps; ++t) {
    const bool recorded = t % opt.record_every == 0;
    TrajectoryRecord rec;
    rec.iteration = t;
    rec.lr = step_size(opt, t);
    try {
      if (recorded) record_state(rec);

      const PassCount before = problem.passes();
      const auto batch = problem.minibatch(t);
      const MultiTaskProblem& view = batch ? *batch : problem;
      GradientSet grads = sam.mode == SamMode::off
                              ? exact_gradients(view, theta)
                              : samo_gradients(view, theta, sam, shared, opt.seed, t).gradients;

      std::vector<LayeredParams> restricted;
      restricted.reserve(K);
      for (const auto& g : grads.per_task) restricted.push_back(select_layers(g, shared));
      Rng rng = substream(opt.seed, "weighting", {t});
      Combination combo = weighting.combine(restricted, rng);

      LayeredParams direction =
          scatter_layers(LayeredParams::zeros(theta.shape()), combo.direction, shared);
      for (const auto& [layer, owner] : heads) {
        auto src = grads.per_task[owner].layer(layer);
        std::copy(src.begin(), src.end(), direction.layer(layer).begin());
      }

      const LayeredParams& step = opt.momentum > 0.0
                                      ? (velocity = axpy(opt.momentum, velocity, direction))
                                      : direction;
      theta = problem.project(axpy(-rec.lr, step, theta));
      rec.passes = problem.passes() - before;
      traj.total_passes = traj.total_passes + rec.passes;
      rec.direction_norm = norm(direction);
      rec.weights = std::move(combo.weights);
    } catch (const NumericError& e) {
      traj.final_params = theta;
      throw OptimizationAborted(std::string(e.what()) + " at iteration " + std::to_string(t), t,
                                theta, std::move(traj));
    }
    if (recorded) traj.records.push_back(std::move(rec));
  }

  TrajectoryRecord last;
  last.iteration = opt.steps;
  try {
    record_state(last);
  } catch (const NumericError& e) {
    traj.final_params = theta;
    throw OptimizationAborted(e.what(), opt.steps, theta, std::move(traj));
  }
  traj.final_losses = last.losses;
  traj.final_params = theta;
  traj.records.push_back(std::move(last));
  return traj;
}

}  // namespace samo
