#include "samo/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "samo/csv.hpp"
#include "samo/errors.hpp"
#include "samo/toy.hpp"
#include "samo/weighting.hpp"

namespace samo {

using nlohmann::json;

namespace {

// Strict reader over one JSON object: typed lookups, then finish() rejects
// any key that was never asked for.
class ObjectReader {
 public:
  ObjectReader(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) throw ConfigError(where() + " must be an object");
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    return obj_.contains(key);
  }

  template <typename Fn>
  void with(const std::string& key, Fn&& fn) {
    if (has(key)) fn(obj_.at(key), field(key));
  }

  void number(const std::string& key, double& out) {
    with(key, [&](const json& v, const std::string& f) {
      if (!v.is_number()) throw ConfigError(f + " must be a number");
      out = v.get<double>();
    });
  }

  void count(const std::string& key, std::size_t& out) {
    with(key, [&](const json& v, const std::string& f) { out = as_count(v, f); });
  }

  void seed(const std::string& key, std::uint64_t& out) {
    with(key, [&](const json& v, const std::string& f) {
      if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
        throw ConfigError(f + " must be a non-negative integer");
      }
      out = v.get<std::uint64_t>();
    });
  }

  void boolean(const std::string& key, bool& out) {
    with(key, [&](const json& v, const std::string& f) {
      if (!v.is_boolean()) throw ConfigError(f + " must be true or false");
      out = v.get<bool>();
    });
  }

  void string(const std::string& key, std::string& out) {
    with(key, [&](const json& v, const std::string& f) {
      if (!v.is_string()) throw ConfigError(f + " must be a string");
      out = v.get<std::string>();
    });
  }

  void finish() const {
    for (auto it = obj_.begin(); it != obj_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError("unknown key " + field(it.key()));
    }
  }

  std::string field(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

  static std::size_t as_count(const json& v, const std::string& f) {
    if (!v.is_number_integer() || v.get<std::int64_t>() < 0) {
      throw ConfigError(f + " must be a non-negative integer");
    }
    return v.get<std::size_t>();
  }

 private:
  std::string where() const { return path_.empty() ? "config" : path_; }

  const json& obj_;
  std::string path_;
  std::set<std::string> seen_;
};

template <typename Parse>
auto parse_enum(const std::string& field, const std::string& value, Parse&& parse) {
  try {
    return parse(value);
  } catch (const ConfigError&) {
    throw ConfigError(field + ": unknown value '" + value + "'");
  }
}

}  // namespace

void ExperimentConfig::validate() const {
  sam.validate();
  optimizer.validate();
  make_weighting(weighting);
  if (problem.kind == ProblemKind::toy) {
    if (problem.start.size() != 2) throw ConfigError("problem.start must have 2 entries");
    if (shared_scope == SharedScope::trunk_only) {
      throw ConfigError("optimizer.shared_scope: the toy problem has no task heads");
    }
  } else {
    if (problem.mlp.tasks < 2) throw ConfigError("problem.tasks must be at least 2");
    if (!(problem.mlp.conflict_angle >= 0.0 && problem.mlp.conflict_angle <= 180.0)) {
      throw ConfigError("problem.conflict_angle must lie in [0, 180]");
    }
    if (problem.mlp.trunk.size() < 2) throw ConfigError("problem.trunk needs at least 2 widths");
  }
  if (diagnostics.k == 0) throw ConfigError("diagnostics.k must be positive");
  if (!(diagnostics.tol > 0.0)) throw ConfigError("diagnostics.tol must be positive");
  for (const auto& b : baselines) {
    if (b.value == 0.0) throw ConfigError("baselines." + b.name + " must be nonzero");
  }
  if (output_dir.empty()) throw ConfigError("output_dir must not be empty");
}

ExperimentConfig parse_config(const json& doc) {
  ExperimentConfig cfg;
  ObjectReader top(doc, "");

  top.with("problem", [&](const json& v, const std::string& f) {
    ObjectReader r(v, f);
    std::string kind = "toy";
    r.string("kind", kind);
    if (kind == "toy") {
      cfg.problem.kind = ProblemKind::toy;
    } else if (kind == "mlp") {
      cfg.problem.kind = ProblemKind::mlp;
    } else {
      throw ConfigError(f + ".kind: unknown value '" + kind + "'");
    }
    r.with("start", [&](const json& a, const std::string& af) {
      if (!a.is_array()) throw ConfigError(af + " must be an array of numbers");
      cfg.problem.start.clear();
      for (const auto& x : a) {
        if (!x.is_number()) throw ConfigError(af + " must be an array of numbers");
        cfg.problem.start.push_back(x.get<double>());
      }
    });
    r.seed("seed", cfg.problem.mlp.seed);
    r.count("tasks", cfg.problem.mlp.tasks);
    r.with("trunk", [&](const json& a, const std::string& af) {
      if (!a.is_array()) throw ConfigError(af + " must be an array of widths");
      cfg.problem.mlp.trunk.clear();
      for (const auto& x : a) cfg.problem.mlp.trunk.push_back(ObjectReader::as_count(x, af));
    });
    r.count("samples", cfg.problem.mlp.samples);
    r.count("test_samples", cfg.problem.mlp.test_samples);
    r.number("conflict_angle", cfg.problem.mlp.conflict_angle);
    r.number("noise", cfg.problem.mlp.noise);
    r.count("batch_size", cfg.problem.mlp.batch_size);
    std::string dataset;
    r.string("dataset", dataset);
    if (!dataset.empty()) cfg.problem.dataset = dataset;
    r.finish();
  });

  top.string("weighting", cfg.weighting);

  top.with("sam", [&](const json& v, const std::string& f) {
    ObjectReader r(v, f);
    std::string s;
    if (r.has("mode")) {
      r.string("mode", s);
      cfg.sam.mode = parse_enum(f + ".mode", s, parse_sam_mode);
    }
    r.number("rho", cfg.sam.rho);
    r.number("alpha", cfg.sam.alpha);
    r.number("mu", cfg.sam.mu);
    if (r.has("estimator")) {
      r.string("estimator", s);
      cfg.sam.estimator = parse_enum(f + ".estimator", s, parse_estimator);
    }
    if (r.has("normalization")) {
      r.string("normalization", s);
      cfg.sam.normalization = parse_enum(f + ".normalization", s, parse_normalization);
    }
    r.count("spsa_samples", cfg.sam.spsa_samples);
    r.boolean("parallel", cfg.sam.parallel);
    r.finish();
  });

  top.with("optimizer", [&](const json& v, const std::string& f) {
    ObjectReader r(v, f);
    r.number("lr", cfg.optimizer.lr);
    r.count("steps", cfg.optimizer.steps);
    if (r.has("schedule")) {
      std::string s;
      r.string("schedule", s);
      if (s == "constant") {
        cfg.optimizer.schedule.kind = ScheduleKind::constant;
      } else if (s == "halve_at") {
        cfg.optimizer.schedule.kind = ScheduleKind::halve_at;
      } else {
        throw ConfigError(f + ".schedule: unknown value '" + s + "'");
      }
    }
    r.number("halve_fraction", cfg.optimizer.schedule.fraction);
    r.number("momentum", cfg.optimizer.momentum);
    r.seed("seed", cfg.optimizer.seed);
    r.count("record_every", cfg.optimizer.record_every);
    r.boolean("record_params", cfg.optimizer.record_params);
    if (r.has("shared_scope")) {
      std::string s;
      r.string("shared_scope", s);
      cfg.shared_scope = parse_enum(f + ".shared_scope", s, parse_shared_scope);
    }
    r.finish();
  });

  top.with("diagnostics", [&](const json& v, const std::string& f) {
    ObjectReader r(v, f);
    r.count("cosine_every", cfg.diagnostics.cosine_every);
    r.boolean("spectrum_at_end", cfg.diagnostics.spectrum_at_end);
    r.count("k", cfg.diagnostics.k);
    r.count("iters", cfg.diagnostics.iters);
    r.number("tol", cfg.diagnostics.tol);
    r.finish();
  });

  top.with("baselines", [&](const json& v, const std::string& f) {
    if (!v.is_array()) throw ConfigError(f + " must be an array");
    for (std::size_t i = 0; i < v.size(); ++i) {
      ObjectReader r(v[i], f + "[" + std::to_string(i) + "]");
      Baseline b;
      b.name = "task_" + std::to_string(i + 1);
      r.string("name", b.name);
      if (!r.has("value")) throw ConfigError(r.field("value") + " is required");
      r.number("value", b.value);
      r.boolean("higher_is_better", b.higher_is_better);
      r.finish();
      cfg.baselines.push_back(b);
    }
  });

  std::string out;
  top.string("output_dir", out);
  if (!out.empty()) cfg.output_dir = out;
  top.finish();

  cfg.validate();
  return cfg;
}

json to_json(const ExperimentConfig& c) {
  json problem;
  if (c.problem.kind == ProblemKind::toy) {
    problem = {{"kind", "toy"}, {"start", c.problem.start}};
  } else {
    const auto& m = c.problem.mlp;
    problem = {{"kind", "mlp"},          {"seed", m.seed},
               {"tasks", m.tasks},       {"trunk", m.trunk},
               {"samples", m.samples},   {"test_samples", m.test_samples},
               {"conflict_angle", m.conflict_angle}, {"noise", m.noise},
               {"batch_size", m.batch_size}};
    if (c.problem.dataset) problem["dataset"] = c.problem.dataset->string();
  }
  json optimizer = {
      {"lr", c.optimizer.lr},
      {"steps", c.optimizer.steps},
      {"schedule", c.optimizer.schedule.kind == ScheduleKind::constant ? "constant" : "halve_at"},
      {"halve_fraction", c.optimizer.schedule.fraction},
      {"momentum", c.optimizer.momentum},
      {"seed", c.optimizer.seed},
      {"record_every", c.optimizer.record_every},
      {"record_params", c.optimizer.record_params}};
  if (c.shared_scope) optimizer["shared_scope"] = to_string(*c.shared_scope);
  json baselines = json::array();
  for (const auto& b : c.baselines) {
    baselines.push_back(
        {{"name", b.name}, {"value", b.value}, {"higher_is_better", b.higher_is_better}});
  }
  return {{"problem", problem},
          {"weighting", c.weighting},
          {"sam",
           {{"mode", to_string(c.sam.mode)},
            {"rho", c.sam.rho},
            {"alpha", c.sam.alpha},
            {"mu", c.sam.mu},
            {"estimator", to_string(c.sam.estimator)},
            {"normalization", to_string(c.sam.normalization)},
            {"spsa_samples", c.sam.spsa_samples},
            {"parallel", c.sam.parallel}}},
          {"optimizer", optimizer},
          {"diagnostics",
           {{"cosine_every", c.diagnostics.cosine_every},
            {"spectrum_at_end", c.diagnostics.spectrum_at_end},
            {"k", c.diagnostics.k},
            {"iters", c.diagnostics.iters},
            {"tol", c.diagnostics.tol}}},
          {"baselines", baselines},
          {"output_dir", c.output_dir.string()}};
}

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void write_json(const std::filesystem::path& path, const json& doc) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << doc.dump(2) << '\n';
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  return parse_config(read_json(path));
}

void apply_override(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("override '" + assignment + "' must look like key.path=value");
  }
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(text);
  } catch (const json::parse_error&) {
    value = text;
  }
  json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot - start);
    if (!node->is_object()) throw ConfigError("override '" + key + "' descends into a non-object");
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    node = &(*node)[part];
    if (node->is_null()) *node = json::object();
    start = dot + 1;
  }
}

std::filesystem::path resolve_output_dir(const std::filesystem::path& output_dir) {
  if (output_dir.is_absolute()) return output_dir;
  if (const char* root = std::getenv("SAMO_OUTPUT_ROOT"); root && *root) {
    return std::filesystem::path(root) / output_dir;
  }
  return output_dir;
}

ProblemInstance build_problem(const ExperimentConfig& config) {
  ProblemInstance inst;
  if (config.problem.kind == ProblemKind::toy) {
    auto toy = std::make_unique<ToyProblem>();
    inst.theta0 = ToyProblem::point(config.problem.start[0], config.problem.start[1]);
    inst.problem = std::move(toy);
    return inst;
  }
  std::unique_ptr<MlpMultiTaskProblem> mlp;
  if (config.problem.dataset) {
    MlpDataset data = read_dataset_csv(*config.problem.dataset);
    if (data.tasks != config.problem.mlp.tasks) {
      throw ConfigError("problem.dataset has " + std::to_string(data.tasks) +
                        " target columns but problem.tasks is " +
                        std::to_string(config.problem.mlp.tasks));
    }
    mlp = std::make_unique<MlpMultiTaskProblem>(config.problem.mlp.trunk, std::move(data),
                                                MlpDataset{}, config.problem.mlp.batch_size,
                                                config.problem.mlp.seed);
  } else {
    mlp = make_mlp_problem(config.problem.mlp);
  }
  inst.theta0 = mlp->initial_params(config.problem.mlp.seed);
  inst.problem = std::move(mlp);
  return inst;
}

namespace {

OptimizerConfig resolved_optimizer(const ExperimentConfig& config) {
  OptimizerConfig opt = config.optimizer;
  opt.shared_scope = config.shared_scope.value_or(
      config.problem.kind == ProblemKind::mlp ? SharedScope::trunk_only : SharedScope::all);
  return opt;
}

std::vector<LayeredParams> shared_task_gradients(const MultiTaskProblem& problem,
                                                 const LayeredParams& theta,
                                                 const std::vector<std::size_t>& layers) {
  std::vector<LayeredParams> out;
  for (std::size_t i = 0; i < problem.num_tasks(); ++i) {
    out.push_back(select_layers(problem.grad(i, theta), layers));
  }
  return out;
}

std::vector<std::size_t> scope_layers(const MultiTaskProblem& problem, SharedScope scope) {
  if (scope == SharedScope::trunk_only) return shared_layers(problem);
  std::vector<std::size_t> all(problem.shape().size());
  for (std::size_t d = 0; d < all.size(); ++d) all[d] = d;
  return all;
}

CsvTable cosine_table(const CosineMatrix& m) {
  CsvTable t;
  for (std::size_t i = 0; i < m.values.size(); ++i) t.header.push_back("task_" + std::to_string(i + 1));
  t.rows = m.values;
  return t;
}

CsvTable trajectory_table(const Trajectory& traj, std::size_t K, bool with_params) {
  CsvTable t;
  t.header.push_back("iter");
  for (std::size_t i = 0; i < K; ++i) t.header.push_back("loss_" + std::to_string(i + 1));
  t.header.insert(t.header.end(), {"dir_norm", "lr", "fwd", "bwd"});
  std::size_t m = 0;
  if (with_params && !traj.records.empty() && traj.records.front().params) {
    m = traj.records.front().params->size();
    for (std::size_t j = 0; j < m; ++j) t.header.push_back("theta_" + std::to_string(j + 1));
  }
  for (const auto& rec : traj.records) {
    std::vector<double> row{static_cast<double>(rec.iteration)};
    row.insert(row.end(), rec.losses.begin(), rec.losses.end());
    row.insert(row.end(), {rec.direction_norm, rec.lr, static_cast<double>(rec.passes.forwards),
                           static_cast<double>(rec.passes.backwards)});
    if (m > 0) {
      const auto flat = rec.params->flat();
      row.insert(row.end(), flat.begin(), flat.end());
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

struct Execution {
  RunResult result;
  std::vector<std::pair<std::size_t, CosineMatrix>> cosines;
};

// Runs without touching the filesystem. On abort, `partial` receives the trajectory.
Execution execute(const ExperimentConfig& config, const MultiTaskProblem& problem,
                  const LayeredParams& theta0) {
  const OptimizerConfig opt = resolved_optimizer(config);
  const auto weighting = make_weighting(config.weighting);
  const auto layers = scope_layers(problem, opt.shared_scope);

  Execution ex;
  std::vector<TrajectoryHook> hooks;
  std::mutex mu;
  if (config.diagnostics.cosine_every > 0) {
    hooks.push_back([&](const MultiTaskProblem& p, const LayeredParams& theta,
                        TrajectoryRecord& rec) {
      if (rec.iteration % config.diagnostics.cosine_every != 0 && rec.iteration != opt.steps) {
        return;
      }
      const auto grads = shared_task_gradients(p, theta, layers);
      CosineMatrix cm = cosine_matrix(grads);
      rec.diagnostics["mean_cosine"] = cm.mean_off_diagonal();
      std::lock_guard lock(mu);
      ex.cosines.emplace_back(rec.iteration, std::move(cm));
    });
  }

  ex.result.trajectory = run(problem, theta0, *weighting, config.sam, opt, hooks);
  const Trajectory& traj = ex.result.trajectory;
  ex.result.final_losses = traj.final_losses;

  const GradientSet final_grads = exact_gradients(problem, traj.final_params);
  ex.result.mean_grad_norm = norm(final_grads.average);
  std::vector<LayeredParams> shared;
  for (const auto& g : final_grads.per_task) shared.push_back(select_layers(g, layers));
  ex.result.min_norm = norm(mgda_combine(shared).combination.direction);
  ex.result.final_mean_cosine = cosine_matrix(shared).mean_off_diagonal();

  if (const auto* mlp = dynamic_cast<const MlpMultiTaskProblem*>(&problem);
      mlp && mlp->test_data().samples() > 0) {
    ex.result.test_losses = mlp->test_losses(traj.final_params);
  }
  if (config.diagnostics.spectrum_at_end) {
    SpectrumOptions so;
    so.k = std::min(config.diagnostics.k, traj.final_params.size());
    so.iters = config.diagnostics.iters;
    so.tol = config.diagnostics.tol;
    so.seed = opt.seed;
    ex.result.spectrum = hessian_spectrum(problem, traj.final_params, so);
  }
  if (!config.baselines.empty()) {
    const auto& values = ex.result.test_losses ? *ex.result.test_losses : ex.result.final_losses;
    if (config.baselines.size() != values.size()) {
      throw ConfigError("baselines: expected one entry per task (" +
                        std::to_string(values.size()) + ")");
    }
    std::vector<MetricSpec> metrics;
    for (std::size_t i = 0; i < values.size(); ++i) {
      const auto& b = config.baselines[i];
      metrics.push_back({b.name, b.value, values[i], b.higher_is_better});
    }
    ex.result.delta_m = delta_m(metrics);
  }
  return ex;
}

json summary_json(const ExperimentConfig& config, const RunResult& r, std::size_t steps) {
  json s;
  s["final_losses"] = r.final_losses;
  double mean_loss = 0.0;
  for (double v : r.final_losses) mean_loss += v;
  s["mean_final_loss"] = r.final_losses.empty() ? 0.0 : mean_loss / r.final_losses.size();
  if (r.test_losses) s["test_losses"] = *r.test_losses;
  s["mean_grad_norm"] = r.mean_grad_norm;
  s["min_norm"] = r.min_norm;
  s["final_mean_cosine"] = r.final_mean_cosine;
  if (r.spectrum) s["lambda_max"] = r.spectrum->lambda_max;
  s["delta_m"] = r.delta_m ? json(*r.delta_m) : json(nullptr);
  s["passes"] = {{"forwards", r.trajectory.total_passes.forwards},
                 {"backwards", r.trajectory.total_passes.backwards}};
  s["steps"] = steps;
  s["seed"] = config.optimizer.seed;
  s["config"] = to_json(config);
  return s;
}

}  // namespace

RunResult run_experiment(const ExperimentConfig& config) {
  config.validate();
  const auto dir = resolve_output_dir(config.output_dir);
  std::filesystem::create_directories(dir);
  ProblemInstance inst = build_problem(config);
  const std::size_t K = inst.problem->num_tasks();

  if (const auto* mlp = dynamic_cast<const MlpMultiTaskProblem*>(inst.problem.get())) {
    write_dataset_csv(dir / "dataset.csv", mlp->train_data());
  }

  Execution ex;
  try {
    ex = execute(config, *inst.problem, inst.theta0);
  } catch (const OptimizationAborted& e) {
    write_csv(dir / "trajectory.csv",
              trajectory_table(e.partial(), K, config.optimizer.record_params));
    write_json(dir / "final_params.json", params_to_json(e.last_good()));
    write_json(dir / "summary.json", {{"aborted", true},
                                      {"error", e.what()},
                                      {"iteration", e.iteration()},
                                      {"config", to_json(config)}});
    throw;
  }

  RunResult& r = ex.result;
  r.output_dir = dir;
  write_csv(dir / "trajectory.csv", trajectory_table(r.trajectory, K, config.optimizer.record_params));
  write_json(dir / "final_params.json", params_to_json(r.trajectory.final_params));
  for (const auto& [iter, cm] : ex.cosines) {
    write_csv(dir / ("cosine_" + std::to_string(iter) + ".csv"), cosine_table(cm));
  }
  if (r.spectrum) write_json(dir / "spectrum.json", spectrum_to_json(*r.spectrum));
  write_json(dir / "summary.json", summary_json(config, r, config.optimizer.steps));
  return r;
}

ExperimentConfig apply_method(ExperimentConfig base, const std::string& method) {
  const auto plus = method.find('+');
  base.weighting = method.substr(0, plus);
  make_weighting(base.weighting);
  const std::string variant = plus == std::string::npos ? "" : method.substr(plus + 1);
  if (variant.empty()) {
    base.sam.mode = SamMode::off;
  } else if (variant == "gsam") {
    base.sam.mode = SamMode::global;
  } else if (variant == "lsam") {
    base.sam.mode = SamMode::local;
    base.sam.estimator = Estimator::exact;
  } else if (variant == "samo") {
    base.sam.mode = SamMode::joint;
    base.sam.estimator = Estimator::spsa;
  } else {
    throw ConfigError("unknown method variant '" + variant + "' (expected gsam, lsam or samo)");
  }
  return base;
}

ExperimentConfig toy_figure_defaults() {
  ExperimentConfig c;
  c.problem.kind = ProblemKind::toy;
  c.problem.start = {-6.0, 1.0};
  c.weighting = "ls";
  c.sam.mode = SamMode::off;
  c.sam.rho = 0.5;
  c.optimizer.lr = 0.2;
  c.optimizer.momentum = 0.95;
  c.optimizer.steps = 5000;
  c.optimizer.schedule.kind = ScheduleKind::constant;
  c.optimizer.record_params = true;
  c.output_dir = "toy_figure";
  return c;
}

ToyFigureResult run_toy_figure(const ExperimentConfig& base,
                               const std::vector<std::string>& methods,
                               const std::filesystem::path& output_dir,
                               std::size_t grid_resolution) {
  if (methods.empty()) throw ConfigError("toy-figure: no methods given");
  if (base.problem.kind != ProblemKind::toy) throw ConfigError("toy-figure needs the toy problem");
  const auto dir = resolve_output_dir(output_dir);
  std::filesystem::create_directories(dir);

  CsvTable grid{{"x1", "x2", "f1", "f2"}, {}};
  for (const auto& row : toy_pareto_grid(grid_resolution)) {
    grid.rows.push_back({row.x1, row.x2, row.f1, row.f2});
  }
  write_csv(dir / "toy_grid.csv", grid);

  ToyFigureResult out;
  json summary = json::object();
  for (const auto& method : methods) {
    ExperimentConfig cfg = apply_method(base, method);
    cfg.optimizer.record_params = true;
    cfg.validate();
    ProblemInstance inst = build_problem(cfg);
    Execution ex = execute(cfg, *inst.problem, inst.theta0);
    write_csv(dir / ("trajectory_" + method + ".csv"),
              trajectory_table(ex.result.trajectory, 2, true));
    const ToyProblem toy;
    SpectrumOptions so;
    so.k = 1;
    const double lambda_max = hessian_spectrum(toy, ex.result.trajectory.final_params, so).lambda_max;
    summary[method] = {{"final", ex.result.trajectory.final_params.flat()},
                       {"final_losses", ex.result.final_losses},
                       {"mean_grad_norm", ex.result.mean_grad_norm},
                       {"lambda_max", lambda_max}};
    ex.result.output_dir = dir;
    out.methods.push_back(method);
    out.runs.push_back(std::move(ex.result));
  }
  write_json(dir / "toy_figure.json", summary);
  return out;
}

std::vector<SweepRow> run_sweep(const ExperimentConfig& base, const std::string& axis,
                                const std::vector<double>& values, std::size_t jobs) {
  static const std::set<std::string> kAxes{"alpha", "rho", "mu", "lr", "conflict_angle"};
  if (!kAxes.count(axis)) {
    throw ConfigError("sweep axis '" + axis + "' must be one of alpha, rho, mu, lr, conflict_angle");
  }
  if (values.empty()) throw ConfigError("sweep: empty values list");
  if (axis == "conflict_angle" && base.problem.kind != ProblemKind::mlp) {
    throw ConfigError("sweep axis conflict_angle needs an mlp problem");
  }
  const auto root = resolve_output_dir(base.output_dir);

  std::vector<ExperimentConfig> configs;
  for (std::size_t i = 0; i < values.size(); ++i) {
    ExperimentConfig c = base;
    const double v = values[i];
    if (axis == "alpha") c.sam.alpha = v;
    if (axis == "rho") c.sam.rho = v;
    if (axis == "mu") c.sam.mu = v;
    if (axis == "lr") c.optimizer.lr = v;
    if (axis == "conflict_angle") c.problem.mlp.conflict_angle = v;
    c.optimizer.seed = base.optimizer.seed + i;
    c.output_dir = root / (axis + "_" + std::to_string(i));
    c.validate();
    configs.push_back(std::move(c));
  }

  std::vector<SweepRow> rows(values.size());
  std::vector<std::exception_ptr> errors(values.size());
  std::size_t next = 0;
  std::mutex mu;
  auto worker = [&] {
    while (true) {
      std::size_t i;
      {
        std::lock_guard lock(mu);
        if (next >= configs.size()) return;
        i = next++;
      }
      try {
        rows[i] = {values[i], run_experiment(configs[i])};
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < std::max<std::size_t>(1, std::min(jobs, values.size())); ++t) {
    pool.emplace_back(worker);
  }
  for (auto& th : pool) th.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  const std::size_t K = rows.front().result.final_losses.size();
  CsvTable table;
  table.header = {"index", axis};
  for (std::size_t i = 0; i < K; ++i) table.header.push_back("loss_" + std::to_string(i + 1));
  table.header.insert(table.header.end(), {"mean_loss", "mean_grad_norm", "min_norm", "mean_cosine"});
  const bool with_test = rows.front().result.test_losses.has_value();
  if (with_test) {
    for (std::size_t i = 0; i < K; ++i) table.header.push_back("test_loss_" + std::to_string(i + 1));
  }
  const bool with_spectrum = rows.front().result.spectrum.has_value();
  if (with_spectrum) table.header.push_back("lambda_max");
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const RunResult& r = rows[i].result;
    std::vector<double> row{static_cast<double>(i), rows[i].value};
    row.insert(row.end(), r.final_losses.begin(), r.final_losses.end());
    double mean_loss = 0.0;
    for (double v : r.final_losses) mean_loss += v;
    row.insert(row.end(), {mean_loss / static_cast<double>(K), r.mean_grad_norm, r.min_norm,
                           r.final_mean_cosine});
    if (with_test) row.insert(row.end(), r.test_losses->begin(), r.test_losses->end());
    if (with_spectrum) row.push_back(r.spectrum->lambda_max);
    table.rows.push_back(std::move(row));
  }
  std::filesystem::create_directories(root);
  write_csv(root / "sweep_summary.csv", table);
  return rows;
}

json params_to_json(const LayeredParams& theta) {
  json layers = json::array();
  for (std::size_t d = 0; d < theta.num_layers(); ++d) {
    auto l = theta.layer(d);
    layers.push_back(std::vector<double>(l.begin(), l.end()));
  }
  return {{"layers", layers}};
}

LayeredParams params_from_json(const json& doc) {
  if (!doc.is_object() || !doc.contains("layers") || !doc.at("layers").is_array()) {
    throw ConfigError("parameter snapshot must be an object with a 'layers' array");
  }
  std::vector<std::vector<double>> layers;
  for (const auto& l : doc.at("layers")) {
    if (!l.is_array()) throw ConfigError("parameter snapshot layers must be arrays");
    std::vector<double> block;
    for (const auto& v : l) {
      if (!v.is_number()) throw ConfigError("parameter snapshot entries must be numbers");
      block.push_back(v.get<double>());
    }
    layers.push_back(std::move(block));
  }
  return LayeredParams(std::move(layers));
}

json spectrum_to_json(const SpectrumReport& r) {
  return {{"eigenvalues", r.eigenvalues},
          {"lambda_max", r.lambda_max},
          {"bulk_ratio", r.bulk_ratio ? json(*r.bulk_ratio) : json(nullptr)},
          {"residuals", r.residuals},
          {"lanczos_steps", r.lanczos_steps},
          {"approximate", r.approximate}};
}

SpectrumReport spectrum_from_json(const json& doc) {
  SpectrumReport r;
  try {
    r.eigenvalues = doc.at("eigenvalues").get<std::vector<double>>();
    r.lambda_max = doc.at("lambda_max").get<double>();
    if (!doc.at("bulk_ratio").is_null()) r.bulk_ratio = doc.at("bulk_ratio").get<double>();
    r.residuals = doc.at("residuals").get<std::vector<double>>();
    r.lanczos_steps = doc.at("lanczos_steps").get<std::size_t>();
    r.approximate = doc.at("approximate").get<bool>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed spectrum report: ") + e.what());
  }
  return r;
}

}  // namespace samo
