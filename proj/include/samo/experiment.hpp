#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "samo/diagnostics.hpp"
#include "samo/mlp.hpp"
#include "samo/optimizer.hpp"
#include "samo/sam.hpp"

namespace samo {

enum class ProblemKind { toy, mlp };

struct ProblemSpec {
  ProblemKind kind = ProblemKind::toy;
  /// Toy starting point.
  std::vector<double> start{-6.0, 1.0};
  /// Mlp generator settings; `mlp.seed` also seeds the initial parameters.
  MlpConfig mlp{};
  /// Import training data from CSV instead of generating it.
  std::optional<std::filesystem::path> dataset;
};

struct DiagnosticsConfig {
  /// Write cosine_<iter>.csv every n recorded-eligible iterations (0 disables).
  std::size_t cosine_every = 0;
  bool spectrum_at_end = false;
  std::size_t k = 5;
  std::size_t iters = 0;
  double tol = 1e-6;
};

struct Baseline {
  std::string name;
  double value = 0.0;
  bool higher_is_better = false;
};

struct ExperimentConfig {
  ProblemSpec problem;
  std::string weighting = "ls";
  SamConfig sam{};
  OptimizerConfig optimizer{};
  /// Unset means trunk_only for mlp problems and all for the toy.
  std::optional<SharedScope> shared_scope;
  DiagnosticsConfig diagnostics{};
  /// Per-task single-task reference values for delta-m (one per task, compared
  /// with final held-out losses when available, training losses otherwise).
  std::vector<Baseline> baselines;
  std::filesystem::path output_dir = "samo_out";

  void validate() const;
};

/// Strict parse: unknown keys, wrong types and out-of-domain values throw
/// ConfigError naming the field.
ExperimentConfig parse_config(const nlohmann::json& doc);
nlohmann::json to_json(const ExperimentConfig& config);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Applies "dotted.path=value" overrides to a raw config document. The value is
/// parsed as JSON when possible and taken as a string otherwise.
void apply_override(nlohmann::json& doc, const std::string& assignment);

/// `output_dir`, resolved under $SAMO_OUTPUT_ROOT when that is set and the path is relative.
std::filesystem::path resolve_output_dir(const std::filesystem::path& output_dir);

/// Problem and starting point described by a config.
struct ProblemInstance {
  std::unique_ptr<MultiTaskProblem> problem;
  LayeredParams theta0;
};
ProblemInstance build_problem(const ExperimentConfig& config);

struct RunResult {
  Trajectory trajectory;
  std::vector<double> final_losses;
  std::optional<std::vector<double>> test_losses;
  /// ||mean of exact task gradients|| at the final parameters.
  double mean_grad_norm = 0.0;
  /// Norm of the min-norm convex combination of exact task gradients at the end.
  double min_norm = 0.0;
  double final_mean_cosine = 0.0;
  std::optional<SpectrumReport> spectrum;
  std::optional<double> delta_m;
  std::filesystem::path output_dir;
};

/// Runs one experiment and writes trajectory.csv, summary.json, final_params.json
/// (plus dataset.csv, spectrum.json and cosine_<iter>.csv when applicable).
/// On a numeric abort the partial trajectory is written before rethrowing.
RunResult run_experiment(const ExperimentConfig& config);

/// Method label "<weighting>[+gsam|+lsam|+samo]" applied to a base config.
ExperimentConfig apply_method(ExperimentConfig base, const std::string& method);

/// Defaults for the two-objective landscape trajectories.
ExperimentConfig toy_figure_defaults();

struct ToyFigureResult {
  std::vector<std::string> methods;
  std::vector<RunResult> runs;
};

/// Writes toy_grid.csv, trajectory_<method>.csv per method and toy_figure.json.
ToyFigureResult run_toy_figure(const ExperimentConfig& base, const std::vector<std::string>& methods,
                               const std::filesystem::path& output_dir,
                               std::size_t grid_resolution = 121);

struct SweepRow {
  double value = 0.0;
  RunResult result;
};

/// One sub-run per value of `axis` (alpha, rho, mu, lr or conflict_angle) in
/// <output_dir>/<axis>_<i>, each with seed base + i; collated into sweep_summary.csv.
std::vector<SweepRow> run_sweep(const ExperimentConfig& base, const std::string& axis,
                                const std::vector<double>& values, std::size_t jobs = 1);

// Readers/writers for the artifacts above.
nlohmann::json params_to_json(const LayeredParams& theta);
LayeredParams params_from_json(const nlohmann::json& doc);
nlohmann::json spectrum_to_json(const SpectrumReport& report);
SpectrumReport spectrum_from_json(const nlohmann::json& doc);
nlohmann::json read_json(const std::filesystem::path& path);
void write_json(const std::filesystem::path& path, const nlohmann::json& doc);

}  // namespace samo
