// Experiment runner: run, toy-figure, sweep and spectrum subcommands.
#include <CLI11.hpp>

#include <iostream>

#include "samo/errors.hpp"
#include "samo/experiment.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;

nlohmann::json config_document(const std::string& path, const std::vector<std::string>& overrides,
                               const std::string& output) {
  nlohmann::json doc = path.empty() ? nlohmann::json::object() : samo::read_json(path);
  for (const auto& o : overrides) samo::apply_override(doc, o);
  if (!output.empty()) doc["output_dir"] = output;
  return doc;
}

void print_run(const samo::RunResult& r) {
  std::cout << "output: " << r.output_dir.string() << "\nfinal losses:";
  for (double v : r.final_losses) std::cout << ' ' << v;
  std::cout << "\nmean gradient norm: " << r.mean_grad_norm << "\nmin-norm: " << r.min_norm
            << "\npasses: " << r.trajectory.total_passes.forwards << " fwd, "
            << r.trajectory.total_passes.backwards << " bwd\n";
  if (r.delta_m) std::cout << "delta_m%: " << *r.delta_m << '\n';
  if (r.spectrum) std::cout << "lambda_max: " << r.spectrum->lambda_max << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SAMO multi-task optimization experiments"};
  app.require_subcommand(1);

  std::string config_path, output, params_path;
  std::vector<std::string> overrides;
  std::vector<std::string> methods{"ls", "ls+gsam"};
  std::size_t grid = 121, jobs = 1;
  std::string axis;
  std::vector<double> values;
  samo::SpectrumOptions spec_opts;

  auto* run = app.add_subcommand("run", "execute one experiment from a JSON config");
  run->add_option("config", config_path, "config file")->required()->check(CLI::ExistingFile);
  run->add_option("--set", overrides, "override a config field, e.g. sam.rho=0.01");
  run->add_option("-o,--output", output, "output directory");

  auto* toy = app.add_subcommand("toy-figure", "toy trajectories plus the Pareto landscape grid");
  toy->add_option("-o,--output", output, "output directory")->default_str("toy_figure");
  toy->add_option("-m,--methods", methods, "methods such as ls, ls+gsam, ls+samo")->delimiter(',');
  toy->add_option("-c,--config", config_path, "base config (defaults tuned for the toy)")
      ->check(CLI::ExistingFile);
  toy->add_option("--set", overrides, "override a config field");
  toy->add_option("--grid", grid, "grid points per axis");

  auto* sweep = app.add_subcommand("sweep", "one sub-run per value of a parameter");
  sweep->add_option("config", config_path, "config file")->required()->check(CLI::ExistingFile);
  sweep->add_option("-a,--axis", axis, "alpha, rho, mu, lr or conflict_angle")->required();
  sweep->add_option("-v,--values", values, "comma separated values")->delimiter(',');
  sweep->add_option("-j,--jobs", jobs, "concurrent sub-runs");
  sweep->add_option("--set", overrides, "override a config field");
  sweep->add_option("-o,--output", output, "output root");

  auto* spectrum = app.add_subcommand("spectrum", "Hessian spectrum at a saved parameter snapshot");
  spectrum->add_option("config", config_path, "config that defines the problem")
      ->required()
      ->check(CLI::ExistingFile);
  spectrum->add_option("params", params_path, "final_params.json snapshot")
      ->required()
      ->check(CLI::ExistingFile);
  spectrum->add_option("-k", spec_opts.k, "number of top eigenvalues");
  spectrum->add_option("--iters", spec_opts.iters, "Lanczos steps (0 = 20k)");
  spectrum->add_option("--tol", spec_opts.tol, "residual tolerance");
  spectrum->add_option("--seed", spec_opts.seed, "start vector seed");
  spectrum->add_option("--set", overrides, "override a config field");
  spectrum->add_option("-o,--output", output, "write the report to this file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*run) {
      print_run(samo::run_experiment(samo::parse_config(config_document(config_path, overrides, output))));
    } else if (*toy) {
      samo::ExperimentConfig base = samo::toy_figure_defaults();
      if (!config_path.empty() || !overrides.empty()) {
        nlohmann::json doc = samo::to_json(base);
        if (!config_path.empty()) doc.merge_patch(samo::read_json(config_path));
        for (const auto& o : overrides) samo::apply_override(doc, o);
        base = samo::parse_config(doc);
      }
      const auto result =
          samo::run_toy_figure(base, methods, output.empty() ? "toy_figure" : output, grid);
      for (std::size_t i = 0; i < result.methods.size(); ++i) {
        const auto& p = result.runs[i].trajectory.final_params.flat();
        std::cout << result.methods[i] << ": final (" << p[0] << ", " << p[1]
                  << "), mean gradient norm " << result.runs[i].mean_grad_norm << '\n';
      }
    } else if (*sweep) {
      const auto base = samo::parse_config(config_document(config_path, overrides, output));
      const auto rows = samo::run_sweep(base, axis, values, jobs);
      std::cout << rows.size() << " sub-runs, summary in "
                << (samo::resolve_output_dir(base.output_dir) / "sweep_summary.csv").string() << '\n';
    } else if (*spectrum) {
      const auto config = samo::parse_config(config_document(config_path, overrides, ""));
      const auto inst = samo::build_problem(config);
      const auto theta = samo::params_from_json(samo::read_json(params_path));
      if (!theta.same_shape(inst.theta0)) {
        throw samo::ConfigError("parameter snapshot does not match the problem's layer shapes");
      }
      const auto report = samo::spectrum_to_json(samo::hessian_spectrum(*inst.problem, theta, spec_opts));
      if (output.empty()) {
        std::cout << report.dump(2) << '\n';
      } else {
        samo::write_json(output, report);
      }
    }
  } catch (const samo::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const samo::OptimizationAborted& e) {
    std::cerr << "numeric failure at iteration " << e.iteration() << ": " << e.what() << '\n';
    return kExitNumeric;
  } catch (const samo::NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
