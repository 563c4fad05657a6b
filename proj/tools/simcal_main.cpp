#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "simcal/runner.hpp"

namespace {

struct CommonArgs {
  std::string scenario;
  std::string out;
  std::string seed;
  int workers = 1;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool with_workers) {
  cmd->add_option("-s,--scenario", args.scenario,
                  "scenario file path or bundled name")
      ->required();
  cmd->add_option("-o,--out", args.out,
                  "output directory (overrides the scenario)");
  cmd->add_option("--seed", args.seed, "master seed (overrides the scenario)")
      ->check(CLI::Number);
  cmd->add_option("--override", args.overrides,
                  "dotted key=value scenario override (repeatable)");
  if (with_workers) {
    cmd->add_option("-w,--workers", args.workers, "worker threads")
        ->check(CLI::PositiveNumber);
  }
}

simcal::Scenario load(const CommonArgs& args) {
  std::vector<std::string> overrides = args.overrides;
  if (!args.seed.empty()) overrides.push_back("seed=" + args.seed);
  if (!args.out.empty()) overrides.push_back("output_dir=\"" + args.out + "\"");
  return simcal::load_scenario(args.scenario, overrides);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"simcal: stacked metasurface channel simulation and calibration"};
  app.require_subcommand(1);

  CommonArgs calibrate_args;
  CLI::App* calibrate =
      app.add_subcommand("calibrate", "run staged pilot calibration");
  add_common(calibrate, calibrate_args, false);

  CommonArgs sweep_args;
  CLI::App* sweep =
      app.add_subcommand("sweep", "error-bound robustness sweep");
  add_common(sweep, sweep_args, true);

  CommonArgs heatmap_args;
  CLI::App* heatmap = app.add_subcommand(
      "heatmap", "entry-magnitude panels for one interlayer matrix");
  add_common(heatmap, heatmap_args, false);

  CommonArgs monitor_args;
  CLI::App* monitor = app.add_subcommand(
      "monitor", "state-driven recalibration over a drifting stack");
  add_common(monitor, monitor_args, false);

  CLI::App* validate =
      app.add_subcommand("validate", "fast internal consistency checks");

  CLI11_PARSE(app, argc, argv);

  try {
    if (calibrate->parsed()) {
      const simcal::Scenario scenario = load(calibrate_args);
      simcal::run_calibrate_scenario(scenario, &std::cerr);
      std::cout << scenario.output_dir << "\n";
    } else if (sweep->parsed()) {
      const simcal::Scenario scenario = load(sweep_args);
      simcal::run_sweep_scenario(scenario, sweep_args.workers, &std::cerr);
      std::cout << scenario.output_dir << "\n";
    } else if (heatmap->parsed()) {
      const simcal::Scenario scenario = load(heatmap_args);
      simcal::run_heatmap_scenario(scenario, &std::cerr);
      std::cout << scenario.output_dir << "\n";
    } else if (monitor->parsed()) {
      const simcal::Scenario scenario = load(monitor_args);
      simcal::run_monitor_scenario(scenario, &std::cerr);
      std::cout << scenario.output_dir << "\n";
    } else if (validate->parsed()) {
      if (!simcal::run_validate(std::cout)) {
        std::cerr << "ERROR internal: validation checks failed\n";
        return 1;
      }
    }
  } catch (const simcal::SchemaError& e) {
    std::cerr << "ERROR schema " << e.what() << "\n";
    return 2;
  } catch (const simcal::ConfigError& e) {
    std::cerr << "ERROR config: " << e.what() << "\n";
    return 2;
  } catch (const simcal::DimensionError& e) {
    std::cerr << "ERROR numeric: " << e.what() << "\n";
    return 3;
  } catch (const simcal::SingularityError& e) {
    std::cerr << "ERROR numeric: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "ERROR internal: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
