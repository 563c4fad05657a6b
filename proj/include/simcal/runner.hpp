#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "simcal/scenario.hpp"

namespace simcal {

// Resolves a scenario reference (file path or bundled name), applies dotted
// key=value overrides and parses the result.
Scenario load_scenario(const std::string& path_or_name,
                       const std::vector<std::string>& overrides = {});

// In-memory products of one calibration run, shared by the calibrate and
// heatmap entry points.
struct CalibrationArtifacts {
  ErrorState errors;
  std::vector<LayerGeometry> ideal_geometry;
  std::vector<LayerGeometry> practical_geometry;
  PropagationSet ideal;
  PropagationSet practical;
  CalibrationTrace trace;
};

// Runs the scenario's staged calibration. progress, when given, receives one
// summary line per recorded stage.
CalibrationArtifacts calibrate_scenario(const Scenario& scenario,
                                        std::ostream* progress = nullptr);

// Mean over the interlayer entries (names W1..W{L-1}) of a stage record.
double mean_interlayer_db(const StageRecord& record);

// The run_* entry points execute one subcommand end to end and write their
// artifacts under scenario.output_dir (created if missing).

// trace.csv + trace_meta.json.
CalibrationTrace run_calibrate_scenario(const Scenario& scenario,
                                        std::ostream* progress = nullptr);

// sweep.csv + sweep_summary.csv + sweep_meta.json.
SweepTable run_sweep_scenario(const Scenario& scenario, int workers = 1,
                              std::ostream* progress = nullptr);

// heatmap_{ideal,practical,calibrated,difference}.txt + heatmap_meta.json.
HeatmapBundle run_heatmap_scenario(const Scenario& scenario,
                                   std::ostream* progress = nullptr);

// monitor_events.csv + monitor_indicator.csv + monitor_meta.json.
MonitorResult run_monitor_scenario(const Scenario& scenario,
                                   std::ostream* progress = nullptr);

// Fast internal consistency checks, one log line each. Returns true when
// every check passes.
bool run_validate(std::ostream& log);

}  // namespace simcal
