#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "simcal/calibration.hpp"
#include "simcal/reporting.hpp"

namespace simcal {

struct CodebookSpec {
  int points_per_axis = 5;
  double span_scale = 1.0;  // grids span span_scale * the error bounds
  int refine_factor = 4;
  int max_coarse_sweeps = 3;
};

struct MonitorSpec {
  int total_slots = 2000;
  int change_slot = 1200;
  int known_slot_period = 20;
  int window = 5;
  double threshold = 0.1;
  int calibration_slots = 200;
  double drift_scale = 10.0;  // post-change bounds = drift_scale * bounds
  bool calibrate_initial = true;
};

// A fully materialized scenario document: SI units, radians, receive probes
// placed. The schema is strict; unknown keys are rejected with a field path.
struct Scenario {
  std::string name;
  std::uint64_t seed = 1;
  std::string output_dir;
  SimStackConfig stack;
  SceneConfig scene;
  ErrorBounds bounds;
  std::optional<ErrorState> explicit_errors;
  SpacingModel spacing_model = SpacingModel::Cumulative;
  Complex pilot_symbol{1.0, 0.0};
  double snr_db = std::numeric_limits<double>::infinity();
  bool fresh_phases_per_stage = true;
  std::optional<StagePlan> stages;
  GradientSettings gradient;
  std::optional<CodebookSpec> codebook;
  std::optional<SweepSpec> sweep;
  std::optional<MonitorSpec> monitor;
  int heatmap_index = -1;  // -1 selects the worst uncalibrated matrix
  std::uint64_t scenario_hash = 0;  // FNV-1a of the canonical document

  RunContext context() const;
  // The error realization for this scenario's seed (explicit state wins).
  ErrorState realize_errors() const;
};

// Parses and validates a scenario document given as JSON text. Throws
// SchemaError carrying the offending field path.
Scenario parse_scenario(const std::string& json_text);

// Applies dotted-path key=value overrides (values parsed as JSON literals,
// bare words fall back to strings) to the document before validation.
std::string apply_overrides(const std::string& json_text,
                            const std::vector<std::string>& overrides);

const std::vector<std::string>& bundled_scenario_names();
const std::string& bundled_scenario_json(const std::string& name);

// Resolves a --scenario argument: an existing file path wins, then a bundled
// name. Returns the document text.
std::string load_scenario_text(const std::string& path_or_name);

std::uint64_t fnv1a_hash(const std::string& text);

}  // namespace simcal
