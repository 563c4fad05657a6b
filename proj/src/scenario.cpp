#include "simcal/scenario.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include <nlohmann/json.hpp>

#include "simcal/rng.hpp"

namespace simcal {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& path, const std::string& message) {
  throw SchemaError(path, message);
}

std::string join(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

void require_object(const json& j, const std::string& path) {
  if (!j.is_object()) fail(path, "expected an object");
}

void check_keys(const json& obj, const std::string& path,
                std::initializer_list<const char*> allowed) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool known = false;
    for (const char* key : allowed) {
      if (it.key() == key) {
        known = true;
        break;
      }
    }
    if (!known) fail(join(path, it.key()), "unknown key");
  }
}

bool has(const json& obj, const char* key) { return obj.contains(key); }

double number_at(const json& obj, const std::string& path, const char* key) {
  const json& v = obj.at(key);
  if (!v.is_number()) fail(join(path, key), "expected a number");
  return v.get<double>();
}

double opt_number(const json& obj, const std::string& path, const char* key,
                  double fallback) {
  return has(obj, key) ? number_at(obj, path, key) : fallback;
}

int int_at(const json& obj, const std::string& path, const char* key) {
  const json& v = obj.at(key);
  if (!v.is_number_integer()) fail(join(path, key), "expected an integer");
  return v.get<int>();
}

int opt_int(const json& obj, const std::string& path, const char* key,
            int fallback) {
  return has(obj, key) ? int_at(obj, path, key) : fallback;
}

bool opt_bool(const json& obj, const std::string& path, const char* key,
              bool fallback) {
  if (!has(obj, key)) return fallback;
  const json& v = obj.at(key);
  if (!v.is_boolean()) fail(join(path, key), "expected a boolean");
  return v.get<bool>();
}

std::string string_at(const json& obj, const std::string& path,
                      const char* key) {
  const json& v = obj.at(key);
  if (!v.is_string()) fail(join(path, key), "expected a string");
  return v.get<std::string>();
}

std::vector<double> number_array_at(const json& obj, const std::string& path,
                                    const char* key) {
  const json& v = obj.at(key);
  if (!v.is_array()) fail(join(path, key), "expected an array of numbers");
  std::vector<double> out;
  for (const json& item : v) {
    if (!item.is_number()) fail(join(path, key), "expected an array of numbers");
    out.push_back(item.get<double>());
  }
  return out;
}

// Exactly one of two alternative unit keys, scaled into SI.
double exclusive_unit(const json& obj, const std::string& path,
                      const char* key_a, double scale_a, const char* key_b,
                      double scale_b, const double* fallback) {
  const bool a = has(obj, key_a);
  const bool b = has(obj, key_b);
  if (a && b) {
    fail(join(path, key_a), std::string("specify only one of ") + key_a +
                                " and " + key_b);
  }
  if (a) return number_at(obj, path, key_a) * scale_a;
  if (b) return number_at(obj, path, key_b) * scale_b;
  if (fallback != nullptr) return *fallback;
  fail(join(path, key_a),
       std::string("one of ") + key_a + " and " + key_b + " is required");
}

SimStackConfig parse_stack(const json& obj, const std::string& path) {
  require_object(obj, path);
  check_keys(obj, path,
             {"num_layers", "atoms_per_side", "thickness_m", "wavelength_m",
              "frequency_ghz", "atom_pitch_wavelengths", "atom_pitch_m",
              "atom_area_wavelengths_sq", "atom_area_m2"});
  SimStackConfig config;
  if (!has(obj, "num_layers")) fail(join(path, "num_layers"), "required");
  if (!has(obj, "atoms_per_side")) fail(join(path, "atoms_per_side"), "required");
  if (!has(obj, "thickness_m")) fail(join(path, "thickness_m"), "required");
  config.num_layers = int_at(obj, path, "num_layers");
  if (config.num_layers < 2) fail(join(path, "num_layers"), "must be >= 2");
  config.atoms_per_side = int_at(obj, path, "atoms_per_side");
  if (config.atoms_per_side < 1) fail(join(path, "atoms_per_side"), "must be >= 1");
  config.stack_thickness = number_at(obj, path, "thickness_m");
  if (!(config.stack_thickness > 0.0)) fail(join(path, "thickness_m"), "must be > 0");

  constexpr double kSpeedOfLight = 299792458.0;
  const bool have_wl = has(obj, "wavelength_m");
  const bool have_f = has(obj, "frequency_ghz");
  if (have_wl == have_f) {
    fail(join(path, "wavelength_m"),
         "exactly one of wavelength_m and frequency_ghz is required");
  }
  config.wavelength = have_wl
                          ? number_at(obj, path, "wavelength_m")
                          : kSpeedOfLight / (number_at(obj, path, "frequency_ghz") * 1e9);
  if (!(config.wavelength > 0.0)) {
    fail(join(path, have_wl ? "wavelength_m" : "frequency_ghz"), "must be > 0");
  }

  const double default_pitch = 0.5 * config.wavelength;
  config.atom_pitch = exclusive_unit(obj, path, "atom_pitch_wavelengths",
                                     config.wavelength, "atom_pitch_m", 1.0,
                                     &default_pitch);
  const double default_area = 0.25 * config.wavelength * config.wavelength;
  config.atom_area = exclusive_unit(obj, path, "atom_area_wavelengths_sq",
                                    config.wavelength * config.wavelength,
                                    "atom_area_m2", 1.0, &default_area);
  if (!(config.atom_pitch > 0.0)) fail(join(path, "atom_pitch_m"), "must be > 0");
  if (!(config.atom_area > 0.0)) fail(join(path, "atom_area_m2"), "must be > 0");
  return config;
}

SceneConfig parse_scene(const json& obj, const std::string& path,
                        const SimStackConfig& stack) {
  require_object(obj, path);
  check_keys(obj, path, {"ue_position_m", "model", "rx"});
  SceneConfig scene;
  if (!has(obj, "ue_position_m")) fail(join(path, "ue_position_m"), "required");
  const std::vector<double> ue = number_array_at(obj, path, "ue_position_m");
  if (ue.size() != 3) fail(join(path, "ue_position_m"), "expected [x, y, z]");
  scene.ue_position = Vec3(ue[0], ue[1], ue[2]);
  if (!(scene.ue_position.y() < 0.0)) {
    fail(join(path, "ue_position_m"),
         "UE must lie strictly in front of layer 1 (y < 0)");
  }

  const std::string model =
      has(obj, "model") ? string_at(obj, path, "model") : "rayleigh_sommerfeld";
  if (model == "rayleigh_sommerfeld") {
    scene.model = PropagationModel::RayleighSommerfeld;
  } else if (model == "geometric_radar") {
    scene.model = PropagationModel::GeometricRadar;
  } else {
    fail(join(path, "model"),
         "expected \"rayleigh_sommerfeld\" or \"geometric_radar\"");
  }

  int nx = 2;
  int nz = 2;
  double pitch_wl = 0.5;
  double distance_wl = 5.0;
  if (has(obj, "rx")) {
    const json& rx = obj.at("rx");
    const std::string rx_path = join(path, "rx");
    require_object(rx, rx_path);
    check_keys(rx, rx_path, {"grid", "pitch_wavelengths", "distance_wavelengths"});
    if (has(rx, "grid")) {
      const json& grid = rx.at("grid");
      if (!grid.is_array() || grid.size() != 2 || !grid[0].is_number_integer() ||
          !grid[1].is_number_integer()) {
        fail(join(rx_path, "grid"), "expected [nx, nz] integers");
      }
      nx = grid[0].get<int>();
      nz = grid[1].get<int>();
      if (nx < 1 || nz < 1) fail(join(rx_path, "grid"), "grid must be >= 1x1");
    }
    pitch_wl = opt_number(rx, rx_path, "pitch_wavelengths", pitch_wl);
    distance_wl = opt_number(rx, rx_path, "distance_wavelengths", distance_wl);
    if (!(pitch_wl > 0.0)) fail(join(rx_path, "pitch_wavelengths"), "must be > 0");
    if (!(distance_wl > 0.0)) {
      fail(join(rx_path, "distance_wavelengths"), "must be > 0");
    }
  }
  scene.rx_positions = make_rx_grid(stack, nx, nz, pitch_wl * stack.wavelength,
                                    distance_wl * stack.wavelength);
  return scene;
}

ErrorBounds parse_bounds(const json& obj, const std::string& path,
                         double wavelength) {
  require_object(obj, path);
  check_keys(obj, path,
             {"spacing_wavelengths", "spacing_m", "vertical_wavelengths",
              "vertical_m", "rotation_degrees", "rotation_radians"});
  constexpr double kDegree = std::numbers::pi / 180.0;
  const double zero = 0.0;
  ErrorBounds bounds;
  bounds.spacing = exclusive_unit(obj, path, "spacing_wavelengths", wavelength,
                                  "spacing_m", 1.0, &zero);
  bounds.vertical = exclusive_unit(obj, path, "vertical_wavelengths", wavelength,
                                   "vertical_m", 1.0, &zero);
  bounds.rotation = exclusive_unit(obj, path, "rotation_degrees", kDegree,
                                   "rotation_radians", 1.0, &zero);
  if (bounds.spacing < 0.0) fail(join(path, "spacing_m"), "must be >= 0");
  if (bounds.vertical < 0.0) fail(join(path, "vertical_m"), "must be >= 0");
  if (bounds.rotation < 0.0) fail(join(path, "rotation_degrees"), "must be >= 0");
  return bounds;
}

ErrorState parse_explicit_state(const json& obj, const std::string& path,
                                int num_layers) {
  require_object(obj, path);
  check_keys(obj, path,
             {"delta_spacing_m", "delta_vertical_m", "delta_rotation_rad"});
  ErrorState state = ErrorState::zeros(num_layers);
  auto fill = [&](const char* key, std::vector<double>& target) {
    if (!has(obj, key)) return;
    const std::vector<double> values = number_array_at(obj, path, key);
    if (static_cast<int>(values.size()) != num_layers) {
      fail(join(path, key), "expected " + std::to_string(num_layers) +
                                " entries (one per layer)");
    }
    target = values;
  };
  fill("delta_spacing_m", state.delta_spacing);
  fill("delta_vertical_m", state.delta_vertical);
  fill("delta_rotation_rad", state.delta_rotation);
  if (state.delta_spacing[0] != 0.0) {
    fail(join(path, "delta_spacing_m"), "layer 1 spacing deviation must be 0");
  }
  return state;
}

}  // namespace

RunContext Scenario::context() const {
  RunContext ctx;
  ctx.stack = stack;
  ctx.scene = scene;
  ctx.spacing_model = spacing_model;
  ctx.gradient = gradient;
  ctx.pilot_symbol = pilot_symbol;
  ctx.snr_db = snr_db;
  return ctx;
}

ErrorState Scenario::realize_errors() const {
  if (explicit_errors.has_value()) return *explicit_errors;
  return sample_errors(stack.num_layers, bounds,
                       derive_seed(seed, seed_stream::kErrorSampling));
}

Scenario parse_scenario(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    fail("$", std::string("not valid JSON: ") + e.what());
  }
  require_object(doc, "$");
  check_keys(doc, "",
             {"name", "seed", "output_dir", "stack", "scene", "errors", "pilot",
              "stages", "gradient", "codebook", "sweep", "monitor", "heatmap"});

  Scenario s;
  if (!has(doc, "name")) fail("name", "required");
  s.name = string_at(doc, "", "name");
  if (s.name.empty()) fail("name", "must be non-empty");

  if (!has(doc, "seed")) fail("seed", "required");
  {
    const json& v = doc.at("seed");
    if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() &&
                                   v.get<long long>() < 0)) {
      fail("seed", "expected a non-negative integer");
    }
    s.seed = v.get<std::uint64_t>();
  }
  s.output_dir = has(doc, "output_dir") ? string_at(doc, "", "output_dir")
                                        : "out/" + s.name;

  if (!has(doc, "stack")) fail("stack", "required");
  s.stack = parse_stack(doc.at("stack"), "stack");

  if (!has(doc, "scene")) fail("scene", "required");
  s.scene = parse_scene(doc.at("scene"), "scene", s.stack);

  if (!has(doc, "errors")) fail("errors", "required");
  {
    const json& errors = doc.at("errors");
    require_object(errors, "errors");
    check_keys(errors, "errors", {"bounds", "spacing_model", "explicit_state"});
    if (has(errors, "bounds")) {
      s.bounds = parse_bounds(errors.at("bounds"), "errors.bounds",
                              s.stack.wavelength);
    }
    if (has(errors, "spacing_model")) {
      const std::string model = string_at(errors, "errors", "spacing_model");
      if (model == "cumulative") {
        s.spacing_model = SpacingModel::Cumulative;
      } else if (model == "per_gap") {
        s.spacing_model = SpacingModel::PerGap;
      } else {
        fail("errors.spacing_model", "expected \"cumulative\" or \"per_gap\"");
      }
    }
    if (has(errors, "explicit_state")) {
      s.explicit_errors = parse_explicit_state(
          errors.at("explicit_state"), "errors.explicit_state", s.stack.num_layers);
    }
  }

  if (has(doc, "pilot")) {
    const json& pilot = doc.at("pilot");
    require_object(pilot, "pilot");
    check_keys(pilot, "pilot",
               {"pilot_symbol", "snr_db", "fresh_phases_per_stage"});
    if (has(pilot, "pilot_symbol")) {
      const std::vector<double> sym =
          number_array_at(pilot, "pilot", "pilot_symbol");
      if (sym.size() != 2) fail("pilot.pilot_symbol", "expected [re, im]");
      s.pilot_symbol = Complex(sym[0], sym[1]);
      if (std::abs(s.pilot_symbol) == 0.0) {
        fail("pilot.pilot_symbol", "must be nonzero");
      }
    }
    if (has(pilot, "snr_db")) {
      const json& snr = pilot.at("snr_db");
      if (snr.is_string()) {
        if (snr.get<std::string>() != "noiseless") {
          fail("pilot.snr_db", "expected a number or \"noiseless\"");
        }
        s.snr_db = std::numeric_limits<double>::infinity();
      } else if (snr.is_number()) {
        s.snr_db = snr.get<double>();
      } else {
        fail("pilot.snr_db", "expected a number or \"noiseless\"");
      }
    }
    s.fresh_phases_per_stage =
        opt_bool(pilot, "pilot", "fresh_phases_per_stage", true);
  }

  if (has(doc, "stages")) {
    const json& stages = doc.at("stages");
    require_object(stages, "stages");
    check_keys(stages, "stages", {"num_stages", "slots_per_stage", "mode"});
    StagePlan plan;
    plan.num_stages = opt_int(stages, "stages", "num_stages", 1);
    plan.slots_per_stage = opt_int(stages, "stages", "slots_per_stage", 100);
    const std::string mode = has(stages, "mode")
                                 ? string_at(stages, "stages", "mode")
                                 : (plan.num_stages > 1 ? "multi_stage"
                                                        : "single_stage");
    if (mode == "single_stage") {
      plan.mode = StageMode::SingleStage;
    } else if (mode == "multi_stage") {
      plan.mode = StageMode::MultiStage;
    } else {
      fail("stages.mode", "expected \"single_stage\" or \"multi_stage\"");
    }
    if (plan.num_stages < 1) fail("stages.num_stages", "must be >= 1");
    if (plan.slots_per_stage < 1) fail("stages.slots_per_stage", "must be >= 1");
    if (plan.mode == StageMode::SingleStage && plan.num_stages != 1) {
      fail("stages.mode", "single_stage requires num_stages == 1");
    }
    s.stages = plan;
  }

  if (has(doc, "gradient")) {
    const json& grad = doc.at("gradient");
    require_object(grad, "gradient");
    check_keys(grad, "gradient",
               {"step_size", "stage_decay", "max_iters_per_stage",
                "convergence_tol", "regularization_weight", "reg_stage_decay",
                "backtrack_halvings", "optimize_exit", "loss_floor",
                "refine_passes", "refine_cap"});
    s.gradient.step_size =
        opt_number(grad, "gradient", "step_size", s.gradient.step_size);
    s.gradient.stage_decay =
        opt_number(grad, "gradient", "stage_decay", s.gradient.stage_decay);
    s.gradient.max_iters_per_stage = opt_int(
        grad, "gradient", "max_iters_per_stage", s.gradient.max_iters_per_stage);
    s.gradient.convergence_tol = opt_number(grad, "gradient", "convergence_tol",
                                            s.gradient.convergence_tol);
    s.gradient.regularization_weight =
        opt_number(grad, "gradient", "regularization_weight",
                   s.gradient.regularization_weight);
    s.gradient.reg_stage_decay = opt_number(grad, "gradient", "reg_stage_decay",
                                            s.gradient.reg_stage_decay);
    s.gradient.loss_floor =
        opt_number(grad, "gradient", "loss_floor", s.gradient.loss_floor);
    s.gradient.backtrack_halvings = opt_int(
        grad, "gradient", "backtrack_halvings", s.gradient.backtrack_halvings);
    s.gradient.refine_passes =
        opt_int(grad, "gradient", "refine_passes", s.gradient.refine_passes);
    s.gradient.refine_cap =
        opt_int(grad, "gradient", "refine_cap", s.gradient.refine_cap);
    s.gradient.optimize_exit =
        opt_bool(grad, "gradient", "optimize_exit", s.gradient.optimize_exit);
    if (!(s.gradient.step_size > 0.0)) fail("gradient.step_size", "must be > 0");
    if (!(s.gradient.stage_decay > 0.0 && s.gradient.stage_decay <= 1.0)) {
      fail("gradient.stage_decay", "must lie in (0, 1]");
    }
    if (s.gradient.max_iters_per_stage < 0) {
      fail("gradient.max_iters_per_stage", "must be >= 0");
    }
    if (!(s.gradient.convergence_tol > 0.0)) {
      fail("gradient.convergence_tol", "must be > 0");
    }
    if (s.gradient.regularization_weight < 0.0) {
      fail("gradient.regularization_weight", "must be >= 0");
    }
    if (s.gradient.backtrack_halvings < 0) {
      fail("gradient.backtrack_halvings", "must be >= 0");
    }
    if (s.gradient.refine_passes < 0) {
      fail("gradient.refine_passes", "must be >= 0");
    }
    if (s.gradient.refine_cap < 1) {
      fail("gradient.refine_cap", "must be >= 1");
    }
  }

  if (has(doc, "codebook")) {
    const json& book = doc.at("codebook");
    require_object(book, "codebook");
    check_keys(book, "codebook",
               {"points_per_axis", "span_scale", "refine_factor",
                "max_coarse_sweeps"});
    CodebookSpec spec;
    spec.points_per_axis =
        opt_int(book, "codebook", "points_per_axis", spec.points_per_axis);
    spec.span_scale = opt_number(book, "codebook", "span_scale", spec.span_scale);
    spec.refine_factor =
        opt_int(book, "codebook", "refine_factor", spec.refine_factor);
    spec.max_coarse_sweeps =
        opt_int(book, "codebook", "max_coarse_sweeps", spec.max_coarse_sweeps);
    if (spec.points_per_axis < 1 || spec.points_per_axis % 2 == 0) {
      fail("codebook.points_per_axis", "must be an odd positive integer");
    }
    if (!(spec.span_scale > 0.0)) fail("codebook.span_scale", "must be > 0");
    if (spec.refine_factor < 1) fail("codebook.refine_factor", "must be >= 1");
    if (spec.max_coarse_sweeps < 1) {
      fail("codebook.max_coarse_sweeps", "must be >= 1");
    }
    s.codebook = spec;
  }

  if (has(doc, "sweep")) {
    const json& sweep = doc.at("sweep");
    require_object(sweep, "sweep");
    check_keys(sweep, "sweep",
               {"parameter", "grid_wavelengths", "grid_m", "grid_degrees",
                "grid_radians", "slots", "seeds_per_point"});
    SweepSpec spec;
    if (!has(sweep, "parameter")) fail("sweep.parameter", "required");
    const std::string parameter = string_at(sweep, "sweep", "parameter");
    if (parameter == "spacing") {
      spec.parameter = SweepParameter::Spacing;
    } else if (parameter == "vertical") {
      spec.parameter = SweepParameter::Vertical;
    } else if (parameter == "rotation") {
      spec.parameter = SweepParameter::Rotation;
    } else {
      fail("sweep.parameter",
           "expected \"spacing\", \"vertical\" or \"rotation\"");
    }
    const bool length_parameter = spec.parameter != SweepParameter::Rotation;
    const char* key_wl = length_parameter ? "grid_wavelengths" : "grid_degrees";
    const char* key_si = length_parameter ? "grid_m" : "grid_radians";
    const double scale_wl =
        length_parameter ? s.stack.wavelength : std::numbers::pi / 180.0;
    if (has(sweep, length_parameter ? "grid_degrees" : "grid_wavelengths") ||
        has(sweep, length_parameter ? "grid_radians" : "grid_m")) {
      fail("sweep.parameter", "grid units do not match the swept parameter");
    }
    const bool have_wl = has(sweep, key_wl);
    const bool have_si = has(sweep, key_si);
    if (have_wl == have_si) {
      fail(join("sweep", key_wl),
           std::string("exactly one of ") + key_wl + " and " + key_si +
               " is required");
    }
    spec.grid = number_array_at(sweep, "sweep", have_wl ? key_wl : key_si);
    if (have_wl) {
      for (double& v : spec.grid) v *= scale_wl;
    }
    spec.slots = opt_int(sweep, "sweep", "slots", spec.slots);
    spec.seeds_per_point =
        opt_int(sweep, "sweep", "seeds_per_point", spec.seeds_per_point);
    try {
      spec.validate();
    } catch (const ConfigError& e) {
      fail("sweep", e.what());
    }
    s.sweep = spec;
  }

  if (has(doc, "monitor")) {
    const json& monitor = doc.at("monitor");
    require_object(monitor, "monitor");
    check_keys(monitor, "monitor",
               {"total_slots", "change_slot", "known_slot_period", "window",
                "threshold", "calibration_slots", "drift_scale",
                "initial_estimate"});
    MonitorSpec spec;
    spec.total_slots = opt_int(monitor, "monitor", "total_slots", spec.total_slots);
    spec.change_slot = opt_int(monitor, "monitor", "change_slot", spec.change_slot);
    spec.known_slot_period =
        opt_int(monitor, "monitor", "known_slot_period", spec.known_slot_period);
    spec.window = opt_int(monitor, "monitor", "window", spec.window);
    spec.threshold = opt_number(monitor, "monitor", "threshold", spec.threshold);
    spec.calibration_slots =
        opt_int(monitor, "monitor", "calibration_slots", spec.calibration_slots);
    spec.drift_scale =
        opt_number(monitor, "monitor", "drift_scale", spec.drift_scale);
    if (has(monitor, "initial_estimate")) {
      const std::string mode = string_at(monitor, "monitor", "initial_estimate");
      if (mode == "calibrate") {
        spec.calibrate_initial = true;
      } else if (mode == "truth") {
        spec.calibrate_initial = false;
      } else {
        fail("monitor.initial_estimate", "expected \"calibrate\" or \"truth\"");
      }
    }
    if (spec.total_slots < 1) fail("monitor.total_slots", "must be >= 1");
    if (spec.change_slot < 0 || spec.change_slot > spec.total_slots) {
      fail("monitor.change_slot", "must lie inside the stream");
    }
    if (spec.known_slot_period < 1) {
      fail("monitor.known_slot_period", "must be >= 1");
    }
    if (spec.window < 1) fail("monitor.window", "must be >= 1");
    if (!(spec.threshold > 0.0)) fail("monitor.threshold", "must be > 0");
    if (spec.calibration_slots < 1) {
      fail("monitor.calibration_slots", "must be >= 1");
    }
    if (!(spec.drift_scale > 0.0)) fail("monitor.drift_scale", "must be > 0");
    s.monitor = spec;
  }

  if (has(doc, "heatmap")) {
    const json& heatmap = doc.at("heatmap");
    require_object(heatmap, "heatmap");
    check_keys(heatmap, "heatmap", {"matrix_index"});
    s.heatmap_index = opt_int(heatmap, "heatmap", "matrix_index", -1);
    if (s.heatmap_index < -1 ||
        s.heatmap_index >= s.stack.num_layers - 1) {
      fail("heatmap.matrix_index",
           "must be -1 (auto) or a valid interlayer index");
    }
  }

  s.stack.validate();
  s.bounds.validate();
  s.scenario_hash = fnv1a_hash(doc.dump());
  return s;
}

std::string apply_overrides(const std::string& json_text,
                            const std::vector<std::string>& overrides) {
  if (overrides.empty()) return json_text;
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    fail("$", std::string("not valid JSON: ") + e.what());
  }
  for (const std::string& kv : overrides) {
    const std::size_t eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw ConfigError("override must look like path.to.key=value (got \"" +
                        kv + "\")");
    }
    const std::string key_path = kv.substr(0, eq);
    const std::string value_text = kv.substr(eq + 1);
    json value = json::parse(value_text, nullptr, false);
    if (value.is_discarded()) value = value_text;  // bare word -> string

    json* cursor = &doc;
    std::size_t start = 0;
    while (true) {
      const std::size_t dot = key_path.find('.', start);
      const std::string key = key_path.substr(
          start, dot == std::string::npos ? std::string::npos : dot - start);
      if (key.empty()) {
        throw ConfigError("override has an empty path segment: \"" + kv + "\"");
      }
      if (dot == std::string::npos) {
        (*cursor)[key] = value;
        break;
      }
      cursor = &(*cursor)[key];
      if (!cursor->is_object() && !cursor->is_null()) {
        throw ConfigError("override path " + key_path +
                          " descends into a non-object");
      }
      start = dot + 1;
    }
  }
  return doc.dump(2) + "\n";
}

std::uint64_t fnv1a_hash(const std::string& text) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

namespace {

const char* kPaperFig4a = R"json({
  "name": "paper-fig4a",
  "seed": 1,
  "output_dir": "out/paper-fig4a",
  "stack": {
    "num_layers": 4,
    "atoms_per_side": 6,
    "frequency_ghz": 28.0,
    "thickness_m": 0.01
  },
  "scene": {
    "ue_position_m": [0.0, -30.0, 0.0],
    "model": "rayleigh_sommerfeld"
  },
  "errors": {
    "bounds": {
      "spacing_wavelengths": 0.001,
      "vertical_wavelengths": 0.01,
      "rotation_degrees": 0.01
    },
    "spacing_model": "cumulative"
  },
  "pilot": {
    "snr_db": "noiseless"
  },
  "stages": {
    "num_stages": 10,
    "slots_per_stage": 100,
    "mode": "multi_stage"
  },
  "gradient": {
    "step_size": 0.05,
    "stage_decay": 0.8,
    "max_iters_per_stage": 0,
    "convergence_tol": 1e-08,
    "regularization_weight": 0.0,
    "refine_passes": 8,
    "refine_cap": 1200
  }
}
)json";

const char* kPaperFig4b = R"json({
  "name": "paper-fig4b",
  "seed": 1,
  "output_dir": "out/paper-fig4b",
  "stack": {
    "num_layers": 4,
    "atoms_per_side": 6,
    "frequency_ghz": 28.0,
    "thickness_m": 0.01
  },
  "scene": {
    "ue_position_m": [0.0, -30.0, 0.0],
    "model": "rayleigh_sommerfeld"
  },
  "errors": {
    "bounds": {
      "vertical_wavelengths": 0.01
    },
    "spacing_model": "cumulative"
  },
  "pilot": {
    "snr_db": "noiseless"
  },
  "stages": {
    "num_stages": 1,
    "slots_per_stage": 1000,
    "mode": "single_stage"
  },
  "gradient": {
    "step_size": 0.05,
    "stage_decay": 0.8,
    "max_iters_per_stage": 60,
    "convergence_tol": 1e-08,
    "regularization_weight": 0.0,
    "refine_passes": 6,
    "refine_cap": 1200
  },
  "sweep": {
    "parameter": "vertical",
    "grid_wavelengths": [0.0025, 0.005, 0.01, 0.02, 0.04],
    "slots": 1000,
    "seeds_per_point": 5
  }
}
)json";

const char* kPaperFig5 = R"json({
  "name": "paper-fig5",
  "seed": 1,
  "output_dir": "out/paper-fig5",
  "stack": {
    "num_layers": 4,
    "atoms_per_side": 3,
    "frequency_ghz": 28.0,
    "thickness_m": 0.01
  },
  "scene": {
    "ue_position_m": [0.0, -30.0, 0.0],
    "model": "rayleigh_sommerfeld"
  },
  "errors": {
    "bounds": {
      "spacing_wavelengths": 0.01,
      "vertical_wavelengths": 0.1,
      "rotation_degrees": 0.1
    },
    "spacing_model": "cumulative"
  },
  "pilot": {
    "snr_db": "noiseless"
  },
  "stages": {
    "num_stages": 10,
    "slots_per_stage": 100,
    "mode": "multi_stage"
  },
  "gradient": {
    "step_size": 0.05,
    "stage_decay": 0.8,
    "max_iters_per_stage": 60,
    "convergence_tol": 1e-08,
    "regularization_weight": 0.0,
    "refine_passes": 8,
    "refine_cap": 1200
  },
  "heatmap": {
    "matrix_index": -1
  }
}
)json";

const char* kDeskTiny = R"json({
  "name": "desk-tiny",
  "seed": 1,
  "output_dir": "out/desk-tiny",
  "stack": {
    "num_layers": 2,
    "atoms_per_side": 2,
    "frequency_ghz": 28.0,
    "thickness_m": 0.01
  },
  "scene": {
    "ue_position_m": [0.0, -30.0, 0.0],
    "model": "rayleigh_sommerfeld"
  },
  "errors": {
    "bounds": {
      "vertical_wavelengths": 0.01
    },
    "spacing_model": "cumulative"
  },
  "pilot": {
    "snr_db": "noiseless"
  },
  "stages": {
    "num_stages": 1,
    "slots_per_stage": 200,
    "mode": "single_stage"
  },
  "gradient": {
    "step_size": 0.05,
    "stage_decay": 0.8,
    "max_iters_per_stage": 200,
    "convergence_tol": 1e-08,
    "regularization_weight": 0.0,
    "refine_passes": 4,
    "refine_cap": 1200
  },
  "codebook": {
    "points_per_axis": 5,
    "span_scale": 1.0,
    "refine_factor": 4,
    "max_coarse_sweeps": 3
  },
  "monitor": {
    "total_slots": 2000,
    "change_slot": 1200,
    "known_slot_period": 20,
    "window": 5,
    "threshold": 0.1,
    "calibration_slots": 200,
    "drift_scale": 10.0,
    "initial_estimate": "calibrate"
  }
}
)json";

}  // namespace

const std::vector<std::string>& bundled_scenario_names() {
  static const std::vector<std::string> names = {"paper-fig4a", "paper-fig4b",
                                                 "paper-fig5", "desk-tiny"};
  return names;
}

const std::string& bundled_scenario_json(const std::string& name) {
  static const std::string fig4a = kPaperFig4a;
  static const std::string fig4b = kPaperFig4b;
  static const std::string fig5 = kPaperFig5;
  static const std::string tiny = kDeskTiny;
  if (name == "paper-fig4a") return fig4a;
  if (name == "paper-fig4b") return fig4b;
  if (name == "paper-fig5") return fig5;
  if (name == "desk-tiny") return tiny;
  throw ConfigError("unknown bundled scenario \"" + name + "\"");
}

std::string load_scenario_text(const std::string& path_or_name) {
  std::error_code ec;
  if (std::filesystem::exists(path_or_name, ec)) {
    std::ifstream f(path_or_name);
    if (!f) throw ConfigError("cannot read scenario file " + path_or_name);
    std::ostringstream buffer;
    buffer << f.rdbuf();
    return buffer.str();
  }
  for (const std::string& name : bundled_scenario_names()) {
    if (name == path_or_name) return bundled_scenario_json(name);
  }
  throw ConfigError("scenario \"" + path_or_name +
                    "\" is neither a readable file nor a bundled name");
}

}  // namespace simcal
