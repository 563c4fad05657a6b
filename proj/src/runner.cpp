#include "simcal/runner.hpp"

#include <cmath>
#include <complex>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <ostream>

#include <nlohmann/json.hpp>

#include "format_util.hpp"
#include "simcal/rng.hpp"

namespace simcal {

namespace {

using nlohmann::json;
using detail::g17;

std::filesystem::path ensure_output_dir(const Scenario& scenario) {
  std::filesystem::path dir(scenario.output_dir);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) {
    throw ConfigError("cannot create output directory " + dir.string() + ": " +
                      ec.message());
  }
  return dir;
}

std::string hash_hex(std::uint64_t h) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "0x%016llx", static_cast<unsigned long long>(h));
  return buf;
}

bool is_interlayer_name(const std::string& name) {
  return name.size() >= 2 && name[0] == 'W' && name != "Wout";
}

json snr_json(double snr_db) {
  if (std::isinf(snr_db) && snr_db > 0.0) return "noiseless";
  return snr_db;
}

json scenario_header(const Scenario& scenario) {
  json meta;
  meta["scenario"] = scenario.name;
  meta["seed"] = scenario.seed;
  meta["scenario_hash"] = hash_hex(scenario.scenario_hash);
  meta["spacing_model"] =
      scenario.spacing_model == SpacingModel::Cumulative ? "cumulative"
                                                         : "per_gap";
  meta["snr_db"] = snr_json(scenario.snr_db);
  return meta;
}

json gradient_json(const GradientSettings& g) {
  json out;
  out["step_size"] = g.step_size;
  out["stage_decay"] = g.stage_decay;
  out["max_iters_per_stage"] = g.max_iters_per_stage;
  out["convergence_tol"] = g.convergence_tol;
  out["regularization_weight"] = g.regularization_weight;
  out["backtrack_halvings"] = g.backtrack_halvings;
  out["optimize_exit"] = g.optimize_exit;
  return out;
}

void write_json_file(const json& doc, const std::filesystem::path& path) {
  std::ofstream f(path);
  if (!f) throw ConfigError("cannot write " + path.string());
  f << doc.dump(2) << "\n";
}

json per_matrix_json(const StageRecord& record) {
  json out = json::object();
  for (const auto& [name, db] : record.nmse_db) out[name] = db;
  return out;
}

}  // namespace

Scenario load_scenario(const std::string& path_or_name,
                       const std::vector<std::string>& overrides) {
  std::string text = load_scenario_text(path_or_name);
  text = apply_overrides(text, overrides);
  return parse_scenario(text);
}

double mean_interlayer_db(const StageRecord& record) {
  double sum = 0.0;
  int count = 0;
  for (const auto& [name, db] : record.nmse_db) {
    if (is_interlayer_name(name)) {
      sum += db;
      ++count;
    }
  }
  if (count == 0) throw ConfigError("stage record has no interlayer entries");
  return sum / count;
}

CalibrationArtifacts calibrate_scenario(const Scenario& scenario,
                                        std::ostream* progress) {
  if (!scenario.stages.has_value()) {
    throw ConfigError("scenario \"" + scenario.name +
                      "\" has no stages section");
  }
  CalibrationArtifacts art;
  art.ideal_geometry = build_ideal_geometry(scenario.stack);
  art.errors = scenario.realize_errors();
  art.practical_geometry =
      apply_errors(art.ideal_geometry, art.errors, scenario.spacing_model);
  art.ideal =
      build_propagation_set(scenario.stack, scenario.scene, art.ideal_geometry);
  art.practical = build_propagation_set(scenario.stack, scenario.scene,
                                        art.practical_geometry);

  PilotPlan pilot;
  pilot.pilot_symbol = scenario.pilot_symbol;
  pilot.snr_db = scenario.snr_db;

  MultistageOptions options;
  options.fresh_phases_per_stage = scenario.fresh_phases_per_stage;
  if (progress != nullptr) {
    options.on_stage = [progress](const StageRecord& record) {
      char line[160];
      std::snprintf(line, sizeof(line),
                    "stage %2d  mean_interlayer_nmse_db=%9.3f  loss=%.6e\n",
                    record.stage, mean_interlayer_db(record),
                    record.loss_final);
      (*progress) << line;
      progress->flush();
    };
  }

  art.trace =
      run_multistage(scenario.stack, art.ideal, art.practical, *scenario.stages,
                     scenario.gradient, pilot, scenario.seed, options);
  return art;
}

CalibrationTrace run_calibrate_scenario(const Scenario& scenario,
                                        std::ostream* progress) {
  const std::filesystem::path dir = ensure_output_dir(scenario);
  CalibrationArtifacts art = calibrate_scenario(scenario, progress);

  write_stage_curve_csv(stage_curve(art.trace), (dir / "trace.csv").string());

  const StageRecord& first = art.trace.stages.front();
  const StageRecord& last = art.trace.stages.back();
  double max_reduction = -std::numeric_limits<double>::infinity();
  double min_reduction = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < first.nmse_db.size(); ++i) {
    if (!is_interlayer_name(first.nmse_db[i].first)) continue;
    const double reduction = first.nmse_db[i].second - last.nmse_db[i].second;
    max_reduction = std::max(max_reduction, reduction);
    min_reduction = std::min(min_reduction, reduction);
  }

  json meta = scenario_header(scenario);
  meta["num_stages"] = scenario.stages->num_stages;
  meta["slots_per_stage"] = scenario.stages->slots_per_stage;
  meta["mode"] = scenario.stages->mode == StageMode::MultiStage ? "multi_stage"
                                                                : "single_stage";
  meta["fresh_phases_per_stage"] = scenario.fresh_phases_per_stage;
  meta["gradient"] = gradient_json(scenario.gradient);
  meta["uncalibrated"] = {
      {"mean_interlayer_nmse_db", mean_interlayer_db(first)},
      {"per_matrix", per_matrix_json(first)},
  };
  meta["calibrated"] = {
      {"mean_interlayer_nmse_db", mean_interlayer_db(last)},
      {"per_matrix", per_matrix_json(last)},
  };
  meta["reduction"] = {
      {"mean_interlayer_db",
       mean_interlayer_db(first) - mean_interlayer_db(last)},
      {"max_interlayer_db", max_reduction},
      {"min_interlayer_db", min_reduction},
  };
  meta["final_loss"] = last.loss_final;
  json diverged = json::array();
  for (const StageRecord& record : art.trace.stages) {
    if (record.diverged) diverged.push_back(record.stage);
  }
  meta["diverged_stages"] = diverged;
  write_json_file(meta, dir / "trace_meta.json");

  return std::move(art.trace);
}

SweepTable run_sweep_scenario(const Scenario& scenario, int workers,
                              std::ostream* progress) {
  if (!scenario.sweep.has_value()) {
    throw ConfigError("scenario \"" + scenario.name + "\" has no sweep section");
  }
  const std::filesystem::path dir = ensure_output_dir(scenario);
  const SweepSpec& spec = *scenario.sweep;
  if (progress != nullptr) {
    (*progress) << "sweep: " << spec.grid.size() << " points x "
                << spec.seeds_per_point << " seeds, " << spec.slots
                << " slots each\n";
    progress->flush();
  }

  SweepTable table =
      robustness_sweep(scenario.context(), spec, scenario.seed, workers);

  write_sweep_csv(table, (dir / "sweep.csv").string());
  write_sweep_summary_csv(table, (dir / "sweep_summary.csv").string());

  json meta = scenario_header(scenario);
  const char* parameter = spec.parameter == SweepParameter::Spacing ? "spacing"
                          : spec.parameter == SweepParameter::Vertical
                              ? "vertical"
                              : "rotation";
  meta["parameter"] = parameter;
  meta["grid_si"] = spec.grid;
  meta["slots"] = spec.slots;
  meta["seeds_per_point"] = spec.seeds_per_point;
  meta["workers"] = workers;
  meta["gradient"] = gradient_json(scenario.gradient);
  json points = json::array();
  for (const SweepSummaryRow& row : table.summary) {
    points.push_back({{"bound_si", row.bound},
                      {"uncal_mean_db", row.uncal_mean_db},
                      {"cal_mean_db", row.cal_mean_db},
                      {"cal_max_db", row.cal_max_db}});
  }
  meta["summary"] = points;
  write_json_file(meta, dir / "sweep_meta.json");

  if (progress != nullptr) {
    for (const SweepSummaryRow& row : table.summary) {
      char line[160];
      std::snprintf(line, sizeof(line),
                    "bound=%-12.6g uncal_mean_db=%9.3f cal_mean_db=%9.3f\n",
                    row.bound, row.uncal_mean_db, row.cal_mean_db);
      (*progress) << line;
    }
    progress->flush();
  }
  return table;
}

HeatmapBundle run_heatmap_scenario(const Scenario& scenario,
                                   std::ostream* progress) {
  const std::filesystem::path dir = ensure_output_dir(scenario);
  CalibrationArtifacts art = calibrate_scenario(scenario, progress);

  int index = scenario.heatmap_index;
  const bool automatic = index < 0;
  if (automatic) index = auto_heatmap_index(art.ideal, art.practical);
  if (index < 0 || index >= static_cast<int>(art.ideal.interlayer.size())) {
    throw ConfigError("heatmap matrix index " + std::to_string(index) +
                      " out of range");
  }

  HeatmapBundle bundle =
      heatmap_bundle(art.ideal, art.practical, art.trace.final_estimate, index);
  write_heatmap_panel(bundle.ideal, (dir / "heatmap_ideal.txt").string());
  write_heatmap_panel(bundle.practical, (dir / "heatmap_practical.txt").string());
  write_heatmap_panel(bundle.calibrated,
                      (dir / "heatmap_calibrated.txt").string());
  write_heatmap_panel(bundle.difference,
                      (dir / "heatmap_difference.txt").string());

  const std::string name = "W" + std::to_string(index + 1);
  json meta = scenario_header(scenario);
  meta["matrix_index"] = index;
  meta["matrix_name"] = name;
  meta["auto_selected"] = automatic;
  meta["uncalibrated_nmse_db"] =
      nmse_db(art.ideal.interlayer[index], art.practical.interlayer[index]);
  meta["calibrated_nmse_db"] =
      nmse_db(art.trace.final_estimate.interlayer[index],
              art.practical.interlayer[index]);
  meta["max_abs_difference"] = bundle.difference.maxCoeff();
  meta["max_abs_practical"] = bundle.practical.maxCoeff();
  write_json_file(meta, dir / "heatmap_meta.json");

  if (progress != nullptr) {
    (*progress) << "heatmap: matrix " << name << " ("
                << (automatic ? "auto" : "fixed") << "), panels written to "
                << dir.string() << "\n";
    progress->flush();
  }
  return bundle;
}

MonitorResult run_monitor_scenario(const Scenario& scenario,
                                   std::ostream* progress) {
  if (!scenario.monitor.has_value()) {
    throw ConfigError("scenario \"" + scenario.name +
                      "\" has no monitor section");
  }
  const std::filesystem::path dir = ensure_output_dir(scenario);
  const MonitorSpec& spec = *scenario.monitor;

  const std::vector<LayerGeometry> ideal_geometry =
      build_ideal_geometry(scenario.stack);

  DriftScenario drift;
  drift.total_slots = spec.total_slots;
  drift.change_slot = spec.change_slot;
  drift.before = scenario.realize_errors();
  drift.after =
      sample_errors(scenario.stack.num_layers,
                    scenario.bounds.scaled(spec.drift_scale),
                    derive_seed(scenario.seed, seed_stream::kDriftErrors));

  MonitorSettings settings;
  settings.threshold = spec.threshold;
  settings.window = spec.window;
  settings.known_slot_period = spec.known_slot_period;
  settings.calibration_slots = spec.calibration_slots;
  settings.calibrate_initial = spec.calibrate_initial;
  settings.gradient = scenario.gradient;

  PilotPlan pilot;
  pilot.pilot_symbol = scenario.pilot_symbol;
  pilot.snr_db = scenario.snr_db;

  MonitorResult result = run_state_driven_monitor(
      scenario.stack, scenario.scene, ideal_geometry, drift, settings, pilot,
      scenario.seed, scenario.spacing_model);

  {
    std::ofstream f(dir / "monitor_indicator.csv");
    if (!f) throw ConfigError("cannot write monitor_indicator.csv");
    f << "slot,indicator\n";
    for (const auto& [slot, value] : result.indicator_history) {
      f << slot << "," << g17(value) << "\n";
    }
  }
  {
    std::ofstream f(dir / "monitor_events.csv");
    if (!f) throw ConfigError("cannot write monitor_events.csv");
    f << "trigger_slot,indicator_pre,indicator_post\n";
    for (const MonitorEvent& event : result.events) {
      f << event.slot << "," << g17(event.indicator_before) << ","
        << g17(event.indicator_after) << "\n";
    }
  }

  json meta = scenario_header(scenario);
  meta["total_slots"] = spec.total_slots;
  meta["change_slot"] = spec.change_slot;
  meta["known_slot_period"] = spec.known_slot_period;
  meta["window"] = spec.window;
  meta["threshold"] = spec.threshold;
  meta["calibration_slots"] = spec.calibration_slots;
  meta["drift_scale"] = spec.drift_scale;
  meta["initial_estimate"] = spec.calibrate_initial ? "calibrate" : "truth";
  meta["num_events"] = result.events.size();
  if (result.events.empty()) {
    meta["first_trigger_slot"] = nullptr;
    meta["detection_delay_slots"] = nullptr;
  } else {
    meta["first_trigger_slot"] = result.events.front().slot;
    meta["detection_delay_slots"] =
        result.events.front().slot - spec.change_slot;
  }
  write_json_file(meta, dir / "monitor_meta.json");

  if (progress != nullptr) {
    (*progress) << "monitor: " << result.events.size()
                << " recalibration event(s)";
    if (!result.events.empty()) {
      (*progress) << ", first at slot " << result.events.front().slot
                  << " (change at " << spec.change_slot << ")";
    }
    (*progress) << "\n";
    progress->flush();
  }
  return result;
}

namespace {

// Small deterministic helpers for run_validate.

CMatrix random_matrix(int rows, int cols, Rng& rng) {
  CMatrix m(rows, cols);
  for (int c = 0; c < cols; ++c) {
    for (int r = 0; r < rows; ++r) m(r, c) = rng.cgauss();
  }
  return m;
}

PropagationSet random_set(int atoms, int layers, int probes,
                          std::uint64_t seed) {
  Rng rng(seed);
  PropagationSet set;
  set.ue_channel = random_matrix(atoms, 1, rng);
  for (int l = 0; l + 1 < layers; ++l) {
    set.interlayer.push_back(random_matrix(atoms, atoms, rng));
  }
  set.exit = random_matrix(probes, atoms, rng);
  return set;
}

SimStackConfig validate_stack() {
  SimStackConfig config;
  config.num_layers = 3;
  config.atoms_per_side = 2;
  config.wavelength = 299792458.0 / 28e9;
  config.atom_pitch = 0.5 * config.wavelength;
  config.stack_thickness = 0.01;
  config.atom_area = 0.25 * config.wavelength * config.wavelength;
  return config;
}

}  // namespace

bool run_validate(std::ostream& log) {
  bool all_ok = true;
  auto check = [&](const char* name, auto&& fn) {
    try {
      if (fn()) {
        log << "ok   " << name << "\n";
      } else {
        log << "FAIL " << name << "\n";
        all_ok = false;
      }
    } catch (const std::exception& e) {
      log << "FAIL " << name << ": " << e.what() << "\n";
      all_ok = false;
    }
  };

  const SimStackConfig config = validate_stack();
  const double wl = config.wavelength;

  check("rs_coefficient closed form", [&] {
    const double d = 2.0 * wl;
    const Complex got = rs_coefficient(Vec3(0, 0, 0), Vec3(0, d, 0),
                                       Vec3(0, 1, 0), wl, config.atom_area);
    const Complex expected =
        (config.atom_area / d) *
        Complex(1.0 / (2.0 * std::numbers::pi * d), -1.0 / wl) *
        std::polar(1.0, 2.0 * std::numbers::pi * d / wl);
    return std::abs(got - expected) <= 1e-12 * std::abs(expected);
  });

  check("interlayer matrix matches per-pair coefficients", [&] {
    const auto layers = build_ideal_geometry(config);
    const CMatrix w = interlayer_matrix(layers[0], layers[1],
                                        PropagationModel::RayleighSommerfeld,
                                        wl, config.atom_area);
    for (int m = 0; m < w.rows(); ++m) {
      for (int n = 0; n < w.cols(); ++n) {
        const Complex direct = rs_coefficient(
            layers[0].atom_positions[n], layers[1].atom_positions[m],
            layers[0].normal, wl, config.atom_area);
        if (std::abs(w(m, n) - direct) > 1e-15 * std::abs(direct)) return false;
      }
    }
    return true;
  });

  check("cascade equals explicit path sum", [&] {
    SceneConfig scene;
    scene.ue_position = Vec3(0.0, -30.0, 0.0);
    scene.rx_positions = make_rx_grid(config, 2, 2, 0.5 * wl, 5.0 * wl);
    const auto layers = build_ideal_geometry(config);
    const PropagationSet set = build_propagation_set(config, scene, layers);

    Rng rng(11);
    PhaseConfig phases;
    for (int l = 0; l < config.num_layers; ++l) {
      Eigen::VectorXd theta(config.atoms_per_layer());
      for (int n = 0; n < theta.size(); ++n) theta(n) = rng.phase();
      phases.layer_phases.push_back(theta);
    }
    const CMatrix fast = cascade_response(set, phases);

    const int atoms = config.atoms_per_layer();
    const auto p = [&](int layer, int n) {
      return std::polar(1.0, phases.layer_phases[layer](n));
    };
    CMatrix slow = CMatrix::Zero(fast.rows(), 1);
    for (int r = 0; r < slow.rows(); ++r) {
      Complex acc = 0.0;
      for (int n3 = 0; n3 < atoms; ++n3) {
        for (int n2 = 0; n2 < atoms; ++n2) {
          for (int n1 = 0; n1 < atoms; ++n1) {
            acc += set.exit(r, n3) * p(2, n3) * set.interlayer[1](n3, n2) *
                   p(1, n2) * set.interlayer[0](n2, n1) * p(0, n1) *
                   set.ue_channel(n1, 0);
          }
        }
      }
      slow(r, 0) = acc;
    }
    return (fast - slow).norm() <= 1e-12 * slow.norm();
  });

  check("zero error state reproduces the ideal set exactly", [&] {
    SceneConfig scene;
    scene.ue_position = Vec3(0.0, -30.0, 0.0);
    scene.rx_positions = make_rx_grid(config, 2, 2, 0.5 * wl, 5.0 * wl);
    const auto ideal = build_ideal_geometry(config);
    const auto shifted =
        apply_errors(ideal, ErrorState::zeros(config.num_layers));
    const PropagationSet a = build_propagation_set(config, scene, ideal);
    const PropagationSet b = build_propagation_set(config, scene, shifted);
    if ((a.ue_channel - b.ue_channel).norm() != 0.0) return false;
    for (std::size_t l = 0; l < a.interlayer.size(); ++l) {
      if ((a.interlayer[l] - b.interlayer[l]).norm() != 0.0) return false;
    }
    return (a.exit - b.exit).norm() == 0.0;
  });

  check("gradient matches central finite differences", [&] {
    PilotPlan plan;
    plan.num_slots = 4;
    plan.phase_seed = 3;
    const auto schedule = generate_phase_schedule(config, plan);
    const PropagationSet truth = random_set(config.atoms_per_layer(),
                                            config.num_layers, 4, 7);
    const MeasurementSet meas = measure(truth, schedule, plan, 0);
    PropagationSet cand = random_set(config.atoms_per_layer(),
                                     config.num_layers, 4, 8);
    const PropagationSet grad = pilot_loss_gradient(cand, meas, true);

    const double eps = 1e-6;
    auto fd_matches = [&](CMatrix& slot, const CMatrix& g, int r, int c) {
      for (int part = 0; part < 2; ++part) {
        const Complex delta = part == 0 ? Complex(eps, 0) : Complex(0, eps);
        slot(r, c) += delta;
        const double up = pilot_loss(cand, meas);
        slot(r, c) -= 2.0 * delta;
        const double down = pilot_loss(cand, meas);
        slot(r, c) += delta;
        const double fd = (up - down) / (2.0 * eps);
        const double analytic = part == 0 ? g(r, c).real() : g(r, c).imag();
        if (std::abs(fd - analytic) > 1e-5 * std::max(1.0, std::abs(fd))) {
          return false;
        }
      }
      return true;
    };
    return fd_matches(cand.ue_channel, grad.ue_channel, 1, 0) &&
           fd_matches(cand.interlayer[0], grad.interlayer[0], 2, 3) &&
           fd_matches(cand.interlayer[1], grad.interlayer[1], 0, 1) &&
           fd_matches(cand.exit, grad.exit, 1, 2);
  });

  check("nmse floor and zero-truth rejection", [&] {
    const CMatrix m = random_set(4, 2, 4, 5).interlayer[0];
    if (nmse_db(m, m) != -300.0) return false;
    try {
      nmse_db(m, CMatrix::Zero(m.rows(), m.cols()));
      return false;
    } catch (const ConfigError&) {
      return true;
    }
  });

  check("phase schedule is slot-stable and seed-deterministic", [&] {
    PilotPlan plan;
    plan.num_slots = 5;
    plan.phase_seed = 42;
    const auto a = generate_phase_schedule(config, plan);
    const auto b = generate_phase_schedule(config, plan);
    PilotPlan shorter = plan;
    shorter.num_slots = 3;
    const auto c = generate_phase_schedule(config, shorter);
    for (int t = 0; t < 5; ++t) {
      for (int l = 0; l < config.num_layers; ++l) {
        if (a[t].layer_phases[l] != b[t].layer_phases[l]) return false;
        if (t < 3 && a[t].layer_phases[l] != c[t].layer_phases[l]) return false;
      }
    }
    return true;
  });

  check("bundled scenarios parse", [&] {
    for (const std::string& name : bundled_scenario_names()) {
      const Scenario s = parse_scenario(bundled_scenario_json(name));
      if (s.name != name) return false;
    }
    return true;
  });

  check("codebook recovers an on-grid state", [&] {
    SceneConfig scene;
    scene.ue_position = Vec3(0.0, -30.0, 0.0);
    scene.rx_positions = make_rx_grid(config, 2, 2, 0.5 * wl, 5.0 * wl);
    const auto ideal = build_ideal_geometry(config);

    ErrorBounds bounds;
    bounds.vertical = 0.01 * wl;
    ErrorState truth = ErrorState::zeros(config.num_layers);
    truth.delta_vertical[1] = 0.005 * wl;  // on the 5-point grid
    const auto practical = apply_errors(ideal, truth);
    const PropagationSet truth_set =
        build_propagation_set(config, scene, practical);

    PilotPlan plan;
    plan.num_slots = 32;
    plan.phase_seed = 9;
    const auto schedule = generate_phase_schedule(config, plan);
    const MeasurementSet meas = measure(truth_set, schedule, plan, 0);

    const Codebook book = Codebook::uniform(config.num_layers, bounds, 5);
    const CodebookResult result =
        codebook_search(config, scene, ideal, meas, book);
    return result.loss < 1e-18 &&
           result.errors.delta_vertical[1] == truth.delta_vertical[1];
  });

  return all_ok;
}

}  // namespace simcal
