#include <pybind11/complex.h>
#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "simcal/rng.hpp"
#include "simcal/runner.hpp"

namespace py = pybind11;
using namespace simcal;

PYBIND11_MODULE(pysimcal, m) {
  m.doc() = "Stacked metasurface channel simulation and pilot calibration";

  py::register_exception<ConfigError>(m, "ConfigError");
  py::register_exception<DimensionError>(m, "DimensionError");
  py::register_exception<SingularityError>(m, "SingularityError");
  py::register_exception<SchemaError>(m, "SchemaError");

  py::class_<SimStackConfig>(m, "SimStackConfig")
      .def(py::init<>())
      .def_readwrite("num_layers", &SimStackConfig::num_layers)
      .def_readwrite("atoms_per_side", &SimStackConfig::atoms_per_side)
      .def_readwrite("wavelength", &SimStackConfig::wavelength)
      .def_readwrite("atom_pitch", &SimStackConfig::atom_pitch)
      .def_readwrite("stack_thickness", &SimStackConfig::stack_thickness)
      .def_readwrite("atom_area", &SimStackConfig::atom_area)
      .def("atoms_per_layer", &SimStackConfig::atoms_per_layer)
      .def("nominal_gap", &SimStackConfig::nominal_gap)
      .def("validate", &SimStackConfig::validate);

  py::class_<ErrorBounds>(m, "ErrorBounds")
      .def(py::init<>())
      .def_readwrite("spacing", &ErrorBounds::spacing)
      .def_readwrite("vertical", &ErrorBounds::vertical)
      .def_readwrite("rotation", &ErrorBounds::rotation)
      .def("scaled", &ErrorBounds::scaled);

  py::class_<ErrorState>(m, "ErrorState")
      .def(py::init<>())
      .def_static("zeros", &ErrorState::zeros)
      .def_readwrite("delta_spacing", &ErrorState::delta_spacing)
      .def_readwrite("delta_vertical", &ErrorState::delta_vertical)
      .def_readwrite("delta_rotation", &ErrorState::delta_rotation)
      .def("num_layers", &ErrorState::num_layers)
      .def("is_zero", &ErrorState::is_zero);

  py::enum_<SpacingModel>(m, "SpacingModel")
      .value("Cumulative", SpacingModel::Cumulative)
      .value("PerGap", SpacingModel::PerGap);

  py::class_<LayerGeometry>(m, "LayerGeometry")
      .def_readonly("layer_index", &LayerGeometry::layer_index)
      .def_readonly("atom_positions", &LayerGeometry::atom_positions)
      .def_readonly("normal", &LayerGeometry::normal)
      .def("plane_coordinate", &LayerGeometry::plane_coordinate)
      .def("centroid", &LayerGeometry::centroid);

  py::enum_<PropagationModel>(m, "PropagationModel")
      .value("RayleighSommerfeld", PropagationModel::RayleighSommerfeld)
      .value("GeometricRadar", PropagationModel::GeometricRadar);

  py::class_<SceneConfig>(m, "SceneConfig")
      .def(py::init<>())
      .def_readwrite("ue_position", &SceneConfig::ue_position)
      .def_readwrite("rx_positions", &SceneConfig::rx_positions)
      .def_readwrite("model", &SceneConfig::model);

  py::class_<PhaseConfig>(m, "PhaseConfig")
      .def(py::init<>())
      .def_readwrite("layer_phases", &PhaseConfig::layer_phases);

  py::class_<PropagationSet>(m, "PropagationSet")
      .def(py::init<>())
      .def_readwrite("ue_channel", &PropagationSet::ue_channel)
      .def_readwrite("interlayer", &PropagationSet::interlayer)
      .def_readwrite("exit", &PropagationSet::exit)
      .def("num_layers", &PropagationSet::num_layers);

  py::class_<PilotPlan>(m, "PilotPlan")
      .def(py::init<>())
      .def_readwrite("num_slots", &PilotPlan::num_slots)
      .def_readwrite("phase_seed", &PilotPlan::phase_seed)
      .def_readwrite("pilot_symbol", &PilotPlan::pilot_symbol)
      .def_readwrite("snr_db", &PilotPlan::snr_db)
      .def("noiseless", &PilotPlan::noiseless);

  py::class_<MeasurementSet>(m, "MeasurementSet")
      .def(py::init<>())
      .def_readwrite("schedule", &MeasurementSet::schedule)
      .def_readwrite("received", &MeasurementSet::received)
      .def_readwrite("pilot_symbol", &MeasurementSet::pilot_symbol)
      .def("num_slots", &MeasurementSet::num_slots);

  py::class_<GradientSettings>(m, "GradientSettings")
      .def(py::init<>())
      .def_readwrite("step_size", &GradientSettings::step_size)
      .def_readwrite("stage_decay", &GradientSettings::stage_decay)
      .def_readwrite("max_iters_per_stage", &GradientSettings::max_iters_per_stage)
      .def_readwrite("regularization_weight",
                     &GradientSettings::regularization_weight)
      .def_readwrite("reg_stage_decay", &GradientSettings::reg_stage_decay)
      .def_readwrite("convergence_tol", &GradientSettings::convergence_tol)
      .def_readwrite("loss_floor", &GradientSettings::loss_floor)
      .def_readwrite("backtrack_halvings", &GradientSettings::backtrack_halvings)
      .def_readwrite("refine_passes", &GradientSettings::refine_passes)
      .def_readwrite("refine_cap", &GradientSettings::refine_cap)
      .def_readwrite("optimize_exit", &GradientSettings::optimize_exit);

  py::enum_<StageMode>(m, "StageMode")
      .value("SingleStage", StageMode::SingleStage)
      .value("MultiStage", StageMode::MultiStage);

  py::class_<StagePlan>(m, "StagePlan")
      .def(py::init<>())
      .def_readwrite("num_stages", &StagePlan::num_stages)
      .def_readwrite("slots_per_stage", &StagePlan::slots_per_stage)
      .def_readwrite("mode", &StagePlan::mode);

  py::class_<StageResult>(m, "StageResult")
      .def_readonly("estimate", &StageResult::estimate)
      .def_readonly("initial_loss", &StageResult::initial_loss)
      .def_readonly("final_loss", &StageResult::final_loss)
      .def_readonly("iterations", &StageResult::iterations)
      .def_readonly("diverged", &StageResult::diverged)
      .def_readonly("diagnostic", &StageResult::diagnostic)
      .def_readonly("loss_history", &StageResult::loss_history);

  py::class_<StageRecord>(m, "StageRecord")
      .def_readonly("stage", &StageRecord::stage)
      .def_readonly("nmse_db", &StageRecord::nmse_db)
      .def_readonly("loss_final", &StageRecord::loss_final)
      .def_readonly("step_size", &StageRecord::step_size)
      .def_readonly("iterations", &StageRecord::iterations)
      .def_readonly("diverged", &StageRecord::diverged);

  py::class_<CalibrationTrace>(m, "CalibrationTrace")
      .def_readonly("stages", &CalibrationTrace::stages)
      .def_readonly("final_estimate", &CalibrationTrace::final_estimate)
      .def_readonly("loss_histories", &CalibrationTrace::loss_histories)
      .def_readonly("master_seed", &CalibrationTrace::master_seed);

  py::class_<LayerGrids>(m, "LayerGrids")
      .def(py::init<>())
      .def_readwrite("spacing", &LayerGrids::spacing)
      .def_readwrite("vertical", &LayerGrids::vertical)
      .def_readwrite("rotation", &LayerGrids::rotation);

  py::class_<Codebook>(m, "Codebook")
      .def(py::init<>())
      .def_readwrite("layers", &Codebook::layers)
      .def_readwrite("refine_factor", &Codebook::refine_factor)
      .def_readwrite("max_coarse_sweeps", &Codebook::max_coarse_sweeps)
      .def_static("uniform", &Codebook::uniform, py::arg("num_layers"),
                  py::arg("span"), py::arg("points_per_axis"),
                  py::arg("refine_factor") = 4, py::arg("max_coarse_sweeps") = 3);

  py::class_<CodebookResult>(m, "CodebookResult")
      .def_readonly("errors", &CodebookResult::errors)
      .def_readonly("rebuilt", &CodebookResult::rebuilt)
      .def_readonly("loss", &CodebookResult::loss)
      .def_readonly("coarse_loss", &CodebookResult::coarse_loss)
      .def_readonly("coarse_evaluations", &CodebookResult::coarse_evaluations)
      .def_readonly("refine_evaluations", &CodebookResult::refine_evaluations);

  py::class_<MonitorSettings>(m, "MonitorSettings")
      .def(py::init<>())
      .def_readwrite("threshold", &MonitorSettings::threshold)
      .def_readwrite("window", &MonitorSettings::window)
      .def_readwrite("known_slot_period", &MonitorSettings::known_slot_period)
      .def_readwrite("calibration_slots", &MonitorSettings::calibration_slots)
      .def_readwrite("calibrate_initial", &MonitorSettings::calibrate_initial)
      .def_readwrite("gradient", &MonitorSettings::gradient);

  py::class_<DriftScenario>(m, "DriftScenario")
      .def(py::init<>())
      .def_readwrite("total_slots", &DriftScenario::total_slots)
      .def_readwrite("change_slot", &DriftScenario::change_slot)
      .def_readwrite("before", &DriftScenario::before)
      .def_readwrite("after", &DriftScenario::after);

  py::class_<MonitorEvent>(m, "MonitorEvent")
      .def_readonly("slot", &MonitorEvent::slot)
      .def_readonly("indicator_before", &MonitorEvent::indicator_before)
      .def_readonly("indicator_after", &MonitorEvent::indicator_after);

  py::class_<MonitorResult>(m, "MonitorResult")
      .def_readonly("events", &MonitorResult::events)
      .def_readonly("indicator_history", &MonitorResult::indicator_history)
      .def_readonly("final_estimate", &MonitorResult::final_estimate);

  py::class_<SweepSpec>(m, "SweepSpec")
      .def(py::init<>())
      .def_readwrite("parameter", &SweepSpec::parameter)
      .def_readwrite("grid", &SweepSpec::grid)
      .def_readwrite("slots", &SweepSpec::slots)
      .def_readwrite("seeds_per_point", &SweepSpec::seeds_per_point);

  py::enum_<SweepParameter>(m, "SweepParameter")
      .value("Spacing", SweepParameter::Spacing)
      .value("Vertical", SweepParameter::Vertical)
      .value("Rotation", SweepParameter::Rotation);

  py::class_<SweepRow>(m, "SweepRow")
      .def_readonly("point", &SweepRow::point)
      .def_readonly("bound", &SweepRow::bound)
      .def_readonly("seed_index", &SweepRow::seed_index)
      .def_readonly("seed", &SweepRow::seed)
      .def_readonly("matrix_name", &SweepRow::matrix_name)
      .def_readonly("uncalibrated_db", &SweepRow::uncalibrated_db)
      .def_readonly("calibrated_db", &SweepRow::calibrated_db);

  py::class_<SweepSummaryRow>(m, "SweepSummaryRow")
      .def_readonly("bound", &SweepSummaryRow::bound)
      .def_readonly("uncal_mean_db", &SweepSummaryRow::uncal_mean_db)
      .def_readonly("uncal_min_db", &SweepSummaryRow::uncal_min_db)
      .def_readonly("uncal_median_db", &SweepSummaryRow::uncal_median_db)
      .def_readonly("uncal_max_db", &SweepSummaryRow::uncal_max_db)
      .def_readonly("cal_mean_db", &SweepSummaryRow::cal_mean_db)
      .def_readonly("cal_min_db", &SweepSummaryRow::cal_min_db)
      .def_readonly("cal_median_db", &SweepSummaryRow::cal_median_db)
      .def_readonly("cal_max_db", &SweepSummaryRow::cal_max_db);

  py::class_<SweepTable>(m, "SweepTable")
      .def_readonly("rows", &SweepTable::rows)
      .def_readonly("summary", &SweepTable::summary);

  py::class_<RunContext>(m, "RunContext")
      .def(py::init<>())
      .def_readwrite("stack", &RunContext::stack)
      .def_readwrite("scene", &RunContext::scene)
      .def_readwrite("spacing_model", &RunContext::spacing_model)
      .def_readwrite("gradient", &RunContext::gradient)
      .def_readwrite("pilot_symbol", &RunContext::pilot_symbol)
      .def_readwrite("snr_db", &RunContext::snr_db);

  py::class_<Scenario>(m, "Scenario")
      .def_readonly("name", &Scenario::name)
      .def_readonly("seed", &Scenario::seed)
      .def_readonly("output_dir", &Scenario::output_dir)
      .def_readonly("stack", &Scenario::stack)
      .def_readonly("scene", &Scenario::scene)
      .def_readonly("bounds", &Scenario::bounds)
      .def_readonly("spacing_model", &Scenario::spacing_model)
      .def_readonly("snr_db", &Scenario::snr_db)
      .def_readonly("gradient", &Scenario::gradient)
      .def_readonly("scenario_hash", &Scenario::scenario_hash)
      .def("context", &Scenario::context)
      .def("realize_errors", &Scenario::realize_errors);

  m.def("derive_seed", &derive_seed, py::arg("master"), py::arg("stream"),
        py::arg("counter") = 0);
  m.def("build_ideal_geometry", &build_ideal_geometry);
  m.def("sample_errors", &sample_errors, py::arg("num_layers"),
        py::arg("bounds"), py::arg("seed"));
  m.def("apply_errors", &apply_errors, py::arg("layers"), py::arg("errors"),
        py::arg("model") = SpacingModel::Cumulative);
  m.def("rs_coefficient", &rs_coefficient);
  m.def("radar_coefficient", &radar_coefficient);
  m.def("interlayer_matrix", &interlayer_matrix);
  m.def("ue_channel", &ue_channel);
  m.def("exit_matrix", &exit_matrix);
  m.def("build_propagation_set", &build_propagation_set);
  m.def("cascade_response", &cascade_response);
  m.def("make_rx_grid", &make_rx_grid);
  m.def("unknown_names", &unknown_names, py::arg("set"),
        py::arg("include_exit") = false);
  m.def("generate_phase_schedule", &generate_phase_schedule);
  m.def("measure", &measure);
  m.def("nmse_db", &nmse_db);
  m.def("pilot_loss", &pilot_loss);
  m.def("pilot_loss_gradient", &pilot_loss_gradient, py::arg("candidate"),
        py::arg("measurements"), py::arg("include_exit") = false);
  m.def(
      "run_gradient_stage",
      [](const PropagationSet& initial, const MeasurementSet& measurements,
         const GradientSettings& settings) {
        return run_gradient_stage(initial, measurements, settings);
      },
      py::arg("initial"), py::arg("measurements"), py::arg("settings"));
  m.def(
      "run_multistage",
      [](const SimStackConfig& config, const PropagationSet& ideal,
         const PropagationSet& practical, const StagePlan& plan,
         const GradientSettings& settings, const PilotPlan& pilot_base,
         std::uint64_t master_seed, bool fresh_phases_per_stage) {
        MultistageOptions options;
        options.fresh_phases_per_stage = fresh_phases_per_stage;
        return run_multistage(config, ideal, practical, plan, settings,
                              pilot_base, master_seed, options);
      },
      py::arg("config"), py::arg("ideal"), py::arg("practical"),
      py::arg("plan"), py::arg("settings"), py::arg("pilot_base"),
      py::arg("master_seed"), py::arg("fresh_phases_per_stage") = true);
  m.def("codebook_search", &codebook_search, py::arg("config"),
        py::arg("scene"), py::arg("ideal_geometry"), py::arg("measurements"),
        py::arg("codebook"), py::arg("model") = SpacingModel::Cumulative);
  m.def("run_state_driven_monitor", &run_state_driven_monitor,
        py::arg("config"), py::arg("scene"), py::arg("ideal_geometry"),
        py::arg("drift"), py::arg("settings"), py::arg("pilot_base"),
        py::arg("master_seed"), py::arg("model") = SpacingModel::Cumulative);
  m.def("robustness_sweep", &robustness_sweep, py::arg("context"),
        py::arg("spec"), py::arg("master_seed"), py::arg("workers") = 1);

  m.def("parse_scenario", &parse_scenario);
  m.def("load_scenario", &load_scenario, py::arg("path_or_name"),
        py::arg("overrides") = std::vector<std::string>{});
  m.def("bundled_scenario_names",
        [] { return bundled_scenario_names(); });
  m.def("bundled_scenario_json",
        [](const std::string& name) { return bundled_scenario_json(name); });
  m.def(
      "run_calibrate_scenario",
      [](const Scenario& scenario) { return run_calibrate_scenario(scenario); },
      py::arg("scenario"));
  m.def(
      "run_validate",
      [] {
        std::ostringstream log;
        const bool ok = run_validate(log);
        return py::make_tuple(ok, log.str());
      },
      "Runs the fast consistency checks; returns (ok, log_text)");
}
