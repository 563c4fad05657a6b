#include "simcal/reporting.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "simcal/parallel.hpp"
#include "simcal/rng.hpp"

#include "format_util.hpp"

namespace simcal {

std::vector<StageCurveRow> stage_curve(const CalibrationTrace& trace) {
  std::vector<StageCurveRow> rows;
  for (const StageRecord& record : trace.stages) {
    for (const auto& [name, value] : record.nmse_db) {
      rows.push_back({record.stage, name, value, record.loss_final,
                      record.step_size});
    }
  }
  return rows;
}

void write_stage_curve_csv(const std::vector<StageCurveRow>& rows,
                           const std::string& path) {
  std::ofstream f(path);
  if (!f) throw ConfigError("cannot open " + path + " for writing");
  f << "stage,matrix_name,nmse_db,loss_final,step_size\n";
  for (const StageCurveRow& row : rows) {
    f << row.stage << ',' << row.matrix_name << ',' << detail::g17(row.nmse_db)
      << ',' << detail::g17(row.loss_final) << ','
      << detail::g17(row.step_size) << '\n';
  }
}

void SweepSpec::validate() const {
  if (grid.empty()) throw ConfigError("SweepSpec.grid must be non-empty");
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!(grid[i] >= 0.0) || !std::isfinite(grid[i])) {
      throw ConfigError("SweepSpec.grid values must be finite and >= 0");
    }
    if (i > 0 && grid[i] <= grid[i - 1]) {
      throw ConfigError("SweepSpec.grid must be strictly increasing");
    }
  }
  if (slots < 1) throw ConfigError("SweepSpec.slots must be >= 1");
  if (seeds_per_point < 1) {
    throw ConfigError("SweepSpec.seeds_per_point must be >= 1");
  }
}

namespace {

double median_of(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2]
                    : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

struct SweepRun {
  std::vector<std::pair<std::string, double>> uncal;
  std::vector<std::pair<std::string, double>> cal;
  double uncal_mean = 0.0;
  double cal_mean = 0.0;
  std::uint64_t seed = 0;
};

}  // namespace

SweepTable robustness_sweep(const RunContext& context, const SweepSpec& spec,
                            std::uint64_t master_seed, int workers) {
  spec.validate();
  context.stack.validate();
  context.gradient.validate();

  const int points = static_cast<int>(spec.grid.size());
  const int runs = points * spec.seeds_per_point;
  std::vector<SweepRun> results(runs);

  const std::vector<LayerGeometry> ideal_geometry =
      build_ideal_geometry(context.stack);
  const PropagationSet ideal_set =
      build_propagation_set(context.stack, context.scene, ideal_geometry);

  parallel_for(runs, workers, [&](int idx) {
    const int point = idx / spec.seeds_per_point;
    const int seed_index = idx % spec.seeds_per_point;
    const std::uint64_t run_seed = derive_seed(
        master_seed, seed_stream::kSweepRun,
        (static_cast<std::uint64_t>(point) << 20) |
            static_cast<std::uint64_t>(seed_index));

    ErrorBounds bounds;  // all other error sources excluded
    switch (spec.parameter) {
      case SweepParameter::Spacing: bounds.spacing = spec.grid[point]; break;
      case SweepParameter::Vertical: bounds.vertical = spec.grid[point]; break;
      case SweepParameter::Rotation: bounds.rotation = spec.grid[point]; break;
    }
    const ErrorState errors =
        sample_errors(context.stack.num_layers, bounds,
                      derive_seed(run_seed, seed_stream::kErrorSampling));
    const PropagationSet practical_set = build_propagation_set(
        context.stack, context.scene,
        apply_errors(ideal_geometry, errors, context.spacing_model));

    StagePlan plan;
    plan.num_stages = 1;
    plan.slots_per_stage = spec.slots;
    plan.mode = StageMode::SingleStage;

    PilotPlan pilot;
    pilot.pilot_symbol = context.pilot_symbol;
    pilot.snr_db = context.snr_db;

    const CalibrationTrace trace =
        run_multistage(context.stack, ideal_set, practical_set, plan,
                       context.gradient, pilot, run_seed);

    SweepRun& run = results[idx];
    run.seed = run_seed;
    run.uncal = trace.stages[0].nmse_db;
    run.cal = trace.stages[1].nmse_db;
    double uncal_sum = 0.0;
    double cal_sum = 0.0;
    int interlayer_count = 0;
    for (std::size_t i = 0; i < run.uncal.size(); ++i) {
      if (run.uncal[i].first.rfind("W", 0) == 0 &&
          run.uncal[i].first != "Wout") {
        uncal_sum += run.uncal[i].second;
        cal_sum += run.cal[i].second;
        ++interlayer_count;
      }
    }
    run.uncal_mean = uncal_sum / interlayer_count;
    run.cal_mean = cal_sum / interlayer_count;
  });

  SweepTable table;
  for (int point = 0; point < points; ++point) {
    std::vector<double> uncal_means;
    std::vector<double> cal_means;
    for (int s = 0; s < spec.seeds_per_point; ++s) {
      const SweepRun& run = results[point * spec.seeds_per_point + s];
      for (std::size_t i = 0; i < run.uncal.size(); ++i) {
        table.rows.push_back({point, spec.grid[point], s, run.seed,
                              run.uncal[i].first, run.uncal[i].second,
                              run.cal[i].second});
      }
      table.rows.push_back({point, spec.grid[point], s, run.seed, "W_mean",
                            run.uncal_mean, run.cal_mean});
      uncal_means.push_back(run.uncal_mean);
      cal_means.push_back(run.cal_mean);
    }
    SweepSummaryRow summary;
    summary.bound = spec.grid[point];
    summary.uncal_mean_db =
        std::accumulate(uncal_means.begin(), uncal_means.end(), 0.0) /
        uncal_means.size();
    summary.uncal_min_db = *std::min_element(uncal_means.begin(), uncal_means.end());
    summary.uncal_median_db = median_of(uncal_means);
    summary.uncal_max_db = *std::max_element(uncal_means.begin(), uncal_means.end());
    summary.cal_mean_db =
        std::accumulate(cal_means.begin(), cal_means.end(), 0.0) /
        cal_means.size();
    summary.cal_min_db = *std::min_element(cal_means.begin(), cal_means.end());
    summary.cal_median_db = median_of(cal_means);
    summary.cal_max_db = *std::max_element(cal_means.begin(), cal_means.end());
    table.summary.push_back(summary);
  }
  return table;
}

void write_sweep_csv(const SweepTable& table, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw ConfigError("cannot open " + path + " for writing");
  f << "point,bound,seed_index,seed,matrix_name,uncalibrated_db,calibrated_db\n";
  for (const SweepRow& row : table.rows) {
    f << row.point << ',' << detail::g17(row.bound) << ',' << row.seed_index
      << ',' << row.seed << ',' << row.matrix_name << ','
      << detail::g17(row.uncalibrated_db) << ','
      << detail::g17(row.calibrated_db) << '\n';
  }
}

void write_sweep_summary_csv(const SweepTable& table, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw ConfigError("cannot open " + path + " for writing");
  f << "bound,uncal_mean_db,uncal_min_db,uncal_median_db,uncal_max_db,"
       "cal_mean_db,cal_min_db,cal_median_db,cal_max_db\n";
  for (const SweepSummaryRow& s : table.summary) {
    f << detail::g17(s.bound) << ',' << detail::g17(s.uncal_mean_db) << ','
      << detail::g17(s.uncal_min_db) << ',' << detail::g17(s.uncal_median_db)
      << ',' << detail::g17(s.uncal_max_db) << ','
      << detail::g17(s.cal_mean_db) << ',' << detail::g17(s.cal_min_db) << ','
      << detail::g17(s.cal_median_db) << ',' << detail::g17(s.cal_max_db)
      << '\n';
  }
}

HeatmapBundle heatmap_bundle(const PropagationSet& ideal,
                             const PropagationSet& practical,
                             const PropagationSet& calibrated,
                             int which_matrix) {
  const int count = static_cast<int>(ideal.interlayer.size());
  if (which_matrix < 0 || which_matrix >= count) {
    throw ConfigError("heatmap_bundle: matrix index " +
                      std::to_string(which_matrix) + " out of range [0, " +
                      std::to_string(count) + ")");
  }
  HeatmapBundle bundle;
  bundle.ideal = ideal.interlayer[which_matrix].cwiseAbs();
  bundle.practical = practical.interlayer[which_matrix].cwiseAbs();
  bundle.calibrated = calibrated.interlayer[which_matrix].cwiseAbs();
  bundle.difference =
      (practical.interlayer[which_matrix] - calibrated.interlayer[which_matrix])
          .cwiseAbs();
  return bundle;
}

int auto_heatmap_index(const PropagationSet& ideal,
                       const PropagationSet& practical) {
  int best = 0;
  double worst = -std::numeric_limits<double>::infinity();
  for (std::size_t l = 0; l < ideal.interlayer.size(); ++l) {
    const double v = nmse_db(ideal.interlayer[l], practical.interlayer[l]);
    if (v > worst) {
      worst = v;
      best = static_cast<int>(l);
    }
  }
  return best;
}

void write_heatmap_panel(const Eigen::MatrixXd& panel, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw ConfigError("cannot open " + path + " for writing");
  for (Eigen::Index r = 0; r < panel.rows(); ++r) {
    for (Eigen::Index c = 0; c < panel.cols(); ++c) {
      if (c > 0) f << ' ';
      f << detail::g12(panel(r, c));
    }
    f << '\n';
  }
}

}  // namespace simcal
