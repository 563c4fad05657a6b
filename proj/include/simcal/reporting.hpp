#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "simcal/calibration.hpp"

namespace simcal {

// Everything needed to simulate and calibrate one error realization; the
// experiment harness fans these out over grid points and seeds.
struct RunContext {
  SimStackConfig stack;
  SceneConfig scene;
  SpacingModel spacing_model = SpacingModel::Cumulative;
  GradientSettings gradient;
  Complex pilot_symbol{1.0, 0.0};
  double snr_db = std::numeric_limits<double>::infinity();
};

struct StageCurveRow {
  int stage = 0;
  std::string matrix_name;
  double nmse_db = 0.0;
  double loss_final = 0.0;
  double step_size = 0.0;
};

// Tidy long-format view of a trace, stage 0 (uncalibrated baseline) first.
std::vector<StageCurveRow> stage_curve(const CalibrationTrace& trace);

// CSV with header stage,matrix_name,nmse_db,loss_final,step_size.
void write_stage_curve_csv(const std::vector<StageCurveRow>& rows,
                           const std::string& path);

enum class SweepParameter { Spacing, Vertical, Rotation };

struct SweepSpec {
  SweepParameter parameter = SweepParameter::Vertical;
  std::vector<double> grid;  // bound values, strictly increasing, >= 0
  int slots = 1000;
  int seeds_per_point = 5;

  void validate() const;
};

struct SweepRow {
  int point = 0;
  double bound = 0.0;
  int seed_index = 0;
  std::uint64_t seed = 0;  // derived run seed, recorded for reproducibility
  std::string matrix_name;
  double uncalibrated_db = 0.0;
  double calibrated_db = 0.0;
};

// Seed statistics of the mean-over-interlayer NMSE at one grid point.
struct SweepSummaryRow {
  double bound = 0.0;
  double uncal_mean_db = 0.0;
  double uncal_min_db = 0.0;
  double uncal_median_db = 0.0;
  double uncal_max_db = 0.0;
  double cal_mean_db = 0.0;
  double cal_min_db = 0.0;
  double cal_median_db = 0.0;
  double cal_max_db = 0.0;
};

struct SweepTable {
  std::vector<SweepRow> rows;
  std::vector<SweepSummaryRow> summary;
};

// For each (grid point, seed): sample one error realization with the swept
// bound (all other bounds zero), run a single calibration stage with
// spec.slots slots, and record pre/post NMSE per matrix plus a W_mean row
// aggregating the interlayer matrices. Row order is fixed by (point, seed,
// matrix) regardless of worker count.
SweepTable robustness_sweep(const RunContext& context, const SweepSpec& spec,
                            std::uint64_t master_seed, int workers = 1);

// CSV with header point,bound,seed_index,seed,matrix_name,uncalibrated_db,calibrated_db.
void write_sweep_csv(const SweepTable& table, const std::string& path);

// CSV with one row per grid point and the seed statistics columns.
void write_sweep_summary_csv(const SweepTable& table, const std::string& path);

// Entry magnitudes of one interlayer matrix in the ideal / practical /
// calibrated sets plus |practical - calibrated|.
struct HeatmapBundle {
  Eigen::MatrixXd ideal;
  Eigen::MatrixXd practical;
  Eigen::MatrixXd calibrated;
  Eigen::MatrixXd difference;
};

HeatmapBundle heatmap_bundle(const PropagationSet& ideal,
                             const PropagationSet& practical,
                             const PropagationSet& calibrated,
                             int which_matrix);

// Index of the interlayer matrix with the largest uncalibrated NMSE.
int auto_heatmap_index(const PropagationSet& ideal,
                       const PropagationSet& practical);

// Plain-text panel: one row per line, space-separated, 12 significant digits.
void write_heatmap_panel(const Eigen::MatrixXd& panel, const std::string& path);

}  // namespace simcal
