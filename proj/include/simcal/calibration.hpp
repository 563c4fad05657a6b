#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "simcal/geometry.hpp"
#include "simcal/measurement.hpp"
#include "simcal/propagation.hpp"

namespace simcal {

struct GradientSettings {
  double step_size = 0.05;
  double stage_decay = 0.8;
  int max_iters_per_stage = 200;
  double regularization_weight = 0.0;  // pull toward the ideal initialization
  double reg_stage_decay = 1.0;        // per-stage decay of that pull
  double convergence_tol = 1e-8;       // on relative objective decrease
  double loss_floor = 1e-16;           // absolute objective treated as solved
  int backtrack_halvings = 30;         // 0 applies raw steps unconditionally
  // Gauss-Newton refinement appended after the descent loop: the cascade is
  // linearized at the best iterate and the least-squares correction is
  // solved by a capped Krylov iteration. Refinement waits until the
  // accumulated batch holds at least as many equations as unknowns; a
  // partial fit of an underdetermined batch smears residual into the
  // well-observed blocks, so until then stages only bank measurements.
  int refine_passes = 0;               // 0 disables refinement
  int refine_cap = 1200;
  bool optimize_exit = false;          // add Wout to the unknown set

  void validate() const;
};

enum class StageMode { SingleStage, MultiStage };

struct StagePlan {
  int num_stages = 1;
  int slots_per_stage = 100;
  StageMode mode = StageMode::SingleStage;

  void validate() const;
};

// Output of one gradient stage. loss_history is the best-so-far objective
// after every accepted iteration (non-increasing by construction).
struct StageResult {
  PropagationSet estimate;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  int iterations = 0;
  bool diverged = false;
  std::string diagnostic;
  std::vector<double> loss_history;
};

// One row of the per-stage bookkeeping. Stage 0 is the uncalibrated
// baseline: NMSE of the ideal set against the truth, with loss_final equal
// to stage 1's initial pilot loss.
struct StageRecord {
  int stage = 0;
  std::vector<std::pair<std::string, double>> nmse_db;  // unknown order
  double loss_final = 0.0;
  double step_size = 0.0;
  int iterations = 0;
  bool diverged = false;
};

struct CalibrationTrace {
  std::vector<StageRecord> stages;  // stage 0 .. S
  PropagationSet final_estimate;
  std::vector<std::vector<double>> loss_histories;  // stages 1 .. S
  std::uint64_t master_seed = 0;
  GradientSettings settings;
  StagePlan plan;
};

struct MultistageOptions {
  bool fresh_phases_per_stage = true;
  // Truth handle used for NMSE bookkeeping only; the optimizer never reads
  // it. Defaults to the practical set when null.
  const PropagationSet* metrics_truth = nullptr;
  std::function<void(const StageRecord&)> on_stage;
};

// 10 log10(||estimate - truth||_F^2 / ||truth||_F^2), clamped at -300 dB.
double nmse_db(const CMatrix& estimate, const CMatrix& truth);

// sum_t ||y_t - model(y_t)||^2 / sum_t ||y_t||^2.
double pilot_loss(const PropagationSet& candidate,
                  const MeasurementSet& measurements);

// Wirtinger gradient of pilot_loss for every unknown, scaled so each entry
// equals d loss/d Re + j d loss/d Im (matches central finite differences).
// The exit slot is zero unless include_exit.
PropagationSet pilot_loss_gradient(const PropagationSet& candidate,
                                   const MeasurementSet& measurements,
                                   bool include_exit = false);

// Normalized gradient descent with monotone backtracking. The step is taken
// in the relative metric: each unknown X moves by
//   step * ||X_init||_F^2 * g_X / Gamma,  Gamma^2 = sum_X ||X_init||_F^2 ||g_X||_F^2
// so a full step changes every unknown by at most step in relative terms and
// the budget is split by scaled gradient magnitude. regularization_reference
// is the anchor of the optional Tikhonov pull (defaults to `initial`).
StageResult run_gradient_stage(const PropagationSet& initial,
                               const MeasurementSet& measurements,
                               const GradientSettings& settings,
                               const PropagationSet* regularization_reference =
                                   nullptr);

// The cascade response is invariant under per-gap diagonal rescalings
//   h -> D h, W1 -> W1 D^{-1}, ... , W_{l+1} -> W_{l+1} D, W_l -> D^{-1} W_l
// so pilot data never pins those directions and plain descent lets them
// drift. Snap `estimate` to the orbit point nearest `reference` in the
// per-matrix relative metric: the UE-channel gap is absorbed exactly into
// the first interlayer matrix, the remaining gaps are balanced by closed
// form alternating sweeps. The cascade response is unchanged, so any pilot
// loss evaluates identically (up to roundoff). The exit gap only carries
// gauge freedom when the exit matrix is itself estimated.
void renormalize_gauge(PropagationSet& estimate,
                       const PropagationSet& reference,
                       bool include_exit = false);

// Stage s draws fresh slots, warm-starts from stage s-1 (stage 1 from the
// ideal set) and runs with step_size * stage_decay^{s-1}. The practical set
// only ever enters through measure(); metrics come from options.metrics_truth.
// After every stage the estimate is gauge-renormalized toward `ideal` so the
// recovered corrections stay attributed to the matrices they belong to.
CalibrationTrace run_multistage(const SimStackConfig& config,
                                const PropagationSet& ideal,
                                const PropagationSet& practical,
                                const StagePlan& plan,
                                const GradientSettings& settings,
                                const PilotPlan& pilot_base,
                                std::uint64_t master_seed,
                                const MultistageOptions& options = {});

// Per-layer candidate grids for the parametric codebook. Grids are finite,
// symmetric about 0 and contain 0; layer 1's spacing grid is always {0}.
struct LayerGrids {
  std::vector<double> spacing;
  std::vector<double> vertical;
  std::vector<double> rotation;
};

struct Codebook {
  std::vector<LayerGrids> layers;
  int refine_factor = 4;     // level-2 step shrink per coarse grid step
  int max_coarse_sweeps = 3;

  void validate(int num_layers) const;
  // points_per_axis uniformly spaced values on [-bound, +bound] per axis
  // (odd count so 0 is always a member).
  static Codebook uniform(int num_layers, const ErrorBounds& span,
                          int points_per_axis, int refine_factor = 4,
                          int max_coarse_sweeps = 3);
};

struct CodebookResult {
  ErrorState errors;
  PropagationSet rebuilt;
  double loss = 0.0;
  double coarse_loss = 0.0;  // best level-1 objective, before refinement
  int coarse_evaluations = 0;
  int refine_evaluations = 0;
};

// Level 1: layer-by-layer coordinate descent over each layer's Cartesian
// grid. Level 2: per-parameter local refinement on a grid shrunk by
// refine_factor around the coarse pick. Ties break toward the smaller
// parameter magnitude, then the lower layer index (by sweep order).
CodebookResult codebook_search(const SimStackConfig& config,
                               const SceneConfig& scene,
                               const std::vector<LayerGeometry>& ideal_geometry,
                               const MeasurementSet& measurements,
                               const Codebook& codebook,
                               SpacingModel model = SpacingModel::Cumulative);

struct MonitorSettings {
  double threshold = 0.1;
  int window = 5;              // known-symbol slots per indicator window
  int known_slot_period = 20;  // one known slot per this many data slots
  int calibration_slots = 200;
  bool calibrate_initial = true;  // false starts from the pre-drift truth
  GradientSettings gradient;

  void validate() const;
};

// Scripted drift: the stack follows `before` until change_slot, `after`
// from change_slot on.
struct DriftScenario {
  int total_slots = 0;
  int change_slot = 0;
  ErrorState before;
  ErrorState after;

  void validate() const;
};

struct MonitorEvent {
  int slot = 0;
  double indicator_before = 0.0;
  double indicator_after = 0.0;
};

struct MonitorResult {
  std::vector<MonitorEvent> events;
  std::vector<std::pair<int, double>> indicator_history;  // (slot, value)
  PropagationSet final_estimate;
};

// Streams data slots, keeps a moving-window mean of per-slot pilot loss over
// the embedded known-symbol slots, and on crossing the threshold runs one
// gradient stage on freshly allocated calibration slots. After the update
// the stored window is re-scored with the new estimate.
MonitorResult run_state_driven_monitor(const SimStackConfig& config,
                                       const SceneConfig& scene,
                                       const std::vector<LayerGeometry>& ideal_geometry,
                                       const DriftScenario& drift,
                                       const MonitorSettings& settings,
                                       const PilotPlan& pilot_base,
                                       std::uint64_t master_seed,
                                       SpacingModel model = SpacingModel::Cumulative);

}  // namespace simcal
