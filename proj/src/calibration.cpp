#include "simcal/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>

#include "simcal/rng.hpp"

#include "batch_kernels.hpp"

namespace simcal {

namespace {

constexpr double kNmseFloorDb = -300.0;
constexpr double kStepEpsilon = 1e-12;

std::vector<const CMatrix*> unknown_views(const PropagationSet& set,
                                          bool include_exit) {
  std::vector<const CMatrix*> views;
  views.push_back(&set.ue_channel);
  for (const CMatrix& w : set.interlayer) views.push_back(&w);
  if (include_exit) views.push_back(&set.exit);
  return views;
}

std::vector<CMatrix*> unknown_views(PropagationSet& set, bool include_exit) {
  std::vector<CMatrix*> views;
  views.push_back(&set.ue_channel);
  for (CMatrix& w : set.interlayer) views.push_back(&w);
  if (include_exit) views.push_back(&set.exit);
  return views;
}

// Squared distance between the unknown matrices of two sets.
double unknown_distance2(const PropagationSet& a, const PropagationSet& b,
                         bool include_exit) {
  const auto va = unknown_views(a, include_exit);
  const auto vb = unknown_views(b, include_exit);
  double d2 = 0.0;
  for (std::size_t i = 0; i < va.size(); ++i) {
    d2 += (*va[i] - *vb[i]).squaredNorm();
  }
  return d2;
}

double unknown_norm2(const PropagationSet& set, bool include_exit) {
  double n2 = 0.0;
  for (const CMatrix* m : unknown_views(set, include_exit)) {
    n2 += m->squaredNorm();
  }
  return n2;
}

PropagationSet zero_direction(const PropagationSet& shape) {
  PropagationSet z;
  z.ue_channel = CMatrix::Zero(shape.ue_channel.rows(), shape.ue_channel.cols());
  z.interlayer.reserve(shape.interlayer.size());
  for (const CMatrix& w : shape.interlayer) {
    z.interlayer.push_back(CMatrix::Zero(w.rows(), w.cols()));
  }
  z.exit = CMatrix::Zero(shape.exit.rows(), shape.exit.cols());
  return z;
}

// Least-squares correction of the linearized cascade: minimizes
// ||J d - target|| over the unknown set by conjugate gradients on the normal
// equations, starting from d = 0. Stopping early is deliberate: the Krylov
// iterates resolve strongly observed error components first, so a capped
// solve is a spectral filter that leaves barely observed directions at zero
// instead of amplifying them.
PropagationSet cgls_direction(const PropagationSet& point,
                              const detail::BatchedMeasurements& batch,
                              const std::vector<CMatrix>& act,
                              const CMatrix& target, bool with_exit, int cap,
                              double rtol) {
  PropagationSet d = zero_direction(point);
  CMatrix r = target;
  PropagationSet g = detail::jacobian_adjoint(point, batch, act, r, with_exit);
  double gamma = unknown_norm2(g, with_exit);
  const double gamma0 = gamma;
  if (gamma0 == 0.0) return d;
  PropagationSet p = g;
  for (int it = 0; it < cap; ++it) {
    const CMatrix q = detail::jacobian_apply(point, batch, act, p, with_exit);
    const double qq = q.squaredNorm();
    if (qq == 0.0) break;
    const double alpha = gamma / qq;
    {
      const auto dv = unknown_views(d, with_exit);
      const auto pv = unknown_views(p, with_exit);
      for (std::size_t i = 0; i < dv.size(); ++i) *dv[i] += alpha * *pv[i];
    }
    r -= alpha * q;
    g = detail::jacobian_adjoint(point, batch, act, r, with_exit);
    const double gnew = unknown_norm2(g, with_exit);
    if (gnew <= rtol * rtol * gamma0) break;
    const double beta = gnew / gamma;
    {
      const auto pv = unknown_views(p, with_exit);
      const auto gv = unknown_views(g, with_exit);
      for (std::size_t i = 0; i < pv.size(); ++i) {
        *pv[i] = *gv[i] + beta * *pv[i];
      }
    }
    gamma = gnew;
  }
  return d;
}

}  // namespace

void GradientSettings::validate() const {
  if (!(step_size > 0.0) || !std::isfinite(step_size)) {
    throw ConfigError("GradientSettings.step_size must be > 0");
  }
  if (!(stage_decay > 0.0 && stage_decay <= 1.0)) {
    throw ConfigError("GradientSettings.stage_decay must lie in (0, 1]");
  }
  if (max_iters_per_stage < 0) {
    throw ConfigError("GradientSettings.max_iters_per_stage must be >= 0");
  }
  if (!(regularization_weight >= 0.0) || !std::isfinite(regularization_weight)) {
    throw ConfigError("GradientSettings.regularization_weight must be >= 0");
  }
  if (!(reg_stage_decay > 0.0 && reg_stage_decay <= 1.0)) {
    throw ConfigError("GradientSettings.reg_stage_decay must lie in (0, 1]");
  }
  if (!(convergence_tol > 0.0)) {
    throw ConfigError("GradientSettings.convergence_tol must be > 0");
  }
  if (!(loss_floor >= 0.0) || !std::isfinite(loss_floor)) {
    throw ConfigError("GradientSettings.loss_floor must be >= 0");
  }
  if (backtrack_halvings < 0) {
    throw ConfigError("GradientSettings.backtrack_halvings must be >= 0");
  }
  if (refine_passes < 0) {
    throw ConfigError("GradientSettings.refine_passes must be >= 0");
  }
  if (refine_cap < 1) {
    throw ConfigError("GradientSettings.refine_cap must be >= 1");
  }
}

void StagePlan::validate() const {
  if (num_stages < 1) throw ConfigError("StagePlan.num_stages must be >= 1");
  if (slots_per_stage < 1) {
    throw ConfigError("StagePlan.slots_per_stage must be >= 1");
  }
  if (mode == StageMode::SingleStage && num_stages != 1) {
    throw ConfigError("StagePlan: SingleStage mode requires num_stages == 1");
  }
}

double nmse_db(const CMatrix& estimate, const CMatrix& truth) {
  if (estimate.rows() != truth.rows() || estimate.cols() != truth.cols()) {
    throw DimensionError("nmse_db: estimate is " +
                         std::to_string(estimate.rows()) + "x" +
                         std::to_string(estimate.cols()) + ", truth is " +
                         std::to_string(truth.rows()) + "x" +
                         std::to_string(truth.cols()));
  }
  const double denom = truth.squaredNorm();
  if (denom == 0.0) {
    throw ConfigError("nmse_db: truth matrix is all-zero");
  }
  const double ratio = (estimate - truth).squaredNorm() / denom;
  if (ratio == 0.0) return kNmseFloorDb;
  return std::max(kNmseFloorDb, 10.0 * std::log10(ratio));
}

double pilot_loss(const PropagationSet& candidate,
                  const MeasurementSet& measurements) {
  return detail::loss_from(candidate, detail::batch_measurements(measurements));
}

PropagationSet pilot_loss_gradient(const PropagationSet& candidate,
                                   const MeasurementSet& measurements,
                                   bool include_exit) {
  return detail::gradient_from(candidate,
                               detail::batch_measurements(measurements),
                               include_exit, nullptr);
}

StageResult run_gradient_stage(const PropagationSet& initial,
                               const MeasurementSet& measurements,
                               const GradientSettings& settings,
                               const PropagationSet* regularization_reference) {
  settings.validate();
  const detail::BatchedMeasurements batch =
      detail::batch_measurements(measurements);
  const bool with_exit = settings.optimize_exit;
  const double reg = settings.regularization_weight;
  const PropagationSet& ref =
      regularization_reference != nullptr ? *regularization_reference : initial;
  const double ref_norm2 = unknown_norm2(ref, with_exit);

  auto objective = [&](const PropagationSet& set) {
    double value = detail::loss_from(set, batch);
    if (reg > 0.0 && ref_norm2 > 0.0) {
      value += reg * unknown_distance2(set, ref, with_exit) / ref_norm2;
    }
    return value;
  };

  StageResult result;
  result.estimate = initial;
  double current_obj = objective(initial);
  result.initial_loss = current_obj;
  result.loss_history.push_back(current_obj);

  PropagationSet best = initial;
  double best_obj = current_obj;

  // Relative scales are frozen at the stage initialization; an exactly zero
  // scale (all-zero unknown) falls back to 1 so the matrix stays reachable.
  std::vector<double> scale2;
  for (const CMatrix* m : unknown_views(initial, with_exit)) {
    const double n2 = m->squaredNorm();
    scale2.push_back(n2 > 0.0 ? n2 : 1.0);
  }

  PropagationSet current = initial;
  PropagationSet prev = initial;  // momentum memory
  double tk = 1.0;
  // The step normalizer is frozen at the stage-initial gradient so later
  // steps shrink with the gradient itself (plain preconditioned descent);
  // renormalizing every iteration would keep the step norm constant and the
  // iterate would orbit the minimum instead of entering it. Nesterov
  // momentum with restart-on-stall covers the ill-conditioned tail; steps
  // are only accepted when they beat the current objective, so the reported
  // best-so-far sequence stays non-increasing.
  double gamma_frozen = -1.0;
  double factor_start = 1.0;  // backtracking memory, re-grows on success
  for (int iter = 1; iter <= settings.max_iters_per_stage; ++iter) {
    const double tk1 = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * tk * tk));
    const double beta = (tk - 1.0) / tk1;

    PropagationSet look = current;
    if (beta > 0.0) {
      const auto lv = unknown_views(look, with_exit);
      const auto cv = unknown_views(current, with_exit);
      const auto pv = unknown_views(prev, with_exit);
      for (std::size_t i = 0; i < lv.size(); ++i) {
        *lv[i] = *cv[i] + beta * (*cv[i] - *pv[i]);
      }
    }

    PropagationSet grad = detail::gradient_from(look, batch, with_exit, nullptr);
    if (reg > 0.0 && ref_norm2 > 0.0) {
      const auto gv = unknown_views(grad, with_exit);
      const auto lv = unknown_views(look, with_exit);
      const auto rv = unknown_views(ref, with_exit);
      for (std::size_t i = 0; i < gv.size(); ++i) {
        *gv[i] += (2.0 * reg / ref_norm2) * (*lv[i] - *rv[i]);
      }
    }

    const auto gv = unknown_views(grad, with_exit);
    double gamma2 = 0.0;
    for (std::size_t i = 0; i < gv.size(); ++i) {
      gamma2 += scale2[i] * gv[i]->squaredNorm();
    }
    const double gamma = std::sqrt(gamma2);
    if (gamma == 0.0) break;  // exact stationary point
    if (gamma_frozen < 0.0) gamma_frozen = gamma;

    const double base = settings.step_size / (gamma_frozen + kStepEpsilon);
    const double prev_obj = current_obj;
    bool accepted = false;
    double factor = factor_start;
    PropagationSet candidate;
    double cand_obj = 0.0;
    const int attempts = std::max(1, settings.backtrack_halvings + 1);
    for (int k = 0; k < attempts; ++k) {
      candidate = look;
      const auto cv = unknown_views(candidate, with_exit);
      for (std::size_t i = 0; i < cv.size(); ++i) {
        *cv[i] -= (base * factor * scale2[i]) * *gv[i];
      }
      cand_obj = objective(candidate);
      if (settings.backtrack_halvings == 0 || cand_obj < current_obj) {
        accepted = true;
        break;
      }
      factor *= 0.5;
    }
    if (!accepted) {
      if (beta > 0.0) {
        // Momentum overshot; drop it and retry as a plain step.
        tk = 1.0;
        prev = current;
        continue;
      }
      break;  // no descent direction left at this resolution
    }
    factor_start = std::min(1.0, factor * 2.0);

    prev = std::move(current);
    current = std::move(candidate);
    current_obj = cand_obj;
    tk = tk1;
    result.iterations = iter;
    if (current_obj < best_obj) {
      best_obj = current_obj;
      best = current;
    }
    result.loss_history.push_back(best_obj);

    if (current_obj > 10.0 * result.initial_loss &&
        result.initial_loss > 0.0) {
      result.diverged = true;
      result.diagnostic = "objective " + std::to_string(current_obj) +
                          " exceeded 10x the initial " +
                          std::to_string(result.initial_loss) + " at iteration " +
                          std::to_string(iter) + "; returning best iterate";
      break;
    }
    if (current_obj <= settings.loss_floor) break;  // numerically solved
    const double denom = std::max(prev_obj, 1e-300);
    if ((prev_obj - current_obj) / denom < settings.convergence_tol &&
        prev_obj >= current_obj) {
      break;
    }
  }

  // Gauss-Newton refinement. First-order steps stall long before the data is
  // exhausted once the accumulated batch approaches square: the smallest
  // observable directions shrink the loss too slowly to be followed. Each
  // pass re-linearizes at the best iterate and takes the capped CGLS
  // correction, halving the step until the objective actually drops.
  // Refinement only runs once the batch holds at least as many equations as
  // unknowns: fitting an underdetermined batch smears residual from the
  // poorly observed blocks into the well-observed ones, and that
  // contamination is in the direction itself, so no Krylov cap filters it
  // out. Until the system is square the stage simply banks its measurements.
  if (settings.refine_passes > 0 && !result.diverged) {
    double dims = static_cast<double>(best.ue_channel.size());
    for (const CMatrix& w : best.interlayer) {
      dims += static_cast<double>(w.size());
    }
    if (with_exit) dims += static_cast<double>(best.exit.size());
    const double eqs = static_cast<double>(batch.received.size());
    const int cap = eqs >= dims ? settings.refine_cap : 0;
    for (int pass = 0; pass < (cap > 0 ? settings.refine_passes : 0); ++pass) {
      if (best_obj <= settings.loss_floor) break;
      const std::vector<CMatrix> act = detail::forward_activations(best, batch);
      const CMatrix target =
          batch.received - best.exit * act[act.size() - 1];
      const PropagationSet dir =
          cgls_direction(best, batch, act, target, with_exit, cap, 1e-8);
      double step = 1.0;
      bool accepted = false;
      for (int k = 0; k < 25; ++k) {
        PropagationSet candidate = best;
        const auto cv = unknown_views(candidate, with_exit);
        const auto dv = unknown_views(dir, with_exit);
        for (std::size_t i = 0; i < cv.size(); ++i) {
          *cv[i] += step * *dv[i];
        }
        const double cand_obj = objective(candidate);
        if (cand_obj < best_obj) {
          best = std::move(candidate);
          best_obj = cand_obj;
          accepted = true;
          break;
        }
        step *= 0.5;
      }
      if (!accepted) break;
      result.loss_history.push_back(best_obj);
    }
  }

  result.estimate = std::move(best);
  result.final_loss = best_obj;
  return result;
}

void renormalize_gauge(PropagationSet& estimate,
                       const PropagationSet& reference,
                       bool include_exit) {
  // UE-channel gap: set h to the reference exactly and fold the diagonal
  // ratio into W1's columns. Exact transform, response unchanged.
  if (!estimate.interlayer.empty() &&
      estimate.ue_channel.size() == reference.ue_channel.size() &&
      estimate.ue_channel.size() > 0) {
    const auto h = estimate.ue_channel.col(0).array();
    const auto hr = reference.ue_channel.col(0).array();
    if ((h != Complex(0.0, 0.0)).all() && (hr != Complex(0.0, 0.0)).all()) {
      const Eigen::VectorXcd ratio = (h / hr).matrix();
      estimate.interlayer[0] = estimate.interlayer[0] * ratio.asDiagonal();
      estimate.ue_channel = reference.ue_channel;
    }
  }

  // Chain of matrices sharing diagonal gauges: W1, ..., W_{L-1} (+ exit when
  // it is estimated). Gap k rescales rows of chain[k] by g and columns of
  // chain[k+1] by 1/g. Entries of one gap are independent; gaps couple
  // through their shared matrix, hence the alternating sweeps.
  std::vector<CMatrix*> chain;
  std::vector<const CMatrix*> refs;
  for (std::size_t l = 0; l < estimate.interlayer.size(); ++l) {
    chain.push_back(&estimate.interlayer[l]);
    refs.push_back(&reference.interlayer[l]);
  }
  if (include_exit) {
    chain.push_back(&estimate.exit);
    refs.push_back(&reference.exit);
  }
  if (chain.size() < 2) return;

  std::vector<double> weight(chain.size());
  for (std::size_t k = 0; k < chain.size(); ++k) {
    const double n2 = refs[k]->squaredNorm();
    weight[k] = n2 > 0.0 ? 1.0 / n2 : 1.0;
  }

  constexpr int kMaxSweeps = 32;
  for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
    double max_step = 0.0;
    for (std::size_t k = 0; k + 1 < chain.size(); ++k) {
      CMatrix& a = *chain[k];
      CMatrix& b = *chain[k + 1];
      if (a.rows() != b.cols()) {
        throw DimensionError("renormalize_gauge: chain mismatch at gap " +
                             std::to_string(k));
      }
      for (Eigen::Index m = 0; m < a.rows(); ++m) {
        // Linearized least squares for the scalar gauge of atom m:
        //   min w_a |(1+u) a_row - r_a|^2 + w_b |(1-u) b_col - r_b|^2
        const auto arow = a.row(m);
        const auto bcol = b.col(m);
        const Complex num =
            weight[k] * (arow.conjugate().cwiseProduct(refs[k]->row(m) - arow))
                            .sum() +
            weight[k + 1] *
                (bcol.conjugate().cwiseProduct(bcol - refs[k + 1]->col(m)))
                    .sum();
        const double den = weight[k] * arow.squaredNorm() +
                           weight[k + 1] * bcol.squaredNorm();
        if (den <= 0.0) continue;
        const Complex scale = Complex(1.0, 0.0) + num / den;
        if (std::abs(scale) < 1e-8) continue;
        a.row(m) *= scale;
        b.col(m) /= scale;
        max_step = std::max(max_step, std::abs(num / den));
      }
    }
    if (max_step < 1e-13) break;
  }
}

CalibrationTrace run_multistage(const SimStackConfig& config,
                                const PropagationSet& ideal,
                                const PropagationSet& practical,
                                const StagePlan& plan,
                                const GradientSettings& settings,
                                const PilotPlan& pilot_base,
                                std::uint64_t master_seed,
                                const MultistageOptions& options) {
  plan.validate();
  settings.validate();
  const PropagationSet& truth =
      options.metrics_truth != nullptr ? *options.metrics_truth : practical;
  const std::vector<std::string> names =
      unknown_names(ideal, settings.optimize_exit);

  auto record_nmse = [&](const PropagationSet& estimate) {
    std::vector<std::pair<std::string, double>> rows;
    const auto ev = unknown_views(estimate, settings.optimize_exit);
    const auto tv = unknown_views(truth, settings.optimize_exit);
    for (std::size_t i = 0; i < names.size(); ++i) {
      rows.emplace_back(names[i], nmse_db(*ev[i], *tv[i]));
    }
    return rows;
  };

  CalibrationTrace trace;
  trace.master_seed = master_seed;
  trace.settings = settings;
  trace.plan = plan;

  PropagationSet current = ideal;
  // Pilot slots are retained across stages: stage s fits the union of all
  // slots observed so far. Each stage adds slots_per_stage fresh slots, so
  // by the last stage the full pilot budget constrains the joint estimate;
  // refitting only the newest batch would discard most of that information.
  MeasurementSet accumulated;
  for (int s = 1; s <= plan.num_stages; ++s) {
    PilotPlan stage_plan = pilot_base;
    stage_plan.num_slots = plan.slots_per_stage;
    stage_plan.phase_seed =
        derive_seed(master_seed, seed_stream::kStagePhases,
                    options.fresh_phases_per_stage ? static_cast<std::uint64_t>(s)
                                                   : 1ull);
    const std::uint64_t noise_seed = derive_seed(
        master_seed, seed_stream::kStageNoise, static_cast<std::uint64_t>(s));

    const std::vector<PhaseConfig> schedule =
        generate_phase_schedule(config, stage_plan);
    const MeasurementSet meas =
        measure(practical, schedule, stage_plan, noise_seed);

    if (s == 1) {
      accumulated = meas;
    } else {
      accumulated.schedule.insert(accumulated.schedule.end(),
                                  meas.schedule.begin(), meas.schedule.end());
      CMatrix joined(accumulated.received.rows(),
                     accumulated.received.cols() + meas.received.cols());
      joined << accumulated.received, meas.received;
      accumulated.received = std::move(joined);
    }

    GradientSettings stage_settings = settings;
    stage_settings.step_size =
        settings.step_size * std::pow(settings.stage_decay, s - 1);
    stage_settings.regularization_weight =
        settings.regularization_weight *
        std::pow(settings.reg_stage_decay, s - 1);

    StageResult stage =
        run_gradient_stage(current, accumulated, stage_settings, &ideal);

    if (s == 1) {
      StageRecord baseline;
      baseline.stage = 0;
      baseline.nmse_db = record_nmse(ideal);
      baseline.loss_final = stage.initial_loss;
      trace.stages.push_back(baseline);
      if (options.on_stage) options.on_stage(trace.stages.back());
    }

    current = stage.estimate;
    renormalize_gauge(current, ideal, settings.optimize_exit);

    StageRecord record;
    record.stage = s;
    record.nmse_db = record_nmse(current);
    record.loss_final = stage.final_loss;
    record.step_size = stage_settings.step_size;
    record.iterations = stage.iterations;
    record.diverged = stage.diverged;
    trace.stages.push_back(record);
    trace.loss_histories.push_back(std::move(stage.loss_history));
    if (options.on_stage) options.on_stage(trace.stages.back());
  }
  trace.final_estimate = std::move(current);
  return trace;
}

void Codebook::validate(int num_layers) const {
  if (layers.empty()) throw ConfigError("Codebook has no layer grids");
  if (static_cast<int>(layers.size()) != num_layers) {
    throw ConfigError("Codebook covers " + std::to_string(layers.size()) +
                      " layers, stack has " + std::to_string(num_layers));
  }
  if (refine_factor < 1) throw ConfigError("Codebook.refine_factor must be >= 1");
  if (max_coarse_sweeps < 1) {
    throw ConfigError("Codebook.max_coarse_sweeps must be >= 1");
  }
  auto check_axis = [](const std::vector<double>& grid, const std::string& what) {
    if (grid.empty()) throw ConfigError("Codebook: empty " + what + " grid");
    bool has_zero = false;
    for (double v : grid) {
      if (!std::isfinite(v)) throw ConfigError("Codebook: non-finite " + what);
      if (v == 0.0) has_zero = true;
      if (std::find(grid.begin(), grid.end(), -v) == grid.end()) {
        throw ConfigError("Codebook: " + what + " grid is not symmetric about 0");
      }
    }
    if (!has_zero) throw ConfigError("Codebook: " + what + " grid must contain 0");
  };
  for (std::size_t l = 0; l < layers.size(); ++l) {
    check_axis(layers[l].spacing, "layer " + std::to_string(l + 1) + " spacing");
    check_axis(layers[l].vertical, "layer " + std::to_string(l + 1) + " vertical");
    check_axis(layers[l].rotation, "layer " + std::to_string(l + 1) + " rotation");
  }
  if (layers[0].spacing.size() != 1 || layers[0].spacing[0] != 0.0) {
    throw ConfigError("Codebook: layer 1 spacing grid must be {0}");
  }
}

Codebook Codebook::uniform(int num_layers, const ErrorBounds& span,
                           int points_per_axis, int refine_factor,
                           int max_coarse_sweeps) {
  if (num_layers < 1) throw ConfigError("Codebook::uniform: num_layers must be >= 1");
  if (points_per_axis < 1 || points_per_axis % 2 == 0) {
    throw ConfigError("Codebook::uniform: points_per_axis must be odd");
  }
  span.validate();
  const int half = points_per_axis / 2;
  auto axis = [&](double bound) {
    std::vector<double> grid;
    if (bound == 0.0 || half == 0) return std::vector<double>{0.0};
    grid.reserve(points_per_axis);
    for (int k = -half; k <= half; ++k) {
      grid.push_back(bound * k / half);  // exactly symmetric, includes 0
    }
    return grid;
  };
  Codebook book;
  book.refine_factor = refine_factor;
  book.max_coarse_sweeps = max_coarse_sweeps;
  book.layers.resize(num_layers);
  for (int l = 0; l < num_layers; ++l) {
    book.layers[l].spacing = l == 0 ? std::vector<double>{0.0} : axis(span.spacing);
    book.layers[l].vertical = axis(span.vertical);
    book.layers[l].rotation = axis(span.rotation);
  }
  return book;
}

namespace {

double grid_step(const std::vector<double>& grid) {
  if (grid.size() < 2) return 0.0;
  std::vector<double> sorted = grid;
  std::sort(sorted.begin(), sorted.end());
  double step = 0.0;
  for (std::size_t i = 1; i < sorted.size(); ++i) {
    step = std::max(step, sorted[i] - sorted[i - 1]);
  }
  return step;
}

double triple_norm2(const ErrorState& s, int l) {
  return s.delta_spacing[l] * s.delta_spacing[l] +
         s.delta_vertical[l] * s.delta_vertical[l] +
         s.delta_rotation[l] * s.delta_rotation[l];
}

}  // namespace

CodebookResult codebook_search(const SimStackConfig& config,
                               const SceneConfig& scene,
                               const std::vector<LayerGeometry>& ideal_geometry,
                               const MeasurementSet& measurements,
                               const Codebook& codebook, SpacingModel model) {
  const int layer_count = static_cast<int>(ideal_geometry.size());
  codebook.validate(layer_count);
  const detail::BatchedMeasurements batch =
      detail::batch_measurements(measurements);

  CodebookResult result;
  result.errors = ErrorState::zeros(layer_count);

  auto evaluate = [&](const ErrorState& state) {
    const std::vector<LayerGeometry> layers =
        apply_errors(ideal_geometry, state, model);
    const PropagationSet set = build_propagation_set(config, scene, layers);
    return detail::loss_from(set, batch);
  };

  double best_loss = evaluate(result.errors);
  result.coarse_evaluations = 1;

  // Level 1: coordinate descent, one full Cartesian sweep per layer.
  for (int sweep = 0; sweep < codebook.max_coarse_sweeps; ++sweep) {
    bool changed = false;
    for (int l = 0; l < layer_count; ++l) {
      const LayerGrids& grids = codebook.layers[l];
      double best_ds = result.errors.delta_spacing[l];
      double best_dv = result.errors.delta_vertical[l];
      double best_dr = result.errors.delta_rotation[l];
      double best_norm2 = triple_norm2(result.errors, l);
      ErrorState probe = result.errors;
      for (double ds : grids.spacing) {
        for (double dv : grids.vertical) {
          for (double dr : grids.rotation) {
            probe.delta_spacing[l] = ds;
            probe.delta_vertical[l] = dv;
            probe.delta_rotation[l] = dr;
            const double loss = evaluate(probe);
            ++result.coarse_evaluations;
            const double norm2 = ds * ds + dv * dv + dr * dr;
            if (loss < best_loss ||
                (loss == best_loss && norm2 < best_norm2)) {
              best_loss = loss;
              best_ds = ds;
              best_dv = dv;
              best_dr = dr;
              best_norm2 = norm2;
              changed = true;
            }
          }
        }
      }
      result.errors.delta_spacing[l] = best_ds;
      result.errors.delta_vertical[l] = best_dv;
      result.errors.delta_rotation[l] = best_dr;
    }
    // Interlayer links only see relative offsets, so the per-layer sweeps
    // can stall one rigid vertical shift away from the optimum (only the
    // anchored UE and exit links discriminate that direction). Sweep it
    // explicitly.
    for (double g : codebook.layers[0].vertical) {
      if (g == 0.0) continue;
      ErrorState probe = result.errors;
      for (int l = 0; l < layer_count; ++l) probe.delta_vertical[l] += g;
      const double loss = evaluate(probe);
      ++result.coarse_evaluations;
      if (loss < best_loss) {
        best_loss = loss;
        result.errors = probe;
        changed = true;
      }
    }
    if (!changed) break;
  }
  result.coarse_loss = best_loss;

  // Level 2: per-parameter local grids around the coarse pick, spacing
  // step/refine_factor, widest span one coarse step either side.
  for (int l = 0; l < layer_count; ++l) {
    const LayerGrids& grids = codebook.layers[l];
    struct Axis {
      std::vector<double>* target;
      double step;
    };
    std::vector<Axis> axes = {
        {&result.errors.delta_spacing, grid_step(grids.spacing)},
        {&result.errors.delta_vertical, grid_step(grids.vertical)},
        {&result.errors.delta_rotation, grid_step(grids.rotation)},
    };
    for (const Axis& axis : axes) {
      if (axis.step == 0.0) continue;
      if (axis.target == &result.errors.delta_spacing && l == 0) continue;
      const double center = (*axis.target)[l];
      double best_value = center;
      ErrorState probe = result.errors;
      std::vector<double>* probe_axis =
          axis.target == &result.errors.delta_spacing ? &probe.delta_spacing
          : axis.target == &result.errors.delta_vertical ? &probe.delta_vertical
                                                         : &probe.delta_rotation;
      for (int k = -codebook.refine_factor; k <= codebook.refine_factor; ++k) {
        if (k == 0) continue;
        const double value = center + axis.step * k / codebook.refine_factor;
        (*probe_axis)[l] = value;
        const double loss = evaluate(probe);
        ++result.refine_evaluations;
        if (loss < best_loss ||
            (loss == best_loss && std::abs(value) < std::abs(best_value))) {
          best_loss = loss;
          best_value = value;
        }
      }
      (*axis.target)[l] = best_value;
    }
  }

  result.loss = best_loss;
  result.rebuilt = build_propagation_set(
      config, scene, apply_errors(ideal_geometry, result.errors, model));
  return result;
}

void MonitorSettings::validate() const {
  if (!(threshold > 0.0)) {
    throw ConfigError("MonitorSettings.threshold must be > 0");
  }
  if (window < 1) throw ConfigError("MonitorSettings.window must be >= 1");
  if (known_slot_period < 1) {
    throw ConfigError("MonitorSettings.known_slot_period must be >= 1");
  }
  if (calibration_slots < 1) {
    throw ConfigError("MonitorSettings.calibration_slots must be >= 1");
  }
  gradient.validate();
}

void DriftScenario::validate() const {
  if (total_slots < 1) throw ConfigError("DriftScenario.total_slots must be >= 1");
  if (change_slot < 0 || change_slot > total_slots) {
    throw ConfigError("DriftScenario.change_slot must lie inside the stream");
  }
  before.validate();
  after.validate();
}

MonitorResult run_state_driven_monitor(const SimStackConfig& config,
                                       const SceneConfig& scene,
                                       const std::vector<LayerGeometry>& ideal_geometry,
                                       const DriftScenario& drift,
                                       const MonitorSettings& settings,
                                       const PilotPlan& pilot_base,
                                       std::uint64_t master_seed,
                                       SpacingModel model) {
  settings.validate();
  drift.validate();

  const PropagationSet ideal_set =
      build_propagation_set(config, scene, ideal_geometry);
  const PropagationSet before_set = build_propagation_set(
      config, scene, apply_errors(ideal_geometry, drift.before, model));
  const PropagationSet after_set = build_propagation_set(
      config, scene, apply_errors(ideal_geometry, drift.after, model));

  MonitorResult out;
  PropagationSet estimate = ideal_set;
  int calibration_runs = 0;

  auto recalibrate = [&](const PropagationSet& truth_set) {
    PilotPlan plan = pilot_base;
    plan.num_slots = settings.calibration_slots;
    plan.phase_seed =
        derive_seed(master_seed, seed_stream::kMonitorCalibration,
                    2ull * static_cast<std::uint64_t>(calibration_runs));
    const std::uint64_t noise_seed =
        derive_seed(master_seed, seed_stream::kMonitorCalibration,
                    2ull * static_cast<std::uint64_t>(calibration_runs) + 1ull);
    ++calibration_runs;
    const std::vector<PhaseConfig> schedule =
        generate_phase_schedule(config, plan);
    const MeasurementSet meas = measure(truth_set, schedule, plan, noise_seed);
    estimate = run_gradient_stage(estimate, meas, settings.gradient, &ideal_set)
                   .estimate;
  };

  if (settings.calibrate_initial) {
    recalibrate(before_set);
  } else {
    estimate = before_set;
  }

  const int atoms = config.atoms_per_layer();
  struct KnownSlot {
    PhaseConfig phases;
    CMatrix received;  // N_rx x 1
    double residual;
  };
  std::deque<KnownSlot> window;

  auto residual_ratio = [&](const KnownSlot& slot) {
    const CMatrix yhat =
        cascade_response(estimate, slot.phases) * pilot_base.pilot_symbol;
    return (yhat - slot.received).squaredNorm() / slot.received.squaredNorm();
  };

  for (int slot = 0; slot < drift.total_slots; ++slot) {
    if (slot % settings.known_slot_period != 0) continue;  // plain data slot
    const PropagationSet& truth_set =
        slot < drift.change_slot ? before_set : after_set;

    KnownSlot sample;
    Rng phase_rng(derive_seed(master_seed, seed_stream::kMonitorPhases,
                              static_cast<std::uint64_t>(slot)));
    sample.phases.layer_phases.resize(config.num_layers);
    for (int l = 0; l < config.num_layers; ++l) {
      Eigen::VectorXd& theta = sample.phases.layer_phases[l];
      theta.resize(atoms);
      for (int k = 0; k < atoms; ++k) theta(k) = phase_rng.phase();
    }
    sample.received =
        cascade_response(truth_set, sample.phases) * pilot_base.pilot_symbol;
    if (!pilot_base.noiseless()) {
      Rng noise_rng(derive_seed(master_seed, seed_stream::kMonitorNoise,
                                static_cast<std::uint64_t>(slot)));
      const double signal_power =
          sample.received.squaredNorm() / sample.received.rows();
      const double noise_scale =
          std::sqrt(signal_power / std::pow(10.0, pilot_base.snr_db / 10.0));
      for (Eigen::Index i = 0; i < sample.received.rows(); ++i) {
        sample.received(i, 0) += noise_scale * noise_rng.cgauss();
      }
    }
    sample.residual = residual_ratio(sample);

    window.push_back(std::move(sample));
    if (static_cast<int>(window.size()) > settings.window) window.pop_front();
    if (static_cast<int>(window.size()) < settings.window) continue;

    double indicator = 0.0;
    for (const KnownSlot& s : window) indicator += s.residual;
    indicator /= settings.window;
    out.indicator_history.emplace_back(slot, indicator);

    if (indicator > settings.threshold) {
      recalibrate(truth_set);
      double post = 0.0;
      for (KnownSlot& s : window) {
        s.residual = residual_ratio(s);
        post += s.residual;
      }
      post /= settings.window;
      out.events.push_back({slot, indicator, post});
    }
  }

  out.final_estimate = std::move(estimate);
  return out;
}

}  // namespace simcal
