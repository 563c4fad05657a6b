#pragma once

#include <complex>
#include <vector>

#include "simcal/errors.hpp"
#include "simcal/measurement.hpp"
#include "simcal/propagation.hpp"

// Slot-batched evaluation of the cascade, its pilot loss and its adjoint
// gradient. All slots are folded into K x T matrix products so a loss or
// gradient call is a handful of GEMMs instead of T separate cascades.
namespace simcal::detail {

struct BatchedMeasurements {
  std::vector<CMatrix> phase_factors;  // per layer: K x T entries e^{j theta}
  CMatrix received;                    // N_rx x T
  Complex pilot{1.0, 0.0};
  double received_power = 0.0;  // squared Frobenius norm of received
};

inline std::vector<CMatrix> phase_factor_matrices(
    const std::vector<PhaseConfig>& schedule) {
  if (schedule.empty()) {
    throw ConfigError("phase schedule is empty");
  }
  const std::size_t layer_count = schedule.front().layer_phases.size();
  const Eigen::Index t_count = static_cast<Eigen::Index>(schedule.size());
  std::vector<CMatrix> factors(layer_count);
  for (std::size_t l = 0; l < layer_count; ++l) {
    const Eigen::Index k_count = schedule.front().layer_phases[l].size();
    factors[l].resize(k_count, t_count);
    for (Eigen::Index t = 0; t < t_count; ++t) {
      const Eigen::VectorXd& theta = schedule[t].layer_phases[l];
      if (theta.size() != k_count) {
        throw DimensionError("phase schedule slot " + std::to_string(t) +
                             " layer " + std::to_string(l + 1) +
                             " has inconsistent length");
      }
      for (Eigen::Index k = 0; k < k_count; ++k) {
        factors[l](k, t) = std::polar(1.0, theta(k));
      }
    }
  }
  return factors;
}

inline BatchedMeasurements batch_measurements(const MeasurementSet& set) {
  if (set.schedule.empty() || set.received.cols() == 0) {
    throw ConfigError("empty measurement set");
  }
  if (static_cast<Eigen::Index>(set.schedule.size()) != set.received.cols()) {
    throw DimensionError("measurement set: schedule covers " +
                         std::to_string(set.schedule.size()) +
                         " slots, received has " +
                         std::to_string(set.received.cols()) + " columns");
  }
  BatchedMeasurements b;
  b.phase_factors = phase_factor_matrices(set.schedule);
  b.received = set.received;
  b.pilot = set.pilot_symbol;
  b.received_power = set.received.squaredNorm();
  if (b.received_power == 0.0) {
    throw ConfigError("measurement set carries zero received power");
  }
  return b;
}

// Post-phase activation of every layer for every slot, each K x T.
inline std::vector<CMatrix> forward_activations(const PropagationSet& set,
                                                const BatchedMeasurements& b) {
  const int layer_count = set.num_layers();
  const Eigen::Index t_count = b.phase_factors.front().cols();
  std::vector<CMatrix> act(layer_count);
  act[0] = b.phase_factors[0].cwiseProduct(
      (set.ue_channel * b.pilot).replicate(1, t_count));
  for (int l = 1; l < layer_count; ++l) {
    act[l] = b.phase_factors[l].cwiseProduct(
        (set.interlayer[l - 1] * act[l - 1]).eval());
  }
  return act;
}

// Directional derivative of the batched response at a frozen point: maps a
// perturbation of the unknowns to the induced change of every slot output.
inline CMatrix jacobian_apply(const PropagationSet& point,
                              const BatchedMeasurements& b,
                              const std::vector<CMatrix>& act,
                              const PropagationSet& dir, bool include_exit) {
  const int layer_count = point.num_layers();
  const Eigen::Index t_count = b.phase_factors.front().cols();
  CMatrix dv = b.phase_factors[0].cwiseProduct(
      (dir.ue_channel * b.pilot).replicate(1, t_count));
  for (int l = 1; l < layer_count; ++l) {
    dv = b.phase_factors[l].cwiseProduct(
        (dir.interlayer[l - 1] * act[l - 1] + point.interlayer[l - 1] * dv)
            .eval());
  }
  CMatrix dy = point.exit * dv;
  if (include_exit) dy += dir.exit * act[layer_count - 1];
  return dy;
}

// Adjoint of jacobian_apply: folds a residual-shaped matrix (N_rx x T) back
// onto one matrix per unknown. Same sweep as gradient_from, without the loss
// normalization.
inline PropagationSet jacobian_adjoint(const PropagationSet& point,
                                       const BatchedMeasurements& b,
                                       const std::vector<CMatrix>& act,
                                       const CMatrix& folded,
                                       bool include_exit) {
  const int layer_count = point.num_layers();
  PropagationSet g;
  g.interlayer.resize(point.interlayer.size());
  g.exit = include_exit
               ? (folded * act[layer_count - 1].adjoint()).eval()
               : CMatrix::Zero(point.exit.rows(), point.exit.cols()).eval();
  CMatrix v = point.exit.adjoint() * folded;
  for (int l = layer_count - 1; l >= 1; --l) {
    const CMatrix u = b.phase_factors[l].conjugate().cwiseProduct(v);
    g.interlayer[l - 1] = u * act[l - 1].adjoint();
    v = point.interlayer[l - 1].adjoint() * u;
  }
  const CMatrix u0 = b.phase_factors[0].conjugate().cwiseProduct(v);
  g.ue_channel = u0.rowwise().sum() * std::conj(b.pilot);
  return g;
}

// Model outputs for every slot, N_rx x T.
inline CMatrix forward_responses(const PropagationSet& set,
                                 const std::vector<CMatrix>& phase_factors,
                                 Complex pilot) {
  const int layer_count = set.num_layers();
  if (static_cast<int>(phase_factors.size()) != layer_count) {
    throw DimensionError("batched forward: phase factors cover " +
                         std::to_string(phase_factors.size()) +
                         " layers, stack has " + std::to_string(layer_count));
  }
  const Eigen::Index t_count = phase_factors.front().cols();
  CMatrix cur =
      phase_factors[0].cwiseProduct((set.ue_channel * pilot).replicate(1, t_count));
  for (int l = 1; l < layer_count; ++l) {
    cur = phase_factors[l].cwiseProduct((set.interlayer[l - 1] * cur).eval());
  }
  return set.exit * cur;
}

inline double loss_from(const PropagationSet& set,
                        const BatchedMeasurements& b) {
  const CMatrix yhat = forward_responses(set, b.phase_factors, b.pilot);
  return (yhat - b.received).squaredNorm() / b.received_power;
}

// Adjoint sweep. The returned set holds, per unknown, the gradient
// d loss / d Re(entry) + j * d loss / d Im(entry), so central finite
// differences of loss_from reproduce each entry literally. The exit slot is
// zero unless include_exit is set.
inline PropagationSet gradient_from(const PropagationSet& set,
                                    const BatchedMeasurements& b,
                                    bool include_exit, double* loss_out) {
  const int layer_count = set.num_layers();
  const std::vector<CMatrix> act = forward_activations(set, b);
  CMatrix residual = set.exit * act[layer_count - 1] - b.received;
  if (loss_out != nullptr) {
    *loss_out = residual.squaredNorm() / b.received_power;
  }
  residual *= Complex(2.0 / b.received_power, 0.0);

  PropagationSet grad;
  grad.interlayer.resize(set.interlayer.size());
  grad.exit = include_exit ? (residual * act[layer_count - 1].adjoint()).eval()
                           : CMatrix::Zero(set.exit.rows(), set.exit.cols()).eval();

  // Backward pass: carry V = (partial cascade)^H * scaled residual.
  CMatrix v = set.exit.adjoint() * residual;
  for (int l = layer_count - 1; l >= 1; --l) {
    const CMatrix u = b.phase_factors[l].conjugate().cwiseProduct(v);
    grad.interlayer[l - 1] = u * act[l - 1].adjoint();
    v = set.interlayer[l - 1].adjoint() * u;
  }
  const CMatrix u0 = b.phase_factors[0].conjugate().cwiseProduct(v);
  grad.ue_channel = u0.rowwise().sum() * std::conj(b.pilot);
  return grad;
}

}  // namespace simcal::detail
