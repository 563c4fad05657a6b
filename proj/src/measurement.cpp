#include "simcal/measurement.hpp"

#include <cmath>
#include <fstream>

#include "simcal/errors.hpp"
#include "simcal/rng.hpp"

#include "batch_kernels.hpp"
#include "format_util.hpp"

namespace simcal {

void PilotPlan::validate() const {
  if (num_slots < 1) {
    throw ConfigError("PilotPlan.num_slots must be >= 1 (got " +
                      std::to_string(num_slots) + ")");
  }
  if (std::isnan(snr_db) || (std::isinf(snr_db) && snr_db < 0.0)) {
    throw ConfigError("PilotPlan.snr_db must be finite or +infinity (noiseless)");
  }
  if (std::abs(pilot_symbol) == 0.0) {
    throw ConfigError("PilotPlan.pilot_symbol must be nonzero");
  }
}

std::vector<PhaseConfig> generate_phase_schedule(const SimStackConfig& config,
                                                 const PilotPlan& plan) {
  config.validate();
  plan.validate();
  const int atoms = config.atoms_per_layer();
  std::vector<PhaseConfig> schedule(plan.num_slots);
  for (int t = 0; t < plan.num_slots; ++t) {
    Rng rng(derive_seed(plan.phase_seed, seed_stream::kScheduleSlot,
                        static_cast<std::uint64_t>(t)));
    PhaseConfig& cfg = schedule[t];
    cfg.layer_phases.resize(config.num_layers);
    for (int l = 0; l < config.num_layers; ++l) {
      Eigen::VectorXd& theta = cfg.layer_phases[l];
      theta.resize(atoms);
      for (int k = 0; k < atoms; ++k) theta(k) = rng.phase();
    }
  }
  return schedule;
}

MeasurementSet measure(const PropagationSet& practical,
                       const std::vector<PhaseConfig>& schedule,
                       const PilotPlan& plan, std::uint64_t noise_seed) {
  plan.validate();
  if (schedule.empty()) {
    throw ConfigError("measure: empty phase schedule");
  }
  MeasurementSet out;
  out.schedule = schedule;
  out.pilot_symbol = plan.pilot_symbol;
  out.received = detail::forward_responses(
      practical, detail::phase_factor_matrices(schedule), plan.pilot_symbol);

  if (!plan.noiseless()) {
    const double component_count =
        static_cast<double>(out.received.rows()) * out.received.cols();
    const double signal_power = out.received.squaredNorm() / component_count;
    const double snr_linear = std::pow(10.0, plan.snr_db / 10.0);
    const double noise_scale = std::sqrt(signal_power / snr_linear);
    for (Eigen::Index t = 0; t < out.received.cols(); ++t) {
      Rng rng(derive_seed(noise_seed, seed_stream::kNoiseSlot,
                          static_cast<std::uint64_t>(t)));
      for (Eigen::Index i = 0; i < out.received.rows(); ++i) {
        out.received(i, t) += noise_scale * rng.cgauss();
      }
    }
  }
  return out;
}

void write_measurement_csv(const MeasurementSet& set, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw ConfigError("cannot open " + path + " for writing");
  f << "slot,rx_index,re_y,im_y\n";
  for (Eigen::Index t = 0; t < set.received.cols(); ++t) {
    for (Eigen::Index i = 0; i < set.received.rows(); ++i) {
      f << t << ',' << i << ',' << detail::g17(set.received(i, t).real()) << ','
        << detail::g17(set.received(i, t).imag()) << '\n';
    }
  }
}

void write_phase_schedule_csv(const MeasurementSet& set,
                              const std::string& path) {
  std::ofstream f(path);
  if (!f) throw ConfigError("cannot open " + path + " for writing");
  f << "slot,layer,atom,phase_radians\n";
  for (std::size_t t = 0; t < set.schedule.size(); ++t) {
    const PhaseConfig& cfg = set.schedule[t];
    for (std::size_t l = 0; l < cfg.layer_phases.size(); ++l) {
      const Eigen::VectorXd& theta = cfg.layer_phases[l];
      for (Eigen::Index k = 0; k < theta.size(); ++k) {
        f << t << ',' << (l + 1) << ',' << k << ',' << detail::g17(theta(k))
          << '\n';
      }
    }
  }
}

}  // namespace simcal
