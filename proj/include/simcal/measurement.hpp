#pragma once

#include <complex>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "simcal/propagation.hpp"

namespace simcal {

// One pilot campaign: T slots of a known symbol under per-slot random phase
// configurations. snr_db = +infinity selects the noiseless mode.
struct PilotPlan {
  int num_slots = 1;
  std::uint64_t phase_seed = 0;
  Complex pilot_symbol{1.0, 0.0};
  double snr_db = std::numeric_limits<double>::infinity();

  bool noiseless() const {
    return std::isinf(snr_db) && snr_db > 0.0;
  }
  void validate() const;
};

// The observable record of a campaign: the phase schedule that was applied
// and the received vectors, one column per slot. Intermediate layer outputs
// are never part of this record.
struct MeasurementSet {
  std::vector<PhaseConfig> schedule;
  CMatrix received;  // N_rx x T
  Complex pilot_symbol{1.0, 0.0};

  int num_slots() const { return static_cast<int>(received.cols()); }
};

// T phase configurations, every entry i.i.d. uniform on [0, 2 pi). Slot t is
// drawn from its own counter-derived sub-seed, so the schedule does not
// depend on evaluation order.
std::vector<PhaseConfig> generate_phase_schedule(const SimStackConfig& config,
                                                 const PilotPlan& plan);

// y_t = cascade_response(practical, schedule[t]) * pilot_symbol + n_t. The
// per-component noise variance is set from the schedule-average received
// signal power so that signal power / noise power = snr. Noiseless plans
// never touch the noise stream.
MeasurementSet measure(const PropagationSet& practical,
                       const std::vector<PhaseConfig>& schedule,
                       const PilotPlan& plan, std::uint64_t noise_seed);

// CSV with columns slot,rx_index,re_y,im_y.
void write_measurement_csv(const MeasurementSet& set, const std::string& path);

// Sidecar CSV with columns slot,layer,atom,phase_radians.
void write_phase_schedule_csv(const MeasurementSet& set,
                              const std::string& path);

}  // namespace simcal
