#pragma once

#include <complex>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "simcal/geometry.hpp"

namespace simcal {

using Complex = std::complex<double>;
using CMatrix = Eigen::MatrixXcd;

enum class PropagationModel { RayleighSommerfeld, GeometricRadar };

// Transmitter-side scene: the UE in front of layer 1 and the receive probes
// behind layer L. Probe positions are known exactly (the receive side is
// assumed factory-calibrated).
struct SceneConfig {
  Vec3 ue_position = Vec3::Zero();
  std::vector<Vec3> rx_positions;
  PropagationModel model = PropagationModel::RayleighSommerfeld;
};

// Per-layer phase shifts in radians; the meta-atom transmission coefficient
// is the unit-modulus e^{j theta}.
struct PhaseConfig {
  std::vector<Eigen::VectorXd> layer_phases;
};

// The full matrix description of one stack realization:
//   h (M^2 x 1)  UE to layer 1
//   W_l (M^2 x M^2), l = 1..L-1,  layer l to layer l+1
//   W_out (N_rx x M^2)  layer L to the receive probes
struct PropagationSet {
  CMatrix ue_channel;
  std::vector<CMatrix> interlayer;
  CMatrix exit;

  int num_layers() const { return static_cast<int>(interlayer.size()) + 1; }
};

// Rayleigh-Sommerfeld coefficient from a meta-atom at src to a point at dst:
//   w = (atom_area * cos(chi) / d) * (1/(2 pi d) - j/wavelength) * e^{j 2 pi d / wavelength}
// cos(chi) is taken against the source normal and clipped at 0 (no backward
// radiation). Distances below wavelength/100 raise SingularityError; the
// model is not valid at such compact spacing.
Complex rs_coefficient(const Vec3& src_pos, const Vec3& dst_pos,
                       const Vec3& src_normal, double wavelength,
                       double atom_area);

// Simplified radar-equation coefficient with idealized element patterns
// G(chi) = 4 cos(chi) clipped at 0 on both ends of the link:
//   sqrt(G_t * G_r * atom_area / (4 pi d^2)) * e^{j 2 pi d / wavelength}
Complex radar_coefficient(const Vec3& src_pos, const Vec3& dst_pos,
                          const Vec3& src_normal, const Vec3& dst_normal,
                          double wavelength, double atom_area);

// Entry (m, n) couples atom n of src to atom m of dst. dst must be strictly
// downstream of src along the propagation axis.
CMatrix interlayer_matrix(const LayerGeometry& src, const LayerGeometry& dst,
                          PropagationModel model, double wavelength,
                          double atom_area);

// Free-space spherical-wave entries from the UE to every layer-1 atom:
//   h_n = (wavelength / (4 pi d_n)) * sqrt(atom_area * cos(chi_n)) * e^{j 2 pi d_n / wavelength}
CMatrix ue_channel(const Vec3& ue_position, const LayerGeometry& layer1,
                   double wavelength, double atom_area);

// Rayleigh-Sommerfeld coefficients from every layer-L atom to every receive
// probe; row order follows rx_positions.
CMatrix exit_matrix(const LayerGeometry& layerL,
                    const std::vector<Vec3>& rx_positions, double wavelength,
                    double atom_area);

// Assembles {h, W_1..W_{L-1}, W_out} for one geometric realization of the
// stack, validating the scene against the actual layer planes.
PropagationSet build_propagation_set(const SimStackConfig& config,
                                     const SceneConfig& scene,
                                     const std::vector<LayerGeometry>& layers);

// W_out Phi_L W_{L-1} ... W_1 Phi_1 h, evaluated right to left. Dimension
// mismatches name the offending stage.
CMatrix cascade_response(const PropagationSet& set, const PhaseConfig& phases);

// nx x nz probe grid centered on the propagation axis, distance_behind
// meters behind the last layer plane. Index order matches the atom grids
// (row-major over (z, x)).
std::vector<Vec3> make_rx_grid(const SimStackConfig& config, int nx, int nz,
                               double pitch, double distance_behind);

// Names of the matrices treated as unknowns by the calibration engine, in
// the fixed order h, W1..W{L-1}[, Wout].
std::vector<std::string> unknown_names(const PropagationSet& set,
                                       bool include_exit = false);

}  // namespace simcal
