#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "simcal/errors.hpp"

namespace simcal {

using Vec3 = Eigen::Vector3d;

// Axis convention: x lateral, y propagation axis, z vertical. Metasurface
// layers lie in x-z planes stacked along +y.

// Immutable physical description of the stack. All lengths in meters.
struct SimStackConfig {
  int num_layers = 0;       // L >= 2
  int atoms_per_side = 0;   // M, each layer is an M x M grid
  double wavelength = 0.0;
  double atom_pitch = 0.0;       // center-to-center spacing within a layer
  double stack_thickness = 0.0;  // layer 1 to layer L along y
  double atom_area = 0.0;        // effective aperture per meta-atom

  int atoms_per_layer() const { return atoms_per_side * atoms_per_side; }
  double nominal_gap() const { return stack_thickness / (num_layers - 1); }

  // Throws ConfigError naming the violated bound.
  void validate() const;
};

// Maximum magnitudes of the uniform fabrication error distributions.
struct ErrorBounds {
  double spacing = 0.0;   // m, interlayer spacing irregularity
  double vertical = 0.0;  // m, vertical height offset
  double rotation = 0.0;  // rad, planar rotation misalignment

  void validate() const;
  ErrorBounds scaled(double factor) const {
    return {spacing * factor, vertical * factor, rotation * factor};
  }
};

// Per-layer geometric error triple. Entry i corresponds to layer i+1;
// delta_spacing of layer 1 is always zero.
struct ErrorState {
  std::vector<double> delta_spacing;   // m
  std::vector<double> delta_vertical;  // m
  std::vector<double> delta_rotation;  // rad

  int num_layers() const { return static_cast<int>(delta_spacing.size()); }
  bool is_zero() const;
  void validate() const;

  static ErrorState zeros(int num_layers);
};

// How a spacing deviation on layer l propagates: Cumulative shifts layer l
// and everything bonded above it, PerGap shifts only layer l.
enum class SpacingModel { Cumulative, PerGap };

// Realized 3-D coordinates of every meta-atom on one layer. Atoms are stored
// row-major over (z, x): index n = iz * M + ix.
struct LayerGeometry {
  int layer_index = 0;  // 1-based
  std::vector<Vec3> atom_positions;
  Vec3 normal = Vec3::UnitY();

  // All atoms of a layer share the same y coordinate.
  double plane_coordinate() const { return atom_positions.front().y(); }
  Vec3 centroid() const;
};

// Ideal stack: layer l at y = (l-1) * thickness / (L-1), each layer an M x M
// grid with the configured pitch, centered on the propagation axis.
std::vector<LayerGeometry> build_ideal_geometry(const SimStackConfig& config);

// Independent U(-bound, +bound) draw per layer and component; deterministic
// in rng_seed. Layer 1's spacing deviation is forced to zero.
ErrorState sample_errors(int num_layers, const ErrorBounds& bounds,
                         std::uint64_t rng_seed);

// Injects the error triple layer by layer: spacing shift along y, then the
// vertical in-plane shift, then the rotation about the layer's geometric
// center. The input is not mutated; a component that is exactly zero leaves
// the corresponding coordinates bit-identical.
std::vector<LayerGeometry> apply_errors(const std::vector<LayerGeometry>& ideal,
                                        const ErrorState& errors,
                                        SpacingModel model = SpacingModel::Cumulative);

}  // namespace simcal
