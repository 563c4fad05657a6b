#include "simcal/geometry.hpp"

#include <cmath>
#include <string>

#include "simcal/rng.hpp"

namespace simcal {

namespace {

void require(bool ok, const std::string& message) {
  if (!ok) throw ConfigError(message);
}

}  // namespace

void SimStackConfig::validate() const {
  require(num_layers >= 2, "SimStackConfig.num_layers must be >= 2 (got " +
                               std::to_string(num_layers) + ")");
  require(atoms_per_side >= 1, "SimStackConfig.atoms_per_side must be >= 1 (got " +
                                   std::to_string(atoms_per_side) + ")");
  require(std::isfinite(wavelength) && wavelength > 0.0,
          "SimStackConfig.wavelength must be > 0");
  require(std::isfinite(atom_pitch) && atom_pitch > 0.0,
          "SimStackConfig.atom_pitch must be > 0");
  require(std::isfinite(stack_thickness) && stack_thickness > 0.0,
          "SimStackConfig.stack_thickness must be > 0");
  require(std::isfinite(atom_area) && atom_area > 0.0,
          "SimStackConfig.atom_area must be > 0");
}

void ErrorBounds::validate() const {
  require(std::isfinite(spacing) && spacing >= 0.0, "ErrorBounds.spacing must be >= 0");
  require(std::isfinite(vertical) && vertical >= 0.0, "ErrorBounds.vertical must be >= 0");
  require(std::isfinite(rotation) && rotation >= 0.0, "ErrorBounds.rotation must be >= 0");
}

bool ErrorState::is_zero() const {
  for (double v : delta_spacing)
    if (v != 0.0) return false;
  for (double v : delta_vertical)
    if (v != 0.0) return false;
  for (double v : delta_rotation)
    if (v != 0.0) return false;
  return true;
}

void ErrorState::validate() const {
  const std::size_t n = delta_spacing.size();
  require(n >= 1, "ErrorState must cover at least one layer");
  require(delta_vertical.size() == n && delta_rotation.size() == n,
          "ErrorState component vectors must have equal length");
  require(delta_spacing[0] == 0.0, "ErrorState.delta_spacing of layer 1 must be 0");
  auto all_finite = [](const std::vector<double>& v) {
    for (double x : v)
      if (!std::isfinite(x)) return false;
    return true;
  };
  require(all_finite(delta_spacing) && all_finite(delta_vertical) &&
              all_finite(delta_rotation),
          "ErrorState entries must be finite");
}

ErrorState ErrorState::zeros(int num_layers) {
  ErrorState e;
  e.delta_spacing.assign(num_layers, 0.0);
  e.delta_vertical.assign(num_layers, 0.0);
  e.delta_rotation.assign(num_layers, 0.0);
  return e;
}

Vec3 LayerGeometry::centroid() const {
  Vec3 c = Vec3::Zero();
  for (const Vec3& p : atom_positions) c += p;
  return c / static_cast<double>(atom_positions.size());
}

std::vector<LayerGeometry> build_ideal_geometry(const SimStackConfig& config) {
  config.validate();
  const int layer_count = config.num_layers;
  const int side = config.atoms_per_side;
  const double gap = config.nominal_gap();

  std::vector<LayerGeometry> layers;
  layers.reserve(layer_count);
  for (int l = 0; l < layer_count; ++l) {
    LayerGeometry layer;
    layer.layer_index = l + 1;
    layer.normal = Vec3::UnitY();
    layer.atom_positions.reserve(config.atoms_per_layer());
    const double y = gap * l;
    for (int iz = 0; iz < side; ++iz) {
      const double z = (iz - 0.5 * (side - 1)) * config.atom_pitch;
      for (int ix = 0; ix < side; ++ix) {
        const double x = (ix - 0.5 * (side - 1)) * config.atom_pitch;
        layer.atom_positions.emplace_back(x, y, z);
      }
    }
    layers.push_back(std::move(layer));
  }
  return layers;
}

ErrorState sample_errors(int num_layers, const ErrorBounds& bounds,
                         std::uint64_t rng_seed) {
  bounds.validate();
  if (num_layers < 1) throw ConfigError("sample_errors: num_layers must be >= 1");
  Rng rng(rng_seed);
  ErrorState state;
  state.delta_spacing.resize(num_layers);
  state.delta_vertical.resize(num_layers);
  state.delta_rotation.resize(num_layers);
  for (int l = 0; l < num_layers; ++l) {
    state.delta_spacing[l] = rng.symmetric(bounds.spacing);
    state.delta_vertical[l] = rng.symmetric(bounds.vertical);
    state.delta_rotation[l] = rng.symmetric(bounds.rotation);
  }
  state.delta_spacing[0] = 0.0;  // the first layer defines the y origin
  return state;
}

std::vector<LayerGeometry> apply_errors(const std::vector<LayerGeometry>& ideal,
                                        const ErrorState& errors,
                                        SpacingModel model) {
  errors.validate();
  if (static_cast<int>(ideal.size()) != errors.num_layers()) {
    throw DimensionError("apply_errors: geometry has " +
                         std::to_string(ideal.size()) + " layers but ErrorState covers " +
                         std::to_string(errors.num_layers()));
  }

  std::vector<LayerGeometry> practical = ideal;
  double cumulative_shift = 0.0;
  for (std::size_t l = 0; l < practical.size(); ++l) {
    LayerGeometry& layer = practical[l];

    // 1) Spacing irregularity along the propagation axis.
    if (model == SpacingModel::Cumulative) cumulative_shift += errors.delta_spacing[l];
    const double y_shift =
        (model == SpacingModel::Cumulative) ? cumulative_shift : errors.delta_spacing[l];
    if (y_shift != 0.0) {
      for (Vec3& p : layer.atom_positions) p.y() += y_shift;
    }

    // 2) Vertical height offset of the whole layer.
    const double dz = errors.delta_vertical[l];
    if (dz != 0.0) {
      for (Vec3& p : layer.atom_positions) p.z() += dz;
    }

    // 3) In-plane rotation about the layer's geometric center.
    const double angle = errors.delta_rotation[l];
    if (angle != 0.0) {
      const Vec3 c = layer.centroid();
      const double cos_a = std::cos(angle);
      const double sin_a = std::sin(angle);
      for (Vec3& p : layer.atom_positions) {
        const double rx = p.x() - c.x();
        const double rz = p.z() - c.z();
        p.x() = c.x() + cos_a * rx - sin_a * rz;
        p.z() = c.z() + sin_a * rx + cos_a * rz;
      }
    }
  }
  return practical;
}

}  // namespace simcal
