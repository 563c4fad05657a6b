#include "simcal/propagation.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "simcal/errors.hpp"

namespace simcal {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// The scalar diffraction kernels lose validity at extremely compact spacing;
// refuse to evaluate rather than return a huge finite number.
double checked_distance(const Vec3& src, const Vec3& dst, double wavelength) {
  const double d = (dst - src).norm();
  if (d < wavelength / 100.0) {
    throw SingularityError("propagation distance " + std::to_string(d) +
                           " m is below the wavelength/100 validity guard");
  }
  return d;
}

}  // namespace

Complex rs_coefficient(const Vec3& src_pos, const Vec3& dst_pos,
                       const Vec3& src_normal, double wavelength,
                       double atom_area) {
  const double d = checked_distance(src_pos, dst_pos, wavelength);
  const double cos_chi = (dst_pos - src_pos).dot(src_normal) / d;
  if (cos_chi <= 0.0) return Complex(0.0, 0.0);
  const Complex prefactor(1.0 / (kTwoPi * d), -1.0 / wavelength);
  return (atom_area * cos_chi / d) * prefactor *
         std::polar(1.0, kTwoPi * d / wavelength);
}

Complex radar_coefficient(const Vec3& src_pos, const Vec3& dst_pos,
                          const Vec3& src_normal, const Vec3& dst_normal,
                          double wavelength, double atom_area) {
  const double d = checked_distance(src_pos, dst_pos, wavelength);
  const Vec3 u = (dst_pos - src_pos) / d;
  const double gain_t = std::max(0.0, 4.0 * u.dot(src_normal));
  const double gain_r = std::max(0.0, 4.0 * u.dot(dst_normal));
  if (gain_t == 0.0 || gain_r == 0.0) return Complex(0.0, 0.0);
  const double magnitude =
      std::sqrt(gain_t * gain_r * atom_area / (4.0 * std::numbers::pi * d * d));
  return magnitude * std::polar(1.0, kTwoPi * d / wavelength);
}

CMatrix interlayer_matrix(const LayerGeometry& src, const LayerGeometry& dst,
                          PropagationModel model, double wavelength,
                          double atom_area) {
  if (dst.plane_coordinate() <= src.plane_coordinate()) {
    throw SingularityError(
        "interlayer_matrix: layer " + std::to_string(dst.layer_index) +
        " is not strictly downstream of layer " + std::to_string(src.layer_index));
  }
  const int rows = static_cast<int>(dst.atom_positions.size());
  const int cols = static_cast<int>(src.atom_positions.size());
  CMatrix w(rows, cols);
  for (int m = 0; m < rows; ++m) {
    for (int n = 0; n < cols; ++n) {
      w(m, n) =
          model == PropagationModel::RayleighSommerfeld
              ? rs_coefficient(src.atom_positions[n], dst.atom_positions[m],
                               src.normal, wavelength, atom_area)
              : radar_coefficient(src.atom_positions[n], dst.atom_positions[m],
                                  src.normal, dst.normal, wavelength, atom_area);
    }
  }
  return w;
}

CMatrix ue_channel(const Vec3& ue_position, const LayerGeometry& layer1,
                   double wavelength, double atom_area) {
  if (ue_position.y() >= layer1.plane_coordinate()) {
    throw SingularityError("ue_channel: UE must lie strictly in front of layer 1");
  }
  const int count = static_cast<int>(layer1.atom_positions.size());
  CMatrix h(count, 1);
  for (int n = 0; n < count; ++n) {
    const Vec3& atom = layer1.atom_positions[n];
    const double d = checked_distance(ue_position, atom, wavelength);
    const double cos_chi = (atom - ue_position).dot(layer1.normal) / d;
    if (cos_chi <= 0.0) {
      h(n, 0) = Complex(0.0, 0.0);
      continue;
    }
    h(n, 0) = (wavelength / (2.0 * kTwoPi * d)) *
              std::sqrt(atom_area * cos_chi) *
              std::polar(1.0, kTwoPi * d / wavelength);
  }
  return h;
}

CMatrix exit_matrix(const LayerGeometry& layerL,
                    const std::vector<Vec3>& rx_positions, double wavelength,
                    double atom_area) {
  if (rx_positions.empty()) {
    throw ConfigError("exit_matrix: at least one receive probe required");
  }
  for (std::size_t i = 0; i < rx_positions.size(); ++i) {
    if (rx_positions[i].y() <= layerL.plane_coordinate()) {
      throw SingularityError("exit_matrix: probe " + std::to_string(i) +
                             " is not strictly behind the last layer");
    }
  }
  const int rows = static_cast<int>(rx_positions.size());
  const int cols = static_cast<int>(layerL.atom_positions.size());
  CMatrix w(rows, cols);
  for (int m = 0; m < rows; ++m) {
    for (int n = 0; n < cols; ++n) {
      w(m, n) = rs_coefficient(layerL.atom_positions[n], rx_positions[m],
                               layerL.normal, wavelength, atom_area);
    }
  }
  return w;
}

PropagationSet build_propagation_set(const SimStackConfig& config,
                                     const SceneConfig& scene,
                                     const std::vector<LayerGeometry>& layers) {
  config.validate();
  if (static_cast<int>(layers.size()) != config.num_layers) {
    throw DimensionError("build_propagation_set: geometry has " +
                         std::to_string(layers.size()) + " layers, config says " +
                         std::to_string(config.num_layers));
  }
  PropagationSet set;
  set.ue_channel = ue_channel(scene.ue_position, layers.front(),
                              config.wavelength, config.atom_area);
  set.interlayer.reserve(layers.size() - 1);
  for (std::size_t l = 0; l + 1 < layers.size(); ++l) {
    set.interlayer.push_back(interlayer_matrix(layers[l], layers[l + 1],
                                               scene.model, config.wavelength,
                                               config.atom_area));
  }
  set.exit = exit_matrix(layers.back(), scene.rx_positions, config.wavelength,
                         config.atom_area);
  return set;
}

CMatrix cascade_response(const PropagationSet& set, const PhaseConfig& phases) {
  const int layer_count = set.num_layers();
  if (static_cast<int>(phases.layer_phases.size()) != layer_count) {
    throw DimensionError("cascade_response: phase configuration covers " +
                         std::to_string(phases.layer_phases.size()) +
                         " layers, stack has " + std::to_string(layer_count));
  }
  if (set.ue_channel.cols() != 1) {
    throw DimensionError("cascade_response stage h: expected a column vector");
  }
  CMatrix v = set.ue_channel;
  for (int l = 0; l < layer_count; ++l) {
    const Eigen::VectorXd& theta = phases.layer_phases[l];
    if (theta.size() != v.rows()) {
      throw DimensionError("cascade_response stage phase layer " +
                           std::to_string(l + 1) + ": expected " +
                           std::to_string(v.rows()) + " phases, got " +
                           std::to_string(theta.size()));
    }
    for (Eigen::Index k = 0; k < v.rows(); ++k) {
      v(k, 0) *= std::polar(1.0, theta(k));
    }
    if (l + 1 < layer_count) {
      const CMatrix& w = set.interlayer[l];
      if (w.cols() != v.rows()) {
        throw DimensionError("cascade_response stage W" + std::to_string(l + 1) +
                             ": expected " + std::to_string(v.rows()) +
                             " columns, got " + std::to_string(w.cols()));
      }
      v = w * v;
    }
  }
  if (set.exit.cols() != v.rows()) {
    throw DimensionError("cascade_response stage Wout: expected " +
                         std::to_string(v.rows()) + " columns, got " +
                         std::to_string(set.exit.cols()));
  }
  return set.exit * v;
}

std::vector<Vec3> make_rx_grid(const SimStackConfig& config, int nx, int nz,
                               double pitch, double distance_behind) {
  if (nx < 1 || nz < 1) throw ConfigError("make_rx_grid: grid must be at least 1x1");
  if (distance_behind <= 0.0) {
    throw ConfigError("make_rx_grid: probes must sit strictly behind the stack");
  }
  const double y = config.stack_thickness + distance_behind;
  std::vector<Vec3> rx;
  rx.reserve(static_cast<std::size_t>(nx) * nz);
  for (int iz = 0; iz < nz; ++iz) {
    const double z = (iz - 0.5 * (nz - 1)) * pitch;
    for (int ix = 0; ix < nx; ++ix) {
      const double x = (ix - 0.5 * (nx - 1)) * pitch;
      rx.emplace_back(x, y, z);
    }
  }
  return rx;
}

std::vector<std::string> unknown_names(const PropagationSet& set,
                                       bool include_exit) {
  std::vector<std::string> names;
  names.reserve(set.interlayer.size() + 2);
  names.push_back("h");
  for (std::size_t l = 0; l < set.interlayer.size(); ++l) {
    names.push_back("W" + std::to_string(l + 1));
  }
  if (include_exit) names.push_back("Wout");
  return names;
}

}  // namespace simcal
