#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "simcal/errors.hpp"
#include "simcal/geometry.hpp"
#include "simcal/rng.hpp"

using namespace simcal;

namespace {

SimStackConfig make_stack(int layers, int side, double wavelength = 0.01,
                          double thickness = 0.01) {
  SimStackConfig c;
  c.num_layers = layers;
  c.atoms_per_side = side;
  c.wavelength = wavelength;
  c.atom_pitch = wavelength / 2.0;
  c.stack_thickness = thickness;
  c.atom_area = c.atom_pitch * c.atom_pitch;
  return c;
}

}  // namespace

TEST_CASE("degenerate stack: two single atoms on the axis") {
  const auto layers = build_ideal_geometry(make_stack(2, 1));
  REQUIRE(layers.size() == 2);
  REQUIRE(layers[0].atom_positions.size() == 1);
  CHECK(layers[0].atom_positions[0].norm() == 0.0);
  CHECK((layers[1].atom_positions[0] - Vec3(0.0, 0.01, 0.0)).norm() == 0.0);
  CHECK(layers[0].layer_index == 1);
  CHECK(layers[1].layer_index == 2);
}

TEST_CASE("nominal gap is thickness over (L-1)") {
  const auto cfg = make_stack(4, 6);
  CHECK(cfg.nominal_gap() == doctest::Approx(0.01 / 3.0).epsilon(1e-15));
  const auto layers = build_ideal_geometry(cfg);
  for (int l = 0; l < 4; ++l) {
    CHECK(layers[l].plane_coordinate() ==
          doctest::Approx(l * 0.01 / 3.0).epsilon(1e-15));
  }
}

TEST_CASE("odd grid is centered: coordinates -p, 0, +p") {
  const auto cfg = make_stack(2, 3);
  const double p = cfg.atom_pitch;
  const auto layers = build_ideal_geometry(cfg);
  std::vector<double> xs, zs;
  for (const Vec3& a : layers[0].atom_positions) {
    xs.push_back(a.x());
    zs.push_back(a.z());
    CHECK(a.y() == 0.0);
  }
  std::sort(xs.begin(), xs.end());
  std::sort(zs.begin(), zs.end());
  // Row-major over (z, x): each in-plane coordinate appears three times.
  const std::vector<double> want = {-p, -p, -p, 0, 0, 0, p, p, p};
  for (int i = 0; i < 9; ++i) {
    CHECK(xs[i] == doctest::Approx(want[i]).epsilon(1e-15));
    CHECK(zs[i] == doctest::Approx(want[i]).epsilon(1e-15));
  }
  CHECK(layers[0].centroid().norm() < 1e-15);
  CHECK(layers[1].centroid().x() == doctest::Approx(0.0));
  CHECK(layers[1].centroid().z() == doctest::Approx(0.0));
}

TEST_CASE("even grid has no center atom but stays centered") {
  const auto layers = build_ideal_geometry(make_stack(2, 2));
  CHECK(layers[0].centroid().norm() < 1e-15);
  for (const Vec3& a : layers[0].atom_positions) {
    CHECK(std::abs(a.x()) == doctest::Approx(0.0025).epsilon(1e-12));
    CHECK(std::abs(a.z()) == doctest::Approx(0.0025).epsilon(1e-12));
  }
}

TEST_CASE("config validation names the violated bound") {
  auto bad = make_stack(1, 2);
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = make_stack(2, 0);
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = make_stack(2, 2);
  bad.wavelength = 0.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = make_stack(2, 2);
  bad.stack_thickness = -1.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  CHECK_NOTHROW(make_stack(2, 2).validate());
}

TEST_CASE("zero bounds sample to the all-zeros state") {
  const ErrorState e = sample_errors(4, ErrorBounds{}, 7);
  CHECK(e.is_zero());
  CHECK(e.num_layers() == 4);
}

TEST_CASE("error sampling is deterministic in the seed") {
  const ErrorBounds b{1e-5, 1e-4, 1e-3};
  const ErrorState a = sample_errors(4, b, 42);
  const ErrorState c = sample_errors(4, b, 42);
  CHECK(a.delta_spacing == c.delta_spacing);
  CHECK(a.delta_vertical == c.delta_vertical);
  CHECK(a.delta_rotation == c.delta_rotation);
  const ErrorState d = sample_errors(4, b, 43);
  CHECK(a.delta_vertical != d.delta_vertical);
}

TEST_CASE("layer 1 never carries a spacing deviation") {
  const ErrorBounds b{1e-3, 1e-3, 1e-3};
  for (std::uint64_t seed = 0; seed < 16; ++seed) {
    CHECK(sample_errors(3, b, seed).delta_spacing[0] == 0.0);
  }
}

TEST_CASE("vertical offsets are uniform on the bound interval") {
  const double bound = 0.01 * 0.0107068735;  // 1% of the 28 GHz wavelength
  const ErrorBounds b{0.0, bound, 0.0};
  const int n = 100000;
  double sum = 0.0, max_abs = 0.0;
  for (int i = 0; i < n; ++i) {
    const ErrorState e = sample_errors(2, b, 1000 + i);
    const double v = e.delta_vertical[1];
    sum += v;
    max_abs = std::max(max_abs, std::abs(v));
    CHECK(std::abs(e.delta_vertical[0]) <= bound);
  }
  // U(-b, b): sd = b/sqrt(3), standard error of the mean = sd/sqrt(n).
  const double se = bound / std::sqrt(3.0) / std::sqrt(double(n));
  CHECK(std::abs(sum / n) <= 3.0 * se);
  CHECK(max_abs <= bound);
  CHECK(max_abs > 0.9 * bound);  // the draw actually reaches the edges
}

TEST_CASE("sampled states stay inside the bounds box") {
  const ErrorBounds b{2e-6, 3e-5, 4e-4};
  for (std::uint64_t seed = 0; seed < 64; ++seed) {
    const ErrorState e = sample_errors(4, b, seed);
    for (int l = 0; l < 4; ++l) {
      CHECK(std::abs(e.delta_spacing[l]) <= b.spacing);
      CHECK(std::abs(e.delta_vertical[l]) <= b.vertical);
      CHECK(std::abs(e.delta_rotation[l]) <= b.rotation);
    }
  }
}

TEST_CASE("zero error state is the exact identity") {
  const auto ideal = build_ideal_geometry(make_stack(3, 4));
  const auto moved = apply_errors(ideal, ErrorState::zeros(3));
  for (int l = 0; l < 3; ++l) {
    for (std::size_t n = 0; n < ideal[l].atom_positions.size(); ++n) {
      CHECK((moved[l].atom_positions[n] - ideal[l].atom_positions[n]).norm() ==
            0.0);
    }
  }
}

TEST_CASE("vertical offset moves exactly one layer along z") {
  const auto ideal = build_ideal_geometry(make_stack(3, 3));
  ErrorState e = ErrorState::zeros(3);
  e.delta_vertical[1] = 1e-3;  // layer 2
  const auto moved = apply_errors(ideal, e);
  for (std::size_t n = 0; n < ideal[1].atom_positions.size(); ++n) {
    const Vec3& a = ideal[1].atom_positions[n];
    const Vec3& bpos = moved[1].atom_positions[n];
    CHECK(bpos.x() == a.x());
    CHECK(bpos.y() == a.y());
    CHECK(bpos.z() == a.z() + 1e-3);
  }
  for (int l : {0, 2}) {
    for (std::size_t n = 0; n < ideal[l].atom_positions.size(); ++n) {
      CHECK((moved[l].atom_positions[n] - ideal[l].atom_positions[n]).norm() ==
            0.0);
    }
  }
}

TEST_CASE("quarter-turn of a square grid permutes the atom positions") {
  const auto ideal = build_ideal_geometry(make_stack(2, 3));
  ErrorState e = ErrorState::zeros(2);
  e.delta_rotation[1] = std::numbers::pi / 2.0;
  const auto moved = apply_errors(ideal, e);
  // Greedy nearest matching suffices: the rotated multiset must coincide.
  std::vector<Vec3> pool = ideal[1].atom_positions;
  for (const Vec3& a : moved[1].atom_positions) {
    auto best = pool.begin();
    double best_d = (a - *best).norm();
    for (auto it = pool.begin(); it != pool.end(); ++it) {
      const double d = (a - *it).norm();
      if (d < best_d) {
        best = it;
        best_d = d;
      }
    }
    CHECK(best_d < 1e-12);
    pool.erase(best);
  }
  CHECK(pool.empty());
}

TEST_CASE("spacing deviations accumulate along the stack") {
  const auto cfg = make_stack(4, 2);
  const auto ideal = build_ideal_geometry(cfg);
  ErrorState e = ErrorState::zeros(4);
  e.delta_spacing[1] = 2e-4;
  e.delta_spacing[2] = -1e-4;
  e.delta_spacing[3] = 5e-5;
  const auto moved = apply_errors(ideal, e, SpacingModel::Cumulative);
  double prefix = 0.0;
  for (int l = 0; l < 4; ++l) {
    prefix += e.delta_spacing[l];
    CHECK(moved[l].plane_coordinate() ==
          doctest::Approx(ideal[l].plane_coordinate() + prefix).epsilon(1e-12));
  }
}

TEST_CASE("per-gap model shifts only the named layer") {
  const auto cfg = make_stack(4, 2);
  const auto ideal = build_ideal_geometry(cfg);
  ErrorState e = ErrorState::zeros(4);
  e.delta_spacing[1] = 2e-4;
  const auto moved = apply_errors(ideal, e, SpacingModel::PerGap);
  CHECK(moved[0].plane_coordinate() == ideal[0].plane_coordinate());
  CHECK(moved[1].plane_coordinate() ==
        doctest::Approx(ideal[1].plane_coordinate() + 2e-4).epsilon(1e-12));
  CHECK(moved[2].plane_coordinate() == ideal[2].plane_coordinate());
  CHECK(moved[3].plane_coordinate() == ideal[3].plane_coordinate());
}

TEST_CASE("rotation preserves centroid and intra-layer distances") {
  const auto ideal = build_ideal_geometry(make_stack(2, 4));
  ErrorState e = ErrorState::zeros(2);
  e.delta_rotation[1] = 0.3;
  const auto moved = apply_errors(ideal, e);
  CHECK((moved[1].centroid() - ideal[1].centroid()).norm() < 1e-12);
  const auto& a = ideal[1].atom_positions;
  const auto& b = moved[1].atom_positions;
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = i + 1; j < a.size(); ++j) {
      CHECK(std::abs((a[i] - a[j]).norm() - (b[i] - b[j]).norm()) < 1e-12);
    }
  }
}

TEST_CASE("mismatched error state raises a dimension error") {
  const auto ideal = build_ideal_geometry(make_stack(3, 2));
  CHECK_THROWS_AS(apply_errors(ideal, ErrorState::zeros(2)), DimensionError);
}
