#include <doctest.h>

#include <cmath>
#include <complex>
#include <numbers>
#include <string>
#include <vector>

#include "simcal/errors.hpp"
#include "simcal/geometry.hpp"
#include "simcal/propagation.hpp"
#include "simcal/rng.hpp"

using namespace simcal;

namespace {

constexpr double kPi = std::numbers::pi;

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

double rel_err(Complex got, Complex want) {
  return std::abs(got - want) / std::abs(want);
}

}  // namespace

TEST_CASE("rs coefficient closed form at one wavelength") {
  const double lam = 0.01;
  const double area = 2.5e-5;
  const Complex w = rs_coefficient(Vec3(0, 0, 0), Vec3(0, lam, 0),
                                   Vec3::UnitY(), lam, area);
  // (A/lam)(1/(2 pi lam) - j/lam) e^{j 2 pi}, evaluated independently at
  // 30-digit precision and frozen.
  const Complex want(0.039788735772973834, -0.25);
  CHECK(rel_err(w, want) < 1e-12);
  // e^{j 2 pi d / lam} contributes no phase when d = lam.
  CHECK(std::arg(w) == doctest::Approx(std::arg(want)).epsilon(1e-9));
}

TEST_CASE("rs coefficient closed form off axis") {
  const double lam = 0.01;
  const double d = 3.7 * lam;
  // Direction (0.6, 0.8, 0) against a +y normal gives cos chi = 0.8.
  const Vec3 dst(0.6 * d, 0.8 * d, 0.0);
  const Complex w =
      rs_coefficient(Vec3(0, 0, 0), dst, Vec3::UnitY(), lam, 2.5e-5);
  const Complex want(-0.052126964097096297, 0.014492294133808241);
  CHECK(rel_err(w, want) < 1e-12);
}

TEST_CASE("rs coefficient vanishes in the source plane") {
  const Complex w = rs_coefficient(Vec3(0, 0, 0), Vec3(0.005, 0.0, 0.003),
                                   Vec3::UnitY(), 0.01, 2.5e-5);
  CHECK(w == Complex(0.0, 0.0));
  // Behind the source plane the clipped pattern is also exactly zero.
  const Complex back = rs_coefficient(Vec3(0, 0, 0), Vec3(0.0, -0.02, 0.0),
                                      Vec3::UnitY(), 0.01, 2.5e-5);
  CHECK(back == Complex(0.0, 0.0));
}

TEST_CASE("rs coefficient refuses sub-guard distances") {
  const double lam = 0.01;
  CHECK_THROWS_AS(rs_coefficient(Vec3(0, 0, 0), Vec3(0, lam / 101.0, 0),
                                 Vec3::UnitY(), lam, 2.5e-5),
                  SingularityError);
  CHECK_THROWS_AS(rs_coefficient(Vec3(0, 0, 0), Vec3(0, 0, 0), Vec3::UnitY(),
                                 lam, 2.5e-5),
                  SingularityError);
}

TEST_CASE("rs magnitude decreases with distance beyond lam/(2 pi)") {
  const double lam = 0.01;
  double d = lam / (2.0 * kPi);
  double prev = std::abs(rs_coefficient(Vec3(0, 0, 0), Vec3(0, d, 0),
                                        Vec3::UnitY(), lam, 2.5e-5));
  for (int i = 0; i < 40; ++i) {
    d *= 1.3;
    const double mag = std::abs(rs_coefficient(Vec3(0, 0, 0), Vec3(0, d, 0),
                                               Vec3::UnitY(), lam, 2.5e-5));
    CHECK(mag < prev);
    prev = mag;
  }
}

TEST_CASE("rs phase splits into prefactor phase plus 2 pi d / lam") {
  const double lam = 0.01;
  for (double d : {0.004, 0.0123, 0.7, 3.21}) {
    const Complex w = rs_coefficient(Vec3(0, 0, 0), Vec3(0, d, 0),
                                     Vec3::UnitY(), lam, 2.5e-5);
    const Complex prefactor(1.0 / (2.0 * kPi * d), -1.0 / lam);
    const double want = std::fmod(std::arg(prefactor) + 2.0 * kPi * d / lam,
                                  2.0 * kPi);
    double got = std::fmod(std::arg(w), 2.0 * kPi);
    double diff = std::fmod(got - want + 3.0 * 2.0 * kPi, 2.0 * kPi);
    if (diff > kPi) diff = 2.0 * kPi - diff;
    CHECK(diff < 1e-9);
  }
}

TEST_CASE("radar coefficient boresight closed form") {
  const double lam = 0.01;
  const Complex w =
      radar_coefficient(Vec3(0, 0, 0), Vec3(0, 10.0 * lam, 0), Vec3::UnitY(),
                        Vec3::UnitY(), lam, 2.5e-5);
  // sqrt(16 A / (4 pi d^2)) with d = 10 lam, frozen from an independent
  // evaluation; the phase term e^{j 20 pi} is unity.
  CHECK(w.real() == doctest::Approx(0.056418958354775629).epsilon(1e-12));
  CHECK(std::abs(w.imag()) < 1e-12);
}

TEST_CASE("radar coefficient off-boresight closed form") {
  const double lam = 0.01;
  const double d = 5.0 * lam;
  // u = +y; transmit normal at cos 0.6, receive normal at cos 0.9.
  const Vec3 n_src(0.8, 0.6, 0.0);
  const Vec3 n_dst(std::sqrt(0.19), 0.9, 0.0);
  const Complex w = radar_coefficient(Vec3(0, 0, 0), Vec3(0, d, 0), n_src,
                                      n_dst, lam, 2.5e-5);
  const Complex want(0.082918595873120515, 0.0);
  CHECK(std::abs(w - want) < 1e-12);
}

TEST_CASE("radar pattern null and 1/d amplitude law") {
  const double lam = 0.01;
  const Complex null = radar_coefficient(Vec3(0, 0, 0), Vec3(0, 0.05, 0),
                                         Vec3::UnitX(), Vec3::UnitY(), lam,
                                         2.5e-5);
  CHECK(null == Complex(0.0, 0.0));
  const double m1 = std::abs(radar_coefficient(
      Vec3(0, 0, 0), Vec3(0, 0.04, 0), Vec3::UnitY(), Vec3::UnitY(), lam, 2.5e-5));
  const double m2 = std::abs(radar_coefficient(
      Vec3(0, 0, 0), Vec3(0, 0.08, 0), Vec3::UnitY(), Vec3::UnitY(), lam, 2.5e-5));
  CHECK(m2 == doctest::Approx(0.5 * m1).epsilon(1e-12));
}

TEST_CASE("interlayer matrix reduces to the pair kernel at M=1") {
  const auto cfg = make_stack(2, 1, 0.01, 0.04);
  const auto layers = build_ideal_geometry(cfg);
  const CMatrix w =
      interlayer_matrix(layers[0], layers[1], PropagationModel::RayleighSommerfeld,
                        cfg.wavelength, cfg.atom_area);
  REQUIRE(w.rows() == 1);
  REQUIRE(w.cols() == 1);
  const Complex pair = rs_coefficient(Vec3(0, 0, 0), Vec3(0, 0.04, 0),
                                      Vec3::UnitY(), cfg.wavelength,
                                      cfg.atom_area);
  CHECK(w(0, 0) == pair);
}

TEST_CASE("interlayer matrix equals the entrywise brute-force loop") {
  const auto cfg = make_stack(2, 6, 0.0107068735, 0.0107068735);
  const auto layers = build_ideal_geometry(cfg);
  for (auto model :
       {PropagationModel::RayleighSommerfeld, PropagationModel::GeometricRadar}) {
    const CMatrix w = interlayer_matrix(layers[0], layers[1], model,
                                        cfg.wavelength, cfg.atom_area);
    REQUIRE(w.rows() == 36);
    REQUIRE(w.cols() == 36);
    for (int m = 0; m < 36; ++m) {
      for (int n = 0; n < 36; ++n) {
        const Vec3& src = layers[0].atom_positions[n];
        const Vec3& dst = layers[1].atom_positions[m];
        const Complex want =
            model == PropagationModel::RayleighSommerfeld
                ? rs_coefficient(src, dst, layers[0].normal, cfg.wavelength,
                                 cfg.atom_area)
                : radar_coefficient(src, dst, layers[0].normal, layers[1].normal,
                                    cfg.wavelength, cfg.atom_area);
        CHECK(w(m, n) == want);
      }
    }
  }
}

TEST_CASE("shrinking the gap raises the mean coupling magnitude") {
  const auto cfg = make_stack(2, 4, 0.0107068735, 0.0107068735 / 3.0);
  const auto ideal = build_ideal_geometry(cfg);
  ErrorState closer = ErrorState::zeros(2);
  closer.delta_spacing[1] = -0.1 * cfg.nominal_gap();
  const auto squeezed = apply_errors(ideal, closer);
  const CMatrix w0 =
      interlayer_matrix(ideal[0], ideal[1], PropagationModel::RayleighSommerfeld,
                        cfg.wavelength, cfg.atom_area);
  const CMatrix w1 = interlayer_matrix(squeezed[0], squeezed[1],
                                       PropagationModel::RayleighSommerfeld,
                                       cfg.wavelength, cfg.atom_area);
  CHECK(w1.cwiseAbs().mean() > w0.cwiseAbs().mean());
}

TEST_CASE("interlayer matrix refuses coincident or upstream planes") {
  const auto layers = build_ideal_geometry(make_stack(2, 2));
  CHECK_THROWS_AS(interlayer_matrix(layers[0], layers[0],
                                    PropagationModel::RayleighSommerfeld, 0.01,
                                    2.5e-5),
                  SingularityError);
  CHECK_THROWS_AS(interlayer_matrix(layers[1], layers[0],
                                    PropagationModel::RayleighSommerfeld, 0.01,
                                    2.5e-5),
                  SingularityError);
}

TEST_CASE("ue channel entry at 30 m on the axis") {
  const double lam = 0.0107068735;  // 28 GHz
  auto cfg = make_stack(2, 1, lam, 0.01);
  const auto layers = build_ideal_geometry(cfg);
  const CMatrix h = ue_channel(Vec3(0, -30, 0), layers[0], lam, cfg.atom_area);
  REQUIRE(h.rows() == 1);
  // (lam / (4 pi d)) sqrt(A) e^{j 2 pi d / lam} at d = 30 m, frozen from an
  // independent evaluation.
  const Complex want(1.4079535808220581e-7, -5.7389081130522786e-8);
  CHECK(rel_err(h(0, 0), want) < 1e-9);
  const double want_phase = std::fmod(5.8961389841055, 2.0 * kPi);
  double got = std::arg(h(0, 0));
  if (got < 0.0) got += 2.0 * kPi;
  CHECK(got == doctest::Approx(want_phase).epsilon(1e-6));
}

TEST_CASE("doubling the ue distance halves the magnitudes") {
  const double lam = 0.0107068735;
  auto cfg = make_stack(2, 6, lam, 0.01);
  const auto layers = build_ideal_geometry(cfg);
  const CMatrix near = ue_channel(Vec3(0, -30, 0), layers[0], lam, cfg.atom_area);
  const CMatrix far = ue_channel(Vec3(0, -60, 0), layers[0], lam, cfg.atom_area);
  for (int n = 0; n < near.rows(); ++n) {
    CHECK(std::abs(far(n, 0)) / std::abs(near(n, 0)) ==
          doctest::Approx(0.5).epsilon(1e-6));
    CHECK(std::isfinite(std::abs(near(n, 0))));
    CHECK(std::abs(near(n, 0)) > 0.0);
  }
}

TEST_CASE("ue channel requires the ue strictly in front") {
  const auto layers = build_ideal_geometry(make_stack(2, 2));
  CHECK_THROWS_AS(ue_channel(Vec3(0, 0, 0), layers[0], 0.01, 2.5e-5),
                  SingularityError);
}

TEST_CASE("exit matrix reduces to the pair kernel and permutes with rx order") {
  const auto cfg = make_stack(2, 1, 0.01, 0.01);
  const auto layers = build_ideal_geometry(cfg);
  const std::vector<Vec3> one{Vec3(0, 0.06, 0)};
  const CMatrix w = exit_matrix(layers[1], one, cfg.wavelength, cfg.atom_area);
  REQUIRE(w.rows() == 1);
  CHECK(w(0, 0) == rs_coefficient(Vec3(0, 0.01, 0), Vec3(0, 0.06, 0),
                                  Vec3::UnitY(), cfg.wavelength, cfg.atom_area));

  const auto cfg2 = make_stack(2, 3, 0.01, 0.01);
  const auto layers2 = build_ideal_geometry(cfg2);
  std::vector<Vec3> rx = make_rx_grid(cfg2, 2, 2, cfg2.wavelength / 2.0,
                                      5.0 * cfg2.wavelength);
  const CMatrix a = exit_matrix(layers2[1], rx, cfg2.wavelength, cfg2.atom_area);
  std::swap(rx[0], rx[3]);
  std::swap(rx[1], rx[2]);
  const CMatrix b = exit_matrix(layers2[1], rx, cfg2.wavelength, cfg2.atom_area);
  CHECK((a.row(0) - b.row(3)).norm() == 0.0);
  CHECK((a.row(1) - b.row(2)).norm() == 0.0);
  CHECK((a.row(2) - b.row(1)).norm() == 0.0);
  CHECK((a.row(3) - b.row(0)).norm() == 0.0);
}

TEST_CASE("exit matrix equals the brute-force pairwise loop") {
  const auto cfg = make_stack(2, 3, 0.01, 0.01);
  const auto layers = build_ideal_geometry(cfg);
  const std::vector<Vec3> rx = make_rx_grid(cfg, 2, 2, cfg.wavelength / 2.0,
                                            5.0 * cfg.wavelength);
  const CMatrix w = exit_matrix(layers[1], rx, cfg.wavelength, cfg.atom_area);
  for (int m = 0; m < 4; ++m) {
    for (int n = 0; n < 9; ++n) {
      CHECK(w(m, n) == rs_coefficient(layers[1].atom_positions[n], rx[m],
                                      layers[1].normal, cfg.wavelength,
                                      cfg.atom_area));
    }
  }
}

TEST_CASE("rx grid sits centered behind the stack") {
  const auto cfg = make_stack(4, 6, 0.0107068735, 0.01);
  const double pitch = cfg.wavelength / 2.0;
  const auto rx = make_rx_grid(cfg, 2, 2, pitch, 5.0 * cfg.wavelength);
  REQUIRE(rx.size() == 4);
  for (const Vec3& p : rx) {
    CHECK(p.y() == doctest::Approx(0.01 + 5.0 * cfg.wavelength).epsilon(1e-15));
    CHECK(std::abs(p.x()) == doctest::Approx(pitch / 2.0).epsilon(1e-12));
    CHECK(std::abs(p.z()) == doctest::Approx(pitch / 2.0).epsilon(1e-12));
  }
  CHECK_THROWS_AS(make_rx_grid(cfg, 0, 2, pitch, 0.01), ConfigError);
  CHECK_THROWS_AS(make_rx_grid(cfg, 2, 2, pitch, 0.0), ConfigError);
}

TEST_CASE("neutral cascade of scalar ones") {
  PropagationSet set;
  set.ue_channel = CMatrix::Ones(1, 1);
  set.interlayer = {CMatrix::Ones(1, 1)};
  set.exit = CMatrix::Ones(1, 1);
  PhaseConfig phases;
  phases.layer_phases = {Eigen::VectorXd::Zero(1), Eigen::VectorXd::Zero(1)};
  const CMatrix y = cascade_response(set, phases);
  CHECK(y(0, 0) == Complex(1.0, 0.0));
}

TEST_CASE("pi shift of one layer negates the response") {
  const auto cfg = make_stack(3, 2, 0.01, 0.02);
  const auto layers = build_ideal_geometry(cfg);
  SceneConfig scene;
  scene.ue_position = Vec3(0, -1.0, 0);
  scene.rx_positions = make_rx_grid(cfg, 2, 2, 0.005, 0.05);
  const PropagationSet set = build_propagation_set(cfg, scene, layers);
  Rng rng(5);
  PhaseConfig phases;
  for (int l = 0; l < 3; ++l) {
    Eigen::VectorXd t(4);
    for (int k = 0; k < 4; ++k) t(k) = rng.phase();
    phases.layer_phases.push_back(t);
  }
  const CMatrix y0 = cascade_response(set, phases);
  PhaseConfig shifted = phases;
  shifted.layer_phases[1].array() += kPi;
  const CMatrix y1 = cascade_response(set, shifted);
  CHECK((y1 + y0).norm() < 1e-12 * y0.norm());
}

TEST_CASE("cascade equals the explicit path sum") {
  const auto cfg = make_stack(2, 2, 0.01, 0.015);
  const auto layers = build_ideal_geometry(cfg);
  SceneConfig scene;
  scene.ue_position = Vec3(0.001, -0.8, -0.002);
  scene.rx_positions = make_rx_grid(cfg, 2, 2, 0.005, 0.04);
  const PropagationSet set = build_propagation_set(cfg, scene, layers);
  Rng rng(11);
  PhaseConfig phases;
  for (int l = 0; l < 2; ++l) {
    Eigen::VectorXd t(4);
    for (int k = 0; k < 4; ++k) t(k) = rng.phase();
    phases.layer_phases.push_back(t);
  }
  const CMatrix y = cascade_response(set, phases);
  // Independent path sum: every (rx, layer-2 atom, layer-1 atom) tuple.
  for (int r = 0; r < 4; ++r) {
    Complex sum(0.0, 0.0);
    for (int m = 0; m < 4; ++m) {
      for (int n = 0; n < 4; ++n) {
        sum += set.exit(r, m) * std::polar(1.0, phases.layer_phases[1](m)) *
               set.interlayer[0](m, n) *
               std::polar(1.0, phases.layer_phases[0](n)) * set.ue_channel(n, 0);
      }
    }
    CHECK(std::abs(y(r, 0) - sum) < 1e-12 * std::abs(sum));
  }
}

TEST_CASE("cascade is linear in the ue channel") {
  const auto cfg = make_stack(2, 2, 0.01, 0.015);
  const auto layers = build_ideal_geometry(cfg);
  SceneConfig scene;
  scene.ue_position = Vec3(0, -0.8, 0);
  scene.rx_positions = make_rx_grid(cfg, 2, 2, 0.005, 0.04);
  PropagationSet set = build_propagation_set(cfg, scene, layers);
  PhaseConfig phases;
  phases.layer_phases = {Eigen::VectorXd::Constant(4, 0.3),
                         Eigen::VectorXd::Constant(4, -1.1)};
  const CMatrix y0 = cascade_response(set, phases);
  const Complex alpha(0.37, -1.21);
  set.ue_channel *= alpha;
  const CMatrix y1 = cascade_response(set, phases);
  CHECK((y1 - alpha * y0).norm() < 1e-12 * y0.norm());
}

TEST_CASE("dimension mismatches name the offending stage") {
  PropagationSet set;
  set.ue_channel = CMatrix::Ones(4, 1);
  set.interlayer = {CMatrix::Ones(3, 4)};
  set.exit = CMatrix::Ones(2, 3);
  PhaseConfig phases;
  phases.layer_phases = {Eigen::VectorXd::Zero(4), Eigen::VectorXd::Zero(3)};
  CHECK_NOTHROW(cascade_response(set, phases));
  PhaseConfig bad = phases;
  bad.layer_phases[1] = Eigen::VectorXd::Zero(5);
  CHECK_THROWS_AS(cascade_response(set, bad), DimensionError);
  PropagationSet bad_exit = set;
  bad_exit.exit = CMatrix::Ones(2, 7);
  try {
    cascade_response(bad_exit, phases);
    FAIL("expected a dimension error");
  } catch (const DimensionError& e) {
    CHECK(std::string(e.what()).find("Wout") != std::string::npos);
  }
}

TEST_CASE("rs and radar magnitudes agree within 2x in the far field") {
  // Full-wavelength aperture: the far-field RS/radar magnitude ratio is
  // sqrt(pi A)/(2 lam), about 0.89 here, well inside the band.
  auto cfg = make_stack(2, 2, 0.01, 0.15);  // 15 wavelengths apart
  cfg.atom_pitch = cfg.wavelength;
  cfg.atom_area = cfg.wavelength * cfg.wavelength;
  const auto layers = build_ideal_geometry(cfg);
  const CMatrix rs = interlayer_matrix(layers[0], layers[1],
                                       PropagationModel::RayleighSommerfeld,
                                       cfg.wavelength, cfg.atom_area);
  const CMatrix radar = interlayer_matrix(layers[0], layers[1],
                                          PropagationModel::GeometricRadar,
                                          cfg.wavelength, cfg.atom_area);
  for (int m = 0; m < rs.rows(); ++m) {
    for (int n = 0; n < rs.cols(); ++n) {
      const double ratio = std::abs(rs(m, n)) / std::abs(radar(m, n));
      CHECK(ratio > 0.5);
      CHECK(ratio < 2.0);
    }
  }
}

TEST_CASE("unknown names follow the fixed order") {
  PropagationSet set;
  set.ue_channel = CMatrix::Ones(4, 1);
  set.interlayer = {CMatrix::Ones(4, 4), CMatrix::Ones(4, 4),
                    CMatrix::Ones(4, 4)};
  set.exit = CMatrix::Ones(4, 4);
  CHECK(unknown_names(set) ==
        std::vector<std::string>{"h", "W1", "W2", "W3"});
  CHECK(unknown_names(set, true) ==
        std::vector<std::string>{"h", "W1", "W2", "W3", "Wout"});
}
