#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <Eigen/Eigenvalues>

#include "fixtures.hpp"
#include "passivity/numerics.hpp"
#include "passivity/stability.hpp"
#include "state_space.hpp"
#include "test_util.hpp"

using namespace passivity;
using passivity::testing::kOmegaB;
using passivity::testing::single_gfl;
using passivity::testing::three_bus;
using passivity::testing::two_bus_rlc;
using passivity::testing::kGflRegion;

namespace {

std::vector<double> rad_grid(double fmin, double fmax, std::size_t n) {
  auto w = log_grid(fmin, fmax, n);
  for (auto& x : w) x *= 2.0 * kPi;
  return w;
}

MatrixFunction third_order(double k) {
  return [k](Complex s) {
    CMatrix m(1, 1);
    m(0, 0) = k / std::pow(s + 1.0, 3);
    return m;
  };
}

// Closed-loop eigenvalues of the single-GFL configuration from the time-domain model.
Eigen::VectorXcd state_space_modes(double scr, double kp) {
  auto p = gfl_default_parameters();
  p.set("K_p_pll", kp);
  const auto dev = passivity::testing::gfl_state_space(p, passivity::testing::single_gfl_operating_point());
  const double x = 1.0 / scr;
  const Eigen::MatrixXd a = passivity::testing::closed_loop_with_grid(dev, x / 6.0, x, kOmegaB);
  return Eigen::EigenSolver<Eigen::MatrixXd>(a).eigenvalues();
}

Complex smallest_modulus(const CMatrix& y) {
  const CVector v = general_eigen(y).values;
  Eigen::Index c = 0;
  for (Eigen::Index k = 1; k < v.size(); ++k)
    if (std::abs(v(k)) < std::abs(v(c))) c = k;
  return v(c);
}

}  // namespace

TEST_CASE("assignment matches brute force") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 10.0);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 1 + trial % 6;
    RMatrix cost(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) cost(i, j) = u(rng);
    std::vector<std::size_t> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    double best = std::numeric_limits<double>::infinity();
    do {
      double c = 0.0;
      for (int i = 0; i < n; ++i) c += cost(i, static_cast<Eigen::Index>(perm[static_cast<std::size_t>(i)]));
      best = std::min(best, c);
    } while (std::next_permutation(perm.begin(), perm.end()));
    const auto a = min_cost_assignment(cost);
    double got = 0.0;
    std::vector<bool> seen(static_cast<std::size_t>(n), false);
    for (int i = 0; i < n; ++i) {
      got += cost(i, static_cast<Eigen::Index>(a[static_cast<std::size_t>(i)]));
      seen[a[static_cast<std::size_t>(i)]] = true;
    }
    CHECK(std::all_of(seen.begin(), seen.end(), [](bool b) { return b; }));
    CHECK(got == doctest::Approx(best).epsilon(1e-12));
  }
}

TEST_CASE("loop gain structure") {
  SUBCASE("no devices gives zero") {
    Network n({"A"});
    n.add_shunt("A", make_thevenin(3.0, 6.0, kOmegaB));
    CHECK(loop_gain(n, Complex(0.0, 100.0)).isZero(0.0));
  }
  SUBCASE("single bus is Yg^-1 Yd") {
    auto net = single_gfl(3.0, 0.4);
    const Complex s(0.0, 2.0 * kPi * 40.0);
    const DqAdmittance yg = net.shunts()[0].model->admittance(s);
    const DqAdmittance yd = net.devices()[0].model->admittance(s);
    CHECK(passivity::testing::rel_diff(loop_gain(net, s), yg.inverse() * yd) <= 1e-13);
  }
  SUBCASE("3-bus matches the dense reference path") {
    auto net = three_bus();
    const Complex s(0.0, 2.0 * kPi * 40.0);
    const CMatrix ya = device_admittance(net, s);
    const CMatrix ynet = assemble_nodal_reference(net, s) - ya;
    const CMatrix ref = ynet.fullPivLu().inverse() * ya;
    CHECK(passivity::testing::rel_diff(loop_gain(net, s), ref) <= 1e-10);
  }
  SUBCASE("conjugate symmetry") {
    auto net = three_bus();
    for (double f : {0.5, 7.0, 40.0, 300.0, 2500.0}) {
      const double w = 2.0 * kPi * f;
      const CMatrix lp = loop_gain(net, Complex(0.0, w));
      const CMatrix ln = loop_gain(net, Complex(0.0, -w));
      CHECK(passivity::testing::rel_diff(ln, lp.conjugate()) <= 1e-12);
    }
  }
}

TEST_CASE("gnc on a scalar third-order loop") {
  const auto w = log_grid(0.01, 100.0, 60);
  const auto unstable = gnc_adaptive(third_order(10.0), w);
  CHECK(unstable.verdict.encirclements == 2);
  CHECK_FALSE(unstable.verdict.stable);
  const auto stable = gnc_adaptive(third_order(5.0), w);
  CHECK(stable.verdict.encirclements == 0);
  CHECK(stable.verdict.stable);
  double closest = 1e300;
  for (double lw = -2.0; lw <= 2.0; lw += 1e-5)
    closest = std::min(closest, std::abs(1.0 + 5.0 / std::pow(Complex(1.0, std::pow(10.0, lw)), 3)));
  CHECK(stable.verdict.min_distance >= closest * (1.0 - 1e-9));
  CHECK(stable.verdict.min_distance <= closest * 1.01);

  SUBCASE("coarse grid is rejected") {
    try {
      gnc(third_order(10.0), log_grid(0.01, 100.0, 5));
      FAIL("expected RefineGrid");
    } catch (const RefineGridError& e) {
      CHECK(e.code() == Errc::RefineGrid);
      CHECK(e.omega_hi() > e.omega_lo());
    }
  }
  SUBCASE("invalid grids") {
    CHECK_THROWS_AS(gnc(third_order(1.0), {1.0}), Error);
    CHECK_THROWS_AS(gnc(third_order(1.0), {2.0, 1.0}), Error);
    CHECK_THROWS_AS(gnc(third_order(1.0), {-1.0, 1.0}), Error);
  }
}

TEST_CASE("gnc loci are consistent tracks") {
  auto net = single_gfl(1.3, 0.66);
  const auto r = gnc_adaptive(net, rad_grid(0.1, 1e4, 400));
  REQUIRE(r.loci.tracks.size() == r.loci.omegas.size());
  for (std::size_t k = 0; k < r.loci.omegas.size(); k += 37) {
    const CVector direct = general_eigen(loop_gain(net, Complex(0.0, r.loci.omegas[k]))).values;
    // same multiset of eigenvalues, in track order
    for (Eigen::Index i = 0; i < direct.size(); ++i) {
      double best = 1e300;
      for (Eigen::Index j = 0; j < direct.size(); ++j) best = std::min(best, std::abs(r.loci.tracks[k](i) - direct(j)));
      CHECK(best <= 1e-12 * (1.0 + std::abs(direct(i))));
    }
  }
}

TEST_CASE("passive interconnection is stable") {
  Network n({"A"});
  n.add_shunt("A", make_thevenin(2.0, 5.0, kOmegaB));
  n.add_device("A", make_rl_branch(1.0, 0.5, kOmegaB), "load");
  const auto r = gnc_adaptive(n, rad_grid(0.1, 1e4, 200));
  CHECK(r.verdict.encirclements == 0);
  CHECK(r.verdict.stable);
}

TEST_CASE("gnc, mode scan and state-space agree on the single-GFL fixture") {
  struct Case {
    double scr, kp;
  };
  const std::vector<Case> cases{{3.0, 0.14}, {3.0, 0.4}, {3.0, 0.66}, {1.3, 0.14}, {1.3, 0.4},
                                {1.3, 0.66}, {1.3, 0.8}, {1.3, 1.0},  {1.2, 0.66}};
  for (const auto& c : cases) {
    CAPTURE(c.scr);
    CAPTURE(c.kp);
    auto net = single_gfl(c.scr, c.kp);
    const auto g = gnc_adaptive(net, rad_grid(0.1, 1e4, 400));
    const auto scan = scan_modes(net, kGflRegion, 10, 12);
    const auto ss = state_space_modes(c.scr, c.kp);
    const bool ss_unstable = ss.real().maxCoeff() > 0.0;
    CHECK(g.verdict.stable == !scan.unstable);
    CHECK(scan.unstable == ss_unstable);
    for (const auto& m : scan.modes) {
      CHECK(m.converged);
      double best = 1e300;
      for (Eigen::Index k = 0; k < ss.size(); ++k) best = std::min(best, std::abs(m.lambda - ss(k)));
      CHECK(best <= 1e-6 * std::max(std::abs(m.lambda), kOmegaB));
    }
  }
}

TEST_CASE("winding count is stable under grid refinement") {
  for (double kp : {0.4, 0.8}) {
    auto net = single_gfl(1.3, kp);
    const auto coarse = gnc_adaptive(net, rad_grid(0.1, 1e4, 400));
    const auto fine = gnc_adaptive(net, rad_grid(0.1, 1e4, 1600));
    CHECK(coarse.verdict.encirclements == fine.verdict.encirclements);
  }
}

TEST_CASE("3-bus mode scan") {
  auto net = three_bus();
  const Region region{-500.0, 50.0, 0.0, 2.0 * kPi * 500.0};
  const auto scan = scan_modes(net, region, 12, 16);
  const bool has_pair = std::any_of(scan.modes.begin(), scan.modes.end(),
                                    [](const ModeEstimate& m) { return m.lambda.imag() > 1.0; });
  CHECK(has_pair);
  for (const auto& m : scan.modes) {
    CHECK(region.contains(m.lambda));
    CHECK(std::abs(nodal_determinant(net, m.lambda)) <= 1e-8 * m.scale);
  }
  const auto g = gnc_adaptive(net, rad_grid(0.1, 1e4, 400));
  CHECK(g.verdict.stable == !scan.unstable);
}

TEST_CASE("refine_root basics") {
  const ScalarFunction quad = [](Complex s) { return (s - 3.0) * (s + 2.0); };
  SUBCASE("exact seed") {
    const auto m = refine_root(quad, Complex(3.0), kOmegaB);
    CHECK(m.converged);
    CHECK(m.iterations <= 2);
    CHECK(m.lambda == Complex(3.0));
  }
  SUBCASE("converges from nearby") {
    const auto m = refine_root(quad, Complex(2.0, 0.5), 1.0);
    CHECK(std::abs(m.lambda - 3.0) <= 1e-9 * 3.0);
  }
  SUBCASE("no convergence carries the last iterate") {
    try {
      refine_root([](Complex) { return Complex(1.0); }, Complex(1.0), 1.0);
      FAIL("expected NoConvergence");
    } catch (const NoConvergenceError& e) {
      CHECK(e.code() == Errc::NoConvergence);
      CHECK(e.partial().size() == 1);
    }
  }
  SUBCASE("region") {
    const Region r{-100.0, 100.0, -100.0, 100.0};
    try {
      refine_root([](Complex s) { return s - 1000.0; }, Complex(0.0), 1.0, r);
      FAIL("expected OutOfRegion");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::OutOfRegion);
    }
    CHECK_THROWS_AS(refine_root(quad, Complex(500.0), 1.0, r), Error);
  }
  SUBCASE("non-finite values") {
    try {
      refine_root([](Complex) { return Complex(std::nan(""), 0.0); }, Complex(1.0), 1.0);
      FAIL("expected NonFinite");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::NonFinite);
    }
  }
}

TEST_CASE("1-bus RL + C modes and xi") {
  const double r = 0.05, x = 0.2, b = 0.5;
  Network net({"A"});
  net.add_shunt("A", make_rl_branch(r, x, kOmegaB));
  net.add_shunt("A", make_shunt_c(b, kOmegaB));

  // Per eigen-branch sigma = +-j: X B q^2 + R B q + 1 = 0 with q = s / omega_b + sigma.
  const Complex disc = std::sqrt(Complex(r * r * b * b - 4.0 * x * b));
  std::vector<Complex> roots;
  for (Complex q : {(-r * b + disc) / (2.0 * x * b), (-r * b - disc) / (2.0 * x * b)})
    for (Complex sigma : {kJ, -kJ}) roots.push_back(kOmegaB * (q - sigma));

  for (const Complex& s : roots) {
    CAPTURE(s);
    const auto m = refine_mode(net, s * Complex(1.0 + 1e-3, 1e-3));
    CHECK(m.converged);
    CHECK(std::abs(m.lambda - s) <= 1e-8 * std::abs(s));

    const auto again = refine_mode(net, m.lambda);
    CHECK(again.iterations <= 2);

    // Y^n = a I + b J, so xi = -a / (a a' + b b').
    const Complex l = m.lambda;
    const Complex p = r + l * x / kOmegaB;
    const Complex den = p * p + x * x;
    const Complex a = p / den + l * b / kOmegaB;
    const Complex bb = -x / den + b;
    const Complex da = (x / kOmegaB) * (x * x - p * p) / (den * den) + b / kOmegaB;
    const Complex db = 2.0 * x * p * (x / kOmegaB) / (den * den);
    const Complex expected = -a / (a * da + bb * db);
    const Complex xi = xi_coefficient(net, l);
    CHECK(std::abs(xi - expected) <= 1e-6 * std::abs(expected));
  }
}

TEST_CASE("xi scales inversely with the admittance") {
  auto net = two_bus_rlc();
  const auto m = refine_mode(net, Complex(-20.0, 800.0));
  const MatrixFunction base = [&](Complex s) { return assemble_nodal(net, s).matrix; };
  const Complex xi = xi_coefficient(base, m.lambda, kOmegaB);
  for (double c : {0.5, 3.0, 40.0}) {
    const MatrixFunction scaled = [&](Complex s) { return CMatrix(c * base(s)); };
    CHECK(std::abs(xi_coefficient(scaled, m.lambda, kOmegaB) - xi / c) <= 1e-6 * std::abs(xi / c));
  }
}

TEST_CASE("xi rejects a vanishing determinant derivative") {
  const MatrixFunction singular = [](Complex) {
    CMatrix m = CMatrix::Zero(2, 2);
    m(1, 1) = 1.0;
    return m;
  };
  try {
    xi_coefficient(singular, Complex(0.0, 10.0), kOmegaB);
    FAIL("expected ZeroDenominator");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::ZeroDenominator);
  }
}

TEST_CASE("xi-corrected mode sensitivity matches re-solving") {
  auto net = two_bus_rlc();
  const auto scan = scan_modes(net, Region{-2000.0, 100.0, 0.0, 2.0 * kPi * 1000.0}, 10, 12);
  REQUIRE_FALSE(scan.modes.empty());
  const auto mode = *std::max_element(scan.modes.begin(), scan.modes.end(), [](const auto& a, const auto& b) {
    return a.lambda.imag() < b.lambda.imag();
  });
  REQUIRE(mode.lambda.imag() > 1.0);
  const CMatrix sens = mode_sensitivity(net, mode.lambda);
  const double delta = 1e-4;
  for (auto [i, j] : {std::pair<int, int>{0, 0}, {1, 1}, {0, 2}, {3, 1}}) {
    CAPTURE(i);
    CAPTURE(j);
    const ScalarFunction perturbed = [&, i = i, j = j](Complex s) {
      CMatrix y = assemble_nodal(net, s).matrix;
      y(i, j) += delta;
      return determinant(y);
    };
    const auto moved = refine_root(perturbed, mode.lambda, kOmegaB);
    const Complex fd = (moved.lambda - mode.lambda) / delta;
    CHECK(std::abs(fd - sens(i, j)) <= 0.01 * std::abs(sens(i, j)));
  }
}

TEST_CASE("fd_pf") {
  SUBCASE("diagonal matrix") {
    CMatrix y = CMatrix::Zero(4, 4);
    y.diagonal() << 3.0, Complex(0.1, 0.2), 5.0, Complex(2.0, -1.0);
    const auto pf = fd_pf(y, Complex(0.0, 1.0));
    CHECK(pf.critical == Complex(0.1, 0.2));
    CHECK_FALSE(pf.tie);
    CMatrix expect = CMatrix::Zero(4, 4);
    expect(1, 1) = 1.0;
    CHECK((pf.matrix - expect).norm() <= 1e-12);
    CHECK(std::abs(pf.bus(0) - 1.0) <= 1e-12);
    CHECK(std::abs(pf.bus(1)) <= 1e-12);
  }
  SUBCASE("ties are reported") {
    CMatrix y = CMatrix::Zero(4, 4);
    y.diagonal() << 1.0, -1.0, 3.0, 4.0;
    CHECK(fd_pf(y, Complex(0.0)).tie);
  }
  SUBCASE("trace identity and entry derivative") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 20; ++trial) {
      const CMatrix y = passivity::testing::random_complex(rng, 6, 6);
      const auto pf = fd_pf(y, Complex(0.0));
      CHECK(std::abs(pf.matrix.trace() - 1.0) <= 1e-8);
      CHECK(std::abs(pf.bus.sum() - 1.0) <= 1e-8);
      const double h = 1e-7;
      for (auto [i, j] : {std::pair<int, int>{0, 0}, {2, 5}, {4, 1}}) {
        CMatrix yp = y;
        yp(i, j) += h;
        const Complex fd = (smallest_modulus(yp) - pf.critical) / h;
        CHECK(std::abs(fd - pf.matrix(i, j)) <= 1e-4 * std::max(1.0, std::abs(pf.matrix(i, j))));
      }
    }
  }
  SUBCASE("symmetric 2-bus network") {
    Network n({"A", "B"});
    n.add_branch("A", "B", make_rl_branch(0.05, 0.3, kOmegaB));
    n.add_shunt("A", make_rl_branch(0.2, 0.4, kOmegaB));
    n.add_shunt("B", make_rl_branch(0.2, 0.4, kOmegaB));
    for (double f : {5.0, 40.0, 400.0}) {
      const auto pf = fd_pf(n, Complex(0.0, 2.0 * kPi * f));
      CHECK(std::abs(pf.bus(0) - pf.bus(1)) <= 1e-9);
      CHECK(std::abs(pf.bus.sum() - 1.0) <= 1e-8);
    }
  }
  SUBCASE("3-bus network") {
    const auto pf = fd_pf(three_bus(), Complex(0.0, 2.0 * kPi * 40.0));
    CHECK(pf.bus.size() == 3);
    CHECK(std::abs(pf.bus.sum() - 1.0) <= 1e-8);
  }
  SUBCASE("defective matrix") {
    CMatrix y(2, 2);
    y << 0.5, 1.0, 0.0, 0.5;
    try {
      fd_pf(y, Complex(0.0));
      FAIL("expected Defective");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::Defective);
    }
  }
}
