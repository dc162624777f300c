#include <doctest.h>

#include <cmath>
#include <random>

#include <unsupported/Eigen/KroneckerProduct>

#include "fixtures.hpp"
#include "passivity/network.hpp"
#include "test_util.hpp"

using namespace passivity;
using passivity::testing::kOmegaB;
using passivity::testing::three_bus;

namespace {

// Explicit 2x2-block model for arbitrary admittance data.
class ConstantModel final : public DeviceModel {
 public:
  explicit ConstantModel(DqAdmittance y) : y_(std::move(y)) {}
  std::string kind() const override { return "constant"; }
  DqAdmittance admittance(Complex) const override { return y_; }
  const ParameterSet& parameters() const override { return p_; }
  ModelPtr with_parameter(std::string_view, double) const override {
    throw Error(Errc::UnknownParameter, "constant");
  }

 private:
  DqAdmittance y_;
  ParameterSet p_;
};

ModelPtr constant(const DqAdmittance& y) { return std::make_shared<ConstantModel>(y); }

std::vector<std::string> bus_names(std::size_t n) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back("N" + std::to_string(i + 1));
  return out;
}

Eigen::Matrix2cd block(const CMatrix& m, std::size_t i, std::size_t j) {
  return m.block<2, 2>(2 * static_cast<Eigen::Index>(i), 2 * static_cast<Eigen::Index>(j));
}

// Least-squares slope of log(err) against log(size).
double loglog_slope(const std::vector<double>& size, const std::vector<double>& err) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = static_cast<double>(size.size());
  for (std::size_t k = 0; k < size.size(); ++k) {
    const double x = std::log(size[k]), y = std::log(err[k]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace

TEST_CASE("incidence structure") {
  Network two(bus_names(2));
  two.add_branch("N1", "N2", make_rl_branch(0.1, 0.5, kOmegaB));
  RMatrix expect(2, 4);
  expect << 1, 0, -1, 0, 0, 1, 0, -1;
  CHECK(incidence(two) == expect);

  const Network tri = three_bus();
  const RMatrix inc = incidence(tri);
  CHECK(inc.rows() == 6);
  CHECK(inc.cols() == 6);
  Eigen::Matrix3d lap;
  lap << 2, -1, -1, -1, 2, -1, -1, -1, 2;
  const RMatrix kron = Eigen::kroneckerProduct(lap, Eigen::Matrix2d::Identity()).eval();
  CHECK(inc.transpose() * inc == kron);
}

TEST_CASE("network validation") {
  CHECK_THROWS_AS(Network({}), Error);
  CHECK_THROWS_AS(Network({"A", "A"}), Error);
  Network net(bus_names(2));
  const auto rl = make_rl_branch(0.1, 0.5, kOmegaB);
  auto code_of = [](auto fn) {
    try {
      fn();
    } catch (const Error& e) {
      return e.code();
    }
    return Errc::Io;
  };
  CHECK(code_of([&] { net.add_branch("N1", "X", rl); }) == Errc::UnknownBus);
  CHECK(code_of([&] { net.add_branch("N1", "N1", rl); }) == Errc::Validation);
  net.add_device("N1", rl, "dev");
  CHECK(code_of([&] { net.add_device("N2", rl, "dev"); }) == Errc::Validation);
  CHECK(code_of([&] { net.find("nothing"); }) == Errc::UnknownComponent);
  net.add_shunt("N2", rl);
  net.add_shunt("N2", rl);
  net.add_branch("N2", "N1", rl);
  CHECK(net.component_names() == std::vector<std::string>{"N2-N1#1", "sh@N2", "sh@N2#2", "dev"});
}

TEST_CASE("assembly examples") {
  const Complex s(0.0, 2 * kPi * 13.0);
  const auto rl = make_rl_branch(0.086, 0.69, kOmegaB);
  const DqAdmittance y = rl->admittance(s);
  Network two(bus_names(2));
  two.add_branch("N1", "N2", rl);
  const CMatrix yn = assemble_nodal(two, s).matrix;
  CHECK(block(yn, 0, 0) == y);
  CHECK(block(yn, 1, 1) == y);
  CHECK(block(yn, 0, 1) == DqAdmittance(-y));
  CHECK(block(yn, 1, 0) == DqAdmittance(-y));

  const Network tri = three_bus(0.66, 0.0);
  const CMatrix net_only = network_admittance(tri, s);
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 3; ++j) {
      const DqAdmittance expect = i == j ? DqAdmittance(2.0 * y) : DqAdmittance(-y);
      CHECK((block(net_only, i, j) - expect).norm() <= 1e-15 * y.norm());
    }
  }

  Network with_shunt = tri;
  const auto sh = make_shunt_c(0.05, kOmegaB);
  with_shunt.add_shunt("B1", sh);
  const CMatrix diff = network_admittance(with_shunt, s) - net_only;
  CHECK((block(diff, 0, 0) - sh->admittance(s)).norm() <= 1e-15);
  CHECK((diff.norm() - block(diff, 0, 0).norm()) <= 1e-15);
}

TEST_CASE("fuzzed topologies follow the block pattern") {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng() % 6;
    const std::size_t nb = n == 1 ? 0 : rng() % 9;
    Network net(bus_names(n));
    std::vector<DqAdmittance> yb, yc(n, DqAdmittance::Zero()), ya(n, DqAdmittance::Zero());
    std::vector<std::pair<std::size_t, std::size_t>> ends;
    for (std::size_t k = 0; k < nb; ++k) {
      const std::size_t i = rng() % n;
      std::size_t j = rng() % (n - 1);
      if (j >= i) ++j;
      const DqAdmittance y = testing::random_dq(rng);
      net.add_branch("N" + std::to_string(i + 1), "N" + std::to_string(j + 1), constant(y));
      yb.push_back(y);
      ends.emplace_back(i, j);
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (rng() % 2) {
        yc[i] = testing::random_dq(rng);
        net.add_shunt("N" + std::to_string(i + 1), constant(yc[i]));
      }
      if (rng() % 2) {
        ya[i] = testing::random_dq(rng);
        net.add_device("N" + std::to_string(i + 1), constant(ya[i]), "d" + std::to_string(i));
      }
    }
    const CMatrix yn = assemble_nodal(net, Complex(0.0, 1.0)).matrix;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        DqAdmittance expect = DqAdmittance::Zero();
        if (i == j) expect = yc[i] + ya[i];
        for (std::size_t k = 0; k < nb; ++k) {
          const auto [a, b] = ends[k];
          if (i == j && (a == i || b == i)) expect += yb[k];
          if (i != j && ((a == i && b == j) || (a == j && b == i))) expect -= yb[k];
        }
        CHECK((block(yn, i, j) - expect).norm() <= 1e-13 * std::max(1.0, expect.norm()));
      }
    }
    const CMatrix ref = assemble_nodal_reference(net, Complex(0.0, 1.0));
    CHECK((yn - ref).norm() <= 1e-13 * std::max(1.0, ref.norm()));
  }
}

TEST_CASE("passive networks have non-negative index") {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.01, 1.0);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t n = 1 + rng() % 6;
    Network net(bus_names(n));
    for (std::size_t k = 0; k < (n == 1 ? 0 : rng() % 9); ++k) {
      const std::size_t i = rng() % n;
      std::size_t j = rng() % (n - 1);
      if (j >= i) ++j;
      net.add_branch("N" + std::to_string(i + 1), "N" + std::to_string(j + 1), make_rl_branch(u(rng), u(rng), kOmegaB));
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (rng() % 2) net.add_shunt("N" + std::to_string(i + 1), make_shunt_c(u(rng), kOmegaB));
      if (rng() % 2) net.add_shunt("N" + std::to_string(i + 1), make_rl_branch(u(rng), u(rng), kOmegaB));
    }
    for (double f : log_grid(0.1, 1e4, 40)) CHECK(nodal_passivity(net, 2 * kPi * f).index >= -1e-12);
  }
}

TEST_CASE("single-bus reduction") {
  const auto gfl = make_gfl({}, OperatingPoint::from_terminal(0.7, 0.2, 1.0, kOmegaB));
  Network net({"PCC"});
  net.add_device("PCC", gfl, "GFL");
  for (double f : {5.0, 40.0, 700.0}) {
    const double w = 2 * kPi * f;
    const Complex s(0.0, w);
    const auto pt = nodal_passivity(net, w);
    CHECK(pt.index == doctest::Approx(passivity_index(gfl->admittance(s))).epsilon(1e-12));
    const DqAdmittance dy = param_derivative(*gfl, "K_p_pll", s);
    const auto dev = param_passivity_sensitivity(*gfl, "K_p_pll", {w});
    const auto sys = nodal_sensitivity_shunt(net, w, "PCC", dy);
    REQUIRE(sys.has_value());
    CHECK(*sys == doctest::Approx(*dev.points[0].derivative).epsilon(1e-10));
    CHECK(*participation(net, w, "GFL") == doctest::Approx(pt.index).epsilon(1e-10));
  }
}

TEST_CASE("block-local sensitivities agree with dense directions") {
  std::mt19937_64 rng(99);
  const Network net = three_bus();
  for (double f : {3.0, 40.0, 250.0}) {
    const double w = 2 * kPi * f;
    const auto pt = nodal_passivity(net, w);
    const Eigen::VectorXcd phi = pt.min_vector;
    for (int rep = 0; rep < 5; ++rep) {
      const DqAdmittance dy = testing::random_dq(rng);
      for (std::size_t bus = 0; bus < 3; ++bus) {
        const double dense = (phi.adjoint() * shunt_direction(3, bus, dy) * phi)(0, 0).real();
        CHECK(std::abs(*nodal_sensitivity_shunt(pt, bus, dy) - dense) <= 1e-12);
      }
      for (std::size_t k = 0; k < net.branches().size(); ++k) {
        const auto& b = net.branches()[k];
        const double dense = (phi.adjoint() * branch_direction(net, k, dy) * phi)(0, 0).real();
        CHECK(std::abs(*nodal_sensitivity_branch(pt, b.from, b.to, dy) - dense) <= 1e-12);
        // Block expansion equals the incidence sandwich entrywise.
        CMatrix expanded = CMatrix::Zero(6, 6);
        const DqAdmittance dh = hermitian_part(dy);
        const auto i = 2 * static_cast<Eigen::Index>(b.from), j = 2 * static_cast<Eigen::Index>(b.to);
        expanded.block<2, 2>(i, i) += dh;
        expanded.block<2, 2>(j, j) += dh;
        expanded.block<2, 2>(i, j) -= dh;
        expanded.block<2, 2>(j, i) -= dh;
        CHECK((expanded - branch_direction(net, k, dy)).norm() <= 1e-15 * dh.norm());
      }
    }
    CHECK(*nodal_sensitivity_shunt(pt, 1, DqAdmittance::Zero()) == 0.0);
    CHECK(*nodal_sensitivity_branch(pt, 0, 2, DqAdmittance::Zero()) == 0.0);
  }
}

TEST_CASE("two-bus branch sensitivity closed form") {
  Network net(bus_names(2));
  const auto rl = make_rl_branch(0.05, 0.3, kOmegaB);
  net.add_branch("N1", "N2", rl);
  net.add_shunt("N1", make_rl_branch(2.0, 0.1, kOmegaB));
  net.add_shunt("N2", make_rl_branch(2.0, 0.1, kOmegaB));
  std::mt19937_64 rng(3);
  const double w = 2 * kPi * 20;
  const auto pt = nodal_passivity(net, w);
  const DqAdmittance dy = testing::random_dq(rng);
  const Eigen::Vector2cd diff = pt.min_vector.segment<2>(0) - pt.min_vector.segment<2>(2);
  const double expect = (diff.adjoint() * hermitian_part(dy) * diff)(0, 0).real();
  CHECK(*nodal_sensitivity_branch(net, w, 0, dy) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("first-order error is quadratic in perturbation size") {
  const Network net = three_bus();
  for (const auto* name : {"GFM-1", "GFL-1", "B1-B3#2", "sh@B2"}) {
    for (double f : {10.0, 40.0, 400.0}) {
      const double w = 2 * kPi * f;
      const double base = nodal_passivity(net, w).index;
      const double d = *participation(net, w, name);
      std::vector<double> eps = {1e-2, 1e-3, 1e-4}, err;
      for (double e : eps) {
        const double exact = nodal_passivity(net.with_scaled(name, Complex(1.0 + e, 0.0)), w).index;
        err.push_back(std::abs(exact - base - e * d));
      }
      INFO(name << " f=" << f);
      CHECK(loglog_slope(eps, err) >= 1.9);
    }
  }
  // A generic (non-proportional) branch perturbation.
  std::mt19937_64 rng(4);
  const DqAdmittance dir = testing::random_dq(rng);
  const double w = 2 * kPi * 55;
  const auto& br = net.branches()[1];
  const DqAdmittance yb = br.model->admittance(Complex(0.0, w));
  const double base = nodal_passivity(net, w).index;
  const double d = *nodal_sensitivity_branch(net, w, 1, dir);
  std::vector<double> size = {1e-2, 1e-3, 1e-4}, err;
  for (double e : size) {
    const DqAdmittance pert = yb + e * yb.norm() * dir;
    const double exact = nodal_passivity(net.with_model(br.name, constant(pert)), w).index;
    err.push_back(std::abs(exact - base - e * yb.norm() * d));
  }
  CHECK(loglog_slope(size, err) >= 1.9);
}

TEST_CASE("participation properties") {
  const Network net = three_bus(0.66, 50.0, 0.15);
  const auto names = net.component_names();
  REQUIRE(names.size() == 9);
  for (double f : log_grid(1.0, 2000.0, 60)) {
    const auto p = participation_all(net, 2 * kPi * f);
    REQUIRE(!p.degenerate);
    double sum = 0.0;
    for (double v : p.values) sum += v;
    CHECK(std::abs(sum - p.index) <= 1e-8);
    // GFM-1 and GFM-2 sit at symmetric buses with identical models.
    CHECK(std::abs(p.values[6] - p.values[7]) <= 1e-10);
  }
  const Network zeroed = net.with_scaled("GFM-2", Complex(0.0, 0.0));
  CHECK(*participation(zeroed, 2 * kPi * 30, "GFM-2") == 0.0);
}

TEST_CASE("three-bus fixture behaviour") {
  const Network net = three_bus();
  bool negative_near_40 = false;
  for (double f = 35.0; f <= 45.0; f += 1.0) negative_near_40 |= nodal_passivity(net, 2 * kPi * f).index < 0.0;
  CHECK(negative_near_40);

  const auto w = to_omega(log_grid(1.0, 2000.0, 400));
  const auto c = nodal_first_order_prediction(net, "GFM-1", 0.1, w);
  std::size_t good = 0;
  for (std::size_t k = 0; k < w.size(); ++k) {
    const double change = c.exact[k] - c.base[k];
    const double pred = c.predicted[k] - c.base[k];
    if (!c.degenerate[k] && std::abs(pred - change) <= 0.1 * std::abs(change)) ++good;
  }
  CHECK(good >= 360);
}

TEST_CASE("closed-loop impedance") {
  const Network net = three_bus();
  for (double f : {2.0, 40.0, 300.0}) {
    const Complex s(0.0, 2 * kPi * f);
    const CMatrix zcl = closed_loop_impedance(net, s);
    const CMatrix yn = assemble_nodal(net, s).matrix;
    CHECK((zcl * yn - CMatrix::Identity(6, 6)).norm() <= 1e-9);
    const CMatrix znet = network_admittance(net, s).inverse();
    const CMatrix loop = (CMatrix::Identity(6, 6) + znet * device_admittance(net, s)).inverse() * znet;
    CHECK((zcl - loop).norm() <= 1e-8 * zcl.norm());
  }
  Network passive(bus_names(1));
  passive.add_shunt("N1", make_rl_branch(0.0, 0.5, kOmegaB));
  try {
    closed_loop_impedance(passive, Complex(0.0, -kOmegaB));
    FAIL("expected Singular");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::Singular);
  }
}

TEST_CASE("series LC resonance appears at dq-shifted frequencies") {
  // Stiff source at N1, inductive line to N2, capacitor at N2. The abc resonance
  // at f_r = f_b / sqrt(X B) shows in the dq frame at |f_r - f_b| and f_r + f_b.
  const double x = 0.1, b = 0.04;
  Network net(bus_names(2));
  net.add_shunt("N1", make_rl_branch(1e-4, 0.0, kOmegaB));
  net.add_branch("N1", "N2", make_rl_branch(1e-3, x, kOmegaB));
  net.add_shunt("N2", make_shunt_c(b, kOmegaB));
  const double fr = 60.0 / std::sqrt(x * b);
  auto peak_near = [&](double f0) {
    double best_f = 0.0, best = -1.0;
    for (double f = 0.95 * f0; f <= 1.05 * f0; f *= 1.0002) {
      const double z = closed_loop_impedance(net, Complex(0.0, 2 * kPi * f)).block<2, 2>(2, 2).norm();
      if (z > best) {
        best = z;
        best_f = f;
      }
    }
    return best_f;
  };
  CHECK(peak_near(fr - 60.0) == doctest::Approx(fr - 60.0).epsilon(2e-3));
  CHECK(peak_near(fr + 60.0) == doctest::Approx(fr + 60.0).epsilon(2e-3));
}
