#include "passivity/network.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include <unsupported/Eigen/KroneckerProduct>

#include "passivity/parallel.hpp"

namespace passivity {

namespace {

DqAdmittance evaluate(const ModelPtr& model, const std::string& name, Complex s) {
  try {
    return model->admittance(s);
  } catch (const Error& e) {
    throw e.with_context(name);
  }
}

std::string omega_context(double omega) {
  std::ostringstream os;
  os.precision(12);
  os << "at omega = " << omega << " rad/s";
  return os.str();
}

template <typename Fn>
auto at_omega(double omega, Fn&& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    throw e.with_context(omega_context(omega));
  }
}

// phi_a^H M phi_b for 2-subvectors of phi.
Complex block_form(const CVector& phi, std::size_t a, const DqAdmittance& m, std::size_t b) {
  const Eigen::Vector2cd pa = phi.segment<2>(2 * static_cast<Eigen::Index>(a));
  const Eigen::Vector2cd pb = phi.segment<2>(2 * static_cast<Eigen::Index>(b));
  return (pa.adjoint() * m * pb)(0, 0);
}

}  // namespace

Network::Network(std::vector<std::string> buses, double omega_b) : buses_(std::move(buses)), omega_b_(omega_b) {
  if (buses_.empty()) throw Error(Errc::Validation, "network: at least one bus is required");
  if (!(omega_b_ > 0.0) || !std::isfinite(omega_b_)) throw Error(Errc::Validation, "network: omega_b must be positive");
  for (std::size_t i = 0; i < buses_.size(); ++i) {
    if (!bus_lookup_.emplace(buses_[i], i).second) {
      throw Error(Errc::Validation, "network: duplicate bus '" + buses_[i] + "'");
    }
  }
}

std::size_t Network::bus_index(std::string_view name) const {
  const auto it = bus_lookup_.find(name);
  if (it == bus_lookup_.end()) throw Error(Errc::UnknownBus, "unknown bus '" + std::string(name) + "'");
  return it->second;
}

void Network::claim_name(const std::string& name) {
  if (name.empty()) throw Error(Errc::Validation, "network: component name must not be empty");
  if (components_.count(name) != 0) throw Error(Errc::Validation, "network: duplicate component '" + name + "'");
}

const Branch& Network::add_branch(std::string_view from, std::string_view to, ModelPtr model) {
  Branch b;
  b.from = bus_index(from);
  b.to = bus_index(to);
  if (b.from == b.to) throw Error(Errc::Validation, "network: self-loop branch at bus '" + std::string(from) + "'");
  if (!model) throw Error(Errc::Validation, "network: branch without model");
  b.model = std::move(model);
  b.name = std::string(from) + "-" + std::string(to) + "#" + std::to_string(branches_.size() + 1);
  claim_name(b.name);
  components_.emplace(b.name, ComponentRef{ComponentKind::Branch, branches_.size()});
  branches_.push_back(std::move(b));
  return branches_.back();
}

const Shunt& Network::add_shunt(std::string_view bus, ModelPtr model) {
  Shunt sh;
  sh.bus = bus_index(bus);
  if (!model) throw Error(Errc::Validation, "network: shunt without model");
  sh.model = std::move(model);
  std::size_t same = 0;
  for (const auto& other : shunts_) same += other.bus == sh.bus ? 1 : 0;
  sh.name = "sh@" + std::string(bus) + (same == 0 ? "" : "#" + std::to_string(same + 1));
  claim_name(sh.name);
  components_.emplace(sh.name, ComponentRef{ComponentKind::Shunt, shunts_.size()});
  shunts_.push_back(std::move(sh));
  return shunts_.back();
}

const Device& Network::add_device(std::string_view bus, ModelPtr model, std::string name) {
  Device d;
  d.bus = bus_index(bus);
  if (!model) throw Error(Errc::Validation, "network: device without model");
  d.model = std::move(model);
  d.name = std::move(name);
  claim_name(d.name);
  components_.emplace(d.name, ComponentRef{ComponentKind::Device, devices_.size()});
  devices_.push_back(std::move(d));
  return devices_.back();
}

std::vector<std::string> Network::component_names() const {
  std::vector<std::string> out;
  out.reserve(branches_.size() + shunts_.size() + devices_.size());
  for (const auto& b : branches_) out.push_back(b.name);
  for (const auto& s : shunts_) out.push_back(s.name);
  for (const auto& d : devices_) out.push_back(d.name);
  return out;
}

ComponentRef Network::find(std::string_view name) const {
  const auto it = components_.find(name);
  if (it == components_.end()) throw Error(Errc::UnknownComponent, "unknown component '" + std::string(name) + "'");
  return it->second;
}

const ModelPtr& Network::model(const ComponentRef& ref) const {
  switch (ref.kind) {
    case ComponentKind::Branch: return branches_.at(ref.index).model;
    case ComponentKind::Shunt: return shunts_.at(ref.index).model;
    case ComponentKind::Device: break;
  }
  return devices_.at(ref.index).model;
}

Network Network::with_model(std::string_view name, ModelPtr model) const {
  const ComponentRef ref = find(name);
  Network out = *this;
  switch (ref.kind) {
    case ComponentKind::Branch: out.branches_[ref.index].model = std::move(model); break;
    case ComponentKind::Shunt: out.shunts_[ref.index].model = std::move(model); break;
    case ComponentKind::Device: out.devices_[ref.index].model = std::move(model); break;
  }
  return out;
}

Network Network::with_scaled(std::string_view name, Complex factor) const {
  return with_model(name, make_scaled(model(find(name)), factor));
}

RMatrix incidence(const Network& net) {
  const auto nb = static_cast<Eigen::Index>(net.branches().size());
  const auto nn = static_cast<Eigen::Index>(net.bus_count());
  RMatrix inc = RMatrix::Zero(2 * nb, 2 * nn);
  for (Eigen::Index k = 0; k < nb; ++k) {
    const auto& b = net.branches()[static_cast<std::size_t>(k)];
    inc.block<2, 2>(2 * k, 2 * static_cast<Eigen::Index>(b.from)) = Eigen::Matrix2d::Identity();
    inc.block<2, 2>(2 * k, 2 * static_cast<Eigen::Index>(b.to)) = -Eigen::Matrix2d::Identity();
  }
  return inc;
}

CMatrix network_admittance(const Network& net, Complex s) {
  const auto n = static_cast<Eigen::Index>(net.bus_count());
  CMatrix y = CMatrix::Zero(2 * n, 2 * n);
  for (const auto& b : net.branches()) {
    const DqAdmittance yb = evaluate(b.model, b.name, s);
    const auto i = 2 * static_cast<Eigen::Index>(b.from);
    const auto j = 2 * static_cast<Eigen::Index>(b.to);
    y.block<2, 2>(i, i) += yb;
    y.block<2, 2>(j, j) += yb;
    y.block<2, 2>(i, j) -= yb;
    y.block<2, 2>(j, i) -= yb;
  }
  for (const auto& sh : net.shunts()) {
    const auto i = 2 * static_cast<Eigen::Index>(sh.bus);
    y.block<2, 2>(i, i) += evaluate(sh.model, sh.name, s);
  }
  return y;
}

CMatrix device_admittance(const Network& net, Complex s) {
  const auto n = static_cast<Eigen::Index>(net.bus_count());
  CMatrix y = CMatrix::Zero(2 * n, 2 * n);
  for (const auto& d : net.devices()) {
    const auto i = 2 * static_cast<Eigen::Index>(d.bus);
    y.block<2, 2>(i, i) += evaluate(d.model, d.name, s);
  }
  return y;
}

NodalAdmittance assemble_nodal(const Network& net, Complex s) {
  return {network_admittance(net, s) + device_admittance(net, s), s};
}

CMatrix assemble_nodal_reference(const Network& net, Complex s) {
  const auto nb = static_cast<Eigen::Index>(net.branches().size());
  const auto n = static_cast<Eigen::Index>(net.bus_count());
  CMatrix yb = CMatrix::Zero(2 * nb, 2 * nb);
  for (Eigen::Index k = 0; k < nb; ++k) {
    const auto& b = net.branches()[static_cast<std::size_t>(k)];
    yb.block<2, 2>(2 * k, 2 * k) = evaluate(b.model, b.name, s);
  }
  CMatrix yc = CMatrix::Zero(2 * n, 2 * n);
  for (const auto& sh : net.shunts()) {
    const auto i = 2 * static_cast<Eigen::Index>(sh.bus);
    yc.block<2, 2>(i, i) += evaluate(sh.model, sh.name, s);
  }
  const CMatrix inc = incidence(net).cast<Complex>();
  return inc.transpose() * yb * inc + device_admittance(net, s) + yc;
}

NodalPassivityPoint nodal_passivity(const Network& net, double omega) {
  return at_omega(omega, [&] {
    const CMatrix yn = assemble_nodal(net, Complex(0.0, omega)).matrix;
    detail::require_finite(yn, "nodal_passivity");
    const CMatrix h = hermitian_part(yn);
    const auto eig = hermitian_eigen(h);
    NodalPassivityPoint pt;
    pt.omega = omega;
    pt.index = eig.min_value();
    pt.spectrum = eig.values;
    pt.min_vector = eig.vectors.col(0);
    pt.eigen_gap = std::max(0.0, eig.min_gap());
    pt.hermitian_norm = h.norm();
    return pt;
  });
}

std::vector<NodalPassivityPoint> nodal_passivity_sweep(const Network& net, const std::vector<double>& omegas) {
  return parallel_map(omegas.size(), [&](std::size_t k) { return nodal_passivity(net, omegas[k]); });
}

std::optional<double> nodal_sensitivity_shunt(const NodalPassivityPoint& pt, std::size_t bus, const DqAdmittance& dy) {
  if (pt.spectrum.size() > 1 && pt.degenerate()) return std::nullopt;
  const DqAdmittance dh = hermitian_part(dy);
  return block_form(pt.min_vector, bus, dh, bus).real();
}

std::optional<double> nodal_sensitivity_branch(const NodalPassivityPoint& pt, std::size_t from, std::size_t to,
                                               const DqAdmittance& dy) {
  if (pt.spectrum.size() > 1 && pt.degenerate()) return std::nullopt;
  const DqAdmittance dh = hermitian_part(dy);
  const Complex v = block_form(pt.min_vector, from, dh, from) + block_form(pt.min_vector, to, dh, to) -
                    block_form(pt.min_vector, from, dh, to) - block_form(pt.min_vector, to, dh, from);
  return v.real();
}

std::optional<double> nodal_sensitivity_shunt(const Network& net, double omega, std::string_view bus,
                                              const DqAdmittance& dy) {
  return nodal_sensitivity_shunt(nodal_passivity(net, omega), net.bus_index(bus), dy);
}

std::optional<double> nodal_sensitivity_branch(const Network& net, double omega, std::size_t branch,
                                               const DqAdmittance& dy) {
  if (branch >= net.branches().size()) {
    throw Error(Errc::UnknownComponent, "branch index " + std::to_string(branch) + " out of range");
  }
  const auto& b = net.branches()[branch];
  return nodal_sensitivity_branch(nodal_passivity(net, omega), b.from, b.to, dy);
}

CMatrix shunt_direction(std::size_t buses, std::size_t bus, const DqAdmittance& dy) {
  RMatrix e = RMatrix::Zero(static_cast<Eigen::Index>(buses), static_cast<Eigen::Index>(buses));
  e(static_cast<Eigen::Index>(bus), static_cast<Eigen::Index>(bus)) = 1.0;
  const DqAdmittance dh = hermitian_part(dy);
  return Eigen::kroneckerProduct(e.cast<Complex>(), dh).eval();
}

CMatrix branch_direction(const Network& net, std::size_t branch, const DqAdmittance& dy) {
  const auto nb = static_cast<Eigen::Index>(net.branches().size());
  RMatrix e = RMatrix::Zero(nb, nb);
  e(static_cast<Eigen::Index>(branch), static_cast<Eigen::Index>(branch)) = 1.0;
  const DqAdmittance dh = hermitian_part(dy);
  const CMatrix inc = incidence(net).cast<Complex>();
  const CMatrix middle = Eigen::kroneckerProduct(e.cast<Complex>(), dh).eval();
  return inc.transpose() * middle * inc;
}

namespace {

std::optional<double> participation_at(const Network& net, const NodalPassivityPoint& pt, const ComponentRef& ref,
                                       Complex s) {
  switch (ref.kind) {
    case ComponentKind::Branch: {
      const auto& b = net.branches()[ref.index];
      return nodal_sensitivity_branch(pt, b.from, b.to, evaluate(b.model, b.name, s));
    }
    case ComponentKind::Shunt: {
      const auto& sh = net.shunts()[ref.index];
      return nodal_sensitivity_shunt(pt, sh.bus, evaluate(sh.model, sh.name, s));
    }
    case ComponentKind::Device: break;
  }
  const auto& d = net.devices()[ref.index];
  return nodal_sensitivity_shunt(pt, d.bus, evaluate(d.model, d.name, s));
}

}  // namespace

std::optional<double> participation(const Network& net, double omega, std::string_view component) {
  const ComponentRef ref = net.find(component);
  const auto pt = nodal_passivity(net, omega);
  return at_omega(omega, [&] { return participation_at(net, pt, ref, Complex(0.0, omega)); });
}

ParticipationPoint participation_all(const Network& net, double omega) {
  const auto pt = nodal_passivity(net, omega);
  ParticipationPoint out;
  out.omega = omega;
  out.index = pt.index;
  out.degenerate = pt.spectrum.size() > 1 && pt.degenerate();
  const auto names = net.component_names();
  out.values.reserve(names.size());
  at_omega(omega, [&] {
    for (const auto& name : names) {
      const auto v = participation_at(net, pt, net.find(name), Complex(0.0, omega));
      out.values.push_back(v ? *v : std::numeric_limits<double>::quiet_NaN());
    }
    return 0;
  });
  return out;
}

std::vector<ParticipationPoint> participation_sweep(const Network& net, const std::vector<double>& omegas) {
  return parallel_map(omegas.size(), [&](std::size_t k) { return participation_all(net, omegas[k]); });
}

PredictionCurves nodal_first_order_prediction(const Network& net, std::string_view component, double eps,
                                              const std::vector<double>& omegas) {
  const ComponentRef ref = net.find(component);
  const Network perturbed = net.with_scaled(component, Complex(1.0 + eps, 0.0));
  struct Row {
    double base, exact, predicted;
    bool degenerate;
  };
  const auto rows = parallel_map(omegas.size(), [&](std::size_t k) {
    const double w = omegas[k];
    const auto pt = nodal_passivity(net, w);
    const auto d = at_omega(w, [&] { return participation_at(net, pt, ref, Complex(0.0, w)); });
    Row r;
    r.base = pt.index;
    r.exact = nodal_passivity(perturbed, w).index;
    r.degenerate = !d.has_value();
    r.predicted = d ? pt.index + eps * *d : std::numeric_limits<double>::quiet_NaN();
    return r;
  });
  PredictionCurves out;
  out.omega = omegas;
  for (const auto& r : rows) {
    out.base.push_back(r.base);
    out.exact.push_back(r.exact);
    out.predicted.push_back(r.predicted);
    out.degenerate.push_back(r.degenerate);
  }
  return out;
}

CMatrix closed_loop_impedance(const Network& net, Complex s) {
  try {
    return inverse(assemble_nodal(net, s).matrix);
  } catch (const Error& e) {
    if (e.code() == Errc::Singular) {
      std::ostringstream os;
      os.precision(12);
      os << "closed_loop_impedance: nodal admittance singular at s = " << s.real() << (s.imag() < 0 ? "" : "+")
         << s.imag() << "j (system mode)";
      throw Error(Errc::Singular, os.str());
    }
    throw;
  }
}

}  // namespace passivity
