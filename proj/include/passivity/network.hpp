#pragma once

// Bus-level admittance assembly and system passivity sensitivities.

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "passivity/devices.hpp"
#include "passivity/passivity.hpp"

namespace passivity {

enum class ComponentKind { Branch, Shunt, Device };

struct Branch {
  std::size_t from = 0;
  std::size_t to = 0;
  ModelPtr model;
  std::string name;
};

struct Shunt {
  std::size_t bus = 0;
  ModelPtr model;
  std::string name;
};

struct Device {
  std::size_t bus = 0;
  ModelPtr model;
  std::string name;
};

struct ComponentRef {
  ComponentKind kind = ComponentKind::Branch;
  std::size_t index = 0;
};

class Network {
 public:
  explicit Network(std::vector<std::string> buses, double omega_b = 2.0 * kPi * 60.0);

  // Branch names are "from-to#k" with k the 1-based branch count.
  const Branch& add_branch(std::string_view from, std::string_view to, ModelPtr model);
  // Shunt names are "sh@bus", with "#n" appended for the n-th extra shunt at the same bus.
  const Shunt& add_shunt(std::string_view bus, ModelPtr model);
  const Device& add_device(std::string_view bus, ModelPtr model, std::string name);

  double omega_b() const { return omega_b_; }
  std::size_t bus_count() const { return buses_.size(); }
  const std::vector<std::string>& buses() const { return buses_; }
  std::size_t bus_index(std::string_view name) const;  // UnknownBus
  const std::vector<Branch>& branches() const { return branches_; }
  const std::vector<Shunt>& shunts() const { return shunts_; }
  const std::vector<Device>& devices() const { return devices_; }

  // Branches, then shunts, then devices, each in declaration order.
  std::vector<std::string> component_names() const;
  ComponentRef find(std::string_view name) const;  // UnknownComponent
  const ModelPtr& model(const ComponentRef& ref) const;
  // Copy with one component's model replaced by factor * model.
  Network with_scaled(std::string_view name, Complex factor) const;
  Network with_model(std::string_view name, ModelPtr model) const;

 private:
  void claim_name(const std::string& name);

  std::vector<std::string> buses_;
  double omega_b_;
  std::map<std::string, std::size_t, std::less<>> bus_lookup_;
  std::vector<Branch> branches_;
  std::vector<Shunt> shunts_;
  std::vector<Device> devices_;
  std::map<std::string, ComponentRef, std::less<>> components_;
};

// 2B x 2N; row block k carries +I at the branch's from-bus and -I at its to-bus.
RMatrix incidence(const Network& net);

struct NodalAdmittance {
  CMatrix matrix;
  Complex s;
};

// Y^n = I^T Y^b I + Y^a + Y^c by direct block stamping.
NodalAdmittance assemble_nodal(const Network& net, Complex s);
// Same quantity through the dense incidence sandwich; reference path for tests.
CMatrix assemble_nodal_reference(const Network& net, Complex s);
// Passive part I^T Y^b I + Y^c.
CMatrix network_admittance(const Network& net, Complex s);
// Block diagonal of device admittances.
CMatrix device_admittance(const Network& net, Complex s);

struct NodalPassivityPoint {
  double omega = 0.0;
  double index = 0.0;
  RVector spectrum;
  CVector min_vector;
  double eigen_gap = 0.0;
  double hermitian_norm = 0.0;

  bool degenerate() const { return eigen_gap <= kDegeneracyTolerance * hermitian_norm; }
};

NodalPassivityPoint nodal_passivity(const Network& net, double omega);
std::vector<NodalPassivityPoint> nodal_passivity_sweep(const Network& net, const std::vector<double>& omegas);

// phi^H D phi for a perturbation confined to one bus or one branch; nullopt when degenerate.
std::optional<double> nodal_sensitivity_shunt(const NodalPassivityPoint& pt, std::size_t bus, const DqAdmittance& dy);
std::optional<double> nodal_sensitivity_branch(const NodalPassivityPoint& pt, std::size_t from, std::size_t to,
                                               const DqAdmittance& dy);
std::optional<double> nodal_sensitivity_shunt(const Network& net, double omega, std::string_view bus,
                                              const DqAdmittance& dy);
std::optional<double> nodal_sensitivity_branch(const Network& net, double omega, std::size_t branch,
                                               const DqAdmittance& dy);

// Dense perturbation directions E_ii (x) (dY + dY^H) and I^T (E_k (x) (dY + dY^H)) I.
CMatrix shunt_direction(std::size_t buses, std::size_t bus, const DqAdmittance& dy);
CMatrix branch_direction(const Network& net, std::size_t branch, const DqAdmittance& dy);

// d(index)/d(eps) for Y_c -> (1 + eps) Y_c.
std::optional<double> participation(const Network& net, double omega, std::string_view component);

struct ParticipationPoint {
  double omega = 0.0;
  double index = 0.0;
  bool degenerate = false;
  std::vector<double> values;  // component_names() order; NaN when degenerate
};

ParticipationPoint participation_all(const Network& net, double omega);
std::vector<ParticipationPoint> participation_sweep(const Network& net, const std::vector<double>& omegas);

// Exact and first-order index curves when one component is scaled by (1 + eps).
PredictionCurves nodal_first_order_prediction(const Network& net, std::string_view component, double eps,
                                              const std::vector<double>& omegas);

// (Y^n)^-1; Singular when s is a system mode.
CMatrix closed_loop_impedance(const Network& net, Complex s);

}  // namespace passivity
