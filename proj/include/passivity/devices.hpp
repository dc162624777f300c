#pragma once

// dq-frame device admittance models.
//
// Conventions used by every model here:
//   * per unit throughout; a reactance X is given at omega_b, so an inductive
//     branch contributes R + (s / omega_b) X on the diagonal and X on the
//     rotational off-diagonal: Z = [[R + sX/wb, -X], [X, R + sX/wb]];
//   * PLL and VSM integrators carry an explicit omega_b (pu frequency -> rad/s);
//   * current is measured into the device, so Re{v^H i} > 0 means the device
//     absorbs small-signal power and a passive element has a positive index.

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "passivity/errors.hpp"
#include "passivity/types.hpp"

namespace passivity {

class ParameterSet {
 public:
  ParameterSet() = default;
  ParameterSet(std::initializer_list<std::pair<const std::string, double>> init) : values_(init) {}

  bool has(std::string_view name) const { return values_.find(name) != values_.end(); }
  double get(std::string_view name) const;
  void set(std::string_view name, double value) { values_.insert_or_assign(std::string(name), value); }
  std::vector<std::string> names() const;
  const std::map<std::string, double, std::less<>>& values() const { return values_; }

  // Overwrites entries of *this with those of `overrides`.
  ParameterSet merged(const ParameterSet& overrides) const;

 private:
  std::map<std::string, double, std::less<>> values_;
};

struct OperatingPoint {
  double v_d0 = 1.0;
  double v_q0 = 0.0;
  double i_d0 = 0.0;  // current drawn from the bus by the device
  double i_q0 = 0.0;
  double omega0 = 2.0 * kPi * 60.0;
  double omega_b = 2.0 * kPi * 60.0;

  // (p_out, q_out) is the power delivered by the device to the bus at voltage
  // magnitude v; the frame is aligned so v_q0 = 0.
  static OperatingPoint from_terminal(double p_out, double q_out, double v, double omega_b);

  Eigen::Vector2d voltage() const { return {v_d0, v_q0}; }
  Eigen::Vector2d current_drawn() const { return {i_d0, i_q0}; }
};

class DeviceModel;
using ModelPtr = std::shared_ptr<const DeviceModel>;

class DeviceModel {
 public:
  virtual ~DeviceModel() = default;

  virtual std::string kind() const = 0;
  virtual DqAdmittance admittance(Complex s) const = 0;
  virtual const ParameterSet& parameters() const = 0;
  // Copy of the model with one parameter replaced; throws UnknownParameter.
  virtual ModelPtr with_parameter(std::string_view name, double value) const = 0;

  virtual bool differentiable() const { return true; }
  // Models that only exist as measured data cannot leave the j*omega axis.
  virtual bool analytic_in_s() const { return true; }
};

// --- closed-form element admittances ---------------------------------------

DqAdmittance rl_branch_admittance(double r, double x, Complex s, double omega_b);
DqAdmittance shunt_c_admittance(double b, Complex s, double omega_b);
DqAdmittance thevenin_grid(double scr, double xr_ratio, Complex s, double omega_b);

// Grid-following converter, inner current loop + PLL + voltage feedforward
// (outer PQ loop frozen). Parameters: L_c, R_c, K_p_i, K_i_i, K_p_pll, K_i_pll,
// T_v; K_p_pq, K_i_pq, T_i are accepted but unused at this level.
DqAdmittance gfl_admittance_L1(const ParameterSet& params, const OperatingPoint& op, Complex s);

// Grid-forming converter, VSM swing behind a virtual impedance. Parameters:
// H_vsm, D_vsm, L_v, R_v; K_vsm, L_c, R_c, K_p_i, K_i_i accepted but unused.
DqAdmittance gfm_admittance_L1(const ParameterSet& params, const OperatingPoint& op, Complex s);

// Parameter sets reported for the single-converter validation system.
ParameterSet gfl_default_parameters();
ParameterSet gfm_default_parameters();

std::vector<std::string> validate_gfl_parameters(const ParameterSet& params);
std::vector<std::string> validate_gfm_parameters(const ParameterSet& params);
std::vector<std::string> validate_operating_point(const OperatingPoint& op);

// --- model objects ----------------------------------------------------------

ModelPtr make_rl_branch(double r, double x, double omega_b);
ModelPtr make_shunt_c(double b, double omega_b);
ModelPtr make_thevenin(double scr, double xr_ratio, double omega_b);
ModelPtr make_gfl(const ParameterSet& params, const OperatingPoint& op);
ModelPtr make_gfm(const ParameterSet& params, const OperatingPoint& op);
// factor * model(s); parameters forward to the wrapped model.
ModelPtr make_scaled(ModelPtr model, Complex factor);
// a(s) + b(s); a parameter change shifts every part that knows the name by the same delta.
ModelPtr make_sum(ModelPtr a, ModelPtr b);

// --- black-box frequency response ------------------------------------------

struct FrequencyTable {
  std::vector<double> freq_hz;
  std::vector<DqAdmittance> values;
};

inline constexpr std::string_view kTableHeader =
    "freq_hz,re_ydd,im_ydd,re_ydq,im_ydq,re_yqd,im_yqd,re_yqq,im_yqq";

FrequencyTable parse_table(std::string_view text, const std::string& source = "<table>");
FrequencyTable read_table(const std::filesystem::path& path);
std::string format_table(const FrequencyTable& table);
void write_table(const FrequencyTable& table, const std::filesystem::path& path);
FrequencyTable tabulate(const DeviceModel& model, const std::vector<double>& freq_hz);

// Entrywise linear interpolation of Re/Im against log10(frequency); only s = j*omega
// inside the table span is accepted (OutOfRange otherwise).
ModelPtr blackbox_model(FrequencyTable table);

// dY/drho by central differences, step max(|rho|, 1) * 1e-6, one Richardson level.
DqAdmittance param_derivative(const DeviceModel& model, std::string_view param, Complex s);

}  // namespace passivity
