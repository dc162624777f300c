#include "passivity/devices.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <sstream>

namespace passivity {

namespace {

const Eigen::Matrix2d kRot = (Eigen::Matrix2d() << 0.0, -1.0, 1.0, 0.0).finished();

// diag * I + off * J, the structure shared by every rotationally symmetric dq element.
DqAdmittance rotational(Complex diag, Complex off) {
  DqAdmittance m;
  m << diag, -off, off, diag;
  return m;
}

DqAdmittance inverse_rotational(Complex diag, Complex off, const char* what) {
  const Complex det = diag * diag + off * off;
  const double scale = std::norm(diag) + std::norm(off);
  if (!(std::abs(det) > 1e-14 * scale)) {
    throw Error(Errc::Singular, std::string(what) + ": impedance is singular at this s");
  }
  DqAdmittance m;
  m << diag / det, off / det, -off / det, diag / det;
  return m;
}

void require_finite(const DqAdmittance& y, const std::string& what) {
  if (!y.allFinite()) throw Error(Errc::NonFinite, what + ": admittance is not finite");
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

// Checks names against the model's vocabulary plus finiteness and sign constraints.
std::vector<std::string> validate_named(const ParameterSet& params,
                                        const std::vector<std::string_view>& known,
                                        const std::vector<std::string_view>& non_negative,
                                        const char* model) {
  std::vector<std::string> issues;
  for (const auto& [name, value] : params.values()) {
    if (std::find(known.begin(), known.end(), name) == known.end()) {
      issues.push_back(std::string(model) + ": unknown parameter '" + name + "'");
      continue;
    }
    if (!std::isfinite(value)) {
      issues.push_back(std::string(model) + ": parameter '" + name + "' is not finite");
      continue;
    }
    if (value < 0.0 && std::find(non_negative.begin(), non_negative.end(), name) != non_negative.end()) {
      issues.push_back(std::string(model) + ": parameter '" + name + "' must be non-negative, got " +
                       fmt(value));
    }
  }
  for (auto name : known) {
    if (!params.has(name)) issues.push_back(std::string(model) + ": missing parameter '" + std::string(name) + "'");
  }
  return issues;
}

const std::vector<std::string_view> kGflKnown = {"L_c",     "R_c",     "K_p_i",  "K_i_i",  "K_p_pll",
                                                 "K_i_pll", "T_v",     "K_p_pq", "K_i_pq", "T_i"};
const std::vector<std::string_view> kGflNonNegative = {"L_c", "R_c", "T_v", "T_i"};
const std::vector<std::string_view> kGfmKnown = {"H_vsm", "D_vsm", "L_v",   "R_v",  "K_vsm",
                                                 "L_c",   "R_c",   "K_p_i", "K_i_i"};
const std::vector<std::string_view> kGfmNonNegative = {"H_vsm", "L_v", "R_v", "L_c", "R_c"};

// Shared plumbing for catalog models: parameters live in a ParameterSet and a
// changed copy is rebuilt through `rebuild`.
class AnalyticModel : public DeviceModel {
 public:
  AnalyticModel(ParameterSet params, std::vector<std::string_view> known)
      : params_(std::move(params)), known_(std::move(known)) {}

  const ParameterSet& parameters() const override { return params_; }

  ModelPtr with_parameter(std::string_view name, double value) const override {
    if (std::find(known_.begin(), known_.end(), name) == known_.end()) {
      throw Error(Errc::UnknownParameter,
                  kind() + ": unknown parameter '" + std::string(name) + "'");
    }
    if (!std::isfinite(value)) {
      throw Error(Errc::NonFinite, kind() + ": parameter '" + std::string(name) + "' is not finite");
    }
    ParameterSet changed = params_;
    changed.set(name, value);
    return rebuild(std::move(changed));
  }

 protected:
  virtual ModelPtr rebuild(ParameterSet params) const = 0;
  ParameterSet params_;

 private:
  std::vector<std::string_view> known_;
};

class RlBranchModel final : public AnalyticModel {
 public:
  RlBranchModel(ParameterSet p, double omega_b) : AnalyticModel(std::move(p), {"R", "X"}), omega_b_(omega_b) {}
  std::string kind() const override { return "rl"; }
  DqAdmittance admittance(Complex s) const override {
    return rl_branch_admittance(params_.get("R"), params_.get("X"), s, omega_b_);
  }

 protected:
  ModelPtr rebuild(ParameterSet p) const override { return std::make_shared<RlBranchModel>(std::move(p), omega_b_); }

 private:
  double omega_b_;
};

class ShuntCModel final : public AnalyticModel {
 public:
  ShuntCModel(ParameterSet p, double omega_b) : AnalyticModel(std::move(p), {"B"}), omega_b_(omega_b) {}
  std::string kind() const override { return "shunt_c"; }
  DqAdmittance admittance(Complex s) const override { return shunt_c_admittance(params_.get("B"), s, omega_b_); }

 protected:
  ModelPtr rebuild(ParameterSet p) const override { return std::make_shared<ShuntCModel>(std::move(p), omega_b_); }

 private:
  double omega_b_;
};

class TheveninModel final : public AnalyticModel {
 public:
  TheveninModel(ParameterSet p, double omega_b) : AnalyticModel(std::move(p), {"SCR", "XR"}), omega_b_(omega_b) {}
  std::string kind() const override { return "thevenin"; }
  DqAdmittance admittance(Complex s) const override {
    return thevenin_grid(params_.get("SCR"), params_.get("XR"), s, omega_b_);
  }

 protected:
  ModelPtr rebuild(ParameterSet p) const override { return std::make_shared<TheveninModel>(std::move(p), omega_b_); }

 private:
  double omega_b_;
};

class GflModel final : public AnalyticModel {
 public:
  GflModel(ParameterSet p, OperatingPoint op) : AnalyticModel(std::move(p), kGflKnown), op_(op) {}
  std::string kind() const override { return "gfl"; }
  DqAdmittance admittance(Complex s) const override { return gfl_admittance_L1(params_, op_, s); }

 protected:
  ModelPtr rebuild(ParameterSet p) const override { return std::make_shared<GflModel>(std::move(p), op_); }

 private:
  OperatingPoint op_;
};

class GfmModel final : public AnalyticModel {
 public:
  GfmModel(ParameterSet p, OperatingPoint op) : AnalyticModel(std::move(p), kGfmKnown), op_(op) {}
  std::string kind() const override { return "gfm"; }
  DqAdmittance admittance(Complex s) const override { return gfm_admittance_L1(params_, op_, s); }

 protected:
  ModelPtr rebuild(ParameterSet p) const override { return std::make_shared<GfmModel>(std::move(p), op_); }

 private:
  OperatingPoint op_;
};

class ScaledModel final : public DeviceModel {
 public:
  ScaledModel(ModelPtr inner, Complex factor) : inner_(std::move(inner)), factor_(factor) {}
  std::string kind() const override { return inner_->kind(); }
  DqAdmittance admittance(Complex s) const override { return factor_ * inner_->admittance(s); }
  const ParameterSet& parameters() const override { return inner_->parameters(); }
  ModelPtr with_parameter(std::string_view name, double value) const override {
    return std::make_shared<ScaledModel>(inner_->with_parameter(name, value), factor_);
  }
  bool differentiable() const override { return inner_->differentiable(); }
  bool analytic_in_s() const override { return inner_->analytic_in_s(); }

 private:
  ModelPtr inner_;
  Complex factor_;
};

class SumModel final : public DeviceModel {
 public:
  SumModel(ModelPtr a, ModelPtr b)
      : a_(std::move(a)), b_(std::move(b)), params_(a_->parameters().merged(b_->parameters())) {}
  std::string kind() const override { return "sum(" + a_->kind() + "," + b_->kind() + ")"; }
  DqAdmittance admittance(Complex s) const override { return a_->admittance(s) + b_->admittance(s); }
  const ParameterSet& parameters() const override { return params_; }
  ModelPtr with_parameter(std::string_view name, double value) const override {
    const bool in_a = a_->parameters().has(name);
    const bool in_b = b_->parameters().has(name);
    if (!in_a && !in_b) {
      throw Error(Errc::UnknownParameter, kind() + ": unknown parameter '" + std::string(name) + "'");
    }
    // A shared name may hold different values in each part; both move by the same delta.
    const double delta = value - params_.get(name);
    auto shifted = [&](const ModelPtr& m, bool has) {
      return has ? m->with_parameter(name, m->parameters().get(name) + delta) : m;
    };
    return std::make_shared<SumModel>(shifted(a_, in_a), shifted(b_, in_b));
  }
  bool differentiable() const override { return a_->differentiable() && b_->differentiable(); }
  bool analytic_in_s() const override { return a_->analytic_in_s() && b_->analytic_in_s(); }

 private:
  ModelPtr a_;
  ModelPtr b_;
  ParameterSet params_;
};

}  // namespace

// --- ParameterSet -------------------------------------------------------------

double ParameterSet::get(std::string_view name) const {
  const auto it = values_.find(name);
  if (it == values_.end()) {
    throw Error(Errc::UnknownParameter, "unknown parameter '" + std::string(name) + "'");
  }
  return it->second;
}

std::vector<std::string> ParameterSet::names() const {
  std::vector<std::string> out;
  out.reserve(values_.size());
  for (const auto& [name, value] : values_) out.push_back(name);
  return out;
}

ParameterSet ParameterSet::merged(const ParameterSet& overrides) const {
  ParameterSet out = *this;
  for (const auto& [name, value] : overrides.values_) out.set(name, value);
  return out;
}

OperatingPoint OperatingPoint::from_terminal(double p_out, double q_out, double v, double omega_b) {
  OperatingPoint op;
  op.v_d0 = v;
  op.v_q0 = 0.0;
  // Delivered current conj(S / V) with V real; the drawn current is its negative.
  op.i_d0 = -p_out / v;
  op.i_q0 = q_out / v;
  op.omega0 = omega_b;
  op.omega_b = omega_b;
  return op;
}

// --- closed forms ---------------------------------------------------------------

DqAdmittance rl_branch_admittance(double r, double x, Complex s, double omega_b) {
  if (!(r >= 0.0) || !(x >= 0.0) || (r == 0.0 && x == 0.0) || !(omega_b > 0.0)) {
    throw Error(Errc::Validation, "rl_branch: need R >= 0, X >= 0, not both zero, omega_b > 0");
  }
  return inverse_rotational(r + (s / omega_b) * x, x, "rl_branch");
}

DqAdmittance shunt_c_admittance(double b, Complex s, double omega_b) {
  if (!(b > 0.0) || !(omega_b > 0.0)) throw Error(Errc::Validation, "shunt_c: need B > 0");
  return rotational((s / omega_b) * b, b);
}

DqAdmittance thevenin_grid(double scr, double xr_ratio, Complex s, double omega_b) {
  if (!(scr > 0.0) || !(xr_ratio > 0.0)) {
    throw Error(Errc::Validation, "thevenin: need SCR > 0 and X/R > 0");
  }
  if (scr > 1e6) throw Error(Errc::Validation, "thevenin: SCR above 1e6 approximates an ideal bus");
  const double x = 1.0 / scr;
  return rl_branch_admittance(x / xr_ratio, x, s, omega_b);
}

DqAdmittance gfl_admittance_L1(const ParameterSet& p, const OperatingPoint& op, Complex s) {
  const double wb = op.omega_b;
  const double x_c = p.get("L_c");
  const double r_c = p.get("R_c");
  const double kp_i = p.get("K_p_i");
  const double ki_i = p.get("K_i_i");
  const double kp_pll = p.get("K_p_pll");
  const double ki_pll = p.get("K_i_pll");
  const double t_v = p.get("T_v");

  const Eigen::Matrix2cd jm = kRot.cast<Complex>();
  const Eigen::Vector2cd e_q(0.0, 1.0);
  const Eigen::Vector2cd v0 = op.voltage().cast<Complex>();
  // Control equations are written for the delivered current.
  const Eigen::Vector2cd i_out = (-op.current_drawn()).cast<Complex>();
  const Eigen::Vector2cd v_m0 = v0 + (r_c * Eigen::Matrix2cd::Identity() + x_c * jm) * i_out;

  // Everything below is multiplied through by s so the integrators stay finite at dc.
  const Complex pll_num = wb * (kp_pll * s + ki_pll);
  const Complex pll_den = s * s + op.v_d0 * pll_num;
  const Complex t_pll = pll_num / pll_den;  // d(theta) / d(v_q)
  const Complex s_gci = kp_i * s + ki_i;    // s * G_ci
  const Complex f_v = 1.0 / (1.0 + s * t_v);

  // Z_f - D_dec = (R_c + s X_c / wb) I, so s * [Z_f + G_ci - D_dec] is scalar.
  const Complex s_m = s * (r_c + (s / wb) * x_c) + s_gci;
  if (s_m == Complex(0.0)) throw Error(Errc::Singular, "gfl: current-loop matrix is singular");

  // s * K_theta, with D_dec J = -X_c I.
  const Eigen::Vector2cd s_k = s_gci * (jm * i_out) + s * x_c * i_out - s * f_v * (jm * v0) + s * (jm * v_m0);
  const DqAdmittance s_n = s * (f_v - 1.0) * DqAdmittance::Identity() + t_pll * s_k * e_q.transpose();
  const DqAdmittance y = -(s_n / s_m);
  require_finite(y, "gfl");
  return y;
}

DqAdmittance gfm_admittance_L1(const ParameterSet& p, const OperatingPoint& op, Complex s) {
  const double wb = op.omega_b;
  const double h = p.get("H_vsm");
  const double d = p.get("D_vsm");
  const double x_v = p.get("L_v");
  const double r_v = p.get("R_v");

  const Eigen::Matrix2cd jm = kRot.cast<Complex>();
  const Eigen::Vector2cd v0 = op.voltage().cast<Complex>();
  const Eigen::Vector2cd i_out = (-op.current_drawn()).cast<Complex>();
  const Eigen::Vector2cd e0 = v0 + (r_v * Eigen::Matrix2cd::Identity() + x_v * jm) * i_out;
  const DqAdmittance zv_inv = inverse_rotational(r_v + (s / wb) * x_v, x_v, "gfm");

  // theta = -(wb / (s (2 H s + D))) * P_e, and P_e = i_out0^T v + v0^T i_out.
  const Complex inv_gain = s * (2.0 * h * s + d) / wb;
  const Eigen::RowVector2cd a = i_out.transpose() - v0.transpose() * zv_inv;
  const Complex coupling = (v0.transpose() * zv_inv * (jm * e0))(0, 0);
  const Complex den = inv_gain + coupling;
  if (den == Complex(0.0)) throw Error(Errc::Singular, "gfm: swing loop is singular");
  const Eigen::RowVector2cd g = -a / den;
  const DqAdmittance y = zv_inv * (DqAdmittance::Identity() - (jm * e0) * g);
  require_finite(y, "gfm");
  return y;
}

ParameterSet gfl_default_parameters() {
  return {{"L_c", 0.15},     {"R_c", 0.015},   {"K_p_i", 0.75},     {"K_i_i", 37.69},
          {"K_p_pll", 0.4},  {"K_i_pll", 30.28}, {"T_v", 0.002},    {"T_i", 0.0001},
          {"K_p_pq", 0.016}, {"K_i_pq", 31.4159}};
}

ParameterSet gfm_default_parameters() {
  return {{"H_vsm", 3.0}, {"K_vsm", 10.0}, {"D_vsm", 300.0}, {"L_v", 0.2},    {"R_v", 0.15},
          {"L_c", 0.1},   {"R_c", 0.02},   {"K_p_i", 0.5},   {"K_i_i", 37.69}};
}

std::vector<std::string> validate_gfl_parameters(const ParameterSet& params) {
  return validate_named(params, kGflKnown, kGflNonNegative, "gfl");
}

std::vector<std::string> validate_gfm_parameters(const ParameterSet& params) {
  return validate_named(params, kGfmKnown, kGfmNonNegative, "gfm");
}

std::vector<std::string> validate_operating_point(const OperatingPoint& op) {
  std::vector<std::string> issues;
  const std::array<double, 6> all = {op.v_d0, op.v_q0, op.i_d0, op.i_q0, op.omega0, op.omega_b};
  if (!std::all_of(all.begin(), all.end(), [](double v) { return std::isfinite(v); })) {
    issues.emplace_back("operating point: non-finite value");
  }
  if (!(op.omega_b > 0.0)) issues.emplace_back("operating point: omega_b must be positive");
  if (!(op.v_d0 > 0.0)) issues.emplace_back("operating point: v_d0 must be positive");
  if (std::abs(op.v_q0) > 1e-12) issues.emplace_back("operating point: frame must be aligned (v_q0 = 0)");
  return issues;
}

ModelPtr make_rl_branch(double r, double x, double omega_b) {
  (void)rl_branch_admittance(r, x, Complex(0.0), omega_b);
  return std::make_shared<RlBranchModel>(ParameterSet{{"R", r}, {"X", x}}, omega_b);
}

ModelPtr make_shunt_c(double b, double omega_b) {
  (void)shunt_c_admittance(b, Complex(0.0), omega_b);
  return std::make_shared<ShuntCModel>(ParameterSet{{"B", b}}, omega_b);
}

ModelPtr make_thevenin(double scr, double xr_ratio, double omega_b) {
  (void)thevenin_grid(scr, xr_ratio, Complex(0.0), omega_b);
  return std::make_shared<TheveninModel>(ParameterSet{{"SCR", scr}, {"XR", xr_ratio}}, omega_b);
}

ModelPtr make_gfl(const ParameterSet& params, const OperatingPoint& op) {
  const ParameterSet full = gfl_default_parameters().merged(params);
  auto issues = validate_gfl_parameters(full);
  const auto op_issues = validate_operating_point(op);
  issues.insert(issues.end(), op_issues.begin(), op_issues.end());
  if (!issues.empty()) throw ValidationError(std::move(issues));
  return std::make_shared<GflModel>(full, op);
}

ModelPtr make_gfm(const ParameterSet& params, const OperatingPoint& op) {
  const ParameterSet full = gfm_default_parameters().merged(params);
  auto issues = validate_gfm_parameters(full);
  const auto op_issues = validate_operating_point(op);
  issues.insert(issues.end(), op_issues.begin(), op_issues.end());
  if (!issues.empty()) throw ValidationError(std::move(issues));
  return std::make_shared<GfmModel>(full, op);
}

ModelPtr make_scaled(ModelPtr model, Complex factor) {
  return std::make_shared<ScaledModel>(std::move(model), factor);
}

ModelPtr make_sum(ModelPtr a, ModelPtr b) { return std::make_shared<SumModel>(std::move(a), std::move(b)); }

DqAdmittance param_derivative(const DeviceModel& model, std::string_view param, Complex s) {
  if (!model.differentiable()) {
    throw Error(Errc::NotDifferentiable, model.kind() + ": model has no parameters to differentiate");
  }
  const double rho = model.parameters().get(param);
  const double h = std::max(std::abs(rho), 1.0) * 1e-6;
  auto central = [&](double step) -> DqAdmittance {
    const DqAdmittance up = model.with_parameter(param, rho + step)->admittance(s);
    const DqAdmittance down = model.with_parameter(param, rho - step)->admittance(s);
    return (up - down) / (2.0 * step);
  };
  const DqAdmittance coarse = central(h);
  const DqAdmittance fine = central(0.5 * h);
  const DqAdmittance out = (4.0 * fine - coarse) / 3.0;
  require_finite(out, "param_derivative");
  return out;
}

}  // namespace passivity
