#include "passivity/passivity.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "passivity/parallel.hpp"

namespace passivity {

namespace {

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

void require_increasing(const std::vector<double>& omegas, const char* op) {
  for (std::size_t k = 0; k < omegas.size(); ++k) {
    if (!std::isfinite(omegas[k])) throw Error(Errc::NonFinite, std::string(op) + ": non-finite frequency");
    if (k > 0 && !(omegas[k] > omegas[k - 1])) {
      throw Error(Errc::Validation, std::string(op) + ": frequencies must be strictly increasing");
    }
  }
}

}  // namespace

DqAdmittance hermitian_variation_cases(const DqAdmittance& dy) {
  DqAdmittance dh;
  // Entry (p, q) of dH collects dy_ij according to where (i, j) sits relative to (p, q).
  for (int p = 0; p < 2; ++p) {
    for (int q = 0; q < 2; ++q) {
      Complex acc(0.0, 0.0);
      for (int i = 0; i < 2; ++i) {
        for (int j = 0; j < 2; ++j) {
          const bool direct = (i == p && j == q);
          const bool mirrored = (i == q && j == p);
          if (direct && mirrored) {
            acc += Complex(2.0 * dy(i, j).real(), 0.0);
          } else if (direct) {
            acc += dy(i, j);
          } else if (mirrored) {
            acc += std::conj(dy(i, j));
          }
        }
      }
      dh(p, q) = acc;
    }
  }
  return dh;
}

PassivityPoint passivity_point(const DqAdmittance& y, double omega) {
  detail::require_finite(y, "passivity_index");
  const CMatrix h = hermitian_part(y);
  const auto eig = hermitian_eigen(h);
  PassivityPoint pt;
  pt.omega = omega;
  pt.index = eig.min_value();
  pt.eigen_gap = std::max(0.0, eig.min_gap());
  pt.min_vector = eig.vectors.col(0);
  pt.hermitian_norm = h.norm();
  return pt;
}

double passivity_index(const DqAdmittance& y) { return passivity_point(y, 0.0).index; }

std::vector<PassivityPoint> index_sweep(const DeviceModel& model, const std::vector<double>& omegas) {
  return parallel_map(omegas.size(), [&](std::size_t k) {
    const double w = omegas[k];
    return at_omega(w, [&] { return passivity_point(model.admittance(Complex(0.0, w)), w); });
  });
}

SensitivitySeries param_passivity_sensitivity(const DeviceModel& model, std::string_view param,
                                              const std::vector<double>& omegas) {
  require_increasing(omegas, "param_passivity_sensitivity");
  if (!model.differentiable()) {
    throw Error(Errc::NotDifferentiable, model.kind() + ": model has no parameters to differentiate");
  }
  model.parameters().get(param);  // UnknownParameter before any work

  SensitivitySeries series;
  series.target = std::string(param);
  series.points = parallel_map(omegas.size(), [&](std::size_t k) {
    const double w = omegas[k];
    return at_omega(w, [&] {
      const Complex s(0.0, w);
      const CMatrix h = hermitian_part(model.admittance(s));
      detail::require_finite(h, "param_passivity_sensitivity");
      const auto eig = hermitian_eigen(h);
      SensitivityPoint pt;
      pt.omega = w;
      pt.index = eig.min_value();
      const CMatrix dh = hermitian_part(param_derivative(model, param, s));
      pt.derivative = min_eigenvalue_derivative(eig, dh, h.norm());
      return pt;
    });
  });
  return series;
}

double PredictionCurves::max_prediction_error() const {
  double m = 0.0;
  for (std::size_t k = 0; k < omega.size(); ++k) {
    if (!degenerate[k]) m = std::max(m, std::abs(exact[k] - predicted[k]));
  }
  return m;
}

double PredictionCurves::max_exact_change() const {
  double m = 0.0;
  for (std::size_t k = 0; k < omega.size(); ++k) {
    if (!degenerate[k]) m = std::max(m, std::abs(exact[k] - base[k]));
  }
  return m;
}

PredictionCurves first_order_prediction(const DeviceModel& model, std::string_view param, double delta_rho,
                                        const std::vector<double>& omegas) {
  const auto sens = param_passivity_sensitivity(model, param, omegas);
  const double rho = model.parameters().get(param);
  const ModelPtr perturbed = model.with_parameter(param, rho + delta_rho);
  const auto exact = index_sweep(*perturbed, omegas);

  PredictionCurves out;
  const std::size_t n = omegas.size();
  out.omega = omegas;
  out.base.resize(n);
  out.exact.resize(n);
  out.predicted.resize(n);
  out.degenerate.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    const auto& pt = sens.points[k];
    out.base[k] = pt.index;
    out.exact[k] = exact[k].index;
    out.degenerate[k] = pt.degenerate();
    out.predicted[k] = pt.derivative ? pt.index + delta_rho * *pt.derivative
                                     : std::numeric_limits<double>::quiet_NaN();
  }
  return out;
}

std::vector<double> log_grid(double f_min_hz, double f_max_hz, std::size_t points) {
  if (!(f_min_hz > 0.0) || !(f_max_hz > f_min_hz) || points < 2) {
    throw Error(Errc::Validation, "log_grid: need 0 < f_min < f_max and at least 2 points");
  }
  std::vector<double> f(points);
  const double a = std::log10(f_min_hz);
  const double b = std::log10(f_max_hz);
  for (std::size_t k = 0; k < points; ++k) {
    f[k] = std::pow(10.0, a + (b - a) * static_cast<double>(k) / static_cast<double>(points - 1));
  }
  f.front() = f_min_hz;
  f.back() = f_max_hz;
  return f;
}

std::vector<double> log_grid_per_decade(double f_min_hz, double f_max_hz, double points_per_decade) {
  if (!(points_per_decade > 0.0)) throw Error(Errc::Validation, "log_grid: points per decade must be positive");
  const double decades = std::log10(f_max_hz / f_min_hz);
  const auto n = static_cast<std::size_t>(std::ceil(decades * points_per_decade)) + 1;
  return log_grid(f_min_hz, f_max_hz, std::max<std::size_t>(n, 2));
}

std::vector<double> to_omega(const std::vector<double>& freq_hz) {
  std::vector<double> w(freq_hz.size());
  std::transform(freq_hz.begin(), freq_hz.end(), w.begin(), [](double f) { return 2.0 * kPi * f; });
  return w;
}

}  // namespace passivity
