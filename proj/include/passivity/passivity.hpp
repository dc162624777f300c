#pragma once

// Device-level passivity index and its first-order parametric sensitivity.

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "passivity/devices.hpp"
#include "passivity/numerics.hpp"

namespace passivity {

// H = Y + Y^H.
template <typename Derived>
auto hermitian_part(const Eigen::MatrixBase<Derived>& y) -> typename Derived::PlainObject {
  return y + y.adjoint();
}

// dH for a perturbation dY, entry by entry from the four-case table:
//   diagonal H_pp          <- 2 Re{dy_pp}
//   H_pq (p != q)          <- dy_pq                  (i = p, j = q)
//                           + conj(dy_qp)            (i != p, j != q)
// Identical to hermitian_part(dY); kept as the literal form for cross-checking.
DqAdmittance hermitian_variation_cases(const DqAdmittance& dy);

struct PassivityPoint {
  double omega = 0.0;
  double index = 0.0;      // minimum eigenvalue of Y + Y^H
  double eigen_gap = 0.0;  // second eigenvalue minus the minimum
  Eigen::Vector2cd min_vector = Eigen::Vector2cd::Zero();
  double hermitian_norm = 0.0;

  bool degenerate() const { return eigen_gap <= kDegeneracyTolerance * hermitian_norm; }
};

PassivityPoint passivity_point(const DqAdmittance& y, double omega);
double passivity_index(const DqAdmittance& y);

// Minimum-eigenvalue derivative phi^H dH phi; nullopt when the minimum is degenerate.
template <typename Real>
std::optional<Real> min_eigenvalue_derivative(const HermitianEigen<Real>& eig, const CMatrixT<Real>& dh,
                                              Real hermitian_norm) {
  if (eig.values.size() > 1 && eig.min_gap() <= Real(kDegeneracyTolerance) * hermitian_norm) {
    return std::nullopt;
  }
  const auto phi = eig.vectors.col(0);
  return (phi.adjoint() * dh * phi)(0, 0).real();
}

std::vector<PassivityPoint> index_sweep(const DeviceModel& model, const std::vector<double>& omegas);

struct SensitivityPoint {
  double omega = 0.0;
  double index = 0.0;
  std::optional<double> derivative;  // empty at degenerate points

  bool degenerate() const { return !derivative.has_value(); }
};

struct SensitivitySeries {
  std::string target;
  std::vector<SensitivityPoint> points;
};

SensitivitySeries param_passivity_sensitivity(const DeviceModel& model, std::string_view param,
                                              const std::vector<double>& omegas);

// Perturbed-exact and first-order index curves for rho -> rho + delta_rho.
struct PredictionCurves {
  std::vector<double> omega;
  std::vector<double> base;
  std::vector<double> exact;      // index recomputed with the perturbed parameter
  std::vector<double> predicted;  // base + delta_rho * dIndex/drho (NaN where degenerate)
  std::vector<bool> degenerate;

  // max |exact - predicted| and max |exact - base| over non-degenerate points.
  double max_prediction_error() const;
  double max_exact_change() const;
};

PredictionCurves first_order_prediction(const DeviceModel& model, std::string_view param, double delta_rho,
                                        const std::vector<double>& omegas);

// Logarithmically spaced frequencies in Hz, endpoints included.
std::vector<double> log_grid(double f_min_hz, double f_max_hz, std::size_t points);
std::vector<double> log_grid_per_decade(double f_min_hz, double f_max_hz, double points_per_decade);
std::vector<double> to_omega(const std::vector<double>& freq_hz);

}  // namespace passivity
