#pragma once

#include <complex>

#include <Eigen/Core>

namespace passivity {

template <typename Real> using ComplexT = std::complex<Real>;
template <typename Real>
using CMatrixT = Eigen::Matrix<std::complex<Real>, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Real> using CVectorT = Eigen::Matrix<std::complex<Real>, Eigen::Dynamic, 1>;
template <typename Real> using RVectorT = Eigen::Matrix<Real, Eigen::Dynamic, 1>;

using Complex = std::complex<double>;
using CMatrix = CMatrixT<double>;
using CVector = CVectorT<double>;
using RVector = RVectorT<double>;
using RMatrix = Eigen::MatrixXd;

// dq-frame admittance of a single device or branch: current drawn per unit voltage.
using DqAdmittance = Eigen::Matrix2cd;

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr Complex kJ{0.0, 1.0};

// Relative eigen-gap below which a minimum eigenvalue is treated as degenerate.
inline constexpr double kDegeneracyTolerance = 1e-9;

}  // namespace passivity
