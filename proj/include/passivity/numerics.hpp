#pragma once

// Dense complex linear algebra used throughout the library: a cyclic Jacobi
// solver for Hermitian matrices, a Hessenberg + shifted QR solver for general
// matrices, and determinant/adjugate/inverse helpers. Everything is templated
// on the real scalar so the same code runs in double or long double.

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "passivity/errors.hpp"
#include "passivity/types.hpp"

namespace passivity {

template <typename Real> struct HermitianEigen {
  RVectorT<Real> values;    // ascending
  CMatrixT<Real> vectors;   // unitary, column k pairs with values[k]
  int sweeps = 0;

  Real min_value() const { return values(0); }
  // Distance from the minimum eigenvalue to the next one (0 for 1x1).
  Real min_gap() const { return values.size() > 1 ? values(1) - values(0) : Real(0); }
};

template <typename Real> struct GeneralEigen {
  CVectorT<Real> values;   // sorted by (real, imag)
  CMatrixT<Real> right;    // unit-norm columns
  CMatrixT<Real> left;     // rows; left * right = I when not defective
  bool defective = false;
  Real condition = 0;      // 2-norm condition number of `right`
};

namespace detail {

template <typename Derived>
void require_square(const Eigen::MatrixBase<Derived>& a, const char* op) {
  if (a.rows() != a.cols()) {
    throw Error(Errc::Validation, std::string(op) + ": matrix must be square");
  }
}

template <typename Derived> bool all_finite(const Eigen::MatrixBase<Derived>& a) {
  for (Eigen::Index j = 0; j < a.cols(); ++j) {
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      const auto& z = a(i, j);
      if (!std::isfinite(std::real(z)) || !std::isfinite(std::imag(z))) return false;
    }
  }
  return true;
}

template <typename Derived>
void require_finite(const Eigen::MatrixBase<Derived>& a, const char* op) {
  if (!all_finite(a)) throw Error(Errc::NonFinite, std::string(op) + ": non-finite entry");
}

// Stable ordering permutation for a comparison on indices.
template <typename Less> std::vector<Eigen::Index> sorted_order(Eigen::Index n, Less less) {
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(), less);
  return order;
}

template <typename Real> Real singular_condition(const CMatrixT<Real>& a) {
  if (a.size() == 0) return Real(1);
  Eigen::JacobiSVD<CMatrixT<Real>> svd(a);
  const auto& sv = svd.singularValues();
  const Real smax = sv(0);
  const Real smin = sv(sv.size() - 1);
  if (smin == Real(0)) return std::numeric_limits<Real>::infinity();
  return smax / smin;
}

// Complex Givens rotation G = [[c, s], [-conj(s), c]] with G * [x; y] = [r; 0].
template <typename Real> struct Givens {
  Real c;
  std::complex<Real> s;
};

template <typename Real>
Givens<Real> make_givens(const std::complex<Real>& x, const std::complex<Real>& y) {
  const Real ax = std::abs(x);
  const Real ay = std::abs(y);
  if (ay == Real(0)) return {Real(1), std::complex<Real>(0)};
  if (ax == Real(0)) return {Real(0), std::conj(y) / ay};
  const Real norm = std::hypot(ax, ay);
  return {ax / norm, (x / ax) * std::conj(y) / norm};
}

template <typename Real>
void reduce_to_hessenberg(CMatrixT<Real>& h, CMatrixT<Real>& q) {
  using C = std::complex<Real>;
  const Eigen::Index n = h.rows();
  q.setIdentity(n, n);
  for (Eigen::Index k = 0; k + 2 < n; ++k) {
    CVectorT<Real> x = h.col(k).tail(n - k - 1);
    const Real alpha = x.norm();
    if (alpha == Real(0)) continue;
    const C phase = std::abs(x(0)) == Real(0) ? C(1) : x(0) / std::abs(x(0));
    CVectorT<Real> v = x;
    v(0) += phase * alpha;
    const Real vnorm = v.norm();
    if (vnorm == Real(0)) continue;
    v /= vnorm;
    // P = I - 2 v v^H applied from both sides.
    auto rows = h.bottomRows(n - k - 1);
    rows -= Real(2) * v * (v.adjoint() * rows);
    auto cols = h.rightCols(n - k - 1);
    cols -= Real(2) * (cols * v) * v.adjoint();
    auto qcols = q.rightCols(n - k - 1);
    qcols -= Real(2) * (qcols * v) * v.adjoint();
    h.col(k).tail(n - k - 2).setZero();
  }
}

// Reduces upper Hessenberg `t` to upper triangular Schur form, accumulating into `z`.
template <typename Real>
void schur_qr(CMatrixT<Real>& t, CMatrixT<Real>& z, int max_iterations) {
  using C = std::complex<Real>;
  const Eigen::Index n = t.rows();
  const Real eps = std::numeric_limits<Real>::epsilon();
  const Real scale = std::max(t.cwiseAbs().maxCoeff(), std::numeric_limits<Real>::min());
  const Real small = std::numeric_limits<Real>::min() / eps;
  int total = 0;
  int window_iterations = 0;
  Eigen::Index hi = n - 1;
  while (hi > 0) {
    Eigen::Index lo = hi;
    while (lo > 0) {
      const Real sub = std::abs(t(lo, lo - 1));
      Real ref = std::abs(t(lo - 1, lo - 1)) + std::abs(t(lo, lo));
      if (ref == Real(0)) ref = scale;
      if (sub <= eps * ref || sub <= small) break;
      --lo;
    }
    if (lo > 0) t(lo, lo - 1) = C(0);
    if (lo == hi) {
      --hi;
      window_iterations = 0;
      continue;
    }
    if (++total > max_iterations) {
      std::vector<std::complex<double>> partial;
      for (Eigen::Index k = hi + 1; k < n; ++k) {
        partial.emplace_back(static_cast<double>(t(k, k).real()),
                             static_cast<double>(t(k, k).imag()));
      }
      throw NoConvergenceError("general_eigen: QR iteration cap of " +
                                   std::to_string(max_iterations) + " exceeded",
                               std::move(partial));
    }
    ++window_iterations;

    C shift;
    if (window_iterations % 10 == 0) {
      shift = t(hi, hi) + Real(0.75) * std::abs(t(hi, hi - 1));
    } else {
      // Wilkinson shift: eigenvalue of the trailing 2x2 block closest to t(hi, hi).
      const C a = t(hi - 1, hi - 1);
      const C b = t(hi - 1, hi);
      const C c = t(hi, hi - 1);
      const C d = t(hi, hi);
      const C half_tr = (a + d) / Real(2);
      const C disc = std::sqrt((a - d) * (a - d) / Real(4) + b * c);
      const C mu1 = half_tr + disc;
      const C mu2 = half_tr - disc;
      shift = std::abs(mu1 - d) < std::abs(mu2 - d) ? mu1 : mu2;
    }

    C x = t(lo, lo) - shift;
    C y = t(lo + 1, lo);
    for (Eigen::Index k = lo; k < hi; ++k) {
      const Givens<Real> g = make_givens(x, y);
      const Eigen::Index first_col = k > lo ? k - 1 : k;
      for (Eigen::Index j = first_col; j < n; ++j) {
        const C u = t(k, j);
        const C w = t(k + 1, j);
        t(k, j) = g.c * u + g.s * w;
        t(k + 1, j) = -std::conj(g.s) * u + g.c * w;
      }
      const Eigen::Index last_row = std::min(k + 2, hi);
      for (Eigen::Index i = 0; i <= last_row; ++i) {
        const C u = t(i, k);
        const C w = t(i, k + 1);
        t(i, k) = u * g.c + w * std::conj(g.s);
        t(i, k + 1) = -u * g.s + w * g.c;
      }
      for (Eigen::Index i = 0; i < n; ++i) {
        const C u = z(i, k);
        const C w = z(i, k + 1);
        z(i, k) = u * g.c + w * std::conj(g.s);
        z(i, k + 1) = -u * g.s + w * g.c;
      }
      if (k + 1 < hi) {
        x = t(k + 1, k);
        y = t(k + 2, k);
      }
    }
  }
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = j + 1; i < n; ++i) t(i, j) = C(0);
  }
}

}  // namespace detail

// Cyclic complex Jacobi. Throws NotHermitian, NonFinite or NoConvergence (100 sweeps).
template <typename Derived>
auto hermitian_eigen(const Eigen::MatrixBase<Derived>& h_in)
    -> HermitianEigen<typename Eigen::NumTraits<typename Derived::Scalar>::Real> {
  using Real = typename Eigen::NumTraits<typename Derived::Scalar>::Real;
  using C = std::complex<Real>;
  using Matrix = CMatrixT<Real>;
  constexpr int kMaxSweeps = 100;

  detail::require_square(h_in, "hermitian_eigen");
  detail::require_finite(h_in, "hermitian_eigen");
  const Matrix h = h_in.template cast<C>();
  const Eigen::Index n = h.rows();
  const Real norm = h.norm();
  if ((h - h.adjoint()).norm() > Real(1e-9) * norm) {
    throw Error(Errc::NotHermitian, "hermitian_eigen: input is not Hermitian");
  }

  Matrix a = (h + h.adjoint()) / Real(2);
  Matrix v = Matrix::Identity(n, n);
  const Real threshold = Real(8) * std::numeric_limits<Real>::epsilon() * norm;

  int sweep = 0;
  for (;; ++sweep) {
    bool rotated = false;
    for (Eigen::Index p = 0; p + 1 < n; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        const C b = a(p, q);
        const Real r = std::abs(b);
        if (r <= threshold) continue;
        rotated = true;
        // Phase change makes the (p, q) entry real, then a real Jacobi rotation zeroes it.
        const C phase = std::conj(b / r);
        const Real theta = (a(q, q).real() - a(p, p).real()) / (Real(2) * r);
        const Real t = (theta >= Real(0) ? Real(1) : Real(-1)) /
                       (std::abs(theta) + std::sqrt(theta * theta + Real(1)));
        const Real c = Real(1) / std::sqrt(t * t + Real(1));
        const Real s = t * c;
        const C u_pp = c;
        const C u_pq = s;
        const C u_qp = -s * phase;
        const C u_qq = c * phase;
        for (Eigen::Index k = 0; k < n; ++k) {
          const C akp = a(k, p);
          const C akq = a(k, q);
          a(k, p) = akp * u_pp + akq * u_qp;
          a(k, q) = akp * u_pq + akq * u_qq;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const C apk = a(p, k);
          const C aqk = a(q, k);
          a(p, k) = std::conj(u_pp) * apk + std::conj(u_qp) * aqk;
          a(q, k) = std::conj(u_pq) * apk + std::conj(u_qq) * aqk;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const C vkp = v(k, p);
          const C vkq = v(k, q);
          v(k, p) = vkp * u_pp + vkq * u_qp;
          v(k, q) = vkp * u_pq + vkq * u_qq;
        }
        a(p, q) = C(0);
        a(q, p) = C(0);
        a(p, p) = C(a(p, p).real());
        a(q, q) = C(a(q, q).real());
      }
    }
    if (!rotated) break;
    if (sweep + 1 >= kMaxSweeps) {
      throw NoConvergenceError("hermitian_eigen: Jacobi sweep cap exceeded", {});
    }
  }

  HermitianEigen<Real> out;
  out.sweeps = sweep;
  const auto order = detail::sorted_order(
      n, [&](Eigen::Index i, Eigen::Index j) { return a(i, i).real() < a(j, j).real(); });
  out.values.resize(n);
  out.vectors.resize(n, n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const Eigen::Index src = order[static_cast<std::size_t>(k)];
    out.values(k) = a(src, src).real();
    out.vectors.col(k) = v.col(src);
  }
  return out;
}

// Hessenberg reduction + shifted QR (cap 30 n iterations). Right eigenvectors come
// from Schur back-substitution refined by one inverse-iteration step on the input.
template <typename Derived>
auto general_eigen(const Eigen::MatrixBase<Derived>& a_in)
    -> GeneralEigen<typename Eigen::NumTraits<typename Derived::Scalar>::Real> {
  using Real = typename Eigen::NumTraits<typename Derived::Scalar>::Real;
  using C = std::complex<Real>;
  using Matrix = CMatrixT<Real>;
  using Vector = CVectorT<Real>;

  detail::require_square(a_in, "general_eigen");
  detail::require_finite(a_in, "general_eigen");
  const Matrix a = a_in.template cast<C>();
  const Eigen::Index n = a.rows();
  GeneralEigen<Real> out;
  if (n == 0) return out;

  Matrix t = a;
  Matrix z;
  detail::reduce_to_hessenberg(t, z);
  detail::schur_qr(t, z, static_cast<int>(30 * n));

  const Real eps = std::numeric_limits<Real>::epsilon();
  const Real norm = std::max(a.norm(), std::numeric_limits<Real>::min());
  const Real smin = std::max(eps * norm, std::numeric_limits<Real>::min());

  Matrix right(n, n);
  for (Eigen::Index k = 0; k < n; ++k) {
    Vector x = Vector::Zero(n);
    x(k) = C(1);
    for (Eigen::Index i = k - 1; i >= 0; --i) {
      C acc(0);
      for (Eigen::Index j = i + 1; j <= k; ++j) acc += t(i, j) * x(j);
      C denom = t(i, i) - t(k, k);
      if (std::abs(denom) < smin) denom = C(smin);
      x(i) = -acc / denom;
    }
    Vector v = z * x;
    v /= v.norm();
    // One inverse-iteration step with a slightly displaced shift.
    const C mu = t(k, k) + C(Real(1e-10) * norm, 0);
    Matrix shifted = a - mu * Matrix::Identity(n, n);
    Vector w = shifted.partialPivLu().solve(v);
    const Real wn = w.norm();
    if (std::isfinite(wn) && wn > Real(0)) {
      w /= wn;
      // Keep the refined vector only if it is at least as good.
      const Real res_v = (a * v - t(k, k) * v).norm();
      const Real res_w = (a * w - t(k, k) * w).norm();
      if (res_w <= res_v) v = w;
    }
    right.col(k) = v;
  }

  out.condition = detail::singular_condition<Real>(right);
  out.defective = !(out.condition <= Real(1e12));
  Matrix left;
  if (!out.defective) {
    left = right.partialPivLu().inverse();
  } else {
    left = right.completeOrthogonalDecomposition().pseudoInverse();
  }

  const auto order = detail::sorted_order(n, [&](Eigen::Index i, Eigen::Index j) {
    const C& x = t(i, i);
    const C& y = t(j, j);
    if (x.real() != y.real()) return x.real() < y.real();
    return x.imag() < y.imag();
  });
  out.values.resize(n);
  out.right.resize(n, n);
  out.left.resize(n, n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const Eigen::Index src = order[static_cast<std::size_t>(k)];
    out.values(k) = t(src, src);
    out.right.col(k) = right.col(src);
    out.left.row(k) = left.row(src);
  }
  return out;
}

template <typename Derived>
auto determinant(const Eigen::MatrixBase<Derived>& a) -> typename Derived::Scalar {
  detail::require_square(a, "determinant");
  using Scalar = typename Derived::Scalar;
  if (a.rows() == 0) return Scalar(1);
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  return Matrix(a).partialPivLu().determinant();
}

template <typename Derived>
auto trace(const Eigen::MatrixBase<Derived>& a) -> typename Derived::Scalar {
  detail::require_square(a, "trace");
  return a.trace();
}

// A * adj(A) = det(A) * I, well defined for singular A. Cofactor expansion for
// n <= 8, column replacement (adj(A)(j, i) = det(A with column j := e_i)) above.
template <typename Derived>
auto adjugate(const Eigen::MatrixBase<Derived>& a_in)
    -> Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic> {
  using Scalar = typename Derived::Scalar;
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  detail::require_square(a_in, "adjugate");
  const Matrix a = a_in;
  const Eigen::Index n = a.rows();
  Matrix adj(n, n);
  if (n == 0) return adj;
  if (n == 1) {
    adj(0, 0) = Scalar(1);
    return adj;
  }
  if (n <= 8) {
    Matrix minor(n - 1, n - 1);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < n; ++j) {
        for (Eigen::Index r = 0, mr = 0; r < n; ++r) {
          if (r == i) continue;
          for (Eigen::Index c = 0, mc = 0; c < n; ++c) {
            if (c == j) continue;
            minor(mr, mc) = a(r, c);
            ++mc;
          }
          ++mr;
        }
        const Scalar sign = ((i + j) % 2 == 0) ? Scalar(1) : Scalar(-1);
        adj(j, i) = sign * minor.partialPivLu().determinant();
      }
    }
    return adj;
  }
  for (Eigen::Index j = 0; j < n; ++j) {
    Matrix replaced = a;
    for (Eigen::Index i = 0; i < n; ++i) {
      replaced.col(j).setZero();
      replaced(i, j) = Scalar(1);
      adj(j, i) = replaced.partialPivLu().determinant();
    }
  }
  return adj;
}

// Throws Singular when the 2-norm condition number reaches 1e14.
template <typename Derived>
auto inverse(const Eigen::MatrixBase<Derived>& a_in)
    -> Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic> {
  using Scalar = typename Derived::Scalar;
  using Real = typename Eigen::NumTraits<Scalar>::Real;
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  detail::require_square(a_in, "inverse");
  detail::require_finite(a_in, "inverse");
  const Matrix a = a_in;
  const CMatrixT<Real> ac = a.template cast<std::complex<Real>>();
  if (!(detail::singular_condition<Real>(ac) < Real(1e14))) {
    throw Error(Errc::Singular, "inverse: matrix is singular to working precision");
  }
  return a.partialPivLu().inverse();
}

template <typename DerivedA, typename DerivedB>
auto solve(const Eigen::MatrixBase<DerivedA>& a_in, const Eigen::MatrixBase<DerivedB>& b)
    -> Eigen::Matrix<typename DerivedA::Scalar, Eigen::Dynamic, DerivedB::ColsAtCompileTime> {
  using Scalar = typename DerivedA::Scalar;
  using Real = typename Eigen::NumTraits<Scalar>::Real;
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  detail::require_square(a_in, "solve");
  detail::require_finite(a_in, "solve");
  if (b.rows() != a_in.rows()) throw Error(Errc::Validation, "solve: dimension mismatch");
  const Matrix a = a_in;
  const CMatrixT<Real> ac = a.template cast<std::complex<Real>>();
  if (!(detail::singular_condition<Real>(ac) < Real(1e14))) {
    throw Error(Errc::Singular, "solve: matrix is singular to working precision");
  }
  return a.partialPivLu().solve(b);
}

}  // namespace passivity
