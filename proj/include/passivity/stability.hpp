#pragma once

// Generalized Nyquist criterion, frequency-domain participation factors and
// mode refinement on det Y^n(s).

#include <functional>
#include <optional>
#include <vector>

#include "passivity/network.hpp"

namespace passivity {

using MatrixFunction = std::function<CMatrix(Complex)>;
using ScalarFunction = std::function<Complex(Complex)>;

class RefineGridError : public Error {
 public:
  RefineGridError(const std::string& what, double omega_lo, double omega_hi)
      : Error(Errc::RefineGrid, what), lo_(omega_lo), hi_(omega_hi) {}
  double omega_lo() const { return lo_; }
  double omega_hi() const { return hi_; }

 private:
  double lo_;
  double hi_;
};

// L = Z^net Y^a with Z^net = (Y^net)^-1.
CMatrix loop_gain(const Network& net, Complex s);

struct LoopGainLoci {
  std::vector<double> omegas;
  std::vector<CVector> tracks;  // tracks[k](t): track t at omegas[k]
};

struct GncVerdict {
  int encirclements = 0;  // clockwise encirclements of (-1, 0) over the closed contour
  bool stable = true;
  double min_distance = 0.0;  // closest approach of any locus to (-1, 0)
};

struct GncResult {
  LoopGainLoci loci;
  GncVerdict verdict;
};

// Minimum-total-displacement matching: result[i] is the column assigned to row i.
std::vector<std::size_t> min_cost_assignment(const RMatrix& cost);

// omegas must be strictly increasing and non-negative. RefineGrid is raised when
// any adjacent displacement reaches a quarter of the distance to (-1, 0).
GncResult gnc(const MatrixFunction& loop, const std::vector<double>& omegas);
GncResult gnc(const Network& net, const std::vector<double>& omegas);
// Inserts log-midpoints where the grid is too coarse and widens the ends when the
// contour closure is not resolved; gives up with RefineGrid beyond max_points.
GncResult gnc_adaptive(const MatrixFunction& loop, std::vector<double> omegas, std::size_t max_points = 50000);
GncResult gnc_adaptive(const Network& net, std::vector<double> omegas, std::size_t max_points = 50000);

struct FdParticipation {
  Complex s;
  Complex critical;                  // eigenvalue of Y^n(s) with smallest modulus
  Eigen::Index critical_index = 0;
  bool tie = false;                  // another eigenvalue has the same modulus within 1e-6
  CMatrix matrix;                    // P_ij = psi_c[i] * phi_c[j] = d(lambda_c)/d(Y_ij)
  CVector bus;                       // sum of the diagonal of each 2x2 block
};

FdParticipation fd_pf(const CMatrix& yn, Complex s);
FdParticipation fd_pf(const Network& net, Complex s);

struct Region {
  double re_min = -1e300;
  double re_max = 1e300;
  double im_min = -1e300;
  double im_max = 1e300;
  bool contains(Complex s) const {
    return s.real() >= re_min && s.real() <= re_max && s.imag() >= im_min && s.imag() <= im_max;
  }
};

struct ModeEstimate {
  Complex lambda;
  double residual = 0.0;  // |f(lambda)|
  double scale = 0.0;     // largest |f| seen during the iteration
  bool converged = false;
  int iterations = 0;
};

// Muller iteration; converged when |ds| <= 1e-9 max(|s|, omega_b) and the residual
// is below 1e-8 of the running scale. NoConvergence after 100 iterations,
// OutOfRegion when an iterate leaves `region`.
ModeEstimate refine_root(const ScalarFunction& f, Complex s0, double omega_b, const Region& region = {});
ModeEstimate refine_mode(const Network& net, Complex s0, const Region& region = {});

struct ModeScan {
  std::vector<ModeEstimate> modes;  // Im >= 0 representatives, sorted by (re, im)
  bool unstable = false;            // some mode with Re > 0
};

// Seeds an n_re x n_im grid over the region, a real-axis row and a few real seeds
// close to the origin, then repeats the seeds with the found roots divided out.
// Conjugate partners of real-coefficient systems are folded into Im >= 0.
ModeScan scan_modes(const ScalarFunction& f, const Region& region, int n_re, int n_im, double omega_b);
ModeScan scan_modes(const Network& net, const Region& region, int n_re, int n_im);

Complex nodal_determinant(const Network& net, Complex s);

// xi = -tr(adj(Y^n(lambda))) / det'(lambda).
Complex xi_coefficient(const MatrixFunction& yn, Complex lambda, double omega_b);
Complex xi_coefficient(const Network& net, Complex lambda);

// d(lambda)/d(Y^n_ij) for a system mode lambda: xi times the full-modal participation matrix.
CMatrix mode_sensitivity(const MatrixFunction& yn, Complex lambda, double omega_b);
CMatrix mode_sensitivity(const Network& net, Complex lambda);

}  // namespace passivity
