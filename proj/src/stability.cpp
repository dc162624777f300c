#include "passivity/stability.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>

#include "passivity/numerics.hpp"
#include "passivity/parallel.hpp"

namespace passivity {

namespace {

constexpr double kDisplacementRatio = 0.25;
constexpr double kAmbiguityRatio = 0.5;
constexpr double kHighestOmega = 1e12;
constexpr int kMullerIterations = 100;

std::string omega_text(double omega) {
  std::ostringstream os;
  os.precision(10);
  os << "at omega = " << omega << " rad/s";
  return os.str();
}

std::string interval_text(double lo, double hi) {
  std::ostringstream os;
  os.precision(10);
  os << "[" << lo << ", " << hi << "] rad/s";
  return os.str();
}

void require_increasing(const std::vector<double>& omegas, const char* op) {
  if (omegas.size() < 2) throw Error(Errc::Validation, std::string(op) + ": at least two frequencies are required");
  for (std::size_t k = 0; k < omegas.size(); ++k) {
    if (!std::isfinite(omegas[k]) || omegas[k] < 0.0)
      throw Error(Errc::Validation, std::string(op) + ": frequencies must be finite and non-negative");
    if (k > 0 && !(omegas[k] > omegas[k - 1]))
      throw Error(Errc::Validation, std::string(op) + ": frequencies must be strictly increasing");
  }
}

CVector loop_eigenvalues(const MatrixFunction& loop, double omega) {
  try {
    return general_eigen(loop(Complex(0.0, omega))).values;
  } catch (const Error& e) {
    throw e.with_context(omega_text(omega));
  }
}

double min_pairwise_distance(const CVector& v) {
  double best = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < v.size(); ++i)
    for (Eigen::Index j = i + 1; j < v.size(); ++j) best = std::min(best, std::abs(v(i) - v(j)));
  return best;
}

// Reorders `cur` so that entry t continues track t of `prev`.
CVector match_to(const CVector& prev, const CVector& cur) {
  const Eigen::Index n = prev.size();
  std::vector<bool> used(static_cast<std::size_t>(n), false);
  CVector greedy(n);
  double worst = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::Index best = -1;
    double best_d = std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < n; ++j) {
      if (used[static_cast<std::size_t>(j)]) continue;
      const double d = std::abs(prev(i) - cur(j));
      if (best < 0 || d < best_d) {
        best = j;
        best_d = d;
      }
    }
    used[static_cast<std::size_t>(best)] = true;
    greedy(i) = cur(best);
    worst = std::max(worst, best_d);
  }
  if (worst <= kAmbiguityRatio * min_pairwise_distance(cur)) return greedy;

  RMatrix cost(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) cost(i, j) = std::abs(prev(i) - cur(j));
  const auto assign = min_cost_assignment(cost);
  CVector out(n);
  for (Eigen::Index i = 0; i < n; ++i) out(i) = cur(static_cast<Eigen::Index>(assign[static_cast<std::size_t>(i)]));
  return out;
}

bool segment_resolved(Complex from, Complex to) {
  const double dist = std::min(std::abs(from + 1.0), std::abs(to + 1.0));
  if (std::abs(to - from) >= kDisplacementRatio * dist) return false;
  return std::abs(std::arg((to + 1.0) / (from + 1.0))) < kPi;
}

double angle_increment(Complex from, Complex to) { return std::arg((to + 1.0) / (from + 1.0)); }

struct Closure {
  std::vector<std::size_t> partner;  // track a joins the conjugate of track partner[a]
  bool resolved = true;
};

Closure conjugate_closure(const CVector& v) {
  const Eigen::Index n = v.size();
  RMatrix cost(n, n);
  for (Eigen::Index a = 0; a < n; ++a)
    for (Eigen::Index b = 0; b < n; ++b) cost(a, b) = std::abs(v(a) - std::conj(v(b)));
  Closure c;
  c.partner = min_cost_assignment(cost);
  for (Eigen::Index a = 0; a < n; ++a) {
    if (!segment_resolved(v(a), std::conj(v(static_cast<Eigen::Index>(c.partner[static_cast<std::size_t>(a)])))))
      c.resolved = false;
  }
  return c;
}

struct Tracked {
  std::vector<CVector> tracks;
  std::vector<std::size_t> coarse;  // interval k spans omegas[k], omegas[k + 1]
  Closure low;
  Closure high;
};

Tracked track(const std::vector<CVector>& values) {
  Tracked t;
  t.tracks.reserve(values.size());
  t.tracks.push_back(values.front());
  for (std::size_t k = 1; k < values.size(); ++k) {
    if (values[k].size() != values[k - 1].size())
      throw Error(Errc::Validation, "gnc: loop gain dimension changed along the sweep");
    t.tracks.push_back(match_to(t.tracks.back(), values[k]));
    const CVector& prev = t.tracks[k - 1];
    const CVector& cur = t.tracks[k];
    for (Eigen::Index i = 0; i < cur.size(); ++i) {
      if (!segment_resolved(prev(i), cur(i))) {
        t.coarse.push_back(k - 1);
        break;
      }
    }
  }
  t.low = conjugate_closure(t.tracks.front());
  t.high = conjugate_closure(t.tracks.back());
  return t;
}

GncVerdict winding(const Tracked& t) {
  double total = 0.0;
  double min_distance = std::numeric_limits<double>::infinity();
  const Eigen::Index n = t.tracks.front().size();
  for (std::size_t k = 0; k < t.tracks.size(); ++k) {
    for (Eigen::Index i = 0; i < n; ++i) {
      min_distance = std::min(min_distance, std::abs(t.tracks[k](i) + 1.0));
      if (k > 0) total += 2.0 * angle_increment(t.tracks[k - 1](i), t.tracks[k](i));
    }
  }
  const CVector& first = t.tracks.front();
  const CVector& last = t.tracks.back();
  for (Eigen::Index a = 0; a < n; ++a) {
    const auto lo = static_cast<Eigen::Index>(t.low.partner[static_cast<std::size_t>(a)]);
    const auto hi = static_cast<Eigen::Index>(t.high.partner[static_cast<std::size_t>(a)]);
    total += angle_increment(std::conj(first(lo)), first(a));
    total += angle_increment(last(a), std::conj(last(hi)));
  }
  const double turns = total / (2.0 * kPi);
  const double rounded = std::round(turns);
  if (std::abs(turns - rounded) > 1e-6)
    throw Error(Errc::RefineGrid, "gnc: loci do not close into whole turns around (-1, 0)");
  GncVerdict v;
  v.encirclements = -static_cast<int>(rounded);
  v.stable = v.encirclements == 0;
  v.min_distance = n > 0 ? min_distance : std::numeric_limits<double>::infinity();
  return v;
}

GncResult finish(const std::vector<double>& omegas, const Tracked& t) {
  GncResult r;
  r.loci.omegas = omegas;
  r.loci.tracks = t.tracks;
  r.verdict = winding(t);
  return r;
}

MatrixFunction network_loop(const Network& net) {
  return [&net](Complex s) { return loop_gain(net, s); };
}

MatrixFunction network_nodal(const Network& net) {
  return [&net](Complex s) { return assemble_nodal(net, s).matrix; };
}

double mode_scale(Complex lambda, double omega_b) { return std::max(std::abs(lambda), omega_b); }

}  // namespace

CMatrix loop_gain(const Network& net, Complex s) {
  const CMatrix ynet = network_admittance(net, s);
  const CMatrix ya = device_admittance(net, s);
  if (ya.isZero(0.0)) return CMatrix::Zero(ya.rows(), ya.cols());
  try {
    return solve(ynet, ya);
  } catch (const Error& e) {
    std::ostringstream os;
    os << "loop_gain: network admittance singular at s = " << s;
    throw Error(e.code(), os.str());
  }
}

std::vector<std::size_t> min_cost_assignment(const RMatrix& cost) {
  const auto n = static_cast<std::size_t>(cost.rows());
  if (cost.cols() != cost.rows()) throw Error(Errc::Validation, "min_cost_assignment: cost matrix must be square");
  const double inf = std::numeric_limits<double>::infinity();
  // Potentials method; index 0 is a virtual column.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<bool> used(n + 1, false);
    do {
      used[j0] = true;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(static_cast<Eigen::Index>(i0 - 1), static_cast<Eigen::Index>(j - 1)) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<std::size_t> out(n, 0);
  for (std::size_t j = 1; j <= n; ++j) out[p[j] - 1] = j - 1;
  return out;
}

GncResult gnc(const MatrixFunction& loop, const std::vector<double>& omegas) {
  require_increasing(omegas, "gnc");
  const auto values = parallel_map(omegas.size(), [&](std::size_t k) { return loop_eigenvalues(loop, omegas[k]); });
  const Tracked t = track(values);
  if (!t.coarse.empty()) {
    const std::size_t k = t.coarse.front();
    throw RefineGridError("gnc: frequency grid too coarse near (-1, 0) on " +
                              interval_text(omegas[k], omegas[k + 1]),
                          omegas[k], omegas[k + 1]);
  }
  if (!t.low.resolved)
    throw RefineGridError("gnc: conjugate closure unresolved below " + omega_text(omegas.front()), 0.0,
                          omegas.front());
  if (!t.high.resolved)
    throw RefineGridError("gnc: conjugate closure unresolved above " + omega_text(omegas.back()), omegas.back(),
                          std::numeric_limits<double>::infinity());
  return finish(omegas, t);
}

GncResult gnc(const Network& net, const std::vector<double>& omegas) { return gnc(network_loop(net), omegas); }

GncResult gnc_adaptive(const MatrixFunction& loop, std::vector<double> omegas, std::size_t max_points) {
  require_increasing(omegas, "gnc");
  std::map<double, CVector> cache;
  for (;;) {
    std::vector<double> missing;
    for (double w : omegas)
      if (cache.find(w) == cache.end()) missing.push_back(w);
    auto fresh = parallel_map(missing.size(), [&](std::size_t k) { return loop_eigenvalues(loop, missing[k]); });
    for (std::size_t k = 0; k < missing.size(); ++k) cache.emplace(missing[k], std::move(fresh[k]));

    std::vector<CVector> values;
    values.reserve(omegas.size());
    for (double w : omegas) values.push_back(cache.at(w));
    const Tracked t = track(values);
    if (t.coarse.empty() && t.low.resolved && t.high.resolved) return finish(omegas, t);

    if (omegas.size() >= max_points)
      throw RefineGridError("gnc: refinement exceeded " + std::to_string(max_points) + " frequencies",
                            omegas.front(), omegas.back());
    std::vector<double> added;
    for (std::size_t k : t.coarse) {
      const double lo = omegas[k];
      const double hi = omegas[k + 1];
      const double mid = lo > 0.0 ? std::sqrt(lo * hi) : 0.5 * hi;
      if (!(mid > lo && mid < hi))
        throw RefineGridError("gnc: locus passes through (-1, 0) on " + interval_text(lo, hi), lo, hi);
      added.push_back(mid);
    }
    if (!t.low.resolved) {
      if (omegas.front() == 0.0)
        throw RefineGridError("gnc: conjugate closure unresolved at omega = 0", 0.0, 0.0);
      added.push_back(omegas.front() > 1e-9 ? omegas.front() / 10.0 : 0.0);
    }
    if (!t.high.resolved) {
      if (omegas.back() >= kHighestOmega)
        throw RefineGridError("gnc: loci do not settle at high frequency", omegas.back(),
                              std::numeric_limits<double>::infinity());
      added.push_back(omegas.back() * 10.0);
    }
    omegas.insert(omegas.end(), added.begin(), added.end());
    std::sort(omegas.begin(), omegas.end());
    omegas.erase(std::unique(omegas.begin(), omegas.end()), omegas.end());
  }
}

GncResult gnc_adaptive(const Network& net, std::vector<double> omegas, std::size_t max_points) {
  return gnc_adaptive(network_loop(net), std::move(omegas), max_points);
}

FdParticipation fd_pf(const CMatrix& yn, Complex s) {
  const auto eig = general_eigen(yn);
  if (eig.defective) throw Error(Errc::Defective, "fd_pf: nodal admittance is defective");
  FdParticipation out;
  out.s = s;
  const Eigen::Index n = eig.values.size();
  Eigen::Index c = 0;
  for (Eigen::Index k = 1; k < n; ++k)
    if (std::abs(eig.values(k)) < std::abs(eig.values(c))) c = k;
  out.critical_index = c;
  out.critical = eig.values(c);
  const double mc = std::abs(out.critical);
  for (Eigen::Index k = 0; k < n; ++k) {
    if (k != c && std::abs(eig.values(k)) <= mc * (1.0 + 1e-6) + std::numeric_limits<double>::min()) out.tie = true;
  }
  out.matrix = eig.left.row(c).transpose() * eig.right.col(c).transpose();
  out.bus = CVector::Zero(n / 2);
  for (Eigen::Index b = 0; b < n / 2; ++b) out.bus(b) = out.matrix(2 * b, 2 * b) + out.matrix(2 * b + 1, 2 * b + 1);
  return out;
}

FdParticipation fd_pf(const Network& net, Complex s) {
  try {
    return fd_pf(assemble_nodal(net, s).matrix, s);
  } catch (const Error& e) {
    std::ostringstream os;
    os << "at s = " << s;
    throw e.with_context(os.str());
  }
}

ModeEstimate refine_root(const ScalarFunction& f, Complex s0, double omega_b, const Region& region) {
  if (!(omega_b > 0.0)) throw Error(Errc::Validation, "refine_root: omega_b must be positive");
  if (!region.contains(s0)) throw Error(Errc::OutOfRegion, "refine_root: seed outside the search region");
  auto eval = [&](Complex s) {
    const Complex v = f(s);
    if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) {
      std::ostringstream os;
      os << "refine_root: non-finite value at s = " << s;
      throw Error(Errc::NonFinite, os.str());
    }
    return v;
  };
  const double h = 1e-3 * mode_scale(s0, omega_b);
  Complex x[3] = {s0 + h, s0 - h, s0};
  Complex fx[3] = {eval(x[0]), eval(x[1]), eval(x[2])};
  double scale = std::max({std::abs(fx[0]), std::abs(fx[1]), std::abs(fx[2]), std::numeric_limits<double>::min()});

  ModeEstimate est;
  for (int it = 1; it <= kMullerIterations; ++it) {
    const Complex g0 = fx[0] / scale, g1 = fx[1] / scale, g2 = fx[2] / scale;
    const Complex h1 = x[1] - x[0];
    const Complex h2 = x[2] - x[1];
    const Complex d1 = (g1 - g0) / h1;
    const Complex d2 = (g2 - g1) / h2;
    const Complex a = (d2 - d1) / (h2 + h1);
    const Complex b = a * h2 + d2;
    const Complex disc = std::sqrt(b * b - 4.0 * a * g2);
    const Complex e = std::abs(b + disc) >= std::abs(b - disc) ? b + disc : b - disc;
    Complex dx;
    if (g2 == 0.0) {
      dx = 0.0;
    } else if (std::abs(e) == 0.0) {
      dx = h2 == 0.0 ? Complex(h) : h2;
    } else {
      dx = -2.0 * g2 / e;
    }
    const Complex x3 = x[2] + dx;
    if (!region.contains(x3)) {
      std::ostringstream os;
      os << "refine_root: iterate s = " << x3 << " left the search region";
      throw Error(Errc::OutOfRegion, os.str());
    }
    const Complex f3 = dx == 0.0 ? fx[2] : eval(x3);
    scale = std::max(scale, std::abs(f3));
    x[0] = x[1];
    fx[0] = fx[1];
    x[1] = x[2];
    fx[1] = fx[2];
    x[2] = x3;
    fx[2] = f3;
    est.lambda = x3;
    est.residual = std::abs(f3);
    est.scale = scale;
    est.iterations = it;
    if (std::abs(dx) <= 1e-9 * mode_scale(x3, omega_b) && est.residual <= 1e-8 * scale) {
      est.converged = true;
      return est;
    }
    if (it > 1 && (x[1] == x[0] || x[2] == x[1])) {
      // stalled away from a root: restart the stencil around the current iterate
      const double hr = 1e-6 * mode_scale(x3, omega_b);
      x[0] = x3 + hr;
      x[1] = x3 - hr;
      fx[0] = eval(x[0]);
      fx[1] = eval(x[1]);
      scale = std::max({scale, std::abs(fx[0]), std::abs(fx[1])});
    }
  }
  std::ostringstream os;
  os << "refine_root: no convergence after " << kMullerIterations << " iterations from s0 = " << s0;
  throw NoConvergenceError(os.str(), {est.lambda});
}

Complex nodal_determinant(const Network& net, Complex s) { return determinant(assemble_nodal(net, s).matrix); }

ModeEstimate refine_mode(const Network& net, Complex s0, const Region& region) {
  return refine_root([&net](Complex s) { return nodal_determinant(net, s); }, s0, net.omega_b(), region);
}

ModeScan scan_modes(const ScalarFunction& f, const Region& region, int n_re, int n_im, double omega_b) {
  if (n_re < 1 || n_im < 1) throw Error(Errc::Validation, "scan_modes: seed grid must be at least 1 x 1");
  if (!(region.re_max > region.re_min) || !(region.im_max >= region.im_min))
    throw Error(Errc::Validation, "scan_modes: empty search region");
  const double im_abs = std::max(std::abs(region.im_min), std::abs(region.im_max));
  // Iterates may roam one region span beyond the bounds; only roots inside are kept.
  const double re_span = region.re_max - region.re_min;
  const double im_span = std::max(im_abs, 1e-6 * omega_b);
  const Region search{region.re_min - re_span, region.re_max + re_span, -im_abs - im_span, im_abs + im_span};

  const double dre = (region.re_max - region.re_min) / n_re;
  const double dim = (region.im_max - region.im_min) / n_im;
  std::vector<Complex> seeds;
  for (int i = 0; i < n_re; ++i) {
    const double re = region.re_min + (i + 0.5) * dre;
    if (region.im_min <= 0.0 && region.im_max >= 0.0) seeds.emplace_back(re, 0.0);
    for (int j = 0; j < n_im; ++j) seeds.emplace_back(re, region.im_min + (j + 0.5) * dim);
  }
  // Slow real modes squeezed between device poles near the origin have narrow basins.
  for (int k = 1; k <= 4; ++k) {
    for (double sign : {1.0, -1.0}) {
      const Complex s0(sign * omega_b * std::pow(10.0, -k), 0.0);
      if (region.contains(s0)) seeds.push_back(s0);
    }
  }

  auto attempt = [&](const ScalarFunction& g, Complex s0) -> std::optional<ModeEstimate> {
    try {
      ModeEstimate m = refine_root(g, s0, omega_b, search);
      if (m.lambda.imag() < 0.0) m.lambda = std::conj(m.lambda);
      return m;
    } catch (const Error&) {
      return std::nullopt;
    }
  };

  ModeScan out;
  auto known = [&](Complex lambda) {
    return std::any_of(out.modes.begin(), out.modes.end(), [&](const ModeEstimate& e) {
      return std::abs(e.lambda - lambda) <= 1e-6 * mode_scale(lambda, omega_b);
    });
  };
  auto keep = [&](const std::optional<ModeEstimate>& m) {
    if (!m || !region.contains(m->lambda) || known(m->lambda)) return false;
    out.modes.push_back(*m);
    return true;
  };

  const auto first = parallel_map(seeds.size(), [&](std::size_t k) { return attempt(f, seeds[k]); });
  for (const auto& m : first) keep(m);

  // Second pass with the roots found so far divided out, so seeds that fell into a
  // dominant basin can reach the remaining ones; each hit is polished on f itself.
  const ScalarFunction deflated = [&](Complex s) {
    Complex v = f(s);
    for (const auto& m : out.modes) {
      const Complex r = m.lambda;
      if (std::abs(r.imag()) <= 1e-9 * mode_scale(r, omega_b)) {
        v /= (s - r) / omega_b;
      } else {
        v /= (s - r) * (s - std::conj(r)) / (omega_b * omega_b);
      }
    }
    return v;
  };
  for (const Complex& s0 : seeds) {
    const auto d = attempt(deflated, s0);
    if (!d || known(d->lambda)) continue;
    keep(attempt(f, d->lambda));
  }

  std::sort(out.modes.begin(), out.modes.end(), [](const ModeEstimate& a, const ModeEstimate& b) {
    if (a.lambda.real() != b.lambda.real()) return a.lambda.real() < b.lambda.real();
    return a.lambda.imag() < b.lambda.imag();
  });
  out.unstable = std::any_of(out.modes.begin(), out.modes.end(), [&](const ModeEstimate& m) {
    return m.lambda.real() > 1e-9 * mode_scale(m.lambda, omega_b);
  });
  return out;
}

ModeScan scan_modes(const Network& net, const Region& region, int n_re, int n_im) {
  return scan_modes([&net](Complex s) { return nodal_determinant(net, s); }, region, n_re, n_im, net.omega_b());
}

Complex xi_coefficient(const MatrixFunction& yn, Complex lambda, double omega_b) {
  const CMatrix y = yn(lambda);
  const Complex tr_adj = trace(adjugate(y));
  const double h = 1e-6 * mode_scale(lambda, omega_b);
  auto central = [&](double step) {
    return (determinant(yn(lambda + step)) - determinant(yn(lambda - step))) / (2.0 * step);
  };
  const Complex dprime = (4.0 * central(0.5 * h) - central(h)) / 3.0;
  const double scale = std::pow(y.norm(), static_cast<double>(y.rows())) / mode_scale(lambda, omega_b);
  if (!(std::abs(dprime) >= 1e-14 * scale)) {
    std::ostringstream os;
    os << "xi_coefficient: determinant derivative vanishes at lambda = " << lambda;
    throw Error(Errc::ZeroDenominator, os.str());
  }
  return -tr_adj / dprime;
}

Complex xi_coefficient(const Network& net, Complex lambda) {
  return xi_coefficient(network_nodal(net), lambda, net.omega_b());
}

CMatrix mode_sensitivity(const MatrixFunction& yn, Complex lambda, double omega_b) {
  const Complex xi = xi_coefficient(yn, lambda, omega_b);
  return xi * fd_pf(yn(lambda), lambda).matrix;
}

CMatrix mode_sensitivity(const Network& net, Complex lambda) {
  return mode_sensitivity(network_nodal(net), lambda, net.omega_b());
}

}  // namespace passivity
