#include <algorithm>
#include <cmath>
#include <limits>

#include "passivity/io.hpp"
#include "passivity/parallel.hpp"
#include "passivity/text.hpp"

namespace passivity {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::vector<double> request_hz(const Scenario& sc, const AnalysisRequest& a) {
  return a.grid ? a.grid->hz() : sc.grid.hz();
}

ResultTable make_table(const Scenario& sc, const AnalysisRequest& a, const std::string& suffix,
                       std::vector<std::string> columns, const std::string& y_label) {
  ResultTable t;
  t.name = suffix.empty() ? a.name : a.name + "_" + suffix;
  t.columns = std::move(columns);
  t.metadata["analysis"] = a.name;
  t.metadata["type"] = std::string(to_string(a.kind));
  t.metadata["scenario"] = sc.name;
  t.metadata["scenario_hash"] = sc.hash_hex();
  t.metadata["y_label"] = y_label;
  return t;
}

const Device& device_named(const Network& net, const std::string& name) {
  for (const auto& d : net.devices())
    if (d.name == name) return d;
  throw Error(Errc::UnknownComponent, "unknown device '" + name + "'");
}

std::vector<const Device*> selected_devices(const Network& net, const AnalysisRequest& a) {
  std::vector<const Device*> out;
  if (a.devices.empty()) {
    for (const auto& d : net.devices()) out.push_back(&d);
  } else {
    for (const auto& n : a.devices) out.push_back(&device_named(net, n));
  }
  return out;
}

std::string percent_label(double fraction) {
  const double pct = 100.0 * fraction;
  std::string text = pct == std::round(pct) ? std::to_string(static_cast<long long>(pct)) : format_double(pct);
  std::replace(text.begin(), text.end(), '-', 'm');
  std::replace(text.begin(), text.end(), '.', 'p');
  return text + "pct";
}

std::string num(double v) { return format_double(v); }

void note_minimum(RunResult& r, const std::string& label, const std::vector<double>& hz,
                  const std::vector<double>& values) {
  std::size_t k_min = 0;
  std::size_t negative = 0;
  for (std::size_t k = 0; k < values.size(); ++k) {
    if (values[k] < values[k_min]) k_min = k;
    if (values[k] < 0.0) ++negative;
  }
  if (values.empty()) return;
  r.summary.push_back(label + ": min index " + num(values[k_min]) + " at " + num(hz[k_min]) + " Hz; " +
                      std::to_string(negative) + " of " + std::to_string(values.size()) + " points non-passive");
}

RunResult device_passivity(const Scenario& sc, const AnalysisRequest& a) {
  const auto hz = request_hz(sc, a);
  const auto omegas = to_omega(hz);
  const auto devices = selected_devices(sc.network, a);
  std::vector<std::string> cols{"freq_hz"};
  for (const auto* d : devices) {
    cols.push_back(d->name + ".index");
    cols.push_back(d->name + ".degenerate");
  }
  RunResult r;
  auto table = make_table(sc, a, "", cols, "passivity index");
  std::vector<std::vector<PassivityPoint>> sweeps;
  for (const auto* d : devices) sweeps.push_back(index_sweep(*d->model, omegas));
  for (std::size_t k = 0; k < hz.size(); ++k) {
    std::vector<double> row{hz[k]};
    for (const auto& s : sweeps) {
      row.push_back(s[k].index);
      row.push_back(s[k].degenerate() ? 1.0 : 0.0);
    }
    table.add_row(std::move(row));
  }
  for (std::size_t i = 0; i < devices.size(); ++i) {
    std::vector<double> idx;
    for (const auto& p : sweeps[i]) idx.push_back(p.index);
    note_minimum(r, devices[i]->name, hz, idx);
  }
  r.tables.push_back(std::move(table));
  return r;
}

RunResult device_sens(const Scenario& sc, const AnalysisRequest& a) {
  const auto hz = request_hz(sc, a);
  const auto omegas = to_omega(hz);
  const Device& d = device_named(sc.network, a.devices.at(0));
  const double rho = d.model->parameters().get(a.parameter);
  const double delta = a.perturbation * rho;
  const auto sens = param_passivity_sensitivity(*d.model, a.parameter, omegas);
  const auto curves = first_order_prediction(*d.model, a.parameter, delta, omegas);
  const std::string pct = percent_label(a.perturbation);
  RunResult r;
  auto table = make_table(sc, a, "",
                          {"freq_hz", "index", "d_index", "predicted_after_" + pct, "exact_after_" + pct, "degenerate"},
                          "passivity index");
  for (std::size_t k = 0; k < hz.size(); ++k) {
    const auto& p = sens.points[k];
    table.add_row({hz[k], p.index, p.derivative ? *p.derivative : kNaN, curves.predicted[k], curves.exact[k],
                   curves.degenerate[k] ? 1.0 : 0.0});
  }
  r.summary.push_back("device " + d.name + ", parameter " + a.parameter + " = " + num(rho) + ", perturbation " +
                      num(delta));
  const double change = curves.max_exact_change();
  const double err = curves.max_prediction_error();
  r.summary.push_back("max |exact - predicted| = " + num(err) + "; max |exact - base| = " + num(change) +
                      (change > 0.0 ? "; ratio " + num(err / change) : ""));
  r.tables.push_back(std::move(table));
  return r;
}

RunResult nodal_passivity_run(const Scenario& sc, const AnalysisRequest& a) {
  const auto hz = request_hz(sc, a);
  const auto omegas = to_omega(hz);
  const auto nodal = nodal_passivity_sweep(sc.network, omegas);
  std::vector<std::string> cols{"freq_hz", "nodal_index", "nodal_degenerate"};
  std::vector<std::vector<PassivityPoint>> standalone;
  for (const auto& d : sc.network.devices()) {
    cols.push_back(d.name + ".index");
    standalone.push_back(index_sweep(*d.model, omegas));
  }
  RunResult r;
  auto table = make_table(sc, a, "", cols, "passivity index");
  std::vector<double> idx;
  for (std::size_t k = 0; k < hz.size(); ++k) {
    std::vector<double> row{hz[k], nodal[k].index, nodal[k].degenerate() ? 1.0 : 0.0};
    for (const auto& s : standalone) row.push_back(s[k].index);
    table.add_row(std::move(row));
    idx.push_back(nodal[k].index);
  }
  note_minimum(r, "nodal", hz, idx);
  r.tables.push_back(std::move(table));
  return r;
}

RunResult nodal_sens(const Scenario& sc, const AnalysisRequest& a) {
  const auto hz = request_hz(sc, a);
  const auto omegas = to_omega(hz);
  const auto curves = nodal_first_order_prediction(sc.network, a.component, a.perturbation, omegas);
  const auto part = parallel_map(omegas.size(), [&](std::size_t k) {
    return participation(sc.network, omegas[k], a.component);
  });
  const std::string pct = percent_label(a.perturbation);
  RunResult r;
  auto table = make_table(
      sc, a, "", {"freq_hz", "nodal_index", "sensitivity", "predicted_after_" + pct, "exact_after_" + pct, "degenerate"},
      "passivity index");
  std::size_t within = 0, counted = 0;
  for (std::size_t k = 0; k < hz.size(); ++k) {
    table.add_row({hz[k], curves.base[k], part[k] ? *part[k] : kNaN, curves.predicted[k], curves.exact[k],
                   curves.degenerate[k] ? 1.0 : 0.0});
    if (curves.degenerate[k]) continue;
    ++counted;
    const double exact = curves.exact[k] - curves.base[k];
    const double pred = curves.predicted[k] - curves.base[k];
    if (std::abs(pred - exact) <= 0.1 * std::abs(exact)) ++within;
  }
  r.summary.push_back("component " + a.component + " scaled by (1 + " + num(a.perturbation) + ")");
  r.summary.push_back("first-order change within 10% of exact at " + std::to_string(within) + " of " +
                      std::to_string(counted) + " non-degenerate points");
  r.tables.push_back(std::move(table));
  return r;
}

RunResult participation_run(const Scenario& sc, const AnalysisRequest& a) {
  const auto hz = request_hz(sc, a);
  const auto pts = participation_sweep(sc.network, to_omega(hz));
  std::vector<std::string> cols{"freq_hz", "nodal_index"};
  for (const auto& n : sc.network.component_names()) cols.push_back(n);
  cols.push_back("degenerate");
  RunResult r;
  auto table = make_table(sc, a, "", cols, "participation");
  double worst = 0.0;
  for (std::size_t k = 0; k < hz.size(); ++k) {
    std::vector<double> row{hz[k], pts[k].index};
    row.insert(row.end(), pts[k].values.begin(), pts[k].values.end());
    row.push_back(pts[k].degenerate ? 1.0 : 0.0);
    table.add_row(std::move(row));
    if (!pts[k].degenerate) {
      double sum = 0.0;
      for (double v : pts[k].values) sum += v;
      worst = std::max(worst, std::abs(sum - pts[k].index));
    }
  }
  r.summary.push_back("max |sum of participations - nodal index| = " + num(worst));
  r.tables.push_back(std::move(table));
  return r;
}

RunResult gnc_run(const Scenario& sc, const AnalysisRequest& a) {
  const auto hz = request_hz(sc, a);
  const auto g = gnc_adaptive(sc.network, to_omega(hz));
  const auto n = g.loci.tracks.empty() ? 0 : static_cast<std::size_t>(g.loci.tracks.front().size());
  std::vector<std::string> cols{"freq_hz"};
  for (std::size_t t = 1; t <= n; ++t) {
    cols.push_back("re_" + std::to_string(t));
    cols.push_back("im_" + std::to_string(t));
  }
  RunResult r;
  auto table = make_table(sc, a, "loci", cols, "eigenloci of L");
  table.metadata["plot"] = "nyquist";
  for (std::size_t k = 0; k < g.loci.omegas.size(); ++k) {
    std::vector<double> row{g.loci.omegas[k] / (2.0 * kPi)};
    for (Eigen::Index t = 0; t < static_cast<Eigen::Index>(n); ++t) {
      row.push_back(g.loci.tracks[k](t).real());
      row.push_back(g.loci.tracks[k](t).imag());
    }
    table.add_row(std::move(row));
  }
  r.summary.push_back(std::string("verdict: ") + (g.verdict.stable ? "stable" : "unstable") + " (" +
                      std::to_string(g.verdict.encirclements) + " clockwise encirclements of (-1, 0))");
  r.summary.push_back("closest approach to (-1, 0): " + num(g.verdict.min_distance));
  r.summary.push_back("frequencies after refinement: " + std::to_string(g.loci.omegas.size()));
  r.summary.push_back(std::string("standalone stability of both subsystems: ") +
                      (sc.standalone_stable ? "asserted by the scenario" : "NOT asserted, verdict unsupported"));
  r.tables.push_back(std::move(table));
  return r;
}

std::vector<std::string> bus_columns(const Network& net) {
  std::vector<std::string> cols;
  for (const auto& b : net.buses()) {
    cols.push_back(b + ".re");
    cols.push_back(b + ".im");
  }
  return cols;
}

RunResult fdpf_run(const Scenario& sc, const AnalysisRequest& a) {
  const auto hz = request_hz(sc, a);
  const auto omegas = to_omega(hz);
  const auto pfs = parallel_map(omegas.size(), [&](std::size_t k) { return fd_pf(sc.network, Complex(0.0, omegas[k])); });
  std::vector<std::string> cols{"freq_hz", "re_critical", "im_critical", "tie"};
  const auto bc = bus_columns(sc.network);
  cols.insert(cols.end(), bc.begin(), bc.end());
  RunResult r;
  auto table = make_table(sc, a, "", cols, "participation");
  std::size_t ties = 0;
  for (std::size_t k = 0; k < hz.size(); ++k) {
    const auto& pf = pfs[k];
    std::vector<double> row{hz[k], pf.critical.real(), pf.critical.imag(), pf.tie ? 1.0 : 0.0};
    for (Eigen::Index b = 0; b < pf.bus.size(); ++b) {
      row.push_back(pf.bus(b).real());
      row.push_back(pf.bus(b).imag());
    }
    if (pf.tie) ++ties;
    table.add_row(std::move(row));
  }
  r.summary.push_back("frequency-only evaluation at s = j*omega over " + std::to_string(hz.size()) + " points; " +
                      std::to_string(ties) + " critical-eigenvalue ties");
  r.tables.push_back(std::move(table));

  if (a.at_modes) {
    const auto scan = scan_modes(sc.network, a.region, a.seeds_re, a.seeds_im);
    std::vector<std::string> mcols{"freq_hz", "re_lambda", "im_lambda", "re_xi", "im_xi", "tie"};
    mcols.insert(mcols.end(), bc.begin(), bc.end());
    auto modes = make_table(sc, a, "modes", mcols, "participation");
    std::vector<std::vector<double>> rows;
    for (const auto& m : scan.modes) {
      const auto pf = fd_pf(sc.network, m.lambda);
      const Complex xi = xi_coefficient(sc.network, m.lambda);
      std::vector<double> row{m.lambda.imag() / (2.0 * kPi), m.lambda.real(), m.lambda.imag(), xi.real(), xi.imag(),
                              pf.tie ? 1.0 : 0.0};
      for (Eigen::Index b = 0; b < pf.bus.size(); ++b) {
        row.push_back(pf.bus(b).real());
        row.push_back(pf.bus(b).imag());
      }
      rows.push_back(std::move(row));
    }
    std::stable_sort(rows.begin(), rows.end(), [](const auto& x, const auto& y) { return x[0] < y[0]; });
    for (auto& row : rows) modes.add_row(std::move(row));
    r.summary.push_back("full-modal evaluation at " + std::to_string(scan.modes.size()) + " refined modes");
    r.tables.push_back(std::move(modes));
  }
  return r;
}

RunResult modes_run(const Scenario& sc, const AnalysisRequest& a) {
  const auto scan = scan_modes(sc.network, a.region, a.seeds_re, a.seeds_im);
  RunResult r;
  auto table = make_table(sc, a, "",
                          {"freq_hz", "re_lambda", "im_lambda", "damping_ratio", "residual", "scale", "iterations"},
                          "mode");
  std::vector<std::vector<double>> rows;
  for (const auto& m : scan.modes) {
    const double mag = std::abs(m.lambda);
    rows.push_back({m.lambda.imag() / (2.0 * kPi), m.lambda.real(), m.lambda.imag(),
                    mag > 0.0 ? -m.lambda.real() / mag : 0.0, m.residual, m.scale,
                    static_cast<double>(m.iterations)});
  }
  std::stable_sort(rows.begin(), rows.end(), [](const auto& x, const auto& y) { return x[0] < y[0]; });
  for (auto& row : rows) table.add_row(std::move(row));
  r.summary.push_back(std::string("verdict: ") + (scan.unstable ? "unstable" : "stable") + " (" +
                      std::to_string(scan.modes.size()) + " modes found in the search region)");
  if (!scan.modes.empty()) {
    const auto& top = *std::max_element(scan.modes.begin(), scan.modes.end(), [](const auto& x, const auto& y) {
      return x.lambda.real() < y.lambda.real();
    });
    r.summary.push_back("rightmost mode: " + num(top.lambda.real()) + " + j" + num(top.lambda.imag()) + " rad/s (" +
                        num(top.lambda.imag() / (2.0 * kPi)) + " Hz)");
  }
  r.tables.push_back(std::move(table));
  return r;
}

}  // namespace

RunResult run(const Scenario& sc, const AnalysisRequest& a) {
  if (const auto issues = validate_request(sc.network, a); !issues.empty()) throw ValidationError(issues);
  RunResult r;
  try {
    switch (a.kind) {
      case AnalysisKind::DevicePassivity: r = device_passivity(sc, a); break;
      case AnalysisKind::DeviceSens: r = device_sens(sc, a); break;
      case AnalysisKind::NodalPassivity: r = nodal_passivity_run(sc, a); break;
      case AnalysisKind::NodalSens: r = nodal_sens(sc, a); break;
      case AnalysisKind::Participation: r = participation_run(sc, a); break;
      case AnalysisKind::Gnc: r = gnc_run(sc, a); break;
      case AnalysisKind::Fdpf: r = fdpf_run(sc, a); break;
      case AnalysisKind::Modes: r = modes_run(sc, a); break;
    }
  } catch (const ValidationError&) {
    throw;
  } catch (const Error& e) {
    throw e.with_context("analysis '" + a.name + "'");
  }
  r.analysis = a.name;
  r.summary.insert(r.summary.begin(), "scenario " + sc.name + " (hash " + sc.hash_hex() + "), analysis " + a.name +
                                          " [" + std::string(to_string(a.kind)) + "]");
  return r;
}

RunResult run(const Scenario& sc, std::string_view name) { return run(sc, sc.analysis(name)); }

}  // namespace passivity
