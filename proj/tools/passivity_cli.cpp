// Command-line front end: one subcommand per analysis type, plus `tabulate`
// for exporting a device's frequency response as a black-box table.

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "passivity/io.hpp"
#include "passivity/passivity.hpp"

namespace fs = std::filesystem;
using namespace passivity;

namespace {

enum Exit { kOk = 0, kUsage = 1, kInput = 2, kNumerical = 3 };

struct Options {
  std::string scenario;
  std::string out = ".";
  bool svg = false;
  bool stamp = false;
  std::string analysis;
  std::vector<std::string> devices;
  std::string parameter;
  std::string component;
  std::optional<double> perturbation;
};

void add_common(CLI::App* cmd, Options& o) {
  cmd->add_option("--scenario", o.scenario, "scenario JSON file")->required();
  cmd->add_option("--out", o.out, "output directory (created if missing)");
  cmd->add_flag("--svg", o.svg, "also emit an SVG plot per table");
  cmd->add_flag("--stamp", o.stamp, "record a UTC timestamp in the summary file");
  cmd->add_option("--analysis", o.analysis, "named analysis from the scenario (default: first of this type)");
}

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

AnalysisRequest pick_request(const Scenario& sc, AnalysisKind kind, const Options& o) {
  AnalysisRequest req;
  if (!o.analysis.empty()) {
    req = sc.analysis(o.analysis);
    if (req.kind != kind) {
      throw ValidationError({"analysis '" + o.analysis + "' has type " + std::string(to_string(req.kind)) +
                             ", not " + std::string(to_string(kind))});
    }
  } else {
    req = default_request(kind);
    for (const auto& a : sc.analyses) {
      if (a.kind == kind) {
        req = a;
        break;
      }
    }
  }
  if (!o.devices.empty()) req.devices = o.devices;
  if (!o.parameter.empty()) req.parameter = o.parameter;
  if (!o.component.empty()) req.component = o.component;
  if (o.perturbation) req.perturbation = *o.perturbation;
  return req;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::Io, "cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw Error(Errc::Io, "write failed for '" + path.string() + "'");
}

void emit(const RunResult& result, const Options& o) {
  const fs::path dir(o.out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(Errc::Io, "cannot create '" + dir.string() + "': " + ec.message());
  std::string summary;
  for (const auto& line : result.summary) summary += line + "\n";
  if (o.stamp) summary += "timestamp " + utc_now() + "\n";
  for (const auto& t : result.tables) {
    emit_csv(t, dir / (t.name + ".csv"));
    summary += "table " + t.name + ".csv: " + std::to_string(t.rows.size()) + " rows\n";
    if (o.svg) emit_svg_plot(t, default_plot(t), dir / (t.name + ".svg"));
  }
  write_text(dir / (result.analysis + ".txt"), summary);
  std::cout << summary;
}

const char* describe(AnalysisKind kind) {
  switch (kind) {
    case AnalysisKind::DevicePassivity: return "standalone passivity index of each device";
    case AnalysisKind::DeviceSens: return "parametric sensitivity of a device's passivity index";
    case AnalysisKind::NodalPassivity: return "passivity index of the nodal admittance matrix";
    case AnalysisKind::NodalSens: return "first-order change of the nodal index when one component is scaled";
    case AnalysisKind::Participation: return "passivity participation of every component";
    case AnalysisKind::Gnc: return "generalized Nyquist stability verdict and eigenloci";
    case AnalysisKind::Fdpf: return "frequency-domain participation of buses in the critical eigenvalue";
    case AnalysisKind::Modes: return "closed-loop modes from the zeros of det Y(s)";
  }
  return "";
}

int exit_code(Errc code) {
  if (code == Errc::Io) return kUsage;
  return is_input_error(code) ? kInput : kNumerical;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Passivity and small-signal stability analysis of converter-dominated grids"};
  app.require_subcommand(1);
  Options o;

  for (int k = 0; k <= static_cast<int>(AnalysisKind::Modes); ++k) {
    const auto kind = static_cast<AnalysisKind>(k);
    auto* cmd = app.add_subcommand(std::string(to_string(kind)), describe(kind));
    add_common(cmd, o);
    if (kind == AnalysisKind::DevicePassivity || kind == AnalysisKind::DeviceSens)
      cmd->add_option("--device", o.devices, "device name (repeatable for device-passivity)");
    if (kind == AnalysisKind::DeviceSens) cmd->add_option("--parameter", o.parameter, "parameter to perturb");
    if (kind == AnalysisKind::NodalSens) cmd->add_option("--component", o.component, "component to scale");
    if (kind == AnalysisKind::DeviceSens || kind == AnalysisKind::NodalSens)
      cmd->add_option("--perturbation", o.perturbation, "relative perturbation");
    cmd->callback([&o, kind] {
      const Scenario sc = load_scenario(o.scenario);
      emit(run(sc, pick_request(sc, kind, o)), o);
    });
  }

  std::string device, table_out;
  auto* tab = app.add_subcommand("tabulate", "write a device's admittance as a black-box CSV table");
  tab->add_option("--scenario", o.scenario, "scenario JSON file")->required();
  tab->add_option("--device", device, "device name")->required();
  tab->add_option("--output", table_out, "table file")->required();
  tab->callback([&] {
    const Scenario sc = load_scenario(o.scenario);
    const auto grid = sc.grid.hz();
    for (const auto& d : sc.network.devices()) {
      if (d.name == device) {
        write_table(tabulate(*d.model, grid), table_out);
        std::cout << "wrote " << grid.size() << " rows to " << table_out << "\n";
        return;
      }
    }
    throw Error(Errc::UnknownComponent, "unknown device '" + device + "'");
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  } catch (const ValidationError& e) {
    std::cerr << "error [" << to_string(e.code()) << "]: " << e.issues().size() << " problem(s)\n";
    for (const auto& issue : e.issues()) std::cerr << "  - " << issue << "\n";
    return kInput;
  } catch (const ParseError& e) {
    std::cerr << "error [" << to_string(e.code()) << "] at line " << e.line() << ", column " << e.column() << ": "
              << e.what() << "\n";
    return kInput;
  } catch (const Error& e) {
    std::cerr << "error [" << to_string(e.code()) << "]: " << e.what() << "\n";
    return exit_code(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kNumerical;
  }
  return kOk;
}
