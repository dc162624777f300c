#pragma once

// Scenario files, result tables, CSV/SVG emission and analysis dispatch.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "passivity/network.hpp"
#include "passivity/stability.hpp"

namespace passivity {

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line, std::size_t column)
      : Error(Errc::Parse, what), line_(line), column_(column) {}
  std::size_t line() const noexcept { return line_; }
  std::size_t column() const noexcept { return column_; }

 private:
  std::size_t line_;
  std::size_t column_;
};

struct FrequencyGrid {
  double min_hz = 1.0;
  double max_hz = 2000.0;
  std::size_t points = 400;            // log-spaced over [min_hz, max_hz]
  std::optional<double> per_decade;    // overrides `points`
  std::vector<double> list_hz;         // explicit list overrides both

  std::vector<double> hz() const;
};

enum class AnalysisKind { DevicePassivity, DeviceSens, NodalPassivity, NodalSens, Participation, Gnc, Fdpf, Modes };

std::string_view to_string(AnalysisKind kind);
std::optional<AnalysisKind> analysis_kind(std::string_view name);

struct AnalysisRequest {
  std::string name;
  AnalysisKind kind = AnalysisKind::NodalPassivity;
  std::vector<std::string> devices;   // device-passivity / device-sens; empty = all devices
  std::string parameter;              // device-sens
  std::string component;              // nodal-sens
  double perturbation = 0.0;          // relative; defaults 0.05 (device-sens), 0.1 (nodal-sens)
  std::optional<FrequencyGrid> grid;  // overrides the scenario grid
  Region region{-500.0, 50.0, 0.0, 2.0 * kPi * 500.0};  // modes and fdpf at modes, rad/s
  int seeds_re = 12;
  int seeds_im = 16;
  bool at_modes = false;              // fdpf: also evaluate at refined modes
};

// Defaults for a request of the given kind (perturbation 0.05 for device-sens, 0.1 for nodal-sens).
AnalysisRequest default_request(AnalysisKind kind);
// Problems with the request's references against `net`, one message each.
std::vector<std::string> validate_request(const Network& net, const AnalysisRequest& request);

struct Scenario {
  std::string name;
  double s_base_va = 0.0;
  double v_base_v = 0.0;
  double f_base_hz = 0.0;
  FrequencyGrid grid;
  bool standalone_stable = true;  // asserted by the author, not verified
  Network network;
  std::vector<AnalysisRequest> analyses;
  std::uint64_t hash = 0;  // FNV-1a of the canonical JSON

  const AnalysisRequest& analysis(std::string_view name) const;  // UnknownComponent
  std::string hash_hex() const;
};

// Parse errors carry line/column; every semantic problem is collected into one ValidationError.
Scenario parse_scenario(std::string_view json_text, const std::filesystem::path& base_dir = ".",
                        const std::string& source = "<scenario>");
Scenario load_scenario(const std::filesystem::path& path);

std::uint64_t fnv1a(std::string_view bytes);

struct ResultTable {
  std::string name;  // file stem
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;
  std::map<std::string, std::string> metadata;

  void add_row(std::vector<double> row);  // Validation on column count mismatch
};

struct RunResult {
  std::string analysis;
  std::vector<ResultTable> tables;
  std::vector<std::string> summary;  // verdict and bookkeeping lines
};

RunResult run(const Scenario& scenario, std::string_view analysis_name);
RunResult run(const Scenario& scenario, const AnalysisRequest& request);

std::string format_csv(const ResultTable& table);
ResultTable parse_csv(std::string_view text, const std::string& name = "table");
void emit_csv(const ResultTable& table, const std::filesystem::path& path);

struct PlotSpec {
  std::string title;
  std::string y_label;
  bool nyquist = false;  // columns come in (re, im) pairs; equal aspect, (-1, 0) marked
};

std::string format_svg(const ResultTable& table, const PlotSpec& spec);
void emit_svg_plot(const ResultTable& table, const PlotSpec& spec, const std::filesystem::path& path);
PlotSpec default_plot(const ResultTable& table);

}  // namespace passivity
