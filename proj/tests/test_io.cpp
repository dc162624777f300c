#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <regex>

#include "doctest.h"
#include "fixtures.hpp"
#include "passivity/io.hpp"
#include "passivity/passivity.hpp"

using namespace passivity;
namespace fs = std::filesystem;

namespace {

const fs::path kRoot = PASSIVITY_SOURCE_DIR;

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("passivity_io_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string render(const RunResult& r) {
  std::string out;
  for (const auto& line : r.summary) out += line + "\n";
  for (const auto& t : r.tables) out += t.name + "\n" + format_csv(t);
  return out;
}

std::size_t count(const std::string& text, const std::string& needle) {
  std::size_t n = 0;
  for (auto pos = text.find(needle); pos != std::string::npos; pos = text.find(needle, pos + 1)) ++n;
  return n;
}

// Tag balance: every non-self-closing open tag has a matching close, in order.
bool balanced_xml(const std::string& s) {
  std::vector<std::string> stack;
  const std::regex tag(R"(<(/?)([A-Za-z][\w:-]*)[^>]*?(/?)>)");
  for (auto it = std::sregex_iterator(s.begin(), s.end(), tag); it != std::sregex_iterator(); ++it) {
    const auto& m = *it;
    if (m[0].str().rfind("<?", 0) == 0) continue;
    if (m[3] == "/") continue;
    if (m[1] == "/") {
      if (stack.empty() || stack.back() != m[2]) return false;
      stack.pop_back();
    } else {
      stack.push_back(m[2]);
    }
  }
  return stack.empty();
}

}  // namespace

TEST_CASE("bundled scenarios load and match the in-code fixtures") {
  const auto single = load_scenario(kRoot / "scenarios/single_gfl.json");
  CHECK(single.name == "single_gfl");
  CHECK(single.s_base_va == 5e6);
  CHECK(single.network.omega_b() == doctest::Approx(2.0 * kPi * 60.0));
  CHECK(single.grid.hz().size() == 400);
  const auto ref1 = testing::single_gfl(3.0, 0.4);

  const auto three = load_scenario(kRoot / "scenarios/three_bus.json");
  CHECK(three.network.bus_count() == 3);
  CHECK(three.network.branches().size() == 3);
  CHECK(three.network.devices().size() == 3);
  const auto ref3 = testing::three_bus();

  for (double f : {1.0, 17.0, 240.0, 1900.0}) {
    const Complex s(0.0, 2.0 * kPi * f);
    CHECK((assemble_nodal(single.network, s).matrix - assemble_nodal(ref1, s).matrix).norm() <= 1e-12);
    CHECK((assemble_nodal(three.network, s).matrix - assemble_nodal(ref3, s).matrix).norm() <= 1e-12);
  }
}

TEST_CASE("missing bus is reported against the branch") {
  try {
    load_scenario(kRoot / "tests/fixtures/malformed/missing_bus.json");
    FAIL("expected a validation error");
  } catch (const ValidationError& e) {
    REQUIRE(e.issues().size() == 1);
    CHECK(e.issues()[0].find("branches[0]") != std::string::npos);
    CHECK(e.issues()[0].find("branch A-C") != std::string::npos);
    CHECK(e.issues()[0].find("'C'") != std::string::npos);
  }
}

TEST_CASE("every malformed fixture yields a structured error") {
  std::size_t seen = 0;
  for (const auto& entry : fs::directory_iterator(kRoot / "tests/fixtures/malformed")) {
    if (entry.path().extension() != ".json") continue;
    ++seen;
    CAPTURE(entry.path().filename().string());
    bool structured = false;
    try {
      load_scenario(entry.path());
    } catch (const ParseError& e) {
      structured = e.line() >= 1 && e.column() >= 1;
    } catch (const ValidationError& e) {
      structured = !e.issues().empty();
      for (const auto& issue : e.issues()) structured = structured && issue.find('$') != std::string::npos;
    } catch (...) {
    }
    CHECK(structured);
  }
  CHECK(seen >= 15);
}

TEST_CASE("validation collects every problem, not just the first") {
  const std::string text = R"({"schema": 1, "base": {"S_b": -1, "V_b": 600, "f_b": 0},
    "frequency": {"min_hz": 5, "max_hz": 1},
    "network": {"buses": ["A"], "branches": [{"from": "A", "to": "Z", "type": "rl", "R": 0.1, "X": 0.2}],
                "shunts": [{"bus": "Q", "type": "c", "B": 0.1}]}})";
  try {
    parse_scenario(text);
    FAIL("expected a validation error");
  } catch (const ValidationError& e) {
    CHECK(e.issues().size() >= 5);
  }
}

TEST_CASE("syntax errors carry line and column") {
  try {
    parse_scenario("{\n  \"schema\": 1,\n  \"base\": {oops}\n}");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 3);
    CHECK(e.column() >= 11);
  }
}

TEST_CASE("black-box device round-trips through a scenario") {
  const auto dir = scratch_dir("blackbox");
  const auto model = make_gfl({}, testing::single_gfl_operating_point());
  const auto hz = log_grid(1.0, 2000.0, 400);
  write_table(tabulate(*model, hz), dir / "gfl.csv");
  std::ofstream(dir / "s.json") << R"({"schema": 1, "base": {"S_b": 1, "V_b": 1, "f_b": 60},
    "network": {"buses": ["A"], "devices": [{"name": "BB", "bus": "A", "kind": "blackbox", "table": "gfl.csv"}]}})";
  const auto sc = load_scenario(dir / "s.json");
  const auto& bb = *sc.network.devices().at(0).model;
  for (std::size_t k = 0; k < hz.size(); k += 37) {
    const Complex s(0.0, 2.0 * kPi * hz[k]);
    CHECK((bb.admittance(s) - model->admittance(s)).norm() <= 1e-12 * model->admittance(s).norm());
  }
  // the table bytes are part of the scenario identity
  const auto before = sc.hash;
  write_table(tabulate(*make_gfl({{"K_p_pll", 0.5}}, testing::single_gfl_operating_point()), hz), dir / "gfl.csv");
  CHECK(load_scenario(dir / "s.json").hash != before);
}

TEST_CASE("CSV roundtrip is lossless") {
  ResultTable t;
  t.name = "t";
  t.columns = {"freq_hz", "a", "b,c"};
  t.add_row({1.0, 0.1 + 0.2, -1.0 / 3.0});
  t.add_row({2.5, 1e-300, 6.02214076e23});
  t.add_row({1e4, std::nextafter(1.0, 2.0), -0.0});
  const auto back = parse_csv(format_csv(t));
  REQUIRE(back.columns == t.columns);
  REQUIRE(back.rows.size() == t.rows.size());
  for (std::size_t i = 0; i < t.rows.size(); ++i)
    for (std::size_t j = 0; j < t.columns.size(); ++j) {
      CHECK(back.rows[i][j] == t.rows[i][j]);
      CHECK(std::abs(back.rows[i][j] - t.rows[i][j]) <= 1e-12 * std::abs(t.rows[i][j]));
    }

  const auto dir = scratch_dir("csv");
  emit_csv(t, dir / "t.csv");
  std::ifstream in(dir / "t.csv");
  const std::string disk((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  CHECK(disk == format_csv(t));
}

TEST_CASE("empty table gives a header-only CSV") {
  ResultTable t;
  t.columns = {"freq_hz", "x"};
  CHECK(format_csv(t) == "freq_hz,x\n");
  CHECK(parse_csv(format_csv(t)).rows.empty());
}

TEST_CASE("row width is enforced") {
  ResultTable t;
  t.columns = {"freq_hz", "x"};
  CHECK_THROWS_AS(t.add_row({1.0}), Error);
  CHECK_THROWS_AS(parse_csv("freq_hz,x\n1,2,3\n"), Error);
  CHECK_THROWS_AS(parse_csv("freq_hz,x\n1,abc\n"), Error);
}

TEST_CASE("unwritable path is an Io error") {
  ResultTable t;
  t.columns = {"freq_hz"};
  try {
    emit_csv(t, "/proc/definitely/not/here.csv");
    FAIL("expected an Io error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::Io);
  }
}

TEST_CASE("line plot SVG is well formed with one path per data column") {
  const auto sc = load_scenario(kRoot / "scenarios/three_bus.json");
  const auto r = run(sc, "participation");
  const auto& t = r.tables.at(0);
  const auto svg = format_svg(t, default_plot(t));
  CHECK(svg.rfind("<?xml", 0) == 0);
  CHECK(svg.find("version=\"1.1\"") != std::string::npos);
  CHECK(balanced_xml(svg));
  CHECK(count(svg, "<path") == t.columns.size() - 1);
  for (std::size_t c = 1; c < t.columns.size(); ++c) CHECK(svg.find(">" + t.columns[c] + "<") != std::string::npos);
}

TEST_CASE("Nyquist SVG marks the critical point with one path per locus") {
  const auto sc = load_scenario(kRoot / "scenarios/single_gfl.json");
  const auto r = run(sc, "gnc");
  const auto& t = r.tables.at(0);
  const auto spec = default_plot(t);
  CHECK(spec.nyquist);
  const auto svg = format_svg(t, spec);
  CHECK(balanced_xml(svg));
  CHECK(count(svg, "<path") == (t.columns.size() - 1) / 2);
  CHECK(svg.find("(-1, 0)") != std::string::npos);
}

TEST_CASE("run dispatches the named analyses with the documented layout") {
  const auto single = load_scenario(kRoot / "scenarios/single_gfl.json");
  const auto sens = run(single, "sens_kp_pll");
  const auto& cols = sens.tables.at(0).columns;
  REQUIRE(cols.size() >= 5);
  CHECK(std::vector<std::string>(cols.begin(), cols.begin() + 5) ==
        std::vector<std::string>{"freq_hz", "index", "d_index", "predicted_after_5pct", "exact_after_5pct"});
  CHECK(sens.tables[0].rows.size() == 400);

  const auto three = load_scenario(kRoot / "scenarios/three_bus.json");
  const auto nodal = run(three, "nodal");
  CHECK(nodal.tables.at(0).columns ==
        std::vector<std::string>{"freq_hz", "nodal_index", "nodal_degenerate", "GFM-1.index", "GFM-2.index",
                                 "GFL-1.index"});

  const auto g = run(single, "gnc");
  CHECK(g.tables.at(0).name == "gnc_loci");
  bool verdict = false;
  for (const auto& line : g.summary) verdict = verdict || line.rfind("verdict: stable", 0) == 0;
  CHECK(verdict);

  CHECK_THROWS_AS(run(single, "no-such-analysis"), Error);
}

TEST_CASE("result rows are sorted by frequency") {
  const auto three = load_scenario(kRoot / "scenarios/three_bus.json");
  for (const char* name : {"nodal", "gnc", "modes", "fdpf"}) {
    CAPTURE(name);
    for (const auto& t : run(three, name).tables)
      for (std::size_t i = 1; i < t.rows.size(); ++i) CHECK(t.rows[i - 1][0] <= t.rows[i][0]);
  }
}

TEST_CASE("request overrides are validated before running") {
  const auto sc = load_scenario(kRoot / "scenarios/single_gfl.json");
  auto req = sc.analysis("sens_kp_pll");
  req.parameter = "no_such_parameter";
  CHECK_THROWS_AS(run(sc, req), ValidationError);
  req = default_request(AnalysisKind::NodalSens);
  req.component = "GFL";
  CHECK(run(sc, req).tables.at(0).rows.size() == 400);
}

TEST_CASE("run output does not depend on repetition or thread count") {
  const auto sc = load_scenario(kRoot / "scenarios/three_bus.json");
  const char* saved = std::getenv("PASSIVITY_THREADS");
  const std::string restore = saved ? saved : "";
  for (const char* name : {"nodal", "participation", "gnc", "modes"}) {
    CAPTURE(name);
    setenv("PASSIVITY_THREADS", "1", 1);
    const auto a = render(run(sc, name));
    setenv("PASSIVITY_THREADS", "4", 1);
    const auto b = render(run(sc, name));
    const auto c = render(run(sc, name));
    CHECK(a == b);
    CHECK(b == c);
  }
  if (saved) {
    setenv("PASSIVITY_THREADS", restore.c_str(), 1);
  } else {
    unsetenv("PASSIVITY_THREADS");
  }
}
