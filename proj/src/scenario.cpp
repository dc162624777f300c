#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "passivity/io.hpp"

namespace passivity {

using nlohmann::json;

namespace {

constexpr int kSchemaVersion = 1;

struct Reader {
  std::vector<std::string>& issues;

  void issue(const std::string& path, const std::string& what) { issues.push_back(path + ": " + what); }

  bool object(const json& j, const std::string& path) {
    if (j.is_object()) return true;
    issue(path, "expected an object");
    return false;
  }

  void known_keys(const json& j, const std::string& path, std::initializer_list<const char*> keys) {
    for (const auto& item : j.items()) {
      const bool ok = std::any_of(keys.begin(), keys.end(), [&](const char* k) { return item.key() == k; });
      if (!ok) issue(path + "." + item.key(), "unknown field");
    }
  }

  std::optional<double> number(const json& j, const char* key, const std::string& path, bool required) {
    const auto it = j.find(key);
    if (it == j.end()) {
      if (required) issue(path + "." + key, "missing required number");
      return std::nullopt;
    }
    if (!it->is_number()) {
      issue(path + "." + key, "expected a number");
      return std::nullopt;
    }
    const double v = it->get<double>();
    if (!std::isfinite(v)) {
      issue(path + "." + key, "must be finite");
      return std::nullopt;
    }
    return v;
  }

  std::optional<double> positive(const json& j, const char* key, const std::string& path, bool required) {
    auto v = number(j, key, path, required);
    if (v && !(*v > 0.0)) {
      issue(path + "." + key, "must be positive");
      return std::nullopt;
    }
    return v;
  }

  std::optional<std::string> string(const json& j, const char* key, const std::string& path, bool required) {
    const auto it = j.find(key);
    if (it == j.end()) {
      if (required) issue(path + "." + key, "missing required string");
      return std::nullopt;
    }
    if (!it->is_string() || it->get_ref<const std::string&>().empty()) {
      issue(path + "." + key, "expected a non-empty string");
      return std::nullopt;
    }
    return it->get<std::string>();
  }

  std::optional<bool> boolean(const json& j, const char* key, const std::string& path) {
    const auto it = j.find(key);
    if (it == j.end()) return std::nullopt;
    if (!it->is_boolean()) {
      issue(path + "." + key, "expected true or false");
      return std::nullopt;
    }
    return it->get<bool>();
  }

  std::optional<int> integer(const json& j, const char* key, const std::string& path, int lo, int hi) {
    const auto it = j.find(key);
    if (it == j.end()) return std::nullopt;
    if (!it->is_number_integer() || it->get<long long>() < lo || it->get<long long>() > hi) {
      issue(path + "." + key, "expected an integer in [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
      return std::nullopt;
    }
    return static_cast<int>(it->get<long long>());
  }

  const json* array(const json& j, const char* key, const std::string& path, bool required) {
    const auto it = j.find(key);
    if (it == j.end()) {
      if (required) issue(path + "." + key, "missing required array");
      return nullptr;
    }
    if (!it->is_array()) {
      issue(path + "." + key, "expected an array");
      return nullptr;
    }
    return &*it;
  }
};

std::string at(const std::string& path, std::size_t k) { return path + "[" + std::to_string(k) + "]"; }

std::pair<std::size_t, std::size_t> line_column(std::string_view text, std::size_t byte) {
  std::size_t line = 1, col = 1;
  for (std::size_t k = 0; k < std::min(byte, text.size()); ++k) {
    if (text[k] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

std::optional<FrequencyGrid> read_grid(Reader& r, const json& j, const std::string& path) {
  if (!r.object(j, path)) return std::nullopt;
  r.known_keys(j, path, {"min_hz", "max_hz", "points", "per_decade", "list_hz"});
  FrequencyGrid g;
  const std::size_t before = r.issues.size();
  if (const json* list = r.array(j, "list_hz", path, false)) {
    for (std::size_t k = 0; k < list->size(); ++k) {
      const json& v = (*list)[k];
      if (!v.is_number() || !(v.get<double>() > 0.0) || !std::isfinite(v.get<double>())) {
        r.issue(at(path + ".list_hz", k), "expected a positive frequency");
        continue;
      }
      g.list_hz.push_back(v.get<double>());
    }
    if (list->empty()) r.issue(path + ".list_hz", "must not be empty");
    for (std::size_t k = 1; k < g.list_hz.size(); ++k) {
      if (!(g.list_hz[k] > g.list_hz[k - 1])) {
        r.issue(path + ".list_hz", "must be strictly increasing");
        break;
      }
    }
    if (!g.list_hz.empty()) {
      g.min_hz = g.list_hz.front();
      g.max_hz = g.list_hz.back();
    }
  } else {
    const auto lo = r.positive(j, "min_hz", path, true);
    const auto hi = r.positive(j, "max_hz", path, true);
    if (lo) g.min_hz = *lo;
    if (hi) g.max_hz = *hi;
    if (lo && hi && !(*lo < *hi)) r.issue(path, "min_hz must be below max_hz");
    if (const auto pd = r.positive(j, "per_decade", path, false)) g.per_decade = *pd;
    if (const auto n = r.integer(j, "points", path, 2, 10000000)) g.points = static_cast<std::size_t>(*n);
  }
  if (r.issues.size() != before) return std::nullopt;
  return g;
}

ParameterSet read_parameters(Reader& r, const json& j, const std::string& path) {
  ParameterSet p;
  if (!r.object(j, path)) return p;
  for (const auto& item : j.items()) {
    if (!item.value().is_number() || !std::isfinite(item.value().get<double>())) {
      r.issue(path + "." + item.key(), "expected a finite number");
      continue;
    }
    p.set(item.key(), item.value().get<double>());
  }
  return p;
}

Region read_region(Reader& r, const json& j, const std::string& path, Region region) {
  if (!r.object(j, path)) return region;
  r.known_keys(j, path, {"re_min", "re_max", "im_min", "im_max"});
  if (auto v = r.number(j, "re_min", path, false)) region.re_min = *v;
  if (auto v = r.number(j, "re_max", path, false)) region.re_max = *v;
  if (auto v = r.number(j, "im_min", path, false)) region.im_min = *v;
  if (auto v = r.number(j, "im_max", path, false)) region.im_max = *v;
  if (!(region.re_min < region.re_max) || !(region.im_min < region.im_max)) r.issue(path, "region must be non-empty");
  return region;
}

// Element models shared by branches and shunts.
ModelPtr read_element(Reader& r, const json& j, const std::string& path, double omega_b, bool shunt) {
  const auto type = r.string(j, "type", path, true);
  if (!type) return nullptr;
  try {
    if (*type == "rl") {
      r.known_keys(j, path, {"type", "from", "to", "bus", "R", "X"});
      const auto res = r.number(j, "R", path, true);
      const auto x = r.number(j, "X", path, true);
      if (res && *res < 0.0) r.issue(path + ".R", "must be non-negative");
      if (x && *x < 0.0) r.issue(path + ".X", "must be non-negative");
      if (!res || !x || *res < 0.0 || *x < 0.0) return nullptr;
      if (*res == 0.0 && *x == 0.0) {
        r.issue(path, "R and X cannot both be zero");
        return nullptr;
      }
      return make_rl_branch(*res, *x, omega_b);
    }
    if (shunt && *type == "c") {
      r.known_keys(j, path, {"type", "bus", "B"});
      const auto b = r.positive(j, "B", path, true);
      return b ? make_shunt_c(*b, omega_b) : nullptr;
    }
    if (shunt && *type == "thevenin") {
      r.known_keys(j, path, {"type", "bus", "SCR", "XR"});
      const auto scr = r.positive(j, "SCR", path, true);
      const auto xr = r.positive(j, "XR", path, true);
      return scr && xr ? make_thevenin(*scr, *xr, omega_b) : nullptr;
    }
  } catch (const ValidationError& e) {
    for (const auto& i : e.issues()) r.issue(path, i);
    return nullptr;
  } catch (const Error& e) {
    r.issue(path, e.what());
    return nullptr;
  }
  r.issue(path + ".type", "unknown element type '" + *type + "'");
  return nullptr;
}

ModelPtr read_device(Reader& r, const json& j, const std::string& path, double omega_b,
                     const std::filesystem::path& base_dir, std::string& table_text) {
  const auto kind = r.string(j, "kind", path, true);
  if (!kind) return nullptr;
  try {
    if (*kind == "gfl" || *kind == "gfm") {
      r.known_keys(j, path, {"name", "bus", "kind", "parameters", "operating_point"});
      ParameterSet params;
      if (const auto it = j.find("parameters"); it != j.end()) params = read_parameters(r, *it, path + ".parameters");
      double p = 0.0, q = 0.0, v = 1.0;
      if (const auto it = j.find("operating_point"); it != j.end() && r.object(*it, path + ".operating_point")) {
        const std::string op_path = path + ".operating_point";
        r.known_keys(*it, op_path, {"P", "Q", "V"});
        p = r.number(*it, "P", op_path, true).value_or(0.0);
        q = r.number(*it, "Q", op_path, true).value_or(0.0);
        v = r.positive(*it, "V", op_path, false).value_or(1.0);
      } else if (it == j.end()) {
        r.issue(path + ".operating_point", "missing required object");
      }
      const auto op = OperatingPoint::from_terminal(p, q, v, omega_b);
      return *kind == "gfl" ? make_gfl(params, op) : make_gfm(params, op);
    }
    if (*kind == "blackbox") {
      r.known_keys(j, path, {"name", "bus", "kind", "table"});
      const auto file = r.string(j, "table", path, true);
      if (!file) return nullptr;
      const std::filesystem::path full = base_dir / *file;
      std::ifstream in(full, std::ios::binary);
      if (!in) {
        r.issue(path + ".table", "cannot open '" + full.string() + "'");
        return nullptr;
      }
      std::ostringstream text;
      text << in.rdbuf();
      table_text += text.str();
      return blackbox_model(parse_table(text.str(), full.string()));
    }
  } catch (const ValidationError& e) {
    for (const auto& i : e.issues()) r.issue(path, i);
    return nullptr;
  } catch (const Error& e) {
    r.issue(path, e.what());
    return nullptr;
  }
  r.issue(path + ".kind", "unknown device kind '" + *kind + "'");
  return nullptr;
}

struct PendingBranch {
  std::string from, to;
  ModelPtr model;
};
struct PendingShunt {
  std::string bus;
  ModelPtr model;
};
struct PendingDevice {
  std::string name, bus;
  ModelPtr model;
};

double default_perturbation(AnalysisKind kind) { return kind == AnalysisKind::DeviceSens ? 0.05 : 0.1; }

}  // namespace

std::vector<double> FrequencyGrid::hz() const {
  if (!list_hz.empty()) return list_hz;
  if (per_decade) return log_grid_per_decade(min_hz, max_hz, *per_decade);
  return log_grid(min_hz, max_hz, points);
}

std::string_view to_string(AnalysisKind kind) {
  switch (kind) {
    case AnalysisKind::DevicePassivity: return "device-passivity";
    case AnalysisKind::DeviceSens: return "device-sens";
    case AnalysisKind::NodalPassivity: return "nodal-passivity";
    case AnalysisKind::NodalSens: return "nodal-sens";
    case AnalysisKind::Participation: return "participation";
    case AnalysisKind::Gnc: return "gnc";
    case AnalysisKind::Fdpf: return "fdpf";
    case AnalysisKind::Modes: return "modes";
  }
  return "unknown";
}

std::optional<AnalysisKind> analysis_kind(std::string_view name) {
  for (auto k : {AnalysisKind::DevicePassivity, AnalysisKind::DeviceSens, AnalysisKind::NodalPassivity,
                 AnalysisKind::NodalSens, AnalysisKind::Participation, AnalysisKind::Gnc, AnalysisKind::Fdpf,
                 AnalysisKind::Modes}) {
    if (to_string(k) == name) return k;
  }
  return std::nullopt;
}

std::vector<std::string> validate_request(const Network& net, const AnalysisRequest& a) {
  std::vector<std::string> issues;
  const std::string where = "analysis '" + a.name + "'";
  auto device_ref = [&](const std::string& name) -> const Device* {
    for (const auto& d : net.devices())
      if (d.name == name) return &d;
    issues.push_back(where + ": unknown device '" + name + "'");
    return nullptr;
  };
  switch (a.kind) {
    case AnalysisKind::DevicePassivity:
      if (a.devices.empty() && net.devices().empty()) issues.push_back(where + ": network has no devices");
      for (const auto& d : a.devices) device_ref(d);
      break;
    case AnalysisKind::DeviceSens: {
      if (a.devices.size() != 1) {
        issues.push_back(where + ": exactly one device is required");
        break;
      }
      const Device* d = device_ref(a.devices.front());
      if (a.parameter.empty()) {
        issues.push_back(where + ": parameter is required");
      } else if (d && !d->model->parameters().has(a.parameter)) {
        issues.push_back(where + ": device '" + d->name + "' has no parameter '" + a.parameter + "'");
      } else if (d && d->model->parameters().get(a.parameter) == 0.0) {
        issues.push_back(where + ": parameter '" + a.parameter + "' is zero; a relative perturbation is undefined");
      } else if (d && !d->model->differentiable()) {
        issues.push_back(where + ": device '" + d->name + "' has no parametric derivative");
      }
      break;
    }
    case AnalysisKind::NodalSens:
      if (a.component.empty()) {
        issues.push_back(where + ": component is required");
      } else {
        const auto names = net.component_names();
        if (std::find(names.begin(), names.end(), a.component) == names.end())
          issues.push_back(where + ": unknown component '" + a.component + "'");
      }
      break;
    case AnalysisKind::Gnc:
      if (net.devices().empty()) issues.push_back(where + ": network has no devices");
      break;
    case AnalysisKind::Modes:
    case AnalysisKind::Fdpf:
      if (a.kind == AnalysisKind::Modes || a.at_modes) {
        for (const auto& d : net.devices())
          if (!d.model->analytic_in_s())
            issues.push_back(where + ": device '" + d.name + "' is measured data and cannot be evaluated off the j*omega axis");
      }
      break;
    default:
      break;
  }
  if (a.kind == AnalysisKind::DeviceSens || a.kind == AnalysisKind::NodalSens) {
    if (!(a.perturbation != 0.0 && std::abs(a.perturbation) < 1.0))
      issues.push_back(where + ": perturbation must be nonzero with magnitude below 1");
  }
  return issues;
}

AnalysisRequest default_request(AnalysisKind kind) {
  AnalysisRequest a;
  a.kind = kind;
  a.name = std::string(to_string(kind));
  a.perturbation = default_perturbation(kind);
  return a;
}

const AnalysisRequest& Scenario::analysis(std::string_view wanted) const {
  for (const auto& a : analyses)
    if (a.name == wanted) return a;
  throw Error(Errc::UnknownComponent, "scenario '" + name + "': no analysis named '" + std::string(wanted) + "'");
}

std::string Scenario::hash_hex() const {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int k = 0; k < 16; ++k) out[static_cast<std::size_t>(15 - k)] = digits[(hash >> (4 * k)) & 0xF];
  return out;
}

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

Scenario parse_scenario(std::string_view text, const std::filesystem::path& base_dir, const std::string& source) {
  json root;
  try {
    root = json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    const auto [line, col] = line_column(text, e.byte == 0 ? 0 : e.byte - 1);
    std::ostringstream os;
    os << source << ":" << line << ":" << col << ": malformed JSON";
    throw ParseError(os.str(), line, col);
  }

  std::vector<std::string> issues;
  Reader r{issues};
  if (!root.is_object()) throw ValidationError({source + ": $: top level must be an object"});
  r.known_keys(root, "$", {"schema", "name", "base", "frequency", "standalone_stable", "network", "analyses"});

  if (const auto v = root.find("schema"); v == root.end()) {
    r.issue("$.schema", "missing schema version");
  } else if (!v->is_number_integer() || v->get<long long>() != kSchemaVersion) {
    r.issue("$.schema", "unsupported schema version (expected " + std::to_string(kSchemaVersion) + ")");
  }
  const std::string name = r.string(root, "name", "$", false).value_or("scenario");

  double s_b = 0.0, v_b = 0.0, f_b = 60.0;
  if (const auto it = root.find("base"); it == root.end()) {
    r.issue("$.base", "missing required object");
  } else if (r.object(*it, "$.base")) {
    r.known_keys(*it, "$.base", {"S_b", "V_b", "f_b"});
    s_b = r.positive(*it, "S_b", "$.base", true).value_or(0.0);
    v_b = r.positive(*it, "V_b", "$.base", true).value_or(0.0);
    f_b = r.positive(*it, "f_b", "$.base", true).value_or(60.0);
  }
  const double omega_b = 2.0 * kPi * f_b;

  FrequencyGrid grid;
  if (const auto it = root.find("frequency"); it != root.end()) {
    if (auto g = read_grid(r, *it, "$.frequency")) grid = *g;
  }
  const bool standalone = r.boolean(root, "standalone_stable", "$").value_or(true);

  // network
  std::vector<std::string> buses;
  std::vector<PendingBranch> branches;
  std::vector<PendingShunt> shunts;
  std::vector<PendingDevice> devices;
  std::string table_text;
  const auto net_it = root.find("network");
  if (net_it == root.end()) {
    r.issue("$.network", "missing required object");
  } else if (r.object(*net_it, "$.network")) {
    const json& nj = *net_it;
    const std::string np = "$.network";
    r.known_keys(nj, np, {"buses", "branches", "shunts", "devices"});
    std::set<std::string> bus_set;
    if (const json* bl = r.array(nj, "buses", np, true)) {
      for (std::size_t k = 0; k < bl->size(); ++k) {
        const json& b = (*bl)[k];
        if (!b.is_string() || b.get_ref<const std::string&>().empty()) {
          r.issue(at(np + ".buses", k), "expected a non-empty bus name");
        } else if (!bus_set.insert(b.get<std::string>()).second) {
          r.issue(at(np + ".buses", k), "duplicate bus '" + b.get<std::string>() + "'");
        } else {
          buses.push_back(b.get<std::string>());
        }
      }
      if (bl->empty()) r.issue(np + ".buses", "at least one bus is required");
    }
    auto bus_ref = [&](const std::optional<std::string>& bus, const std::string& path, const std::string& label) {
      if (bus && bus_set.count(*bus) == 0) r.issue(path, label + ": unknown bus '" + *bus + "'");
      return bus && bus_set.count(*bus) != 0;
    };
    if (const json* bl = r.array(nj, "branches", np, false)) {
      for (std::size_t k = 0; k < bl->size(); ++k) {
        const std::string p = at(np + ".branches", k);
        const json& b = (*bl)[k];
        if (!r.object(b, p)) continue;
        const auto from = r.string(b, "from", p, true);
        const auto to = r.string(b, "to", p, true);
        const std::string label = "branch " + from.value_or("?") + "-" + to.value_or("?");
        const bool ok_from = bus_ref(from, p + ".from", label);
        const bool ok_to = bus_ref(to, p + ".to", label);
        if (from && to && *from == *to) r.issue(p, label + ": branch must connect two different buses");
        ModelPtr m = read_element(r, b, p, omega_b, false);
        if (ok_from && ok_to && m) branches.push_back({*from, *to, m});
      }
    }
    if (const json* sl = r.array(nj, "shunts", np, false)) {
      for (std::size_t k = 0; k < sl->size(); ++k) {
        const std::string p = at(np + ".shunts", k);
        const json& s = (*sl)[k];
        if (!r.object(s, p)) continue;
        const auto bus = r.string(s, "bus", p, true);
        const bool ok = bus_ref(bus, p + ".bus", "shunt");
        ModelPtr m = read_element(r, s, p, omega_b, true);
        if (ok && m) shunts.push_back({*bus, m});
      }
    }
    std::set<std::string> device_names;
    if (const json* dl = r.array(nj, "devices", np, false)) {
      for (std::size_t k = 0; k < dl->size(); ++k) {
        const std::string p = at(np + ".devices", k);
        const json& d = (*dl)[k];
        if (!r.object(d, p)) continue;
        const auto dname = r.string(d, "name", p, true);
        if (dname && !device_names.insert(*dname).second) r.issue(p + ".name", "duplicate device '" + *dname + "'");
        const auto bus = r.string(d, "bus", p, true);
        const bool ok = bus_ref(bus, p + ".bus", "device " + dname.value_or("?"));
        ModelPtr m = read_device(r, d, p, omega_b, base_dir, table_text);
        if (ok && dname && m) devices.push_back({*dname, *bus, m});
      }
    }
  }

  std::optional<Network> net;
  if (issues.empty()) {
    try {
      Network built(buses, omega_b);
      for (auto& b : branches) built.add_branch(b.from, b.to, b.model);
      for (auto& s : shunts) built.add_shunt(s.bus, s.model);
      for (auto& d : devices) built.add_device(d.bus, d.model, d.name);
      net.emplace(std::move(built));
    } catch (const Error& e) {
      r.issue("$.network", e.what());
    }
  }

  // analyses
  std::vector<AnalysisRequest> analyses;
  if (const json* al = r.array(root, "analyses", "$", false)) {
    std::set<std::string> names;
    for (std::size_t k = 0; k < al->size(); ++k) {
      const std::string p = at("$.analyses", k);
      const json& aj = (*al)[k];
      if (!r.object(aj, p)) continue;
      r.known_keys(aj, p,
                   {"name", "type", "device", "devices", "parameter", "component", "perturbation", "frequency",
                    "region", "seeds", "at_modes"});
      const auto type = r.string(aj, "type", p, true);
      if (!type) continue;
      const auto kind = analysis_kind(*type);
      if (!kind) {
        r.issue(p + ".type", "unknown analysis type '" + *type + "'");
        continue;
      }
      AnalysisRequest a = default_request(*kind);
      a.name = r.string(aj, "name", p, false).value_or(*type);
      if (!names.insert(a.name).second) r.issue(p + ".name", "duplicate analysis name '" + a.name + "'");
      if (auto d = r.string(aj, "device", p, false)) a.devices.push_back(*d);
      if (const json* dl = r.array(aj, "devices", p, false)) {
        for (std::size_t i = 0; i < dl->size(); ++i) {
          if ((*dl)[i].is_string()) {
            a.devices.push_back((*dl)[i].get<std::string>());
          } else {
            r.issue(at(p + ".devices", i), "expected a device name");
          }
        }
      }
      if (auto v = r.string(aj, "parameter", p, false)) a.parameter = *v;
      if (auto v = r.string(aj, "component", p, false)) a.component = *v;
      if (auto v = r.number(aj, "perturbation", p, false)) a.perturbation = *v;
      if (const auto it = aj.find("frequency"); it != aj.end()) a.grid = read_grid(r, *it, p + ".frequency");
      if (const auto it = aj.find("region"); it != aj.end()) a.region = read_region(r, *it, p + ".region", a.region);
      if (const auto it = aj.find("seeds"); it != aj.end()) {
        if (it->is_array() && it->size() == 2 && (*it)[0].is_number_integer() && (*it)[1].is_number_integer() &&
            (*it)[0].get<long long>() >= 1 && (*it)[1].get<long long>() >= 1 && (*it)[0].get<long long>() <= 1000 &&
            (*it)[1].get<long long>() <= 1000) {
          a.seeds_re = (*it)[0].get<int>();
          a.seeds_im = (*it)[1].get<int>();
        } else {
          r.issue(p + ".seeds", "expected [n_re, n_im] with 1 <= n <= 1000");
        }
      }
      if (auto v = r.boolean(aj, "at_modes", p)) a.at_modes = *v;
      if (net) {
        for (auto& i : validate_request(*net, a)) issues.push_back(p + ": " + i);
      }
      analyses.push_back(std::move(a));
    }
  }

  if (!issues.empty()) {
    for (auto& i : issues) i = source + ": " + i;
    throw ValidationError(std::move(issues));
  }

  const std::string canonical = root.dump() + table_text;
  return Scenario{name, s_b, v_b, f_b, grid, standalone, std::move(*net), std::move(analyses), fnv1a(canonical)};
}

Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::Io, "cannot open scenario '" + path.string() + "'");
  std::ostringstream text;
  text << in.rdbuf();
  return parse_scenario(text.str(), path.parent_path(), path.string());
}

}  // namespace passivity
