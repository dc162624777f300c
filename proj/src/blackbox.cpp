#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "passivity/devices.hpp"
#include "passivity/text.hpp"

namespace passivity {

namespace {

class BlackBoxModel final : public DeviceModel {
 public:
  explicit BlackBoxModel(FrequencyTable table) : table_(std::move(table)) {
    log_f_.reserve(table_.freq_hz.size());
    for (double f : table_.freq_hz) log_f_.push_back(std::log10(f));
  }

  std::string kind() const override { return "blackbox"; }
  bool differentiable() const override { return false; }
  bool analytic_in_s() const override { return false; }
  const ParameterSet& parameters() const override { return empty_; }
  ModelPtr with_parameter(std::string_view name, double) const override {
    throw Error(Errc::NotDifferentiable,
                "blackbox: tabulated data has no parameter '" + std::string(name) + "'");
  }

  DqAdmittance admittance(Complex s) const override {
    const double omega = s.imag();
    if (std::abs(s.real()) > 1e-12 * std::abs(s)) {
      throw Error(Errc::OutOfRange, "blackbox: only s = j*omega can be evaluated");
    }
    const double f = omega / (2.0 * kPi);
    const double f_lo = table_.freq_hz.front();
    const double f_hi = table_.freq_hz.back();
    constexpr double kSlack = 1e-12;
    if (!(f >= f_lo * (1.0 - kSlack) && f <= f_hi * (1.0 + kSlack))) {
      std::ostringstream os;
      os << "blackbox: frequency " << f << " Hz outside table span [" << f_lo << ", " << f_hi << "] Hz";
      throw Error(Errc::OutOfRange, os.str());
    }
    const double lf = std::log10(std::clamp(f, f_lo, f_hi));
    const auto it = std::upper_bound(log_f_.begin(), log_f_.end(), lf);
    std::size_t k = static_cast<std::size_t>(it - log_f_.begin());
    k = std::clamp<std::size_t>(k, 1, log_f_.size() - 1) - 1;
    const double t = (lf - log_f_[k]) / (log_f_[k + 1] - log_f_[k]);
    if (t == 0.0) return table_.values[k];
    if (t == 1.0) return table_.values[k + 1];
    return (1.0 - t) * table_.values[k] + t * table_.values[k + 1];
  }

 private:
  FrequencyTable table_;
  std::vector<double> log_f_;
  ParameterSet empty_;
};

}  // namespace

FrequencyTable parse_table(std::string_view text, const std::string& source) {
  auto fail = [&](std::size_t line, const std::string& msg) -> Error {
    return Error(Errc::MalformedTable, source + ":" + std::to_string(line) + ": " + msg);
  };
  if (text.size() >= 3 && static_cast<unsigned char>(text[0]) == 0xEF &&
      static_cast<unsigned char>(text[1]) == 0xBB && static_cast<unsigned char>(text[2]) == 0xBF) {
    text.remove_prefix(3);
  }

  FrequencyTable table;
  std::size_t line_no = 0;
  bool header_seen = false;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text.remove_prefix(nl == std::string_view::npos ? text.size() : nl + 1);
    ++line_no;
    line = trim(line);
    if (line.empty()) continue;
    if (!header_seen) {
      std::string compact;
      for (char c : line) {
        if (c != ' ' && c != '\t') compact.push_back(c);
      }
      if (compact != kTableHeader) throw fail(line_no, "expected header '" + std::string(kTableHeader) + "'");
      header_seen = true;
      continue;
    }
    std::array<double, 9> fields{};
    std::size_t count = 0;
    std::size_t start = 0;
    while (true) {
      const auto comma = line.find(',', start);
      const auto field = line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start);
      if (count >= fields.size()) throw fail(line_no, "too many columns");
      if (!parse_double(field, fields[count])) {
        throw fail(line_no, "cannot parse '" + std::string(trim(field)) + "' as a number");
      }
      ++count;
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    if (count != fields.size()) throw fail(line_no, "expected 9 columns, got " + std::to_string(count));
    if (!std::all_of(fields.begin(), fields.end(), [](double v) { return std::isfinite(v); })) {
      throw fail(line_no, "non-finite value");
    }
    if (!(fields[0] > 0.0)) throw fail(line_no, "frequency must be positive");
    if (!table.freq_hz.empty() && !(fields[0] > table.freq_hz.back())) {
      throw fail(line_no, "frequencies must be strictly increasing");
    }
    DqAdmittance y;
    y << Complex(fields[1], fields[2]), Complex(fields[3], fields[4]), Complex(fields[5], fields[6]),
        Complex(fields[7], fields[8]);
    table.freq_hz.push_back(fields[0]);
    table.values.push_back(y);
  }
  if (!header_seen) throw fail(line_no, "empty table");
  if (table.freq_hz.size() < 2) throw fail(line_no, "need at least 2 rows");
  return table;
}

FrequencyTable read_table(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::Io, "cannot open table '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_table(buf.str(), path.string());
}

std::string format_table(const FrequencyTable& table) {
  std::string out(kTableHeader);
  out += '\n';
  for (std::size_t k = 0; k < table.freq_hz.size(); ++k) {
    const auto& y = table.values[k];
    out += format_double(table.freq_hz[k]);
    for (int i = 0; i < 2; ++i) {
      for (int j = 0; j < 2; ++j) {
        out += ',';
        out += format_double(y(i, j).real());
        out += ',';
        out += format_double(y(i, j).imag());
      }
    }
    out += '\n';
  }
  return out;
}

void write_table(const FrequencyTable& table, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::Io, "cannot write table '" + path.string() + "'");
  out << format_table(table);
  if (!out) throw Error(Errc::Io, "write failed for '" + path.string() + "'");
}

FrequencyTable tabulate(const DeviceModel& model, const std::vector<double>& freq_hz) {
  FrequencyTable table;
  table.freq_hz = freq_hz;
  table.values.reserve(freq_hz.size());
  for (double f : freq_hz) table.values.push_back(model.admittance(Complex(0.0, 2.0 * kPi * f)));
  return table;
}

ModelPtr blackbox_model(FrequencyTable table) {
  if (table.freq_hz.size() != table.values.size()) {
    throw Error(Errc::MalformedTable, "blackbox: frequency and value counts differ");
  }
  if (table.freq_hz.size() < 2) throw Error(Errc::MalformedTable, "blackbox: need at least 2 rows");
  for (std::size_t k = 0; k < table.freq_hz.size(); ++k) {
    if (!(table.freq_hz[k] > 0.0) || (k > 0 && !(table.freq_hz[k] > table.freq_hz[k - 1]))) {
      throw Error(Errc::MalformedTable, "blackbox: frequencies must be positive and strictly increasing");
    }
    if (!table.values[k].allFinite()) throw Error(Errc::MalformedTable, "blackbox: non-finite value");
  }
  return std::make_shared<BlackBoxModel>(std::move(table));
}

}  // namespace passivity
