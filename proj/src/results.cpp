#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <limits>

#include "passivity/io.hpp"
#include "passivity/text.hpp"

namespace passivity {

namespace {

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::Io, "cannot write '" + path.string() + "'");
  out << content;
  out.close();
  if (!out) throw Error(Errc::Io, "write failed for '" + path.string() + "'");
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t k = 0; k < line.size(); ++k) {
    const char c = line[k];
    if (quoted) {
      if (c == '"' && k + 1 < line.size() && line[k + 1] == '"') {
        cur += '"';
        ++k;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

std::string fixed(double v, int digits = 2) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::fixed, digits);
  return std::string(buf, res.ptr);
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

constexpr std::array<const char*, 10> kPalette = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                                  "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

constexpr double kWidth = 820.0;
constexpr double kHeight = 520.0;
constexpr double kLeft = 80.0;
constexpr double kRight = 200.0;
constexpr double kTop = 40.0;
constexpr double kBottom = 60.0;

struct Frame {
  double x0, x1, y0, y1;
  double px(double x) const { return kLeft + (x - x0) / (x1 - x0) * (kWidth - kLeft - kRight); }
  double py(double y) const { return kHeight - kBottom - (y - y0) / (y1 - y0) * (kHeight - kTop - kBottom); }
};

void pad_range(double& lo, double& hi) {
  if (!(lo < hi)) {
    const double c = std::isfinite(lo) ? lo : 0.0;
    lo = c - 1.0;
    hi = c + 1.0;
    return;
  }
  const double m = 0.05 * (hi - lo);
  lo -= m;
  hi += m;
}

std::string header(const std::string& title) {
  std::string s = "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  s += "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" + fixed(kWidth, 0) + "\" height=\"" +
       fixed(kHeight, 0) + "\" viewBox=\"0 0 " + fixed(kWidth, 0) + " " + fixed(kHeight, 0) + "\">\n";
  s += "<rect x=\"0\" y=\"0\" width=\"" + fixed(kWidth, 0) + "\" height=\"" + fixed(kHeight, 0) +
       "\" fill=\"white\"/>\n";
  s += "<text x=\"" + fixed(kWidth / 2.0) + "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" "
       "font-size=\"16\">" + xml_escape(title) + "</text>\n";
  return s;
}

std::string axes(const Frame& f, const std::string& xlabel, const std::string& ylabel, bool log_x) {
  std::string s;
  const double l = kLeft, r = kWidth - kRight, t = kTop, b = kHeight - kBottom;
  s += "<rect x=\"" + fixed(l) + "\" y=\"" + fixed(t) + "\" width=\"" + fixed(r - l) + "\" height=\"" + fixed(b - t) +
       "\" fill=\"none\" stroke=\"black\"/>\n";
  if (log_x) {
    for (double d = std::ceil(f.x0); d <= std::floor(f.x1); d += 1.0) {
      const double x = f.px(d);
      s += "<line x1=\"" + fixed(x) + "\" y1=\"" + fixed(t) + "\" x2=\"" + fixed(x) + "\" y2=\"" + fixed(b) +
           "\" stroke=\"#dddddd\"/>\n";
      s += "<text x=\"" + fixed(x) + "\" y=\"" + fixed(b + 18.0) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">1e" + fixed(d, 0) + "</text>\n";
    }
  } else {
    for (int k = 0; k <= 4; ++k) {
      const double v = f.x0 + (f.x1 - f.x0) * k / 4.0;
      s += "<text x=\"" + fixed(f.px(v)) + "\" y=\"" + fixed(b + 18.0) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" + xml_escape(format_double(v).substr(0, 8)) +
           "</text>\n";
    }
  }
  for (int k = 0; k <= 4; ++k) {
    const double v = f.y0 + (f.y1 - f.y0) * k / 4.0;
    const double y = f.py(v);
    s += "<line x1=\"" + fixed(l) + "\" y1=\"" + fixed(y) + "\" x2=\"" + fixed(r) + "\" y2=\"" + fixed(y) +
         "\" stroke=\"#eeeeee\"/>\n";
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 4);
    s += "<text x=\"" + fixed(l - 6.0) + "\" y=\"" + fixed(y + 4.0) +
         "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"12\">" + std::string(buf, res.ptr) + "</text>\n";
  }
  s += "<text x=\"" + fixed((l + r) / 2.0) + "\" y=\"" + fixed(kHeight - 16.0) +
       "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">" + xml_escape(xlabel) + "</text>\n";
  s += "<text x=\"18\" y=\"" + fixed((t + b) / 2.0) + "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
       "font-size=\"13\" transform=\"rotate(-90 18 " + fixed((t + b) / 2.0) + ")\">" + xml_escape(ylabel) + "</text>\n";
  return s;
}

std::string legend_entry(std::size_t k, const std::string& label) {
  const double x = kWidth - kRight + 14.0;
  const double y = kTop + 14.0 + 18.0 * static_cast<double>(k);
  const char* color = kPalette[k % kPalette.size()];
  return "<line x1=\"" + fixed(x) + "\" y1=\"" + fixed(y) + "\" x2=\"" + fixed(x + 22.0) + "\" y2=\"" + fixed(y) +
         "\" stroke=\"" + color + "\" stroke-width=\"2\"/>\n" + "<text x=\"" + fixed(x + 28.0) + "\" y=\"" +
         fixed(y + 4.0) + "\" font-family=\"sans-serif\" font-size=\"12\">" + xml_escape(label) + "</text>\n";
}

std::string path_element(const std::string& d, std::size_t k) {
  return "<path d=\"" + d + "\" fill=\"none\" stroke=\"" + kPalette[k % kPalette.size()] +
         "\" stroke-width=\"1.5\"/>\n";
}

// Segments break at non-finite samples.
template <typename Point> std::string polyline(std::size_t n, Point point) {
  std::string d;
  bool pen = false;
  for (std::size_t i = 0; i < n; ++i) {
    const auto [x, y, ok] = point(i);
    if (!ok) {
      pen = false;
      continue;
    }
    d += (pen ? " L" : (d.empty() ? "M" : " M")) + fixed(x) + " " + fixed(y);
    pen = true;
  }
  return d.empty() ? "M0 0" : d;
}

std::string line_plot(const ResultTable& t, const PlotSpec& spec) {
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& row : t.rows) {
    if (row.empty() || !(row[0] > 0.0)) continue;
    x0 = std::min(x0, std::log10(row[0]));
    x1 = std::max(x1, std::log10(row[0]));
    for (std::size_t c = 1; c < row.size(); ++c) {
      if (!std::isfinite(row[c])) continue;
      y0 = std::min(y0, row[c]);
      y1 = std::max(y1, row[c]);
    }
  }
  if (!(x0 < x1)) {
    x0 = std::isfinite(x0) ? x0 - 0.5 : 0.0;
    x1 = x0 + 1.0;
  }
  pad_range(y0, y1);
  const Frame f{x0, x1, y0, y1};
  std::string s = header(spec.title) + axes(f, "frequency (Hz)", spec.y_label, true);
  for (std::size_t c = 1; c < t.columns.size(); ++c) {
    s += path_element(polyline(t.rows.size(),
                               [&](std::size_t i) {
                                 const auto& row = t.rows[i];
                                 const bool ok = row[0] > 0.0 && std::isfinite(row[c]);
                                 return std::tuple{ok ? f.px(std::log10(row[0])) : 0.0, ok ? f.py(row[c]) : 0.0, ok};
                               }),
                      c - 1);
    s += legend_entry(c - 1, t.columns[c]);
  }
  return s + "</svg>\n";
}

std::string nyquist_plot(const ResultTable& t, const PlotSpec& spec) {
  constexpr double kClip = 10.0;
  double x0 = -1.5, x1 = 0.5, y0 = -1.0, y1 = 1.0;
  const std::size_t pairs = (t.columns.size() - 1) / 2;
  for (const auto& row : t.rows) {
    for (std::size_t k = 0; k < pairs; ++k) {
      const double re = row[1 + 2 * k], im = row[2 + 2 * k];
      if (!std::isfinite(re) || !std::isfinite(im) || std::hypot(re, im) > kClip) continue;
      x0 = std::min(x0, re);
      x1 = std::max(x1, re);
      y0 = std::min(y0, -std::abs(im));
      y1 = std::max(y1, std::abs(im));
    }
  }
  pad_range(x0, x1);
  pad_range(y0, y1);
  // equal aspect: widen the tighter axis
  const double w = kWidth - kLeft - kRight, h = kHeight - kTop - kBottom;
  const double scale = std::max((x1 - x0) / w, (y1 - y0) / h);
  const double cx = 0.5 * (x0 + x1), cy = 0.5 * (y0 + y1);
  const Frame f{cx - 0.5 * scale * w, cx + 0.5 * scale * w, cy - 0.5 * scale * h, cy + 0.5 * scale * h};
  std::string s = header(spec.title) + axes(f, "real", "imaginary", false);
  for (std::size_t k = 0; k < pairs; ++k) {
    auto branch = [&](double sign) {
      return polyline(t.rows.size(), [&](std::size_t i) {
        const double re = t.rows[i][1 + 2 * k], im = sign * t.rows[i][2 + 2 * k];
        const bool ok = std::isfinite(re) && std::isfinite(im) && std::hypot(re, im) <= kClip;
        return std::tuple{ok ? f.px(re) : 0.0, ok ? f.py(im) : 0.0, ok};
      });
    };
    // positive frequencies, then the conjugate branch
    s += path_element(branch(1.0) + " " + branch(-1.0), k);
    std::string label = t.columns[1 + 2 * k];
    if (label.rfind("re_", 0) == 0) label = "locus " + label.substr(3);
    s += legend_entry(k, label);
  }
  const double mx = f.px(-1.0), my = f.py(0.0);
  s += "<circle cx=\"" + fixed(mx) + "\" cy=\"" + fixed(my) + "\" r=\"4\" fill=\"none\" stroke=\"red\" "
       "stroke-width=\"1.5\"/>\n";
  s += "<line x1=\"" + fixed(mx - 7.0) + "\" y1=\"" + fixed(my) + "\" x2=\"" + fixed(mx + 7.0) + "\" y2=\"" +
       fixed(my) + "\" stroke=\"red\"/>\n";
  s += "<line x1=\"" + fixed(mx) + "\" y1=\"" + fixed(my - 7.0) + "\" x2=\"" + fixed(mx) + "\" y2=\"" +
       fixed(my + 7.0) + "\" stroke=\"red\"/>\n";
  s += "<text x=\"" + fixed(mx + 8.0) + "\" y=\"" + fixed(my - 8.0) +
       "\" font-family=\"sans-serif\" font-size=\"12\" fill=\"red\">(-1, 0)</text>\n";
  return s + "</svg>\n";
}

}  // namespace

void ResultTable::add_row(std::vector<double> row) {
  if (row.size() != columns.size())
    throw Error(Errc::Validation, "table '" + name + "': row has " + std::to_string(row.size()) + " values for " +
                                      std::to_string(columns.size()) + " columns");
  rows.push_back(std::move(row));
}

std::string format_csv(const ResultTable& table) {
  std::string out;
  for (std::size_t c = 0; c < table.columns.size(); ++c) {
    if (c) out += ',';
    out += csv_field(table.columns[c]);
  }
  out += '\n';
  for (const auto& row : table.rows) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c) out += ',';
      out += format_double(row[c]);
    }
    out += '\n';
  }
  return out;
}

ResultTable parse_csv(std::string_view text, const std::string& name) {
  ResultTable t;
  t.name = name;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const std::size_t nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line_no == 1) {
      t.columns = split_csv_line(line);
      continue;
    }
    if (trim(line).empty()) continue;
    const auto fields = split_csv_line(line);
    std::vector<double> row;
    row.reserve(fields.size());
    for (const auto& f : fields) {
      double v = 0.0;
      if (!parse_double(f, v))
        throw Error(Errc::MalformedTable, name + ":" + std::to_string(line_no) + ": not a number '" + f + "'");
      row.push_back(v);
    }
    if (row.size() != t.columns.size())
      throw Error(Errc::MalformedTable, name + ":" + std::to_string(line_no) + ": column count mismatch");
    t.rows.push_back(std::move(row));
  }
  if (line_no == 0) throw Error(Errc::MalformedTable, name + ": missing header");
  return t;
}

void emit_csv(const ResultTable& table, const std::filesystem::path& path) { write_file(path, format_csv(table)); }

PlotSpec default_plot(const ResultTable& table) {
  PlotSpec spec;
  spec.title = table.name;
  spec.nyquist = table.metadata.count("plot") && table.metadata.at("plot") == "nyquist";
  spec.y_label = table.metadata.count("y_label") ? table.metadata.at("y_label") : "value";
  return spec;
}

std::string format_svg(const ResultTable& table, const PlotSpec& spec) {
  if (table.columns.empty() || table.columns.front() != "freq_hz")
    throw Error(Errc::Validation, "svg: first column must be freq_hz");
  if (spec.nyquist && (table.columns.size() - 1) % 2 != 0)
    throw Error(Errc::Validation, "svg: Nyquist data must come in (re, im) column pairs");
  return spec.nyquist ? nyquist_plot(table, spec) : line_plot(table, spec);
}

void emit_svg_plot(const ResultTable& table, const PlotSpec& spec, const std::filesystem::path& path) {
  write_file(path, format_svg(table, spec));
}

}  // namespace passivity
