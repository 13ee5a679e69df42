#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <sstream>

#include "minima/errors.hpp"
#include "minima/harness.hpp"

namespace minima::harness {

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string to_csv(const Table& table, const ExperimentConfig& cfg) {
  std::ostringstream out;
  char hash[17];
  std::snprintf(hash, sizeof hash, "%016" PRIx64, config_hash(cfg));
  out << "# minima " << kVersion << " config=" << hash << " seed=" << cfg.seed << "\n";
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) out << (i ? "," : "") << cells[i];
    out << "\n";
  };
  line(table.header);
  for (const auto& r : table.rows) line(r);
  return out.str();
}

Summary summarize(const std::vector<double>& values) {
  Summary s;
  if (values.empty()) return s;
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return s;
}

// --- SVG -------------------------------------------------------------------------

namespace {

struct Csv {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw ConfigError("plot column \"" + name + "\" not in CSV");
    return static_cast<std::size_t>(it - header.begin());
  }
};

Csv parse_csv(std::string_view text) {
  Csv csv;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    if (line.empty() || line.front() == '#') continue;
    std::vector<std::string> cells;
    std::size_t start = 0;
    while (true) {
      std::size_t comma = line.find(',', start);
      cells.emplace_back(line.substr(start, comma == std::string_view::npos ? line.npos : comma - start));
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    if (csv.header.empty())
      csv.header = std::move(cells);
    else
      csv.rows.push_back(std::move(cells));
  }
  return csv;
}

bool to_number(const std::string& s, double& out) {
  if (s.empty()) return false;
  char* end = nullptr;
  out = std::strtod(s.c_str(), &end);
  return end == s.c_str() + s.size() && std::isfinite(out);
}

struct Range {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  void add(double v) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  bool valid() const { return lo <= hi; }
  void pad() {
    if (!valid()) {
      lo = 0.0;
      hi = 1.0;
    } else if (lo == hi) {
      lo -= 0.5;
      hi += 0.5;
    }
  }
};

std::string escape(const std::string& s) {
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

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string tick(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

}  // namespace

std::string render_svg(std::string_view csv_text, const PlotSpec& spec) {
  const Csv csv = parse_csv(csv_text);
  const std::size_t xc = csv.column(spec.x);
  std::optional<std::size_t> gc;
  if (!spec.group.empty()) gc = csv.column(spec.group);
  std::optional<std::size_t> fc;
  if (spec.filter) fc = csv.column(spec.filter->first);

  struct Series {
    std::string label;
    bool right = false;
    std::vector<std::pair<double, double>> pts;
  };
  std::vector<Series> series;
  std::map<std::string, std::size_t> index;
  Range xr, lr, rr;

  auto add_columns = [&](const std::vector<std::string>& names, bool right) {
    for (const auto& name : names) {
      const std::size_t c = csv.column(name);
      for (const auto& row : csv.rows) {
        if (fc && (row.size() <= *fc || row[*fc] != spec.filter->second)) continue;
        double x, y;
        if (row.size() <= std::max(xc, c) || !to_number(row[xc], x) || !to_number(row[c], y)) continue;
        if (spec.log_x) {
          if (x <= 0.0) continue;
          x = std::log10(x);
        }
        std::string label = name;
        if (gc && row.size() > *gc) label = row[*gc] + " " + name;
        auto [it, fresh] = index.emplace(label, series.size());
        if (fresh) series.push_back({label, right, {}});
        series[it->second].pts.emplace_back(x, y);
        xr.add(x);
        (right ? rr : lr).add(y);
      }
    }
  };
  add_columns(spec.left, false);
  add_columns(spec.right, true);
  xr.pad();
  lr.pad();
  rr.pad();

  constexpr double W = 800, H = 500, L = 80, R = 720, T = 50, B = 430;
  auto sx = [&](double x) { return L + (x - xr.lo) / (xr.hi - xr.lo) * (R - L); };
  auto sy = [&](double y, const Range& r) { return B - (y - r.lo) / (r.hi - r.lo) * (B - T); };

  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 "
      << W << " " << H << "\">\n";
  out << "<rect width=\"800\" height=\"500\" fill=\"white\"/>\n";
  out << "<text x=\"400\" y=\"28\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"16\">"
      << escape(spec.title) << "</text>\n";
  out << "<rect x=\"" << L << "\" y=\"" << T << "\" width=\"" << R - L << "\" height=\"" << B - T
      << "\" fill=\"none\" stroke=\"black\"/>\n";

  for (int i = 0; i <= 5; ++i) {
    const double f = i / 5.0;
    const double xv = xr.lo + f * (xr.hi - xr.lo);
    const double px = L + f * (R - L);
    out << "<line x1=\"" << num(px) << "\" y1=\"" << B << "\" x2=\"" << num(px) << "\" y2=\"" << B + 5
        << "\" stroke=\"black\"/>\n";
    out << "<text x=\"" << num(px) << "\" y=\"" << B + 20
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">"
        << tick(spec.log_x ? std::pow(10.0, xv) : xv) << "</text>\n";
    const double py = B - f * (B - T);
    out << "<text x=\"" << L - 8 << "\" y=\"" << num(py + 4)
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">"
        << tick(lr.lo + f * (lr.hi - lr.lo)) << "</text>\n";
    if (!spec.right.empty())
      out << "<text x=\"" << R + 8 << "\" y=\"" << num(py + 4)
          << "\" text-anchor=\"start\" font-family=\"sans-serif\" font-size=\"11\">"
          << tick(rr.lo + f * (rr.hi - rr.lo)) << "</text>\n";
  }
  out << "<text x=\"400\" y=\"470\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">"
      << escape(spec.x) << "</text>\n";

  for (std::size_t s = 0; s < series.size(); ++s) {
    const Series& ser = series[s];
    const Range& yr = ser.right ? rr : lr;
    const char* color = kPalette[s % std::size(kPalette)];
    out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\""
        << (ser.right ? " stroke-dasharray=\"6 3\"" : "") << " points=\"";
    for (std::size_t i = 0; i < ser.pts.size(); ++i)
      out << (i ? " " : "") << num(sx(ser.pts[i].first)) << "," << num(sy(ser.pts[i].second, yr));
    out << "\"/>\n";
    const double ly = T + 14 + 16 * static_cast<double>(s);
    out << "<line x1=\"" << L + 10 << "\" y1=\"" << num(ly - 4) << "\" x2=\"" << L + 34 << "\" y2=\"" << num(ly - 4)
        << "\" stroke=\"" << color << "\" stroke-width=\"1.5\"" << (ser.right ? " stroke-dasharray=\"6 3\"" : "")
        << "/>\n";
    out << "<text x=\"" << L + 40 << "\" y=\"" << num(ly)
        << "\" font-family=\"sans-serif\" font-size=\"11\">" << escape(ser.label) << (ser.right ? " (right)" : "")
        << "</text>\n";
  }
  out << "</svg>\n";
  return out.str();
}

}  // namespace minima::harness
