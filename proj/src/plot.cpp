#include "uniclr/plot.hpp"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "uniclr/errors.hpp"

namespace uniclr {

namespace {

std::vector<std::string> split_cells(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      cells.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  cells.push_back(cur);
  return cells;
}

double cell_double(const std::string& raw, const std::string& where,
                   const char* col) {
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(raw.c_str(), &end);
  if (raw.empty() || end == raw.c_str() || *end != '\0' || errno == ERANGE)
    raise(ErrorKind::Format,
          where + ": column '" + col + "' is not a number: '" + raw + "'");
  return v;
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '&') out += "&amp;";
    else if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else out += c;
  }
  return out;
}

std::string fmt2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

std::string fmt_tick(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c",
                          "#9467bd", "#ff7f0e", "#8c564b"};

}  // namespace

RunMetrics read_metrics_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(ErrorKind::Io, "cannot open metrics file '" + path + "'");
  std::string line;
  if (!std::getline(in, line))
    raise(ErrorKind::Format, path + ": empty metrics file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kMetricsHeader)
    raise(ErrorKind::Format, path + ":1: header mismatch, expected '" +
                                 std::string(kMetricsHeader) + "'");
  RunMetrics metrics;
  int row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::string where = path + ":" + std::to_string(row);
    const std::vector<std::string> cells = split_cells(line);
    if (cells.size() != 9)
      raise(ErrorKind::Format, where + ": expected 9 columns, got " +
                                   std::to_string(cells.size()));
    EpochRecord r;
    r.epoch = static_cast<int>(cell_double(cells[0], where, "epoch"));
    r.loss = cell_double(cells[1], where, "loss");
    r.ce_term = cell_double(cells[2], where, "ce_term");
    r.sym_term = cell_double(cells[3], where, "sym_term");
    r.lr = cell_double(cells[4], where, "lr");
    r.feat_std = cell_double(cells[5], where, "feat_std");
    r.eff_rank = cell_double(cells[6], where, "eff_rank");
    if (cells[7].empty()) {
      r.has_knn = false;
    } else {
      r.has_knn = true;
      r.knn_acc = cell_double(cells[7], where, "knn_acc");
    }
    r.secs = cell_double(cells[8], where, "secs");
    metrics.records.push_back(r);
  }
  return metrics;
}

Series metrics_series(const RunMetrics& metrics, const std::string& column,
                      const std::string& label) {
  Series s;
  s.label = label;
  for (const EpochRecord& r : metrics.records) {
    double v = 0.0;
    if (column == "loss") v = r.loss;
    else if (column == "ce_term") v = r.ce_term;
    else if (column == "sym_term") v = r.sym_term;
    else if (column == "lr") v = r.lr;
    else if (column == "feat_std") v = r.feat_std;
    else if (column == "eff_rank") v = r.eff_rank;
    else if (column == "secs") v = r.secs;
    else if (column == "knn_acc") {
      if (!r.has_knn) continue;
      v = r.knn_acc;
    } else {
      raise(ErrorKind::Config, "unknown metrics column '" + column + "'");
    }
    s.x.push_back(static_cast<double>(r.epoch));
    s.y.push_back(v);
  }
  if (s.x.empty())
    raise(ErrorKind::Config,
          "no values for column '" + column + "' in series '" + label + "'");
  return s;
}

std::string render_line_svg(const std::vector<Series>& series,
                            const std::string& title,
                            const std::string& y_label) {
  require(!series.empty(), ErrorKind::Contract, "plot needs at least one series");
  for (const Series& s : series)
    require(!s.x.empty() && s.x.size() == s.y.size(), ErrorKind::Contract,
            "plot series must be non-empty with matching x/y sizes");

  double x0 = series[0].x[0], x1 = x0, y0 = series[0].y[0], y1 = y0;
  for (const Series& s : series) {
    for (double v : s.x) { x0 = std::min(x0, v); x1 = std::max(x1, v); }
    for (double v : s.y) { y0 = std::min(y0, v); y1 = std::max(y1, v); }
  }
  if (x1 == x0) { x0 -= 0.5; x1 += 0.5; }
  const double ypad = (y1 == y0) ? std::max(0.5, std::abs(y0) * 0.05)
                                 : 0.05 * (y1 - y0);
  y0 -= ypad;
  y1 += ypad;

  const double ml = 64, mt = 42, pw = 586, ph = 394;
  auto px = [&](double x) { return ml + (x - x0) / (x1 - x0) * pw; };
  auto py = [&](double y) { return mt + ph - (y - y0) / (y1 - y0) * ph; };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"800\" height=\"480\" "
         "viewBox=\"0 0 800 480\" font-family=\"sans-serif\">\n";
  svg << "<rect x=\"0\" y=\"0\" width=\"800\" height=\"480\" fill=\"#ffffff\"/>\n";
  svg << "<text x=\"" << fmt2(ml + pw / 2) << "\" y=\"24\" font-size=\"15\" "
         "text-anchor=\"middle\" fill=\"#222222\">" << xml_escape(title)
      << "</text>\n";
  svg << "<text x=\"12\" y=\"" << fmt2(mt - 10) << "\" font-size=\"12\" "
         "fill=\"#222222\">" << xml_escape(y_label) << "</text>\n";

  for (int i = 0; i <= 5; ++i) {
    const double fy = y0 + (y1 - y0) * i / 5.0;
    const double gy = py(fy);
    svg << "<line x1=\"" << fmt2(ml) << "\" y1=\"" << fmt2(gy) << "\" x2=\""
        << fmt2(ml + pw) << "\" y2=\"" << fmt2(gy)
        << "\" stroke=\"#dddddd\" stroke-width=\"1\"/>\n";
    svg << "<text x=\"" << fmt2(ml - 6) << "\" y=\"" << fmt2(gy + 4)
        << "\" font-size=\"11\" text-anchor=\"end\" fill=\"#444444\">"
        << fmt_tick(fy) << "</text>\n";
  }
  for (int i = 0; i <= 5; ++i) {
    const double fx = x0 + (x1 - x0) * i / 5.0;
    const double gx = px(fx);
    svg << "<line x1=\"" << fmt2(gx) << "\" y1=\"" << fmt2(mt) << "\" x2=\""
        << fmt2(gx) << "\" y2=\"" << fmt2(mt + ph)
        << "\" stroke=\"#eeeeee\" stroke-width=\"1\"/>\n";
    svg << "<text x=\"" << fmt2(gx) << "\" y=\"" << fmt2(mt + ph + 16)
        << "\" font-size=\"11\" text-anchor=\"middle\" fill=\"#444444\">"
        << fmt_tick(fx) << "</text>\n";
  }
  svg << "<rect x=\"" << fmt2(ml) << "\" y=\"" << fmt2(mt) << "\" width=\""
      << fmt2(pw) << "\" height=\"" << fmt2(ph)
      << "\" fill=\"none\" stroke=\"#888888\" stroke-width=\"1\"/>\n";
  svg << "<text x=\"" << fmt2(ml + pw / 2) << "\" y=\"472\" font-size=\"12\" "
         "text-anchor=\"middle\" fill=\"#222222\">epoch</text>\n";

  for (std::size_t si = 0; si < series.size(); ++si) {
    const Series& s = series[si];
    const char* color = kPalette[si % 6];
    if (s.x.size() == 1) {
      svg << "<circle cx=\"" << fmt2(px(s.x[0])) << "\" cy=\"" << fmt2(py(s.y[0]))
          << "\" r=\"3\" fill=\"" << color << "\"/>\n";
    } else {
      svg << "<polyline fill=\"none\" stroke=\"" << color
          << "\" stroke-width=\"1.5\" points=\"";
      for (std::size_t i = 0; i < s.x.size(); ++i) {
        if (i) svg << " ";
        svg << fmt2(px(s.x[i])) << "," << fmt2(py(s.y[i]));
      }
      svg << "\"/>\n";
    }
    const double ly = mt + 8 + 18.0 * static_cast<double>(si);
    svg << "<line x1=\"660\" y1=\"" << fmt2(ly) << "\" x2=\"684\" y2=\""
        << fmt2(ly) << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    svg << "<text x=\"690\" y=\"" << fmt2(ly + 4)
        << "\" font-size=\"11\" fill=\"#222222\">" << xml_escape(s.label)
        << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace uniclr
