#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "styletx/seq2seq.hpp"

namespace styletx {

inline std::string format_fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

inline std::string format_general(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out || !(out << text)) throw DataError("cannot write " + path.string());
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  return {std::istreambuf_iterator<char>(in), {}};
}

/// `epoch,loss,accuracy` with one row per epoch.
inline std::string metrics_csv(const std::vector<EpochMetrics>& history) {
  std::string out = "epoch,loss,accuracy\n";
  for (const auto& m : history) {
    out += std::to_string(m.epoch) + "," + format_general(m.loss) + "," + format_general(m.accuracy) + "\n";
  }
  return out;
}

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

/// Self-contained SVG line chart with axes, tick labels and a legend.
inline std::string line_plot_svg(const std::string& title, const std::string& x_label, const std::string& y_label,
                                 const std::vector<Series>& series) {
  constexpr double width = 640, height = 400, left = 70, right = 20, top = 40, bottom = 50;
  double x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  bool any = false;
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.y[i])) continue;
      if (!any) {
        x0 = x1 = s.x[i];
        y0 = y1 = s.y[i];
        any = true;
      }
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, s.y[i]);
      y1 = std::max(y1, s.y[i]);
    }
  }
  if (x1 == x0) x1 = x0 + 1;
  if (y1 == y0) y1 = y0 + 1;
  const double pad = 0.05 * (y1 - y0);
  y0 -= pad;
  y1 += pad;
  const double pw = width - left - right, ph = height - top - bottom;
  auto px = [&](double x) { return left + (x - x0) / (x1 - x0) * pw; };
  auto py = [&](double y) { return top + (1.0 - (y - y0) / (y1 - y0)) * ph; };
  auto num = [](double v) { return format_fixed(v, 2); };
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

  std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"400\" viewBox=\"0 0 640 400\">\n";
  svg += "<rect width=\"640\" height=\"400\" fill=\"white\"/>\n";
  svg += "<text x=\"320\" y=\"22\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"15\">" + title +
         "</text>\n";
  svg += "<line x1=\"" + num(left) + "\" y1=\"" + num(top + ph) + "\" x2=\"" + num(left + pw) + "\" y2=\"" +
         num(top + ph) + "\" stroke=\"black\"/>\n";
  svg += "<line x1=\"" + num(left) + "\" y1=\"" + num(top) + "\" x2=\"" + num(left) + "\" y2=\"" + num(top + ph) +
         "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double xv = x0 + (x1 - x0) * i / 4.0, yv = y0 + (y1 - y0) * i / 4.0;
    svg += "<text x=\"" + num(px(xv)) + "\" y=\"" + num(top + ph + 18) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" + format_general(std::round(xv * 100) / 100) +
           "</text>\n";
    svg += "<text x=\"" + num(left - 6) + "\" y=\"" + num(py(yv) + 4) +
           "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" + format_fixed(yv, 3) + "</text>\n";
    svg += "<line x1=\"" + num(left) + "\" y1=\"" + num(py(yv)) + "\" x2=\"" + num(left + pw) + "\" y2=\"" +
           num(py(yv)) + "\" stroke=\"#dddddd\"/>\n";
  }
  svg += "<text x=\"" + num(left + pw / 2) + "\" y=\"" + num(height - 10) +
         "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" + x_label + "</text>\n";
  svg += "<text x=\"16\" y=\"" + num(top + ph / 2) + "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" transform=\"rotate(-90 16 " +
         num(top + ph / 2) + ")\">" + y_label + "</text>\n";
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    const char* color = colors[k % 6];
    std::string points;
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.y[i])) continue;
      points += (points.empty() ? "" : " ") + num(px(s.x[i])) + "," + num(py(s.y[i]));
    }
    svg += "<polyline fill=\"none\" stroke=\"" + std::string(color) + "\" stroke-width=\"2\" points=\"" + points +
           "\"/>\n";
    if (series.size() > 1) {
      const double ly = top + 14 + 16 * double(k);
      svg += "<line x1=\"" + num(left + pw - 120) + "\" y1=\"" + num(ly) + "\" x2=\"" + num(left + pw - 100) +
             "\" y2=\"" + num(ly) + "\" stroke=\"" + color + "\" stroke-width=\"2\"/>\n";
      svg += "<text x=\"" + num(left + pw - 95) + "\" y=\"" + num(ly + 4) +
             "\" font-family=\"sans-serif\" font-size=\"11\">" + s.label + "</text>\n";
    }
  }
  svg += "</svg>\n";
  return svg;
}

inline Series series_of(const std::string& label, const std::vector<EpochMetrics>& history, bool accuracy) {
  Series s{label, {}, {}};
  for (const auto& m : history) {
    s.x.push_back(double(m.epoch));
    s.y.push_back(accuracy ? m.accuracy : m.loss);
  }
  return s;
}

struct EvalRow {
  std::string model;
  std::optional<double> recon_loss;
  std::optional<double> recon_accuracy;   // percent
  std::optional<double> transfer_accuracy; // percent
  std::vector<std::string> samples;
};

/// One row per model; absent models show NA.
inline std::string eval_report_csv(const std::vector<EvalRow>& rows) {
  auto cell = [](const std::optional<double>& v, int digits) { return v ? format_fixed(*v, digits) : "NA"; };
  std::string out = "model,recon_loss,recon_acc,transfer_acc\n";
  for (const auto& r : rows) {
    out += r.model + "," + cell(r.recon_loss, 4) + "," + cell(r.recon_accuracy, 2) + "," +
           cell(r.transfer_accuracy, 2) + "\n";
  }
  return out;
}

/// Blocks of "Ground truth" followed by each model's rewrite.
inline std::string samples_text(const std::vector<std::string>& sources, const std::vector<EvalRow>& rows) {
  std::string out;
  for (std::size_t i = 0; i < sources.size(); ++i) {
    out += "Ground truth: " + sources[i] + "\n";
    for (const auto& r : rows) {
      out += r.model + ": " + (i < r.samples.size() ? r.samples[i] : std::string("NA")) + "\n";
    }
    out += "\n";
  }
  return out;
}

}  // namespace styletx
