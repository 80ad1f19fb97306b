#pragma once

// Minimal deterministic SVG charts for simulation and bench outputs.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "powerlens/bench.hpp"
#include "powerlens/simulator.hpp"

namespace powerlens {

struct PlotSeries {
  std::string name;
  std::vector<std::pair<double, double>> points;  // NaN y breaks the line
};

struct HLine {
  double y;
  std::string label;
};

namespace detail {

inline std::string f2(double v) {
  char b[32];
  std::snprintf(b, sizeof b, "%.2f", v);
  return b;
}

inline std::string xml_escape(const std::string& s) {
  std::string o;
  for (char c : s) {
    switch (c) {
      case '<': o += "&lt;"; break;
      case '>': o += "&gt;"; break;
      case '&': o += "&amp;"; break;
      case '"': o += "&quot;"; break;
      default: o += c;
    }
  }
  return o;
}

inline const char* palette(std::size_t i) {
  static const char* c[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                            "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
  return c[i % 10];
}

constexpr double kW = 720, kH = 420, kL = 60, kR = 180, kT = 40, kB = 50;

inline std::string frame(const std::string& title, const std::string& xlabel, const std::string& ylabel,
                         double ymin, double ymax) {
  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH
    << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << kW / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << xml_escape(title)
    << "</text>\n";
  o << "<line x1=\"" << kL << "\" y1=\"" << kH - kB << "\" x2=\"" << kW - kR << "\" y2=\"" << kH - kB
    << "\" stroke=\"black\"/>\n";
  o << "<line x1=\"" << kL << "\" y1=\"" << kT << "\" x2=\"" << kL << "\" y2=\"" << kH - kB
    << "\" stroke=\"black\"/>\n";
  o << "<text x=\"" << (kL + kW - kR) / 2 << "\" y=\"" << kH - 12 << "\" text-anchor=\"middle\">"
    << xml_escape(xlabel) << "</text>\n";
  o << "<text x=\"14\" y=\"" << (kT + kH - kB) / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 14 "
    << (kT + kH - kB) / 2 << ")\">" << xml_escape(ylabel) << "</text>\n";
  for (int k = 0; k <= 4; ++k) {
    const double v = ymin + (ymax - ymin) * k / 4.0;
    const double y = kH - kB - (kH - kB - kT) * k / 4.0;
    o << "<text x=\"" << kL - 6 << "\" y=\"" << f2(y + 4) << "\" text-anchor=\"end\">" << f2(v) << "</text>\n";
  }
  return o.str();
}

}  // namespace detail

inline std::string svg_line_chart(const std::string& title, const std::string& xlabel, const std::string& ylabel,
                                  const std::vector<PlotSeries>& series, const std::vector<HLine>& hlines = {}) {
  using namespace detail;
  double xmin = 0, xmax = 1, ymin = 0, ymax = 1;
  bool first = true;
  for (const auto& s : series)
    for (const auto& [x, y] : s.points) {
      if (std::isnan(y)) continue;
      if (first) {
        xmin = xmax = x;
        ymin = std::min(0.0, y);
        ymax = y;
        first = false;
      }
      xmin = std::min(xmin, x);
      xmax = std::max(xmax, x);
      ymin = std::min(ymin, y);
      ymax = std::max(ymax, y);
    }
  for (const auto& h : hlines) ymax = std::max(ymax, h.y);
  if (xmax == xmin) xmax = xmin + 1;
  if (ymax == ymin) ymax = ymin + 1;
  auto px = [&](double x) { return kL + (x - xmin) / (xmax - xmin) * (kW - kR - kL); };
  auto py = [&](double y) { return kH - kB - (y - ymin) / (ymax - ymin) * (kH - kB - kT); };
  std::ostringstream o;
  o << frame(title, xlabel, ylabel, ymin, ymax);
  for (const auto& h : hlines) {
    o << "<line x1=\"" << kL << "\" y1=\"" << f2(py(h.y)) << "\" x2=\"" << kW - kR << "\" y2=\"" << f2(py(h.y))
      << "\" stroke=\"gray\" stroke-dasharray=\"4 3\"/>\n";
    o << "<text x=\"" << kW - kR + 4 << "\" y=\"" << f2(py(h.y) + 4) << "\" fill=\"gray\">" << xml_escape(h.label)
      << "</text>\n";
  }
  for (std::size_t i = 0; i < series.size(); ++i) {
    std::string d;
    bool pen = false;
    for (const auto& [x, y] : series[i].points) {
      if (std::isnan(y)) {
        pen = false;
        continue;
      }
      d += (pen ? " L" : " M") + f2(px(x)) + " " + f2(py(y));
      pen = true;
    }
    if (!d.empty())
      o << "<path d=\"" << d.substr(1) << "\" fill=\"none\" stroke=\"" << palette(i) << "\" stroke-width=\"2\"/>\n";
    o << "<text x=\"" << kW - kR + 8 << "\" y=\"" << kT + 16 * (i + 1) + 30 << "\" fill=\"" << palette(i) << "\">"
      << xml_escape(series[i].name) << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

inline std::string svg_bar_chart(const std::string& title, const std::string& ylabel,
                                 const std::vector<std::pair<std::string, double>>& bars) {
  using namespace detail;
  double ymin = 0, ymax = 1;
  for (const auto& [k, v] : bars) {
    ymin = std::min(ymin, v);
    ymax = std::max(ymax, v);
  }
  auto py = [&](double y) { return kH - kB - (y - ymin) / (ymax - ymin) * (kH - kB - kT); };
  const double slot = bars.empty() ? 0 : (kW - kR - kL) / static_cast<double>(bars.size());
  std::ostringstream o;
  o << frame(title, "", ylabel, ymin, ymax);
  for (std::size_t i = 0; i < bars.size(); ++i) {
    const double x = kL + slot * i + slot * 0.15;
    const double top = std::min(py(bars[i].second), py(0)), h = std::abs(py(bars[i].second) - py(0));
    o << "<rect x=\"" << f2(x) << "\" y=\"" << f2(top) << "\" width=\"" << f2(slot * 0.7) << "\" height=\""
      << f2(h) << "\" fill=\"" << palette(i) << "\"/>\n";
    o << "<text x=\"" << f2(x + slot * 0.35) << "\" y=\"" << f2(top - 4) << "\" text-anchor=\"middle\">"
      << f2(bars[i].second) << "</text>\n";
    o << "<text x=\"" << kW - kR + 8 << "\" y=\"" << kT + 16 * (i + 1) + 30 << "\" fill=\"" << palette(i) << "\">"
      << xml_escape(bars[i].first) << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

// Confidence per memory entry and day, with the promotion and eviction
// thresholds. At most `limit` series, taking those with the most days present.
inline std::string confidence_plot(const LongitudinalTrace& tr, std::size_t limit = 8) {
  std::vector<std::pair<int, const std::pair<const std::string, std::vector<double>>*>> ranked;
  for (const auto& kv : tr.confidence) {
    int present = 0;
    for (double c : kv.second) present += c >= 0;
    ranked.push_back({-present, &kv});
  }
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<PlotSeries> series;
  for (std::size_t i = 0; i < ranked.size() && i < limit; ++i) {
    PlotSeries s{ranked[i].second->first, {}};
    const auto& v = ranked[i].second->second;
    for (std::size_t d = 0; d < v.size(); ++d) s.points.push_back({double(d), v[d] < 0 ? NAN : v[d]});
    series.push_back(std::move(s));
  }
  return svg_line_chart("Memory confidence", "day", "confidence", series,
                        {{kPromoteThreshold, "promote"}, {kEvictThreshold, "evict"}});
}

// Daily user overrides and revert rate.
inline std::string adaptation_plot(const LongitudinalTrace& tr) {
  PlotSeries overrides{"overrides", {}}, revert{"revert rate x100", {}};
  for (const auto& d : tr.days) {
    overrides.points.push_back({double(d.day), double(d.overrides)});
    revert.points.push_back({double(d.day), 100.0 * d.revert_rate()});
  }
  return svg_line_chart("Adaptation", "day", "count / percent", {overrides, revert});
}

inline std::string savings_by_category_plot(const BenchReport& rep) {
  std::vector<std::pair<std::string, double>> bars;
  for (const auto& [c, a] : rep.by_category) bars.push_back({std::string(to_string(c)), a.es});
  return svg_bar_chart("Energy saving by category: " + rep.config, "ES %", bars);
}

// One bar per configuration; `metric` is "es" or "acc".
inline std::string ablation_plot(const std::vector<BenchReport>& reps, const std::string& metric) {
  std::vector<std::pair<std::string, double>> bars;
  for (const auto& r : reps) bars.push_back({r.config, metric == "acc" ? r.overall.acc : r.overall.es});
  return svg_bar_chart(metric == "acc" ? "Action accuracy by configuration" : "Energy saving by configuration",
                       metric == "acc" ? "Acc %" : "ES %", bars);
}

}  // namespace powerlens
