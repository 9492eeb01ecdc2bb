#pragma once

#include <algorithm>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "vex/common.hpp"
#include "vex/metrics.hpp"

namespace vex {

struct CurveSeries {
  std::string label;
  std::vector<std::int64_t> steps;
  std::vector<double> mean;
  std::vector<double> stddev;
};

struct PlotPanel {
  std::string title;
  std::vector<CurveSeries> series;
};

namespace detail {

inline const char* series_color(std::size_t i) {
  static const char* palette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                                  "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};
  return palette[i % (sizeof(palette) / sizeof(palette[0]))];
}

inline std::string fmt_tick(double v) {
  if (v == static_cast<std::int64_t>(v)) return std::to_string(static_cast<std::int64_t>(v));
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

}  // namespace detail

/// Hand-rolled SVG: one panel per entry, mean line per series with a
/// +/- one-standard-deviation band, shared styling.
inline std::string render_svg(const std::vector<PlotPanel>& panels, int panel_w = 460,
                              int panel_h = 340) {
  const int ml = 62, mr = 14, mt = 34, mb = 44;
  const int total_w = panel_w * static_cast<int>(panels.size());
  std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" +
                    std::to_string(total_w) + "\" height=\"" + std::to_string(panel_h) +
                    "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";

  for (std::size_t p = 0; p < panels.size(); ++p) {
    const auto& panel = panels[p];
    const double x0 = static_cast<double>(panel_w) * p + ml;
    const double y0 = mt;
    const double iw = panel_w - ml - mr;
    const double ih = panel_h - mt - mb;

    double xmin = 0, xmax = 1, ymin = 1e300, ymax = -1e300;
    for (const auto& s : panel.series) {
      for (std::size_t i = 0; i < s.steps.size(); ++i) {
        xmax = std::max(xmax, static_cast<double>(s.steps[i]));
        ymin = std::min(ymin, s.mean[i] - s.stddev[i]);
        ymax = std::max(ymax, s.mean[i] + s.stddev[i]);
      }
    }
    if (ymin > ymax) { ymin = 0; ymax = 1; }
    const double pad = 0.05 * (ymax - ymin + 1e-12);
    ymin -= pad;
    ymax += pad;
    auto sx = [&](double v) { return x0 + (v - xmin) / (xmax - xmin) * iw; };
    auto sy = [&](double v) { return y0 + ih - (v - ymin) / (ymax - ymin) * ih; };

    svg += "<rect x=\"" + std::to_string(x0) + "\" y=\"" + std::to_string(y0) + "\" width=\"" +
           std::to_string(iw) + "\" height=\"" + std::to_string(ih) +
           "\" fill=\"none\" stroke=\"#333\"/>\n";
    svg += "<text x=\"" + std::to_string(x0 + iw / 2) + "\" y=\"18\" text-anchor=\"middle\" " +
           "font-size=\"13\">" + panel.title + "</text>\n";
    for (int t = 0; t <= 4; ++t) {
      const double xv = xmin + (xmax - xmin) * t / 4;
      const double yv = ymin + (ymax - ymin) * t / 4;
      svg += "<line x1=\"" + std::to_string(sx(xv)) + "\" y1=\"" + std::to_string(y0 + ih) +
             "\" x2=\"" + std::to_string(sx(xv)) + "\" y2=\"" + std::to_string(y0 + ih + 4) +
             "\" stroke=\"#333\"/>\n";
      svg += "<text x=\"" + std::to_string(sx(xv)) + "\" y=\"" + std::to_string(y0 + ih + 16) +
             "\" text-anchor=\"middle\">" + detail::fmt_tick(xv) + "</text>\n";
      svg += "<line x1=\"" + std::to_string(x0 - 4) + "\" y1=\"" + std::to_string(sy(yv)) +
             "\" x2=\"" + std::to_string(x0) + "\" y2=\"" + std::to_string(sy(yv)) +
             "\" stroke=\"#333\"/>\n";
      svg += "<text x=\"" + std::to_string(x0 - 7) + "\" y=\"" + std::to_string(sy(yv) + 4) +
             "\" text-anchor=\"end\">" + detail::fmt_tick(yv) + "</text>\n";
    }
    svg += "<text x=\"" + std::to_string(x0 + iw / 2) + "\" y=\"" +
           std::to_string(y0 + ih + 34) + "\" text-anchor=\"middle\">environment steps</text>\n";
    svg += "<text x=\"" + std::to_string(x0 - 46) + "\" y=\"" + std::to_string(y0 + ih / 2) +
           "\" text-anchor=\"middle\" transform=\"rotate(-90 " + std::to_string(x0 - 46) + " " +
           std::to_string(y0 + ih / 2) + ")\">episode reward</text>\n";

    for (std::size_t si = 0; si < panel.series.size(); ++si) {
      const auto& s = panel.series[si];
      if (s.steps.empty()) continue;
      const std::string color = detail::series_color(si);
      std::string band = "<polygon fill=\"" + color + "\" fill-opacity=\"0.15\" stroke=\"none\" points=\"";
      for (std::size_t i = 0; i < s.steps.size(); ++i)
        band += std::to_string(sx(static_cast<double>(s.steps[i]))) + "," +
                std::to_string(sy(s.mean[i] + s.stddev[i])) + " ";
      for (std::size_t i = s.steps.size(); i-- > 0;)
        band += std::to_string(sx(static_cast<double>(s.steps[i]))) + "," +
                std::to_string(sy(s.mean[i] - s.stddev[i])) + " ";
      svg += band + "\"/>\n";
      std::string line = "<polyline fill=\"none\" stroke=\"" + color + "\" stroke-width=\"1.6\" points=\"";
      for (std::size_t i = 0; i < s.steps.size(); ++i)
        line += std::to_string(sx(static_cast<double>(s.steps[i]))) + "," +
                std::to_string(sy(s.mean[i])) + " ";
      svg += line + "\"/>\n";
      const double ly = y0 + 14 + 14 * static_cast<double>(si);
      svg += "<line x1=\"" + std::to_string(x0 + iw - 86) + "\" y1=\"" + std::to_string(ly - 4) +
             "\" x2=\"" + std::to_string(x0 + iw - 66) + "\" y2=\"" + std::to_string(ly - 4) +
             "\" stroke=\"" + color + "\" stroke-width=\"2\"/>\n";
      svg += "<text x=\"" + std::to_string(x0 + iw - 60) + "\" y=\"" + std::to_string(ly) +
             "\">" + s.label + "</text>\n";
    }
  }
  svg += "</svg>\n";
  return svg;
}

/// Collects curves.csv files under `dir` (either one experiment or a sweep
/// with h<k>/ subdirectories) into panels: one panel per environment, one
/// line per horizon.
inline std::vector<PlotPanel> collect_panels(const std::string& dir) {
  namespace fs = std::filesystem;
  std::vector<std::pair<std::string, int>> found;  // (experiment dir, horizon)
  auto probe = [&](const fs::path& d) {
    if (!fs::exists(d / "curves.csv") || !fs::exists(d / "config.json")) return;
    const auto cfg = nlohmann::json::parse(read_text_file((d / "config.json").string()));
    found.emplace_back(d.string(), cfg.value("horizon", 0));
  };
  probe(dir);
  if (fs::exists(dir))
    for (const auto& entry : fs::directory_iterator(dir))
      if (entry.is_directory()) probe(entry.path());
  if (found.empty()) throw IoError("plot: no curves.csv found under " + dir);
  std::sort(found.begin(), found.end(),
            [](const auto& a, const auto& b) { return a.second < b.second; });

  std::map<std::string, PlotPanel> by_env;
  for (const auto& [edir, horizon] : found) {
    const auto cfg = nlohmann::json::parse(read_text_file(edir + "/config.json"));
    const std::string env = cfg.value("env", "unknown");
    const std::string algo = cfg.value("requested_algo", cfg.value("algo", ""));
    const SeedSummary s = parse_curves_csv(read_text_file(edir + "/curves.csv"));
    CurveSeries series;
    series.label = "H=" + std::to_string(horizon);
    series.steps = s.steps;
    series.mean = s.mean;
    series.stddev = s.stddev;
    auto& panel = by_env[env];
    if (panel.title.empty()) panel.title = env + (algo.empty() ? "" : " (" + algo + ")");
    panel.series.push_back(std::move(series));
  }
  std::vector<PlotPanel> panels;
  for (auto& [env, panel] : by_env) panels.push_back(std::move(panel));
  return panels;
}

inline void plot_directory(const std::string& in_dir, const std::string& out_file) {
  write_text_file(out_file, render_svg(collect_panels(in_dir)));
}

}  // namespace vex
