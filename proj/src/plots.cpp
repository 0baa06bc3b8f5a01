// Copyright 2026 The madaug Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "madaug/plots.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "madaug/errors.hpp"
#include "madaug/harness.hpp"

namespace madaug {
namespace {

namespace fs = std::filesystem;

constexpr double kWidth = 640, kHeight = 400;
constexpr double kLeft = 70, kRight = 170, kTop = 40, kBottom = 50;
constexpr const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

void open_svg(std::ostringstream& os, const std::string& title) {
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
     << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
     << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
     << "<text x=\"" << kWidth / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << escape(title)
     << "</text>\n";
}

void write_file(const fs::path& path, const std::string& text, PlotReport& report) {
  std::ofstream out(path);
  if (!out) {
    report.warnings.push_back("cannot write " + path.string());
    return;
  }
  out << text;
  report.files.push_back(path.string());
}

bool has_augmentation(const PlotSeries& s) {
  return std::any_of(s.metrics.begin(), s.metrics.end(),
                     [](const EpochMetrics& m) { return m.augmented_fraction > 0.0; });
}

}  // namespace

std::string line_chart_svg(const LineChart& chart) {
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& [label, points] : chart.series)
    for (const auto& [x, y] : points) {
      if (!std::isfinite(x) || !std::isfinite(y)) continue;
      x0 = std::min(x0, x), x1 = std::max(x1, x), y0 = std::min(y0, y), y1 = std::max(y1, y);
    }
  if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (x1 == x0) x1 = x0 + 1;
  if (y1 == y0) y0 -= 0.5, y1 += 0.5;
  const double pw = kWidth - kLeft - kRight, ph = kHeight - kTop - kBottom;
  auto sx = [&](double x) { return kLeft + (x - x0) / (x1 - x0) * pw; };
  auto sy = [&](double y) { return kTop + (1.0 - (y - y0) / (y1 - y0)) * ph; };

  std::ostringstream os;
  open_svg(os, chart.title);
  os << "<rect x=\"" << kLeft << "\" y=\"" << kTop << "\" width=\"" << pw << "\" height=\"" << ph
     << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double yv = y0 + (y1 - y0) * i / 4.0, xv = x0 + (x1 - x0) * i / 4.0;
    os << "<text x=\"" << kLeft - 6 << "\" y=\"" << num(sy(yv) + 4) << "\" text-anchor=\"end\">" << num(yv)
       << "</text>\n<text x=\"" << num(sx(xv)) << "\" y=\"" << kTop + ph + 16 << "\" text-anchor=\"middle\">"
       << num(xv) << "</text>\n";
  }
  os << "<text x=\"" << kLeft + pw / 2 << "\" y=\"" << kHeight - 12 << "\" text-anchor=\"middle\">"
     << escape(chart.x_label) << "</text>\n<text x=\"16\" y=\"" << kTop + ph / 2
     << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " << kTop + ph / 2 << ")\">" << escape(chart.y_label)
     << "</text>\n";
  for (std::size_t i = 0; i < chart.series.size(); ++i) {
    const auto& [label, points] = chart.series[i];
    const char* color = kColors[i % std::size(kColors)];
    os << "<polyline class=\"series\" fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (const auto& [x, y] : points)
      if (std::isfinite(x) && std::isfinite(y)) os << num(sx(x)) << ',' << num(sy(y)) << ' ';
    const double ly = kTop + 14 + 18.0 * double(i);
    os << "\"/>\n<line x1=\"" << kLeft + pw + 10 << "\" y1=\"" << ly << "\" x2=\"" << kLeft + pw + 30 << "\" y2=\""
       << ly << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n<text x=\"" << kLeft + pw + 34 << "\" y=\""
       << ly + 4 << "\">" << escape(label) << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

std::string bar_chart_svg(const std::string& title, const std::vector<std::string>& labels,
                          const std::vector<double>& values) {
  const double pw = kWidth - kLeft - 30, ph = kHeight - kTop - kBottom;
  const double slot = values.empty() ? pw : pw / double(values.size());
  std::ostringstream os;
  open_svg(os, title);
  os << "<line x1=\"" << kLeft << "\" y1=\"" << kTop + ph << "\" x2=\"" << kLeft + pw << "\" y2=\"" << kTop + ph
     << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i)
    os << "<text x=\"" << kLeft - 6 << "\" y=\"" << num(kTop + ph * (1 - i / 4.0) + 4) << "\" text-anchor=\"end\">"
       << num(i / 4.0) << "</text>\n";
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double v = std::isfinite(values[i]) ? std::clamp(values[i], 0.0, 1.0) : 0.0;
    const double x = kLeft + slot * double(i) + 0.15 * slot;
    os << "<rect class=\"bar\" x=\"" << num(x) << "\" y=\"" << num(kTop + ph * (1 - v)) << "\" width=\""
       << num(0.7 * slot) << "\" height=\"" << num(ph * v) << "\" fill=\"" << kColors[0] << "\"/>\n"
       << "<text x=\"" << num(x + 0.35 * slot) << "\" y=\"" << kTop + ph + 16 << "\" text-anchor=\"middle\">"
       << escape(i < labels.size() ? labels[i] : std::to_string(i)) << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

PlotReport emit_plots(const std::vector<PlotSeries>& series, const std::string& out_dir) {
  PlotReport report;
  if (series.empty() || series.front().metrics.empty()) {
    report.warnings.push_back("no metrics to plot");
    return report;
  }
  fs::create_directories(out_dir);
  const fs::path dir(out_dir);
  const PlotSeries& main = series.front();

  LineChart acc{"Test accuracy", "epoch", "accuracy", {}};
  for (const PlotSeries& s : series) {
    if (s.metrics.empty()) {
      report.warnings.push_back("series '" + s.label + "' has no epochs; left out of learning_curves.svg");
      continue;
    }
    std::vector<std::pair<double, double>> pts;
    for (const EpochMetrics& m : s.metrics) pts.emplace_back(m.epoch + 1, m.test_accuracy);
    acc.series.emplace_back(s.label, std::move(pts));
  }
  write_file(dir / "learning_curves.svg", line_chart_svg(acc), report);

  LineChart sim{"Similarity of augmented to original images", "epoch", "mean similarity", {}};
  for (const PlotSeries& s : series) {
    if (!has_augmentation(s)) continue;
    std::vector<std::pair<double, double>> pts;
    for (const EpochMetrics& m : s.metrics) pts.emplace_back(m.epoch + 1, m.similarity_mean);
    sim.series.emplace_back(s.label, std::move(pts));
  }
  if (sim.series.empty())
    report.warnings.push_back("no series applies augmentation; similarity.svg skipped");
  else
    write_file(dir / "similarity.svg", line_chart_svg(sim), report);

  const Eigen::VectorXd& per_class = main.metrics.back().per_class_accuracy;
  if (per_class.size() == 0) {
    report.warnings.push_back("final epoch has no per-class accuracy; per_class.svg skipped");
  } else {
    std::vector<std::string> labels;
    std::vector<double> values;
    for (Eigen::Index c = 0; c < per_class.size(); ++c) {
      labels.push_back(std::to_string(c));
      values.push_back(per_class[c]);
    }
    write_file(dir / "per_class.svg", bar_chart_svg("Per-class test accuracy (" + main.label + ")", labels, values),
               report);
  }

  LineChart p{"Augmentation probability p(t)", "epoch index t", "p", {}};
  std::vector<std::pair<double, double>> pts;
  for (const EpochMetrics& m : main.metrics) pts.emplace_back(m.epoch, m.curriculum_p);
  p.series.emplace_back(main.label, std::move(pts));
  write_file(dir / "curriculum_p.svg", line_chart_svg(p), report);
  return report;
}

PlotSeries load_plot_series(const std::string& dir, const std::string& label) {
  fs::path path = fs::path(dir) / "metrics.jsonl";
  if (!fs::exists(path)) {
    const TrainResult result = load_train_result(dir);
    if (result.runs.empty()) throw Error("no runs under " + dir);
    return {label, result.runs.front().metrics};
  }
  return {label, read_metrics(path.string())};
}

}  // namespace madaug
