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

#pragma once

#include <string>
#include <utility>
#include <vector>

#include "madaug/bilevel.hpp"

namespace madaug {

/// One labelled metrics log.
struct PlotSeries {
  std::string label;
  std::vector<EpochMetrics> metrics;
};

struct PlotReport {
  std::vector<std::string> files;     // written SVG paths
  std::vector<std::string> warnings;  // one per skipped plot
};

/// A polyline chart; every series is drawn against the same axes.
struct LineChart {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<std::pair<std::string, std::vector<std::pair<double, double>>>> series;
};

/// Self-contained SVG; each series is one <polyline class="series">.
std::string line_chart_svg(const LineChart& chart);

/// Vertical bars; each bar is one <rect class="bar">. Values in [0, 1].
std::string bar_chart_svg(const std::string& title, const std::vector<std::string>& labels,
                          const std::vector<double>& values);

/// Writes into `out_dir`:
///   learning_curves.svg   test accuracy per epoch, one line per series
///   similarity.svg        similarity_mean per epoch (series that augment)
///   per_class.svg         final per-class accuracy of the first series
///   curriculum_p.svg      logged p(t) of the first series
/// A plot whose data is missing is skipped with a warning; an empty first log
/// writes nothing.
PlotReport emit_plots(const std::vector<PlotSeries>& series, const std::string& out_dir);

/// Loads `<dir>/metrics.jsonl` (a seed directory) or, for an experiment
/// directory, the first seed's log.
PlotSeries load_plot_series(const std::string& dir, const std::string& label);

}  // namespace madaug
