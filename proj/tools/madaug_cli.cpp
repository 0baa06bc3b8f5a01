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

// madaug: train, ablate, transfer, plot and verify from the command line.
//
// Precedence: --set overrides and dedicated flags > --config file > defaults.
// Exit codes: 0 success, 1 failed run or check, 2 configuration error.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "madaug/config.hpp"
#include "madaug/errors.hpp"
#include "madaug/gradcheck.hpp"
#include "madaug/harness.hpp"
#include "madaug/plots.hpp"
#include "madaug/runtime.hpp"

namespace {

using namespace madaug;
namespace fs = std::filesystem;

struct CommonArgs {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string output_dir;
  std::vector<std::uint64_t> seeds;
  int epochs = 0;
  int stop_after = -1;
  bool resume = false;
  bool quiet = false;
};

void add_common(CLI::App* cmd, CommonArgs& a) {
  cmd->add_option("-c,--config", a.config_path, "JSON config file (missing keys keep their defaults)");
  cmd->add_option("--set", a.overrides, "override one key, e.g. --set bilevel.alpha=0.1 (repeatable)");
  cmd->add_option("-o,--output", a.output_dir, "output directory");
  cmd->add_option("--seeds", a.seeds, "training seeds");
  cmd->add_option("--epochs", a.epochs, "schedule length")->check(CLI::PositiveNumber);
  cmd->add_option("--stop-after", a.stop_after, "stop after this many epochs without changing the schedule");
  cmd->add_flag("--resume", a.resume, "continue from the latest checkpoint of each seed");
  cmd->add_flag("-q,--quiet", a.quiet, "no per-epoch progress");
}

ExperimentConfig resolve(const CommonArgs& a) {
  ExperimentConfig c = a.config_path.empty() ? default_config() : load_config(a.config_path);
  for (const std::string& o : a.overrides) apply_override(c, o);
  if (!a.output_dir.empty()) c.output_dir = a.output_dir;
  if (!a.seeds.empty()) c.seeds = a.seeds;
  if (a.epochs > 0) c.bilevel.epochs = a.epochs;
  c.validate();
  return c;
}

RunOptions run_options(const CommonArgs& a) {
  RunOptions o;
  o.stop_after_epochs = a.stop_after;
  o.resume = a.resume;
  if (!a.quiet)
    o.on_epoch = [](std::uint64_t seed, const EpochMetrics& m) {
      std::fprintf(stderr, "seed %llu epoch %3d  p %.3f  train %.4f  val %.4f  test acc %.4f  sim %.4f  %.1fs\n",
                   static_cast<unsigned long long>(seed), m.epoch, m.curriculum_p, m.train_loss, m.val_loss,
                   m.test_accuracy, m.similarity_mean, m.seconds);
    };
  return o;
}

void write_and_print(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream(path) << text;
  std::cout << text << "written to " << path.string() << "\n";
}

int report_train(const TrainResult& r) {
  std::ifstream in(fs::path(r.output_dir) / "summary.md");
  std::cout << in.rdbuf();
  for (const SeedRun& s : r.runs)
    if (!s.ok) std::cerr << "seed " << s.seed << " failed: " << s.error << "\n";
  return r.ok() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  tune_allocator();
  CLI::App app{"Model-adaptive data augmentation: training, ablations, transfer and checks"};
  app.require_subcommand(1);

  CommonArgs train_args;
  CLI::App* train = app.add_subcommand("train", "train one model per seed");
  add_common(train, train_args);

  CommonArgs ablate_args;
  std::string ablate_param = "all";
  std::vector<double> ablate_values;
  bool from_disk = false;
  CLI::App* ablate = app.add_subcommand("ablate", "hyperparameter sensitivity grid");
  add_common(ablate, ablate_args);
  ablate->add_option("-p,--param", ablate_param, "delta, k, h, tau, s or all")
      ->check(CLI::IsMember({"delta", "k", "h", "tau", "s", "all"}));
  ablate->add_option("--values", ablate_values, "grid values (default: the declared grid)");
  ablate->add_flag("--from-disk", from_disk, "rebuild the table from existing run directories");

  CommonArgs curriculum_args;
  CLI::App* curriculum = app.add_subcommand("curriculum-ablate", "fixed / per-sample / MADAug x curriculum off / on");
  add_common(curriculum, curriculum_args);

  CommonArgs adaptivity_args;
  CLI::App* adaptivity = app.add_subcommand("adaptivity-ablate", "model-adaptive only / data-adaptive only / both");
  add_common(adaptivity, adaptivity_args);

  CommonArgs transfer_args;
  std::string policy_path;
  CLI::App* transfer = app.add_subcommand("transfer", "train a target task under a frozen policy checkpoint");
  add_common(transfer, transfer_args);
  transfer->add_option("--policy", policy_path, "policy checkpoint (policy.json of a source run)")->required();

  std::vector<std::string> plot_series;
  std::string plot_out;
  CLI::App* plot = app.add_subcommand("plot", "SVG learning curves, similarity, per-class accuracy and p(t)");
  plot->add_option("series", plot_series, "label=run_dir (seed or experiment directory); the first is the main run")
      ->required();
  plot->add_option("-o,--output", plot_out, "output directory (default: the first run directory)");

  std::uint64_t verify_seed = 0;
  CLI::App* verify = app.add_subcommand("verify", "gradient checks against central differences");
  verify->add_option("--seed", verify_seed, "problem seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) return report_train(run_train(resolve(train_args), run_options(train_args)));

    if (*ablate) {
      const ExperimentConfig base = resolve(ablate_args);
      const std::vector<std::string> params =
          ablate_param == "all" ? std::vector<std::string>{"delta", "k", "h", "tau", "s"}
                                : std::vector<std::string>{ablate_param};
      std::vector<AblationRow> rows;
      bool ok = true;
      for (const std::string& p : params) {
        const std::vector<double> values = ablate_values.empty() ? default_ablation_grid(p) : ablate_values;
        rows.push_back(from_disk ? load_ablation_row(base.output_dir, p, values)
                                 : run_ablation(base, p, values, run_options(ablate_args)));
        for (const AblationCell& c : rows.back().cells)
          if (!c.ok) {
            ok = false;
            std::cerr << p << " = " << c.value << " failed: " << c.error << "\n";
          }
      }
      write_and_print(fs::path(base.output_dir) / "ablation.md", ablation_table_markdown(rows));
      return ok ? 0 : 1;
    }

    if (*curriculum || *adaptivity) {
      const bool is_curriculum = bool(*curriculum);
      const CommonArgs& a = is_curriculum ? curriculum_args : adaptivity_args;
      const ExperimentConfig base = resolve(a);
      const std::vector<MethodCell> cells = is_curriculum ? run_curriculum_ablation(base, run_options(a))
                                                          : run_adaptivity_ablation(base, run_options(a));
      bool ok = true;
      for (const MethodCell& c : cells)
        if (!c.ok) {
          ok = false;
          std::cerr << c.method << " " << c.detail << " failed: " << c.error << "\n";
        }
      write_and_print(fs::path(base.output_dir) / (is_curriculum ? "curriculum.md" : "adaptivity.md"),
                      is_curriculum ? curriculum_table_markdown(cells) : adaptivity_table_markdown(cells));
      return ok ? 0 : 1;
    }

    if (*transfer) {
      const TransferResult r = run_transfer(policy_path, resolve(transfer_args), run_options(transfer_args));
      std::cout << transfer_table_markdown(r);
      return r.frozen.ok() && r.none.ok() && r.fixed.ok() ? 0 : 1;
    }

    if (*plot) {
      std::vector<PlotSeries> series;
      for (const std::string& s : plot_series) {
        const auto eq = s.find('=');
        const std::string label = eq == std::string::npos ? fs::path(s).filename().string() : s.substr(0, eq);
        series.push_back(load_plot_series(eq == std::string::npos ? s : s.substr(eq + 1), label));
      }
      const std::string first = plot_series.front().substr(plot_series.front().find('=') + 1);
      const PlotReport report = emit_plots(series, plot_out.empty() ? first : plot_out);
      for (const std::string& f : report.files) std::cout << "wrote " << f << "\n";
      for (const std::string& w : report.warnings) std::cerr << "warning: " << w << "\n";
      return report.files.empty() ? 1 : 0;
    }

    if (*verify) {
      bool ok = true;
      for (const CheckResult& c : run_gradient_checks(verify_seed)) {
        std::printf("%-4s %-52s rel err %.2e (tol %.0e)\n", c.passed() ? "ok" : "FAIL", c.name.c_str(), c.error,
                    c.tolerance);
        ok = ok && c.passed();
      }
      return ok ? 0 : 1;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const DimensionError& e) {
    std::cerr << "dimension error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
