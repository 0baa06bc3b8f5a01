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

#include "madaug/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <sstream>

#include <json.hpp>

#include "madaug/errors.hpp"
#include "madaug/policy.hpp"

#ifndef MADAUG_CODE_VERSION
#define MADAUG_CODE_VERSION "unknown"
#endif

namespace madaug {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

json stat_json(const Stat& s) {
  auto num = [](double v) { return std::isfinite(v) ? json(v) : json(nullptr); };
  json values = json::array();
  for (double v : s.values) values.push_back(num(v));
  return {{"mean", num(s.mean)}, {"std", num(s.stddev)}, {"median", num(s.median)}, {"values", values}};
}

// Loaded datasets, keyed by their spec; rendering is the slow part of setup.
std::shared_ptr<const Dataset> cached_dataset(const DatasetSpec& spec) {
  static std::map<std::string, std::shared_ptr<const Dataset>> cache;
  std::ostringstream key;
  key << spec.kind << '|' << spec.variant << '|' << spec.path << '|' << spec.num_images << '|' << spec.height << '|'
      << spec.width << '|' << spec.seed;
  auto it = cache.find(key.str());
  if (it == cache.end()) it = cache.emplace(key.str(), std::make_shared<const Dataset>(load_dataset(spec))).first;
  return it->second;
}

DatasetSplit split_for(const ExperimentConfig& config, const Dataset& data) {
  Rng rng = make_stream(config.split.seed, 0x5911);
  DatasetSplit split = make_splits(data.labels, data.num_classes, std::size_t(config.split.n_train),
                                   std::size_t(config.split.n_val), config.split.stratify, rng, config.split.n_test);
  split.shape = data.shape;
  split.num_classes = data.num_classes;
  return split;
}

// Latest "checkpoint_epoch_NNN.json" in `dir`, or empty.
std::string latest_checkpoint(const fs::path& dir) {
  if (!fs::is_directory(dir)) return {};
  std::string best;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (name.rfind("checkpoint_epoch_", 0) == 0 && entry.path().extension() == ".json" && name > best) best = name;
  }
  return best.empty() ? std::string() : (dir / best).string();
}

// Keeps the first `epochs` records of a metrics log.
void truncate_metrics(const fs::path& path, int epochs) {
  std::vector<std::string> keep;
  if (std::ifstream in(path); in) {
    for (std::string line; int(keep.size()) < epochs && std::getline(in, line);)
      if (!line.empty()) keep.push_back(line);
  }
  std::ofstream out(path, std::ios::trunc);
  for (const auto& line : keep) out << line << '\n';
}

std::string format_value(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

std::string format_accuracy(const Stat& s, bool ok) {
  if (!ok || s.values.empty() || !std::isfinite(s.mean)) return "failed";
  char buf[48];
  if (s.values.size() > 1)
    std::snprintf(buf, sizeof buf, "%.1f ± %.1f", 100.0 * s.mean, 100.0 * s.stddev);
  else
    std::snprintf(buf, sizeof buf, "%.1f", 100.0 * s.mean);
  return buf;
}

struct Prepared {
  std::shared_ptr<const Dataset> data;
  DatasetSplit split;
  OpRegistry registry;
  int feature_dim = 0;
  std::optional<PolicyCheckpoint> init_policy;
};

// Everything that can fail on a bad config, done before any training.
Prepared prepare(const ExperimentConfig& config) {
  config.validate();
  Prepared p;
  p.registry = build_registry(config);
  p.data = cached_dataset(config.dataset);
  p.split = split_for(config, *p.data);
  Rng probe = make_stream(0, 0);
  p.feature_dim = build_model(config.model, p.data->shape, p.data->num_classes, probe).model.feature_dim();
  if (!config.init_policy.empty()) {
    p.init_policy = load_policy_checkpoint(config.init_policy);
    check_policy_compatible(*p.init_policy, p.feature_dim, p.registry);
  }
  return p;
}

bool uses_policy(PolicyMode mode) {
  return mode == PolicyMode::MadAug || mode == PolicyMode::ModelAdaptiveOnly ||
         mode == PolicyMode::DataAdaptiveOnly || mode == PolicyMode::Frozen;
}

SeedRun run_seed(const ExperimentConfig& config, const Prepared& prep, std::uint64_t seed, const fs::path& run_dir,
                 const RunOptions& options) {
  SeedRun run;
  run.seed = seed;
  run.run_dir = run_dir.string();
  fs::create_directories(run_dir);

  ExperimentConfig resolved = config;
  resolved.seeds = {seed};
  write_text(run_dir / "config.json", config_to_json(resolved));
  prep.registry.save((run_dir / "ops.json").string());
  save_split((run_dir / "split.json").string(), prep.split);
  json info = {{"seed", seed},
               {"code_version", code_version()},
               {"ops_fingerprint", prep.registry.fingerprint()},
               {"dataset", prep.data->name},
               {"status", "running"}};
  write_text(run_dir / "run.json", info.dump(2) + "\n");

  const auto start = std::chrono::steady_clock::now();
  std::vector<double> timings;
  try {
    Rng model_rng = make_stream(seed, 0x10);
    BuiltModel built = build_model(config.model, prep.data->shape, prep.data->num_classes, model_rng);
    Rng policy_rng = make_stream(seed, 0x11);
    PolicyNetwork policy = prep.init_policy
                               ? prep.init_policy->net
                               : PolicyNetwork::create(built.model.feature_dim(), int(prep.registry.size()),
                                                       config.augment.hidden_layers, config.augment.hidden_width,
                                                       policy_rng);
    TrainState state = init_train_state(std::move(built.w), std::move(policy), config.bilevel, seed);

    const fs::path metrics_path = run_dir / "metrics.jsonl";
    const fs::path checkpoint_dir = run_dir / "checkpoints";
    const std::string resume_from = options.resume ? latest_checkpoint(checkpoint_dir) : std::string();
    if (!resume_from.empty()) {
      state = load_train_state(resume_from);
      if (state.policy.input_dim != built.model.feature_dim() && uses_policy(config.augment.mode))
        throw DimensionError("checkpoint " + resume_from + " does not fit the configured model");
    }
    truncate_metrics(metrics_path, state.epoch);
    for (const EpochMetrics& m : read_metrics(metrics_path.string())) run.metrics.push_back(m);

    std::ofstream metrics_out(metrics_path, std::ios::app);
    if (!metrics_out) throw Error("cannot write " + metrics_path.string());
    TrainingProblem problem{&built.model, &prep.registry, prep.data.get(), &prep.split};
    LoopOptions loop;
    loop.stop_after_epochs = options.stop_after_epochs;
    loop.checkpoint_every = config.checkpoint_every;
    loop.checkpoint_dir = checkpoint_dir.string();
    loop.on_epoch = [&](const EpochMetrics& m) {
      metrics_out << to_json_line(m) << '\n';
      metrics_out.flush();
      timings.push_back(m.seconds);
      if (options.on_epoch) options.on_epoch(seed, m);
    };
    for (EpochMetrics& m : train_loop(state, problem, config.bilevel, config.curriculum, config.augment, loop))
      run.metrics.push_back(std::move(m));

    if (uses_policy(config.augment.mode))
      save_policy_checkpoint((run_dir / "policy.json").string(), state.policy, prep.registry);
    save_train_state((run_dir / "state.json").string(), state);
    run.ok = true;
  } catch (const std::exception& e) {
    run.ok = false;
    run.error = e.what();
  }
  run.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  write_text(run_dir / "timings.json", json{{"epoch_seconds", timings}, {"total_seconds", run.seconds}}.dump(2) + "\n");
  info["status"] = run.ok ? "ok" : "failed";
  if (!run.ok) info["error"] = run.error;
  write_text(run_dir / "run.json", info.dump(2) + "\n");
  return run;
}

void fill_stats(TrainResult& result) {
  std::vector<double> acc, val, sim;
  for (const SeedRun& r : result.runs) {
    if (!r.ok || r.metrics.empty()) continue;
    acc.push_back(r.metrics.back().test_accuracy);
    val.push_back(r.metrics.back().val_loss);
    sim.push_back(r.metrics.back().similarity_mean);
  }
  result.test_accuracy = summarize(acc);
  result.val_loss = summarize(val);
  result.similarity = summarize(sim);
}

void write_summary(const TrainResult& result) {
  json failed = json::array();
  json seeds = json::array();
  for (const SeedRun& r : result.runs) {
    seeds.push_back(r.seed);
    if (!r.ok) failed.push_back({{"seed", r.seed}, {"error", r.error}});
  }
  const json summary = {{"seeds", seeds},
                        {"final_test_accuracy", stat_json(result.test_accuracy)},
                        {"final_val_loss", stat_json(result.val_loss)},
                        {"final_similarity", stat_json(result.similarity)},
                        {"failed", failed},
                        {"code_version", code_version()}};
  write_text(fs::path(result.output_dir) / "summary.json", summary.dump(2) + "\n");

  std::ostringstream md;
  md << "| seed | final test acc (%) | final val loss | final similarity | status |\n|---|---|---|---|---|\n";
  for (const SeedRun& r : result.runs) {
    md << "| " << r.seed << " | ";
    if (r.ok && !r.metrics.empty()) {
      const EpochMetrics& m = r.metrics.back();
      char buf[96];
      std::snprintf(buf, sizeof buf, "%.2f | %.4f | %.4f | ok |", 100.0 * m.test_accuracy, m.val_loss,
                    m.similarity_mean);
      md << buf << "\n";
    } else {
      md << "- | - | - | failed: " << r.error << " |\n";
    }
  }
  md << "\nfinal test accuracy: " << format_accuracy(result.test_accuracy, !result.test_accuracy.values.empty())
     << " (mean ± std over " << result.test_accuracy.values.size() << " seeds)\n";
  write_text(fs::path(result.output_dir) / "summary.md", md.str());
}

MethodCell run_cell(const ExperimentConfig& config, std::string method, std::string detail,
                    const RunOptions& options) {
  MethodCell cell;
  cell.method = std::move(method);
  cell.detail = std::move(detail);
  cell.run_dir = config.output_dir;
  try {
    const TrainResult r = run_train(config, options);
    cell.ok = r.ok();
    cell.test_accuracy = r.test_accuracy;
    if (!cell.ok)
      for (const SeedRun& s : r.runs)
        if (!s.ok) cell.error = s.error;
  } catch (const std::exception& e) {
    cell.ok = false;
    cell.error = e.what();
  }
  return cell;
}

}  // namespace

std::string code_version() { return MADAUG_CODE_VERSION; }

double SeedRun::final_test_accuracy() const { return metrics.empty() ? kNaN : metrics.back().test_accuracy; }

Stat summarize(std::vector<double> values) {
  Stat s;
  s.values = values;
  if (values.empty()) {
    s.mean = s.stddev = s.median = kNaN;
    return s;
  }
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / double(values.size());
  if (values.size() > 1) {
    double sq = 0.0;
    for (double v : values) sq += (v - s.mean) * (v - s.mean);
    s.stddev = std::sqrt(sq / double(values.size() - 1));
  }
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  s.median = n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
  return s;
}

bool TrainResult::ok() const {
  return !runs.empty() && std::all_of(runs.begin(), runs.end(), [](const SeedRun& r) { return r.ok; });
}

std::vector<EpochMetrics> read_metrics(const std::string& path) {
  std::vector<EpochMetrics> out;
  std::ifstream in(path);
  for (std::string line; std::getline(in, line);)
    if (!line.empty()) out.push_back(metrics_from_json_line(line));
  return out;
}

TrainResult run_train(const ExperimentConfig& config, const RunOptions& options) {
  const Prepared prep = prepare(config);
  TrainResult result;
  result.output_dir = config.output_dir;
  fs::create_directories(config.output_dir);
  write_text(fs::path(config.output_dir) / "config.json", config_to_json(config));
  for (std::uint64_t seed : config.seeds)
    result.runs.push_back(run_seed(config, prep, seed, fs::path(config.output_dir) / ("seed_" + std::to_string(seed)),
                                   options));
  fill_stats(result);
  write_summary(result);
  return result;
}

TrainResult load_train_result(const std::string& output_dir) {
  const ExperimentConfig config = load_config((fs::path(output_dir) / "config.json").string());
  TrainResult result;
  result.output_dir = output_dir;
  for (std::uint64_t seed : config.seeds) {
    SeedRun run;
    run.seed = seed;
    const fs::path dir = fs::path(output_dir) / ("seed_" + std::to_string(seed));
    run.run_dir = dir.string();
    run.metrics = read_metrics((dir / "metrics.jsonl").string());
    try {
      const json info = json::parse(read_text(dir / "run.json"));
      run.ok = info.value("status", "") == "ok";
      run.error = info.value("error", "");
    } catch (const std::exception& e) {
      run.ok = false;
      run.error = e.what();
    }
    result.runs.push_back(std::move(run));
  }
  fill_stats(result);
  return result;
}

// ---- ablations ---------------------------------------------------------------

void set_ablation_parameter(ExperimentConfig& config, const std::string& parameter, double value) {
  auto as_int = [&](const char* what) {
    if (value != std::round(value)) throw ConfigError(std::string(what) + " must be an integer, got " + format_value(value));
    return int(value);
  };
  if (parameter == "delta")
    config.augment.delta = value;
  else if (parameter == "k")
    config.augment.k = as_int("k");
  else if (parameter == "h")
    config.augment.hidden_layers = as_int("h");
  else if (parameter == "tau")
    config.curriculum.tau = value;
  else if (parameter == "s")
    config.bilevel.s = as_int("s");
  else
    throw ConfigError("unknown ablation parameter '" + parameter + "' (expected delta, k, h, tau or s)");
}

double default_ablation_value(const std::string& parameter) {
  if (parameter == "delta") return 0.3;
  if (parameter == "k") return 2;
  if (parameter == "h") return 0;
  if (parameter == "tau") return 40;
  if (parameter == "s") return 1;
  throw ConfigError("unknown ablation parameter '" + parameter + "'");
}

std::vector<double> default_ablation_grid(const std::string& parameter) {
  if (parameter == "delta") return {0.0, 0.1, 0.2, 0.3, 0.4};
  if (parameter == "k") return {1, 2, 3, 4, 5};
  if (parameter == "h") return {0, 1, 2, 3, 4};
  if (parameter == "tau") return {10, 20, 30, 40, 50};
  if (parameter == "s") return {1, 2, 5, 10, 30};
  throw ConfigError("unknown ablation parameter '" + parameter + "'");
}

double AblationRow::best_value() const {
  double best = kNaN, best_acc = -1.0;
  for (const AblationCell& c : cells)
    if (c.ok && std::isfinite(c.test_accuracy.mean) && c.test_accuracy.mean > best_acc) {
      best_acc = c.test_accuracy.mean;
      best = c.value;
    }
  return best;
}

AblationRow run_ablation(const ExperimentConfig& base, const std::string& parameter, const std::vector<double>& values,
                         const RunOptions& options) {
  default_ablation_value(parameter);  // rejects unknown names before any compute
  AblationRow row;
  row.parameter = parameter;
  for (double v : values) {
    AblationCell cell;
    cell.value = v;
    ExperimentConfig config = base;
    config.output_dir = (fs::path(base.output_dir) / (parameter + "_" + format_value(v))).string();
    cell.run_dir = config.output_dir;
    try {
      set_ablation_parameter(config, parameter, v);
      const TrainResult r = run_train(config, options);
      cell.ok = r.ok();
      cell.test_accuracy = r.test_accuracy;
      if (!cell.ok)
        for (const SeedRun& s : r.runs)
          if (!s.ok) cell.error = s.error;
    } catch (const std::exception& e) {
      cell.ok = false;
      cell.error = e.what();
    }
    row.cells.push_back(std::move(cell));
  }
  return row;
}

AblationRow load_ablation_row(const std::string& output_dir, const std::string& parameter,
                              const std::vector<double>& values) {
  AblationRow row;
  row.parameter = parameter;
  for (double v : values) {
    AblationCell cell;
    cell.value = v;
    cell.run_dir = (fs::path(output_dir) / (parameter + "_" + format_value(v))).string();
    try {
      const TrainResult r = load_train_result(cell.run_dir);
      cell.ok = r.ok();
      cell.test_accuracy = r.test_accuracy;
    } catch (const std::exception& e) {
      cell.ok = false;
      cell.error = e.what();
    }
    row.cells.push_back(std::move(cell));
  }
  return row;
}

std::string ablation_table_markdown(const std::vector<AblationRow>& rows) {
  static const std::map<std::string, std::string> symbol = {
      {"delta", "δ"}, {"k", "k"}, {"h", "h"}, {"tau", "τ"}, {"s", "s"}};
  std::ostringstream md;
  for (const AblationRow& row : rows) {
    const auto it = symbol.find(row.parameter);
    md << "| " << (it == symbol.end() ? row.parameter : it->second) << " |";
    for (const AblationCell& c : row.cells) md << ' ' << format_value(c.value) << " |";
    md << "\n|---|";
    for (std::size_t i = 0; i < row.cells.size(); ++i) md << "---|";
    md << "\n| ACC(%) |";
    for (const AblationCell& c : row.cells) md << ' ' << format_accuracy(c.test_accuracy, c.ok) << " |";
    const double best = row.best_value();
    const double def = default_ablation_value(row.parameter);
    md << "\n\nbest " << row.parameter << " = " << (std::isfinite(best) ? format_value(best) : "n/a") << "; default "
       << format_value(def) << (std::isfinite(best) && best == def ? " (matches)" : " (differs)") << "\n\n";
  }
  return md.str();
}

// ---- curriculum and adaptivity ----------------------------------------------

std::vector<MethodCell> run_curriculum_ablation(const ExperimentConfig& base, const RunOptions& options) {
  base.validate();
  const std::pair<const char*, PolicyMode> methods[] = {
      {"fixed policy", PolicyMode::Fixed},
      {"per-sample policy", PolicyMode::DataAdaptiveOnly},
      {"MADAug", PolicyMode::MadAug},
  };
  std::vector<MethodCell> cells;
  for (const auto& [label, mode] : methods) {
    for (const bool on : {false, true}) {
      ExperimentConfig config = base;
      config.augment.mode = mode;
      config.curriculum.mode = on ? CurriculumMode::Tanh : CurriculumMode::AlwaysOn;
      config.output_dir = (fs::path(base.output_dir) / (std::string(policy_mode_name(mode)) + (on ? "_on" : "_off")))
                              .string();
      cells.push_back(run_cell(config, label, on ? "on" : "off", options));
    }
  }
  return cells;
}

std::vector<MethodCell> run_adaptivity_ablation(const ExperimentConfig& base, const RunOptions& options) {
  base.validate();
  const std::pair<const char*, PolicyMode> methods[] = {
      {"model-adaptive only", PolicyMode::ModelAdaptiveOnly},
      {"data-adaptive only", PolicyMode::DataAdaptiveOnly},
      {"both", PolicyMode::MadAug},
  };
  std::vector<MethodCell> cells;
  for (const auto& [label, mode] : methods) {
    ExperimentConfig config = base;
    config.augment.mode = mode;
    config.output_dir = (fs::path(base.output_dir) / std::string(policy_mode_name(mode))).string();
    cells.push_back(run_cell(config, label, "", options));
  }
  return cells;
}

std::string curriculum_table_markdown(const std::vector<MethodCell>& cells) {
  std::ostringstream md;
  md << "| Method | Monotonic curriculum | ACC(%) |\n|---|---|---|\n";
  for (const MethodCell& c : cells)
    md << "| " << c.method << " | " << (c.detail == "on" ? "✓" : "") << " | "
       << format_accuracy(c.test_accuracy, c.ok) << " |\n";
  md << "\nper-sample policy: trained during the warm-up fraction of epochs, then frozen.\n"
     << "fixed policy: uniformly random distinct op pair with fixed magnitudes.\n";
  return md.str();
}

std::string adaptivity_table_markdown(const std::vector<MethodCell>& cells) {
  std::ostringstream md;
  md << "| Model-adaptive | Data-adaptive | ACC(%) |\n|---|---|---|\n";
  for (const MethodCell& c : cells) {
    const bool model = c.method != "data-adaptive only";
    const bool data = c.method != "model-adaptive only";
    md << "| " << (model ? "✓" : "") << " | " << (data ? "✓" : "") << " | " << format_accuracy(c.test_accuracy, c.ok)
       << " |\n";
  }
  md << "\nmodel-adaptive only: one policy for the whole dataset (constant policy input), updated online.\n"
     << "data-adaptive only: per-sample policy trained during the warm-up fraction of epochs, then frozen.\n";
  return md.str();
}

// ---- transfer -----------------------------------------------------------------

TransferResult run_transfer(const std::string& policy_path, const ExperimentConfig& target,
                            const RunOptions& options) {
  ExperimentConfig frozen = target;
  frozen.augment.mode = PolicyMode::Frozen;
  frozen.init_policy = policy_path;
  frozen.bilevel.beta = 0.0;
  frozen.output_dir = (fs::path(target.output_dir) / "frozen").string();
  prepare(frozen);  // dimension and registry checks before any training

  ExperimentConfig none = target;
  none.augment.mode = PolicyMode::None;
  none.init_policy.clear();
  none.output_dir = (fs::path(target.output_dir) / "none").string();
  ExperimentConfig fixed = target;
  fixed.augment.mode = PolicyMode::Fixed;
  fixed.init_policy.clear();
  fixed.output_dir = (fs::path(target.output_dir) / "fixed").string();

  TransferResult result;
  result.frozen = run_train(frozen, options);
  result.none = run_train(none, options);
  result.fixed = run_train(fixed, options);
  write_text(fs::path(target.output_dir) / "transfer.md", transfer_table_markdown(result));
  return result;
}

std::string transfer_table_markdown(const TransferResult& r) {
  std::ostringstream md;
  md << "| Target training | ACC(%) mean ± std | ACC(%) median |\n|---|---|---|\n";
  auto line = [&](const char* label, const TrainResult& t) {
    char med[32];
    std::snprintf(med, sizeof med, "%.1f", 100.0 * t.test_accuracy.median);
    md << "| " << label << " | " << format_accuracy(t.test_accuracy, t.ok()) << " | "
       << (t.ok() ? med : "failed") << " |\n";
  };
  line("transferred policy (frozen)", r.frozen);
  line("no augmentation", r.none);
  line("fixed policy", r.fixed);
  return md.str();
}

}  // namespace madaug
