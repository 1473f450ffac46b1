#include "langtime/cli/commands.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "langtime/cli/experiment.hpp"
#include "langtime/cli/pipeline.hpp"
#include "langtime/model/checkpoint.hpp"
#include "langtime/ppo/finetune.hpp"
#include "langtime/train/pretrainer.hpp"
#include "langtime/util/format.hpp"

namespace langtime::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

struct Context {
  ExperimentConfig config;
  std::string hash;
  fs::path out;
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
};

std::ofstream OpenOut(const fs::path& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  return f;
}

void WriteSummary(const Context& ctx, const std::string& command, json body) {
  json j;
  j["command"] = command;
  j["config_hash"] = ctx.hash;
  j["seed"] = ctx.config.seed;
  for (auto& [k, v] : body.items()) j[k] = v;
  j["wall_time_seconds"] =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - ctx.start).count();
  OpenOut(ctx.out / "summary.json") << j.dump(2) << '\n';
}

model::LoadedCheckpoint RequireCheckpoint(const std::string& path, const std::string& key) {
  if (path.empty()) throw ConfigError(key + " is not set");
  if (!fs::is_regular_file(path)) throw ConfigError(key + ": no checkpoint at " + path);
  return model::LoadCheckpoint(path);
}

std::int64_t MinSegment(const ExperimentConfig& c) {
  return c.model.lengths.front() + c.model.output_length();
}

json ValidationMses(const model::Forecaster& m, const std::vector<train::FramePtr>& val,
                    std::int64_t stride, double* mean) {
  json j = json::object();
  *mean = 0.0;
  for (auto len : m.config().lengths) {
    const double v = train::ValidationMse(m, val, len, stride);
    j[std::to_string(len)] = v;
    *mean += v / static_cast<double>(m.config().lengths.size());
  }
  return j;
}

int Pretrain(Context& ctx) {
  const auto& c = ctx.config;
  auto frames = LoadSource(c.data);
  auto sets = Prepare(frames, c.SplitSpec(), MinSegment(c));
  prompt::MetadataRegistry registry;
  for (const auto& f : frames) registry.Add(f);
  model::Forecaster m(c.model, prompt::PromptVocabulary::FromRegistry(registry), c.seed);

  const auto val = Segments(sets, data::Segment::kVal);
  double before = 0.0, after = 0.0;
  json untrained = ValidationMses(m, val, c.val_stride, &before);

  train::Pretrainer trainer(m, c.pretrain,
                            train::BatchSampler(Segments(sets, data::Segment::kPretrain),
                                                c.model.output_length(), c.model.patch_size,
                                                c.pretrain_stride));
  {
    auto log = OpenOut(ctx.out / "train.log");
    trainer.Run(&log);
  }
  json trained = ValidationMses(m, val, c.val_stride, &after);
  model::SaveCheckpoint(ctx.out / "checkpoint.bin", m, {ctx.hash, "pretrain", c.seed});

  json body;
  body["stage"] = "pretrain";
  body["steps"] = c.pretrain.total_steps;
  body["parameters"] = m.params().NumScalars();
  body["val_mse_untrained"] = untrained;
  body["val_mse"] = trained;
  body["val_mse_untrained_mean"] = before;
  body["val_mse_mean"] = after;
  body["val_mse_reduction"] = before / after;
  WriteSummary(ctx, "pretrain", body);
  return kExitOk;
}

int Finetune(Context& ctx) {
  const auto& c = ctx.config;
  auto base = RequireCheckpoint(c.finetune_checkpoint, "finetune.checkpoint");
  if (base.model.config().lengths != c.model.lengths ||
      base.model.config().output_length() != c.model.output_length()) {
    throw ConfigError("finetune.checkpoint was trained with lengths " +
                      base.model.config().LengthsString() + ", config has " +
                      c.model.LengthsString());
  }
  auto sets = Prepare(LoadSource(c.data), c.SplitSpec(), MinSegment(c));
  auto policy = base.model;
  ppo::FineTuner tuner(policy, c.finetune, Segments(sets, data::Segment::kFinetune));
  {
    auto log = OpenOut(ctx.out / "finetune.log");
    tuner.Run(&log);
  }
  const auto stage = ppo::AlgorithmName(c.finetune.algorithm);
  model::SaveCheckpoint(ctx.out / "checkpoint.bin", policy, {ctx.hash, stage, c.seed});

  json body;
  body["stage"] = stage;
  body["base_checkpoint_hash"] = FileHash(c.finetune_checkpoint);
  body["epochs"] = c.finetune.epochs;
  WriteSummary(ctx, "finetune", body);
  return kExitOk;
}

int Evaluate(Context& ctx, bool zero_shot) {
  const auto& c = ctx.config;
  const auto kind = zero_shot ? "zero-shot" : "evaluate";
  auto loaded = RequireCheckpoint(c.eval.checkpoint, "eval.checkpoint");
  const auto ckpt_hash_before = FileHash(c.eval.checkpoint);
  const auto& m = loaded.model;
  if (!m.config().Supports(c.eval.input_length)) {
    throw ConfigError("eval.input_length " + std::to_string(c.eval.input_length) +
                      " has no head in the checkpoint; supported " + m.config().LengthsString());
  }
  auto frames = LoadSource(zero_shot ? c.zeroshot : c.data);
  for (const auto& f : frames) {
    if (zero_shot && m.vocab().KnowsDataset(f.dataset_id())) {
      throw ConfigError("zero-shot dataset '" + f.dataset_id() +
                        "' is part of the checkpoint's vocabulary");
    }
  }
  const auto seg = c.eval.segment == "val" ? data::Segment::kVal : data::Segment::kTest;
  auto sets = Prepare(frames, c.SplitSpec(),
                      m.config().lengths.front() + m.config().output_length());

  std::vector<MetricRow> rows;
  for (const auto& set : sets) {
    for (std::size_t i = 0; i < c.eval.horizons.size(); ++i) {
      MetricRow r;
      r.kind = kind;
      r.dataset = set.id;
      r.horizon = c.eval.horizons[i];
      r.tail = c.eval.tails[i];
      r.stage = loaded.info.stage;
      r.seed = loaded.info.seed;
      r.config_hash = loaded.info.config_hash;
      r.checkpoint_hash = ckpt_hash_before;
      r.unknown_dataset = !m.vocab().KnowsDataset(set.id);
      auto e = EvaluateFrame(m, set.get(seg), c.eval.input_length, r.horizon, r.tail,
                             c.eval.stride, c.eval.allow_truncation);
      r.windows = e.windows;
      r.metrics = e.metrics;
      rows.push_back(r);
    }
  }
  if (FileHash(c.eval.checkpoint) != ckpt_hash_before) {
    throw std::runtime_error("checkpoint " + c.eval.checkpoint + " changed during evaluation");
  }
  {
    auto f = OpenOut(ctx.out / "metrics.csv");
    f << MetricsHeader() << '\n';
    for (const auto& r : rows) f << MetricsLine(r) << '\n';
  }
  json body;
  body["checkpoint_hash"] = ckpt_hash_before;
  body["stage"] = loaded.info.stage;
  body["rows"] = rows.size();
  WriteSummary(ctx, kind, body);
  return kExitOk;
}

int Export(Context& ctx) {
  const auto& c = ctx.config;
  if (c.export_runs.empty()) throw ConfigError("export.runs is empty");
  std::vector<std::string> lines;
  std::string header;
  for (const auto& run : c.export_runs) {
    const fs::path path = fs::path(run) / "metrics.csv";
    std::ifstream in(path);
    if (!in) throw std::runtime_error("no metrics.csv in " + run);
    std::string line;
    std::getline(in, line);
    if (line != MetricsHeader()) throw std::runtime_error(path.string() + ": unexpected header");
    while (std::getline(in, line)) {
      if (!line.empty()) lines.push_back(line);
    }
  }
  if (lines.empty()) throw std::runtime_error("no metric rows under export.runs");

  std::vector<std::string> columns;
  {
    std::stringstream h(MetricsHeader());
    std::string col;
    while (std::getline(h, col, ',')) columns.push_back(col);
  }
  json rows = json::array();
  auto csv = OpenOut(ctx.out / "results.csv");
  csv << MetricsHeader() << '\n';
  for (const auto& line : lines) {
    csv << line << '\n';
    std::stringstream s(line);
    std::string cell;
    json row;
    for (const auto& col : columns) {
      std::getline(s, cell, ',');
      if (col == "seed") {
        row[col] = std::stoull(cell);
      } else if (col == "horizon" || col == "tail" || col == "windows") {
        row[col] = std::stoll(cell);
      } else if (col == "unknown_dataset") {
        row[col] = cell == "true";
      } else if (col == "mse" || col == "mae" || col == "tail_mse" || col == "tail_mae") {
        row[col] = std::stod(cell);
      } else {
        row[col] = cell;
      }
    }
    rows.push_back(row);
  }
  OpenOut(ctx.out / "results.json") << rows.dump(2) << '\n';
  return kExitOk;
}

std::string OneLine(std::string s) {
  for (auto& ch : s) {
    if (ch == '\n' || ch == '\r') ch = ' ';
  }
  return s;
}

}  // namespace

int RunCli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Language-model style time series forecasting with TimePPO fine-tuning",
               "langtime"};
  app.require_subcommand(1);
  std::string config_path;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  const std::vector<std::pair<std::string, std::string>> commands = {
      {"pretrain", "pre-train a forecaster and write checkpoint.bin and train.log"},
      {"finetune", "fine-tune finetune.checkpoint with SFT or TimePPO"},
      {"evaluate", "autoregressive metrics on the eval segment of the data"},
      {"zero-shot", "evaluate on datasets unknown to the checkpoint"},
      {"export", "collect metrics.csv files of export.runs into one table"}};
  for (const auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config_path, "INI experiment config");
    sub->add_option("--set", sets, "override, section.key=value")->take_all();
    sub->add_option("--seed", seed, "overrides run.seed");
  }
  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << OneLine(e.what()) << '\n';
    return kExitUsage;
  }
  const std::string command = app.get_subcommands().front()->get_name();

  Context ctx;
  try {
    Overrides overrides;
    for (const auto& s : sets) overrides.push_back(ParseOverride(s));
    if (seed) overrides.emplace_back("run.seed", std::to_string(*seed));
    ctx.config = LoadExperiment(config_path, overrides);
    ctx.hash = ConfigHash(ctx.config);
    ctx.out = ctx.config.out_dir;
    fs::create_directories(ctx.out);
    OpenOut(ctx.out / "config.ini") << CanonicalText(ctx.config);

    int code = kExitOk;
    if (command == "pretrain") code = Pretrain(ctx);
    if (command == "finetune") code = Finetune(ctx);
    if (command == "evaluate") code = Evaluate(ctx, false);
    if (command == "zero-shot") code = Evaluate(ctx, true);
    if (command == "export") code = Export(ctx);
    out << command << " done: " << ctx.out.string() << '\n';
    return code;
  } catch (const ConfigError& e) {
    err << "error: " << OneLine(e.what()) << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << OneLine(e.what()) << '\n';
    return kExitRuntime;
  }
}

}  // namespace langtime::cli
