#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "langtime/cli/commands.hpp"
#include "langtime/cli/experiment.hpp"
#include "langtime/cli/pipeline.hpp"

using namespace langtime;
using namespace langtime::cli;
namespace fs = std::filesystem;

namespace {

std::string Slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result Run(std::vector<std::string> args) {
  std::ostringstream out, err;
  int code = RunCli(args, out, err);
  return {code, out.str(), err.str()};
}

// A model and corpus small enough for a unit test.
std::vector<std::string> Tiny(const fs::path& dir, const std::string& name) {
  return {"--set", "run.out_dir=" + (dir / name).string(), "--set", "synthetic.length=600",
          "--set", "model.d_te=8", "--set", "model.d_bb=8", "--set", "model.n_te=1",
          "--set", "model.n_bb=1", "--set", "model.ffn_mult=2", "--set", "model.lengths=16,32",
          "--set", "pretrain.steps=6", "--set", "pretrain.batch_size=4",
          "--set", "finetune.epochs=2", "--set", "finetune.batch_size=4",
          "--set", "finetune.horizon=32", "--set", "eval.stride=8",
          "--set", "zeroshot_synthetic.length=600"};
}

std::vector<std::string> Cmd(std::string command, std::vector<std::string> base,
                             std::vector<std::string> extra = {}) {
  std::vector<std::string> args = {std::move(command)};
  args.insert(args.end(), base.begin(), base.end());
  args.insert(args.end(), extra.begin(), extra.end());
  return args;
}

}  // namespace

TEST_CASE("experiment config") {
  CHECK(ParseOverride("pretrain.lr=0.5") == std::make_pair(std::string("pretrain.lr"), std::string("0.5")));
  CHECK_THROWS_AS(ParseOverride("lr=0.5"), ConfigError);
  CHECK_THROWS_AS(ParseOverride("pretrain.lr"), ConfigError);

  auto c = LoadExperiment("", {});
  CHECK(c.model.lengths == std::vector<std::int64_t>{16, 32, 48, 64});
  CHECK(c.pretrain.lengths == c.model.lengths);
  CHECK(c.eval.horizons == std::vector<std::int64_t>{16, 64});
  CHECK(c.eval.tails == std::vector<std::int64_t>{8, 16});

  CHECK_THROWS_WITH_AS(LoadExperiment("", {{"pretrain.bogus", "1"}}), doctest::Contains("pretrain.bogus"), ConfigError);
  CHECK_THROWS_AS(LoadExperiment("", {{"pretrain.lr", "fast"}}), ConfigError);
  CHECK_THROWS_AS(LoadExperiment("", {{"finetune.algo", "dpo"}}), ConfigError);
  CHECK_THROWS_AS(LoadExperiment("", {{"model.lengths", "16,30"}}), ConfigError);
  CHECK_THROWS_AS(LoadExperiment("", {{"finetune.horizon", "20"}}), ConfigError);

  auto paper = LoadExperiment("", {{"model.scale", "paper"}});
  CHECK(paper.model.patch_size == 24);
  CHECK(paper.pretrain.lengths == std::vector<std::int64_t>{96, 288, 480, 672});

  // The canonical text parses back to itself.
  auto tweaked = LoadExperiment("", {{"pretrain.lr", "0.003"}, {"eval.tails", "4,8"}, {"run.seed", "9"}});
  const auto dir = fs::temp_directory_path() / "langtime_cfg_test";
  fs::create_directories(dir);
  std::ofstream(dir / "c.ini") << CanonicalText(tweaked);
  auto again = LoadExperiment(dir / "c.ini", {});
  CHECK(CanonicalText(again) == CanonicalText(tweaked));
  CHECK(again.seed == 9);
  CHECK(again.finetune.seed == 9);

  auto moved = LoadExperiment(dir / "c.ini", {{"run.out_dir", "elsewhere"}});
  CHECK(ConfigHash(moved) == ConfigHash(tweaked));
  CHECK(ConfigHash(LoadExperiment(dir / "c.ini", {{"run.seed", "10"}})) != ConfigHash(tweaked));
  fs::remove_all(dir);
}

TEST_CASE("metrics") {
  std::vector<double> y(2 * 720);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = std::sin(0.01 * static_cast<double>(i));
  auto zero = ComputeMetrics(y, y, 720, 48);
  CHECK(zero.mse == 0.0);
  CHECK(zero.tail_mae == 0.0);

  auto shifted = y;
  for (auto& v : shifted) v += 1.0;
  auto one = ComputeMetrics(shifted, y, 720, 48);
  CHECK(one.mse == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(one.mae == doctest::Approx(1.0).epsilon(1e-12));

  // Tail over indices 672..719 of each row, by slicing.
  auto noisy = y;
  for (std::size_t i = 0; i < noisy.size(); ++i) noisy[i] += 0.001 * static_cast<double>(i % 720);
  auto m = ComputeMetrics(noisy, y, 720, 48);
  double se = 0, ae = 0;
  for (std::size_t row = 0; row < 2; ++row) {
    for (std::size_t j = 672; j < 720; ++j) {
      const double d = noisy[row * 720 + j] - y[row * 720 + j];
      se += d * d;
      ae += std::abs(d);
    }
  }
  CHECK(m.tail_mse == doctest::Approx(se / 96).epsilon(1e-12));
  CHECK(m.tail_mae == doctest::Approx(ae / 96).epsilon(1e-12));
  CHECK(m.tail_mse > m.mse);

  CHECK_THROWS_AS(ComputeMetrics(std::vector<double>(10), std::vector<double>(9), 10, 2), std::invalid_argument);
  CHECK_THROWS_AS(ComputeMetrics(std::vector<double>(10), std::vector<double>(10), 4, 2), std::invalid_argument);
  CHECK_THROWS_AS(ComputeMetrics(std::vector<double>(10), std::vector<double>(10), 10, 11), std::invalid_argument);
}

TEST_CASE("command line") {
  const auto dir = fs::temp_directory_path() / "langtime_cli_test";
  fs::remove_all(dir);

  SUBCASE("usage and runtime errors") {
    auto r = Run({"frobnicate"});
    CHECK(r.code == kExitUsage);
    CHECK(r.err.rfind("error: ", 0) == 0);
    CHECK(std::count(r.err.begin(), r.err.end(), '\n') == 1);
    CHECK(Run({}).code == kExitUsage);
    CHECK(Run(Cmd("pretrain", Tiny(dir, "x"), {"--set", "model.bogus=1"})).code == kExitUsage);
    CHECK(Run(Cmd("evaluate", Tiny(dir, "x"), {"--set", "eval.checkpoint=" + (dir / "none.bin").string()})).code == kExitUsage);
    CHECK(Run(Cmd("pretrain", Tiny(dir, "x"), {"--config", (dir / "missing.ini").string()})).code == kExitUsage);
    auto csv = Run(Cmd("pretrain", Tiny(dir, "x"), {"--set", "data.source=csv", "--set", "data.paths=" + (dir / "absent.csv").string()}));
    CHECK(csv.code == kExitRuntime);
    CHECK(std::count(csv.err.begin(), csv.err.end(), '\n') == 1);
    CHECK(Run(Cmd("export", Tiny(dir, "x"), {"--set", "export.runs=" + (dir / "nothing").string()})).code == kExitRuntime);
  }

  SUBCASE("pipeline") {
    auto base = Tiny(dir, "pre");
    REQUIRE(Run(Cmd("pretrain", base)).code == kExitOk);
    const auto ckpt = (dir / "pre" / "checkpoint.bin").string();
    const auto log = Slurp(dir / "pre" / "train.log");
    CHECK(log.rfind("step,lr,alpha,L,", 0) == 0);

    // Same seed, same bytes.
    REQUIRE(Run(Cmd("pretrain", Tiny(dir, "pre2"))).code == kExitOk);
    CHECK(Slurp(dir / "pre2" / "checkpoint.bin") == Slurp(ckpt));
    CHECK(Slurp(dir / "pre2" / "train.log") == log);
    REQUIRE(Run(Cmd("pretrain", Tiny(dir, "pre3"), {"--seed", "2"})).code == kExitOk);
    CHECK(Slurp(dir / "pre3" / "checkpoint.bin") != Slurp(ckpt));

    const std::vector<std::string> from = {"--set", "finetune.checkpoint=" + ckpt};
    auto sft = from, ppo = from;
    sft.insert(sft.end(), {"--set", "finetune.algo=sft"});
    ppo.insert(ppo.end(), {"--set", "finetune.algo=timeppo"});
    REQUIRE(Run(Cmd("finetune", Tiny(dir, "sft"), sft)).code == kExitOk);
    REQUIRE(Run(Cmd("finetune", Tiny(dir, "ppo"), ppo)).code == kExitOk);
    CHECK(Slurp(dir / "sft" / "checkpoint.bin") != Slurp(dir / "ppo" / "checkpoint.bin"));
    auto windows = [](const std::string& text) {
      std::istringstream in(text);
      std::string line, out;
      while (std::getline(in, line)) out += line.substr(line.rfind(',') + 1) + "\n";
      return out;
    };
    CHECK(windows(Slurp(dir / "sft" / "finetune.log")) == windows(Slurp(dir / "ppo" / "finetune.log")));

    const auto before = Slurp(dir / "ppo" / "checkpoint.bin");
    const std::vector<std::string> eval = {"--set", "eval.checkpoint=" + (dir / "ppo" / "checkpoint.bin").string()};
    REQUIRE(Run(Cmd("evaluate", Tiny(dir, "ev"), eval)).code == kExitOk);
    CHECK(Slurp(dir / "ppo" / "checkpoint.bin") == before);
    const auto metrics = Slurp(dir / "ev" / "metrics.csv");
    CHECK(metrics.rfind(MetricsHeader(), 0) == 0);
    CHECK(metrics.find("evaluate,synthetic,64,16,timeppo,1,") != std::string::npos);
    REQUIRE(Run(Cmd("evaluate", Tiny(dir, "ev2"), eval)).code == kExitOk);
    CHECK(Slurp(dir / "ev2" / "metrics.csv") == metrics);

    REQUIRE(Run(Cmd("zero-shot", Tiny(dir, "zs"), eval)).code == kExitOk);
    CHECK(Slurp(dir / "zs" / "metrics.csv").find("zero-shot,synthetic_unseen,16,8,timeppo,1,") != std::string::npos);
    auto known = Run(Cmd("zero-shot", Tiny(dir, "zs2"), {"--set", eval[1], "--set", "zeroshot_synthetic.dataset_id=synthetic"}));
    CHECK(known.code == kExitUsage);

    const std::vector<std::string> runs = {"--set", "export.runs=" + (dir / "ev").string() + "," + (dir / "zs").string()};
    REQUIRE(Run(Cmd("export", Tiny(dir, "ex"), runs)).code == kExitOk);
    const auto table = Slurp(dir / "ex" / "results.csv");
    CHECK(std::count(table.begin(), table.end(), '\n') == 5);
    REQUIRE(Run(Cmd("export", Tiny(dir, "ex"), runs)).code == kExitOk);
    CHECK(Slurp(dir / "ex" / "results.csv") == table);
    CHECK(Slurp(dir / "ex" / "results.json").find("\"config_hash\"") != std::string::npos);
  }
  fs::remove_all(dir);
}
