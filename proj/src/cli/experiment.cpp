#include "langtime/cli/experiment.hpp"

#include <charconv>
#include <functional>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "langtime/util/format.hpp"

namespace langtime::cli {

namespace {

std::string Trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t") - b + 1);
}

std::vector<std::string> SplitList(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = Trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <typename T>
T ParseNumber(const std::string& key, const std::string& text) {
  T v{};
  const auto t = Trim(text);
  auto [end, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || end != t.data() + t.size() || t.empty()) {
    throw ConfigError(key + ": cannot parse '" + text + "' as a number");
  }
  return v;
}

bool ParseBool(const std::string& key, const std::string& text) {
  const auto t = Trim(text);
  if (t == "true" || t == "1" || t == "yes") return true;
  if (t == "false" || t == "0" || t == "no") return false;
  throw ConfigError(key + ": expected true or false, got '" + text + "'");
}

std::string Join(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) out += (i ? "," : "") + items[i];
  return out;
}

template <typename T>
std::string JoinNumbers(const std::vector<T>& items) {
  std::vector<std::string> s;
  for (auto v : items) {
    if constexpr (std::is_floating_point_v<T>) {
      s.push_back(util::FormatDouble(v));
    } else {
      s.push_back(std::to_string(v));
    }
  }
  return Join(s);
}

struct Binding {
  std::string section;
  std::string key;
  std::function<std::string()> get;
  std::function<void(const std::string&)> set;
  std::string name() const { return section + "." + key; }
};

class Binder {
 public:
  void Int(std::string s, std::string k, std::int64_t& v) {
    Add(s, k, [&v] { return std::to_string(v); },
        [&v, n = s + "." + k](const std::string& t) { v = ParseNumber<std::int64_t>(n, t); });
  }
  void Seed(std::string s, std::string k, std::uint64_t& v) {
    Add(s, k, [&v] { return std::to_string(v); },
        [&v, n = s + "." + k](const std::string& t) { v = ParseNumber<std::uint64_t>(n, t); });
  }
  void Real(std::string s, std::string k, double& v) {
    Add(s, k, [&v] { return util::FormatDouble(v); },
        [&v, n = s + "." + k](const std::string& t) { v = ParseNumber<double>(n, t); });
  }
  void Bool(std::string s, std::string k, bool& v) {
    Add(s, k, [&v] { return std::string(v ? "true" : "false"); },
        [&v, n = s + "." + k](const std::string& t) { v = ParseBool(n, t); });
  }
  void Text(std::string s, std::string k, std::string& v) {
    Add(s, k, [&v] { return v; }, [&v](const std::string& t) { v = Trim(t); });
  }
  void Ints(std::string s, std::string k, std::vector<std::int64_t>& v) {
    Add(s, k, [&v] { return JoinNumbers(v); },
        [&v, n = s + "." + k](const std::string& t) {
          v.clear();
          for (const auto& item : SplitList(t)) v.push_back(ParseNumber<std::int64_t>(n, item));
        });
  }
  void Reals(std::string s, std::string k, std::vector<double>& v) {
    Add(s, k, [&v] { return JoinNumbers(v); },
        [&v, n = s + "." + k](const std::string& t) {
          v.clear();
          for (const auto& item : SplitList(t)) v.push_back(ParseNumber<double>(n, item));
        });
  }
  void Texts(std::string s, std::string k, std::vector<std::string>& v) {
    Add(s, k, [&v] { return Join(v); }, [&v](const std::string& t) { v = SplitList(t); });
  }
  void Add(std::string s, std::string k, std::function<std::string()> get,
           std::function<void(const std::string&)> set) {
    bindings_.push_back({std::move(s), std::move(k), std::move(get), std::move(set)});
  }
  const std::vector<Binding>& bindings() const { return bindings_; }

 private:
  std::vector<Binding> bindings_;
};

void BindSource(Binder& b, const std::string& sec, const std::string& syn_sec, DataSource& d) {
  b.Text(sec, "source", d.source);
  b.Texts(sec, "paths", d.paths);
  b.Add(sec, "missing",
        [&d] { return std::string(d.missing == data::MissingPolicy::kReject ? "reject" : "ffill"); },
        [&d](const std::string& t) {
          try {
            d.missing = data::ParseMissingPolicy(Trim(t));
          } catch (const std::exception& e) {
            throw ConfigError(e.what());
          }
        });
  auto& s = d.synthetic;
  b.Int(syn_sec, "channels", s.channels);
  b.Int(syn_sec, "length", s.length);
  b.Seed(syn_sec, "seed", s.seed);
  b.Reals(syn_sec, "periods", s.periods);
  b.Reals(syn_sec, "amplitudes", s.amplitudes);
  b.Real(syn_sec, "trend_slope", s.trend_slope);
  b.Real(syn_sec, "ar_coeff", s.ar_coeff);
  b.Real(syn_sec, "noise_sigma", s.noise_sigma);
  b.Text(syn_sec, "dataset_id", s.dataset_id);
  b.Text(syn_sec, "start", s.start);
  b.Int(syn_sec, "step_seconds", s.step_seconds);
}

// model.scale is handled before the bindings, since it resets the model.
Binder Bind(ExperimentConfig& c) {
  Binder b;
  b.Seed("run", "seed", c.seed);
  b.Text("run", "out_dir", c.out_dir);

  b.Text("data", "split", c.split);
  BindSource(b, "data", "synthetic", c.data);
  BindSource(b, "zeroshot", "zeroshot_synthetic", c.zeroshot);

  auto& m = c.model;
  b.Int("model", "patch_size", m.patch_size);
  b.Int("model", "out_patches", m.out_patches);
  b.Int("model", "d_te", m.d_te);
  b.Int("model", "d_bb", m.d_bb);
  b.Int("model", "n_te", m.n_te);
  b.Int("model", "n_bb", m.n_bb);
  b.Int("model", "q_heads", m.q_heads);
  b.Int("model", "kv_heads", m.kv_heads);
  b.Int("model", "ffn_mult", m.ffn_mult);
  b.Ints("model", "lengths", m.lengths);
  b.Bool("model", "instance_norm", m.instance_norm);
  b.Bool("model", "guidance", m.flags.guidance);
  b.Bool("model", "timestamp", m.flags.timestamp);
  b.Bool("model", "dataset", m.flags.dataset);
  b.Bool("model", "channel", m.flags.channel);

  auto& p = c.pretrain;
  b.Int("pretrain", "steps", p.total_steps);
  b.Int("pretrain", "batch_size", p.batch_size);
  b.Real("pretrain", "lr", p.lr);
  b.Real("pretrain", "warmup_fraction", p.warmup_fraction);
  b.Real("pretrain", "alpha_warmup", p.alpha_warmup);
  b.Real("pretrain", "alpha_decay", p.alpha_decay);
  b.Real("pretrain", "huber_delta", p.huber_delta);
  b.Real("pretrain", "mask_rate", p.mask_rate);
  b.Ints("pretrain", "lengths", p.lengths);
  b.Add("pretrain", "curriculum",
        [&p] {
          return std::string(p.curriculum == train::TrainConfig::Curriculum::kPhased ? "phased"
                                                                                     : "cumulative");
        },
        [&p](const std::string& t) {
          const auto v = Trim(t);
          if (v == "phased") {
            p.curriculum = train::TrainConfig::Curriculum::kPhased;
          } else if (v == "cumulative") {
            p.curriculum = train::TrainConfig::Curriculum::kCumulative;
          } else {
            throw ConfigError("pretrain.curriculum: expected phased or cumulative, got '" + t + "'");
          }
        });
  b.Real("pretrain", "beta1", p.adamw.beta1);
  b.Real("pretrain", "beta2", p.adamw.beta2);
  b.Real("pretrain", "eps", p.adamw.eps);
  b.Real("pretrain", "weight_decay", p.adamw.weight_decay);
  b.Int("pretrain", "stride", c.pretrain_stride);
  b.Int("pretrain", "val_stride", c.val_stride);

  auto& f = c.finetune;
  b.Add("finetune", "algo", [&f] { return ppo::AlgorithmName(f.algorithm); },
        [&f](const std::string& t) {
          try {
            f.algorithm = ppo::ParseAlgorithm(Trim(t));
          } catch (const std::exception& e) {
            throw ConfigError(e.what());
          }
        });
  b.Text("finetune", "checkpoint", c.finetune_checkpoint);
  b.Int("finetune", "epochs", f.epochs);
  b.Int("finetune", "batch_size", f.batch_size);
  b.Int("finetune", "input_length", f.input_length);
  b.Int("finetune", "horizon", f.horizon);
  b.Int("finetune", "stride", f.stride);
  b.Real("finetune", "lr", f.lr);
  b.Real("finetune", "huber_delta", f.huber_delta);
  b.Int("finetune", "inner_epochs", f.ppo.inner_epochs);
  b.Real("finetune", "gamma", f.ppo.gamma);
  b.Real("finetune", "lambda", f.ppo.lambda);
  b.Real("finetune", "xi", f.ppo.xi);
  b.Real("finetune", "clip", f.ppo.clip_eps);
  b.Real("finetune", "eta", f.ppo.eta);
  b.Real("finetune", "sigma_floor", f.ppo.sigma_floor);
  b.Bool("finetune", "normalize_advantages", f.ppo.normalize_advantages);
  b.Real("finetune", "tau", f.reward.tau);
  b.Real("finetune", "w_mse", f.reward.weights[0]);
  b.Real("finetune", "w_mae", f.reward.weights[1]);
  b.Real("finetune", "w_kl", f.reward.weights[2]);
  b.Real("finetune", "beta", f.reward.beta);
  b.Real("finetune", "eps_num", f.reward.eps_num);
  b.Real("finetune", "reward_sigma_floor", f.reward.sigma_floor);
  b.Real("finetune", "weight_decay", f.adamw.weight_decay);

  auto& e = c.eval;
  b.Text("eval", "checkpoint", e.checkpoint);
  b.Ints("eval", "horizons", e.horizons);
  b.Ints("eval", "tails", e.tails);
  b.Int("eval", "input_length", e.input_length);
  b.Int("eval", "stride", e.stride);
  b.Text("eval", "segment", e.segment);
  b.Bool("eval", "allow_truncation", e.allow_truncation);

  b.Texts("export", "runs", c.export_runs);
  return b;
}

// Desk experiment defaults.
ExperimentConfig Defaults() {
  ExperimentConfig c;
  c.model = model::ModelConfig::Desk();
  c.pretrain.total_steps = 2000;
  c.pretrain.batch_size = 32;
  c.pretrain.lr = 2e-3;
  c.pretrain.curriculum = train::TrainConfig::Curriculum::kCumulative;
  c.pretrain.lengths = c.model.lengths;
  c.zeroshot.synthetic.dataset_id = "synthetic_unseen";
  c.zeroshot.synthetic.seed = 11;
  c.zeroshot.synthetic.channels = 2;
  c.zeroshot.synthetic.length = 2000;
  c.zeroshot.synthetic.periods = {12.0, 84.0};
  c.zeroshot.synthetic.amplitudes = {1.0, 0.7};
  return c;
}

void ValidateSource(const DataSource& d, const std::string& sec) {
  if (d.source == "csv") {
    if (d.paths.empty()) throw ConfigError(sec + ".paths: csv source needs at least one path");
  } else if (d.source != "synthetic") {
    throw ConfigError(sec + ".source: expected synthetic or csv, got '" + d.source + "'");
  }
}

void Validate(ExperimentConfig& c) {
  ValidateSource(c.data, "data");
  ValidateSource(c.zeroshot, "zeroshot");
  if (c.split != "default" && c.split != "ett") {
    throw ConfigError("data.split: expected default or ett, got '" + c.split + "'");
  }
  if (c.eval.segment != "test" && c.eval.segment != "val") {
    throw ConfigError("eval.segment: expected test or val, got '" + c.eval.segment + "'");
  }
  if (c.eval.horizons.empty() || c.eval.horizons.size() != c.eval.tails.size()) {
    throw ConfigError("eval.horizons and eval.tails need the same, non-zero, number of entries");
  }
  for (std::size_t i = 0; i < c.eval.horizons.size(); ++i) {
    if (c.eval.horizons[i] <= 0 || c.eval.tails[i] <= 0 || c.eval.tails[i] > c.eval.horizons[i]) {
      throw ConfigError("eval tail " + std::to_string(c.eval.tails[i]) +
                        " must lie in [1, horizon " + std::to_string(c.eval.horizons[i]) + "]");
    }
  }
  if (c.pretrain_stride < 1 || c.val_stride < 1 || c.eval.stride < 1) {
    throw ConfigError("strides must be positive");
  }
  c.finetune.seed = c.seed;
  c.pretrain.seed = c.seed;
  try {
    c.model.Validate();
    c.pretrain.Validate(c.model.patch_size);
    for (auto len : c.pretrain.lengths) {
      if (!c.model.Supports(len)) {
        throw ConfigError("pretrain.lengths: " + std::to_string(len) +
                          " has no model head; supported " + c.model.LengthsString());
      }
    }
    c.finetune.Validate(c.model);
    if (!c.model.Supports(c.eval.input_length)) {
      throw ConfigError("eval.input_length " + std::to_string(c.eval.input_length) +
                        " has no model head; supported " + c.model.LengthsString());
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
}

}  // namespace

data::SplitSpec ExperimentConfig::SplitSpec() const {
  return split == "ett" ? data::SplitSpec::EttStyle() : data::SplitSpec{};
}

std::pair<std::string, std::string> ParseOverride(const std::string& text) {
  const auto eq = text.find('=');
  const auto dot = text.find('.');
  if (eq == std::string::npos || dot == std::string::npos || dot > eq || dot == 0 ||
      dot + 1 == eq) {
    throw ConfigError("override '" + text + "' is not of the form section.key=value");
  }
  return {Trim(text.substr(0, eq)), text.substr(eq + 1)};
}

ExperimentConfig ParseExperiment(
    const std::map<std::string, std::map<std::string, std::string>>& ini) {
  ExperimentConfig c = Defaults();
  auto find = [&ini](const std::string& sec, const std::string& key) -> const std::string* {
    auto s = ini.find(sec);
    if (s == ini.end()) return nullptr;
    auto k = s->second.find(key);
    return k == s->second.end() ? nullptr : &k->second;
  };
  if (const auto* scale = find("model", "scale")) {
    const auto v = Trim(*scale);
    if (v == "paper") {
      c.model = model::ModelConfig::Paper();
      // Lookback 96, four output blocks per fine-tune trajectory, and the
      // long horizons with their last-step tails; 720 needs a cut last step.
      c.finetune.input_length = 96;
      c.finetune.horizon = 4 * c.model.output_length();
      c.eval.input_length = 96;
      c.eval.horizons = {336, 720};
      c.eval.tails = {96, 48};
      c.eval.allow_truncation = true;
    } else if (v != "desk") {
      throw ConfigError("model.scale: expected desk or paper, got '" + *scale + "'");
    }
    c.pretrain.lengths = c.model.lengths;
  }

  auto binder = Bind(c);
  std::set<std::string> known = {"model.scale"};
  for (const auto& b : binder.bindings()) known.insert(b.name());
  for (const auto& [sec, keys] : ini) {
    for (const auto& [key, value] : keys) {
      if (!known.count(sec + "." + key)) throw ConfigError("unknown setting " + sec + "." + key);
    }
  }
  for (const auto& b : binder.bindings()) {
    if (const auto* v = find(b.section, b.key)) b.set(*v);
  }
  if (!find("pretrain", "lengths")) c.pretrain.lengths = c.model.lengths;
  Validate(c);
  return c;
}

ExperimentConfig LoadExperiment(const std::filesystem::path& path, const Overrides& overrides) {
  std::map<std::string, std::map<std::string, std::string>> ini;
  if (!path.empty()) {
    namespace pt = boost::property_tree;
    pt::ptree tree;
    try {
      pt::read_ini(path.string(), tree);
    } catch (const pt::ini_parser_error& e) {
      throw ConfigError("cannot read config " + path.string() + ": " + e.message());
    }
    for (const auto& [sec, body] : tree) {
      if (!body.data().empty()) throw ConfigError("config " + path.string() + ": key '" + sec + "' outside a section");
      for (const auto& [key, value] : body) ini[sec][key] = value.data();
    }
  }
  for (const auto& [name, value] : overrides) {
    const auto dot = name.find('.');
    ini[name.substr(0, dot)][name.substr(dot + 1)] = value;
  }
  return ParseExperiment(ini);
}

std::string CanonicalText(const ExperimentConfig& c) {
  auto copy = c;
  auto binder = Bind(copy);
  std::string out;
  std::string section;
  auto open = [&](const std::string& s) {
    if (s == section) return;
    out += (out.empty() ? "[" : "\n[") + s + "]\n";
    section = s;
  };
  for (const auto& b : binder.bindings()) {
    if (b.section == "model" && section != "model") {
      open("model");
      out += "scale=" + c.model.scale + "\n";
    }
    open(b.section);
    out += b.key + "=" + b.get() + "\n";
  }
  return out;
}

std::string ConfigHash(const ExperimentConfig& c) {
  auto copy = c;
  copy.out_dir.clear();
  copy.export_runs.clear();
  return util::Fnv1aHex(CanonicalText(copy));
}

}  // namespace langtime::cli
