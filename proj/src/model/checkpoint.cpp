#include "langtime/model/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "json.hpp"

namespace langtime::model {

static_assert(std::endian::native == std::endian::little,
              "checkpoint payloads are written in host order");

namespace {

using nlohmann::json;

constexpr char kMagic[8] = {'L', 'T', 'C', 'K', 'P', 'T', '0', '1'};

json ConfigToJson(const ModelConfig& c) {
  return json{{"scale", c.scale},
              {"patch_size", c.patch_size},
              {"out_patches", c.out_patches},
              {"d_te", c.d_te},
              {"d_bb", c.d_bb},
              {"n_te", c.n_te},
              {"n_bb", c.n_bb},
              {"q_heads", c.q_heads},
              {"kv_heads", c.kv_heads},
              {"ffn_mult", c.ffn_mult},
              {"lengths", c.lengths},
              {"instance_norm", c.instance_norm},
              {"flags",
               {{"guidance", c.flags.guidance},
                {"timestamp", c.flags.timestamp},
                {"dataset", c.flags.dataset},
                {"channel", c.flags.channel}}}};
}

ModelConfig ConfigFromJson(const json& j) {
  ModelConfig c;
  c.scale = j.at("scale").get<std::string>();
  c.patch_size = j.at("patch_size").get<std::int64_t>();
  c.out_patches = j.at("out_patches").get<std::int64_t>();
  c.d_te = j.at("d_te").get<std::int64_t>();
  c.d_bb = j.at("d_bb").get<std::int64_t>();
  c.n_te = j.at("n_te").get<std::int64_t>();
  c.n_bb = j.at("n_bb").get<std::int64_t>();
  c.q_heads = j.at("q_heads").get<std::int64_t>();
  c.kv_heads = j.at("kv_heads").get<std::int64_t>();
  c.ffn_mult = j.at("ffn_mult").get<std::int64_t>();
  c.lengths = j.at("lengths").get<std::vector<std::int64_t>>();
  c.instance_norm = j.at("instance_norm").get<bool>();
  const auto& f = j.at("flags");
  c.flags.guidance = f.at("guidance").get<bool>();
  c.flags.timestamp = f.at("timestamp").get<bool>();
  c.flags.dataset = f.at("dataset").get<bool>();
  c.flags.channel = f.at("channel").get<bool>();
  c.Validate();
  return c;
}

void WriteU64(std::ostream& out, std::uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

}  // namespace

void SaveCheckpoint(const std::filesystem::path& path, const Forecaster& model,
                    const CheckpointInfo& info) {
  const auto& params = model.params();
  json tensors = json::array();
  std::uint64_t offset = 0;
  for (const auto& name : params.names()) {
    const auto& t = params.at(name);
    tensors.push_back({{"name", name},
                       {"shape", t.shape()},
                       {"dtype", "f64le"},
                       {"offset", offset}});
    offset += t.size() * sizeof(double);
  }
  json manifest = {{"format_version", kCheckpointFormatVersion},
                   {"config_hash", info.config_hash},
                   {"stage", info.stage},
                   {"seed", info.seed},
                   {"model", ConfigToJson(model.config())},
                   {"vocabulary",
                    {{"datasets", model.vocab().dataset_ids()},
                     {"channels", model.vocab().channel_keys()}}},
                   {"tensors", tensors},
                   {"payload_bytes", offset}};
  const std::string text = manifest.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ModelError("cannot write checkpoint " + path.string());
  out.write(kMagic, sizeof kMagic);
  WriteU64(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& name : params.names()) {
    auto data = params.at(name).data();
    out.write(reinterpret_cast<const char*>(data.data()),
              static_cast<std::streamsize>(data.size() * sizeof(double)));
  }
  if (!out) throw ModelError("failed writing checkpoint " + path.string());
}

LoadedCheckpoint LoadCheckpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ModelError("cannot open checkpoint " + path.string());
  auto fail = [&](const std::string& what) -> ModelError {
    return ModelError("checkpoint " + path.string() + ": " + what);
  };
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof magic) != 0) throw fail("bad magic");
  std::uint64_t manifest_size = 0;
  in.read(reinterpret_cast<char*>(&manifest_size), sizeof manifest_size);
  if (!in || manifest_size > (1u << 30)) throw fail("bad manifest size");
  std::string text(manifest_size, '\0');
  in.read(text.data(), static_cast<std::streamsize>(manifest_size));
  if (!in) throw fail("truncated manifest");

  json manifest;
  try {
    manifest = json::parse(text);
  } catch (const json::exception& e) {
    throw fail(std::string("manifest is not valid JSON: ") + e.what());
  }
  try {
    if (manifest.at("format_version").get<int>() != kCheckpointFormatVersion) {
      throw fail("unsupported format version " + manifest.at("format_version").dump());
    }
    ModelConfig config = ConfigFromJson(manifest.at("model"));
    prompt::PromptVocabulary vocab(
        manifest.at("vocabulary").at("datasets").get<std::vector<std::string>>(),
        manifest.at("vocabulary").at("channels").get<std::vector<std::string>>());
    const auto payload_bytes = manifest.at("payload_bytes").get<std::uint64_t>();
    std::vector<char> payload(payload_bytes);
    in.read(payload.data(), static_cast<std::streamsize>(payload_bytes));
    if (!in) throw fail("truncated payload");

    ParamStore params;
    for (const auto& t : manifest.at("tensors")) {
      if (t.at("dtype").get<std::string>() != "f64le") throw fail("unsupported dtype");
      auto shape = t.at("shape").get<ad::Shape>();
      const auto offset = t.at("offset").get<std::uint64_t>();
      std::vector<double> values(static_cast<std::size_t>(ad::NumElements(shape)));
      const std::uint64_t bytes = values.size() * sizeof(double);
      if (offset + bytes > payload_bytes) throw fail("tensor extends past the payload");
      std::memcpy(values.data(), payload.data() + offset, bytes);
      params.Add(t.at("name").get<std::string>(), ad::Tensor(std::move(shape), std::move(values)));
    }
    return {Forecaster(std::move(config), std::move(vocab), std::move(params)),
            CheckpointInfo{manifest.at("config_hash").get<std::string>(),
                           manifest.at("stage").get<std::string>(),
                           manifest.at("seed").get<std::uint64_t>()}};
  } catch (const json::exception& e) {
    throw fail(std::string("malformed manifest: ") + e.what());
  }
}

}  // namespace langtime::model
