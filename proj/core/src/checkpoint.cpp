#include "disp/checkpoint.hpp"

#include <json.hpp>

#include "binary_io.hpp"
#include "disp/error.hpp"

namespace disp {
namespace {

constexpr std::string_view kMagic = "DISPCKPT";

nlohmann::json encoder_to_json(const EncoderConfig& c) {
  return {{"vocab_size", c.vocab_size}, {"d", c.d},
          {"num_heads", c.num_heads},   {"num_layers", c.num_layers},
          {"max_seq_len", c.max_seq_len}, {"ffn_multiplier", c.ffn_multiplier},
          {"dropout", c.dropout},       {"seed", c.seed}};
}

EncoderConfig encoder_from_json(const nlohmann::json& j) {
  EncoderConfig c;
  c.vocab_size = j.at("vocab_size").get<std::size_t>();
  c.d = j.at("d").get<std::size_t>();
  c.num_heads = j.at("num_heads").get<std::size_t>();
  c.num_layers = j.at("num_layers").get<std::size_t>();
  c.max_seq_len = j.at("max_seq_len").get<std::size_t>();
  c.ffn_multiplier = j.at("ffn_multiplier").get<std::size_t>();
  c.dropout = j.at("dropout").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

}  // namespace

void write_checkpoint(const std::filesystem::path& path, const CheckpointHeader& header,
                      const ConstParameterRefs<float>& tensors) {
  nlohmann::json manifest = nlohmann::json::array();
  for (const auto* t : tensors) {
    manifest.push_back({{"name", t->name}, {"shape", {t->value.rows(), t->value.cols()}}});
  }
  nlohmann::json j;
  j["kind"] = header.kind;
  j["encoder"] = encoder_to_json(header.encoder);
  j["vocabulary"] = header.vocabulary;
  j["attributes"] = header.attributes;
  j["tensors"] = manifest;
  const std::string text = j.dump();

  detail::BinaryWriter w;
  w.bytes(kMagic);
  w.scalar<std::uint32_t>(kCheckpointVersion);
  w.scalar<std::uint64_t>(text.size());
  w.bytes(text);
  for (const auto* t : tensors) w.array(t->value.data(), t->value.size());
  w.write_to(path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  detail::BinaryReader r(path.string());
  if (r.bytes(kMagic.size()) != kMagic) {
    throw CorruptFileError(r.source(), 0, "bad magic, not a DISPCKPT file");
  }
  const auto version_offset = r.offset();
  const auto version = r.scalar<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw VersionMismatchError(r.source(), version_offset,
                               "unsupported checkpoint version " + std::to_string(version));
  }
  const auto len = r.scalar<std::uint64_t>();
  const auto json_offset = r.offset();
  const auto text = r.bytes(len);

  Checkpoint ck;
  std::vector<std::pair<std::string, std::pair<std::size_t, std::size_t>>> manifest;
  try {
    const auto j = nlohmann::json::parse(text);
    ck.header.kind = j.at("kind").get<std::string>();
    ck.header.encoder = encoder_from_json(j.at("encoder"));
    ck.header.vocabulary = j.at("vocabulary").get<std::vector<std::string>>();
    ck.header.attributes = j.at("attributes").get<std::map<std::string, std::int64_t>>();
    for (const auto& t : j.at("tensors")) {
      const auto shape = t.at("shape").get<std::vector<std::size_t>>();
      if (shape.size() != 2) throw CorruptFileError(r.source(), json_offset, "tensor shape must be 2-D");
      manifest.push_back({t.at("name").get<std::string>(), {shape[0], shape[1]}});
    }
  } catch (const nlohmann::json::exception& e) {
    throw CorruptFileError(r.source(), json_offset, std::string("bad header: ") + e.what());
  }
  for (auto& [name, shape] : manifest) {
    CheckpointTensor t{name, Matrix<float>(shape.first, shape.second)};
    r.array(t.value.data(), t.value.size());
    ck.tensors.push_back(std::move(t));
  }
  if (!r.at_end()) r.fail("trailing bytes after tensor data");
  return ck;
}

void assign_tensors(const Checkpoint& checkpoint, const ParameterRefs<float>& params) {
  if (checkpoint.tensors.size() != params.size()) {
    throw DataError("checkpoint holds " + std::to_string(checkpoint.tensors.size()) +
                    " tensors, model expects " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& t = checkpoint.tensors[i];
    auto* p = params[i];
    if (t.name != p->name || !t.value.same_shape(p->value)) {
      throw DataError("checkpoint tensor " + t.name + " does not match model parameter " + p->name);
    }
    p->value = t.value;
    p->zero_grad();
  }
}

}  // namespace disp
