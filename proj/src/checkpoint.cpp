#include "ptune/checkpoint.hpp"

#include <bit>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace ptune {
namespace {

using nlohmann::json;

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_f64(std::string& out, double x) { put_u64(out, std::bit_cast<std::uint64_t>(x)); }

std::uint64_t get_le(std::string_view bytes, std::size_t& pos, int width) {
  if (pos + static_cast<std::size_t>(width) > bytes.size()) {
    throw std::runtime_error("truncated checkpoint");
  }
  std::uint64_t v = 0;
  for (int i = 0; i < width; ++i) {
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[pos + i])) << (8 * i);
  }
  pos += static_cast<std::size_t>(width);
  return v;
}

json metadata(const Model& model) {
  const ModelConfig& c = model.config();
  json groups = json::array();
  for (const LayerGroup& g : model.groups()) {
    json tensors = json::array();
    for (std::size_t idx : g.parameters) {
      const NamedParameter& p = model.parameters()[idx];
      tensors.push_back({{"name", p.name}, {"shape", p.tensor.shape()}});
    }
    groups.push_back({{"name", g.name},
                      {"parameter_count", g.parameter_count},
                      {"tensors", tensors}});
  }
  return {{"config",
           {{"vocab_size", c.vocab_size},
            {"d_model", c.d_model},
            {"n_heads", c.n_heads},
            {"n_blocks", c.n_blocks},
            {"ffn_multiplier", c.ffn_multiplier},
            {"max_seq_len", c.max_seq_len},
            {"seed", c.seed}}},
          {"groups", groups}};
}

}  // namespace

std::string encode_checkpoint(const Model& model) {
  std::string out(kCheckpointMagic);
  put_u32(out, kCheckpointVersion);
  const std::string meta = metadata(model).dump();
  put_u64(out, meta.size());
  out += meta;
  for (const LayerGroup& g : model.groups()) {
    for (std::size_t idx : g.parameters) {
      for (double x : model.parameters()[idx].tensor.data()) put_f64(out, x);
    }
  }
  return out;
}

Model decode_checkpoint(std::string_view bytes) {
  if (bytes.substr(0, kCheckpointMagic.size()) != kCheckpointMagic) {
    throw std::runtime_error("not a PTCK checkpoint (bad magic)");
  }
  std::size_t pos = kCheckpointMagic.size();
  const auto version = static_cast<std::uint32_t>(get_le(bytes, pos, 4));
  if (version != kCheckpointVersion) {
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
  }
  const std::uint64_t meta_len = get_le(bytes, pos, 8);
  if (meta_len > bytes.size() - pos) throw std::runtime_error("truncated checkpoint");
  const json meta = json::parse(bytes.substr(pos, meta_len));
  pos += meta_len;

  const json& c = meta.at("config");
  ModelConfig config;
  config.vocab_size = c.at("vocab_size").get<std::size_t>();
  config.d_model = c.at("d_model").get<std::size_t>();
  config.n_heads = c.at("n_heads").get<std::size_t>();
  config.n_blocks = c.at("n_blocks").get<std::size_t>();
  config.ffn_multiplier = c.at("ffn_multiplier").get<std::size_t>();
  config.max_seq_len = c.at("max_seq_len").get<std::size_t>();
  config.seed = c.at("seed").get<std::uint64_t>();
  Model model(config);
  if (metadata(model) != meta) {
    throw std::runtime_error("checkpoint group layout does not match its config");
  }
  for (const LayerGroup& g : model.groups()) {
    for (std::size_t idx : g.parameters) {
      for (double& x : model.parameters()[idx].tensor.data()) {
        x = std::bit_cast<double>(get_le(bytes, pos, 8));
      }
    }
  }
  if (pos != bytes.size()) throw std::runtime_error("trailing bytes after checkpoint");
  return model;
}

void save_checkpoint(const Model& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  const std::string bytes = encode_checkpoint(model);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

Model load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read checkpoint " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return decode_checkpoint(ss.str());
}

std::array<std::string, kGroupCount> group_bytes(const Model& model) {
  std::array<std::string, kGroupCount> out;
  for (std::size_t g = 0; g < kGroupCount; ++g) {
    for (std::size_t idx : model.groups()[g].parameters) {
      for (double x : model.parameters()[idx].tensor.data()) put_f64(out[g], x);
    }
  }
  return out;
}

}  // namespace ptune
