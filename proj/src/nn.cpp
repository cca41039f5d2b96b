#include <cstdint>
#include <cstring>
#include <fstream>

#include "zeroem/core_model.hpp"
#include "zeroem/nn/transformer.hpp"
#include "zeroem/nn/weights.hpp"
#include "zeroem/util.hpp"

namespace zeroem::nn {

std::string_view family_name(Family family) {
  switch (family) {
    case Family::kDecoderOnly: return "decoder-only";
    case Family::kEncoderOnly: return "encoder-only";
    case Family::kEncoderDecoder: return "encoder-decoder";
  }
  return "decoder-only";
}

Family parse_family(std::string_view name) {
  if (name == "decoder-only") return Family::kDecoderOnly;
  if (name == "encoder-only") return Family::kEncoderOnly;
  if (name == "encoder-decoder") return Family::kEncoderDecoder;
  throw std::invalid_argument("unsupported architecture family '" + std::string(name) + "'");
}

void TransformerConfig::validate() const {
  if (n_layer < 1 || n_embd < 1 || n_head < 1 || vocab_size < 1 || n_ctx < 1 || num_labels < 1)
    throw std::invalid_argument("transformer dimensions must be positive");
  if (n_embd % n_head != 0) throw std::invalid_argument("n_embd must be divisible by n_head");
  if (family == Family::kEncoderDecoder && n_dec_layer < 1)
    throw std::invalid_argument("encoder-decoder models need at least one decoder block");
  if (dropout < 0.0 || dropout >= 1.0) throw std::invalid_argument("dropout must lie in [0, 1)");
}

nlohmann::ordered_json TransformerConfig::to_json() const {
  return {{"family", family_name(family)}, {"n_layer", n_layer},         {"n_dec_layer", n_dec_layer},
          {"n_embd", n_embd},              {"n_head", n_head},           {"vocab_size", vocab_size},
          {"n_ctx", n_ctx},                {"dropout", dropout},         {"layer_norm_eps", layer_norm_eps},
          {"num_labels", num_labels}};
}

TransformerConfig TransformerConfig::from_json(const nlohmann::json& j) {
  TransformerConfig c;
  c.family = parse_family(j.at("family").get<std::string>());
  c.n_layer = j.at("n_layer").get<int>();
  c.n_dec_layer = j.value("n_dec_layer", 0);
  c.n_embd = j.at("n_embd").get<int>();
  c.n_head = j.at("n_head").get<int>();
  c.vocab_size = j.at("vocab_size").get<int>();
  c.n_ctx = j.at("n_ctx").get<int>();
  c.dropout = j.value("dropout", c.dropout);
  c.layer_norm_eps = j.value("layer_norm_eps", c.layer_norm_eps);
  c.num_labels = j.value("num_labels", c.num_labels);
  c.validate();
  return c;
}

std::size_t parameter_count(const TransformerConfig& c) {
  const auto d = static_cast<std::size_t>(c.n_embd);
  const std::size_t block = 12 * d * d + 13 * d;
  std::size_t n = static_cast<std::size_t>(c.vocab_size) * d + static_cast<std::size_t>(c.n_ctx) * d;
  n += static_cast<std::size_t>(c.n_layer) * block + 2 * d;
  if (c.family == Family::kEncoderOnly) n += d * d + d;
  if (c.family == Family::kEncoderDecoder) n += d + static_cast<std::size_t>(c.n_dec_layer) * block + 2 * d;
  n += static_cast<std::size_t>(c.num_labels) * d;
  return n;
}

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint32_t get_u32(const std::string& in, std::size_t& pos) {
  if (pos + 4 > in.size()) throw LoadError("weights file truncated");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  pos += 4;
  return v;
}

}  // namespace

void write_weights_file(const std::filesystem::path& path, const WeightsFile& weights) {
  std::string out(kWeightsMagic, 8);
  put_u32(out, static_cast<std::uint32_t>(weights.size()));
  for (const auto& [name, m] : weights) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put_u32(out, static_cast<std::uint32_t>(m.rows()));
    put_u32(out, static_cast<std::uint32_t>(m.cols()));
    const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = m;
    for (Eigen::Index i = 0; i < rm.size(); ++i) {
      std::uint32_t bits;
      std::memcpy(&bits, rm.data() + i, 4);
      put_u32(out, bits);
    }
  }
  write_file_atomic(path, out);
}

WeightsFile read_weights_file(const std::filesystem::path& path) {
  const std::string in = read_file(path);
  if (in.size() < 8 || in.compare(0, 8, kWeightsMagic, 8) != 0)
    throw LoadError(path.string() + ": not a weights file (bad magic)");
  std::size_t pos = 8;
  WeightsFile out;
  try {
    const std::uint32_t count = get_u32(in, pos);
    for (std::uint32_t t = 0; t < count; ++t) {
      const std::uint32_t len = get_u32(in, pos);
      if (pos + len > in.size()) throw LoadError("weights file truncated");
      std::string name = in.substr(pos, len);
      pos += len;
      const std::uint32_t rows = get_u32(in, pos);
      const std::uint32_t cols = get_u32(in, pos);
      const std::size_t n = static_cast<std::size_t>(rows) * cols;
      if (pos + 4 * n > in.size()) throw LoadError("weights file truncated");
      Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm(rows, cols);
      std::memcpy(rm.data(), in.data() + pos, 4 * n);
      pos += 4 * n;
      out[std::move(name)] = rm;
    }
  } catch (const LoadError& e) {
    throw LoadError(path.string() + ": " + e.what());
  }
  return out;
}

}  // namespace zeroem::nn
