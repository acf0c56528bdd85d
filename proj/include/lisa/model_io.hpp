// Copyright (C) 2026 The LISA Authors
// SPDX-License-Identifier: Apache-2.0

/// \file
/// Model files.
///
/// Config file: UTF-8 JSON object with the ModelConfig field names.
///
/// Weights file layout (all integers little-endian):
///
///     offset 0   8 bytes   magic "LISAWTS1"
///     offset 8   u32       n = byte length of the JSON config block
///     offset 12  n bytes   JSON config (same schema as the config file)
///     ...        f32 * N   payload, tensors in WeightBundle serialization order
///     ...        u32       CRC-32 (zlib polynomial) of the payload bytes
///
/// Tensor order: token_embedding; per layer attn_norm.gain, attn_norm.bias,
/// wq, wk, wv, wo, ffn_norm.gain, ffn_norm.bias, w_up, w_down; then
/// final_norm.gain, final_norm.bias, unembedding. Matrices are row-major.

#pragma once

#include <zlib.h>

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lisa/engine.hpp"
#include "lisa/errors.hpp"

namespace lisa {

static_assert(std::endian::native == std::endian::little, "model files assume a little-endian host");

inline constexpr char kWeightsMagic[8] = {'L', 'I', 'S', 'A', 'W', 'T', 'S', '1'};

inline nlohmann::ordered_json config_to_json(const ModelConfig& c) {
  nlohmann::ordered_json j;
  j["num_layers"] = c.num_layers;
  j["hidden_dim"] = c.hidden_dim;
  j["num_heads"] = c.num_heads;
  j["head_dim"] = c.head_dim();
  j["vocab_size"] = c.vocab_size;
  j["max_seq_len"] = c.max_seq_len;
  j["visual_prefix_len"] = c.visual_prefix_len;
  j["ffn_dim"] = c.ffn_dim;
  j["norm_eps"] = c.norm_eps;
  return j;
}

/// Parses and validates a config. Any problem with the dimensions is a
/// dimension_mismatch; structural JSON problems are malformed_header.
inline ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  try {
    c.num_layers = j.at("num_layers").get<std::size_t>();
    c.hidden_dim = j.at("hidden_dim").get<std::size_t>();
    c.num_heads = j.at("num_heads").get<std::size_t>();
    c.vocab_size = j.at("vocab_size").get<std::size_t>();
    c.max_seq_len = j.at("max_seq_len").get<std::size_t>();
    c.visual_prefix_len = j.value("visual_prefix_len", std::size_t{0});
    c.ffn_dim = j.value("ffn_dim", 4 * c.hidden_dim);
    c.norm_eps = j.value("norm_eps", 1e-6);
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(LoadErrorKind::malformed_header, std::string("config: ") + e.what());
  }
  try {
    c.validate();
  } catch (const ValidationError& e) {
    throw LoadError(LoadErrorKind::dimension_mismatch, e.what());
  }
  if (j.contains("head_dim") && j["head_dim"].get<std::size_t>() != c.head_dim())
    throw LoadError(LoadErrorKind::dimension_mismatch, "head_dim does not equal hidden_dim / num_heads");
  return c;
}

inline std::uint32_t payload_crc(const std::vector<unsigned char>& bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; payloads stay far below 4 GiB at this scale.
  crc = crc32(crc, bytes.data(), static_cast<uInt>(bytes.size()));
  return static_cast<std::uint32_t>(crc);
}

namespace detail {

inline void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xFFu));
}

inline std::uint32_t get_u32(const unsigned char* p) {
  return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) | (std::uint32_t(p[2]) << 16) | (std::uint32_t(p[3]) << 24);
}

inline std::size_t tensor_floats(const ModelConfig& c) {
  const std::size_t d = c.hidden_dim;
  const std::size_t per_layer = 4 * d + 4 * d * d + 2 * d * c.ffn_dim;
  return c.vocab_size * d + c.num_layers * per_layer + 2 * d + d * c.vocab_size;
}

}  // namespace detail

/// Serializes the weights file into memory.
inline std::vector<unsigned char> encode_weights(const Model& m) {
  const std::string header = config_to_json(m.config).dump();
  std::vector<unsigned char> payload;
  payload.reserve(detail::tensor_floats(m.config) * 4);
  m.weights.for_each_tensor([&](std::span<const float> t) {
    const auto* p = reinterpret_cast<const unsigned char*>(t.data());
    payload.insert(payload.end(), p, p + t.size_bytes());
  });
  std::vector<unsigned char> out(std::begin(kWeightsMagic), std::end(kWeightsMagic));
  detail::put_u32(out, static_cast<std::uint32_t>(header.size()));
  out.insert(out.end(), header.begin(), header.end());
  out.insert(out.end(), payload.begin(), payload.end());
  detail::put_u32(out, payload_crc(payload));
  return out;
}

inline Model decode_weights(const std::vector<unsigned char>& bytes) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), kWeightsMagic, 8) != 0)
    throw LoadError(LoadErrorKind::malformed_header, "missing LISAWTS1 magic");
  const std::uint32_t header_len = detail::get_u32(bytes.data() + 8);
  if (bytes.size() < 12 + std::size_t{header_len})
    throw LoadError(LoadErrorKind::truncated, "file ends inside the config block");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.begin() + 12, bytes.begin() + 12 + header_len);
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(LoadErrorKind::malformed_header, std::string("config block: ") + e.what());
  }
  Model m{config_from_json(header), {}};
  m.weights = zero_weights(m.config);

  const std::size_t payload_begin = 12 + header_len;
  const std::size_t payload_bytes = detail::tensor_floats(m.config) * 4;
  const std::size_t expected = payload_begin + payload_bytes + 4;
  if (bytes.size() < expected)
    throw LoadError(LoadErrorKind::truncated, "expected " + std::to_string(expected) + " bytes, got " +
                                                  std::to_string(bytes.size()));
  if (bytes.size() > expected) throw LoadError(LoadErrorKind::dimension_mismatch, "trailing bytes after checksum");

  const std::vector<unsigned char> payload(bytes.begin() + payload_begin, bytes.begin() + payload_begin + payload_bytes);
  if (payload_crc(payload) != detail::get_u32(bytes.data() + payload_begin + payload_bytes))
    throw LoadError(LoadErrorKind::checksum, "payload CRC-32 mismatch");

  std::size_t offset = 0;
  bool finite = true;
  m.weights.for_each_tensor([&](std::span<float> t) {
    std::memcpy(t.data(), payload.data() + offset, t.size_bytes());
    offset += t.size_bytes();
    finite = finite && all_finite(t);
  });
  if (!finite) throw LoadError(LoadErrorKind::non_finite, "weights contain NaN or Inf");
  return m;
}

inline void write_bytes(const std::filesystem::path& path, const std::vector<unsigned char>& bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw LoadError(LoadErrorKind::io, "cannot open " + path.string() + " for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw LoadError(LoadErrorKind::io, "write failed for " + path.string());
}

inline std::vector<unsigned char> read_bytes(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw LoadError(LoadErrorKind::io, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

inline void save_model(const Model& m, const std::filesystem::path& config_file,
                       const std::filesystem::path& weights_file) {
  validate_weights(m.config, m.weights);
  const std::string cfg = config_to_json(m.config).dump(2) + "\n";
  write_bytes(config_file, std::vector<unsigned char>(cfg.begin(), cfg.end()));
  write_bytes(weights_file, encode_weights(m));
}

/// Loads and validates. The config file must agree with the config embedded
/// in the weights file.
inline Model load_model(const std::filesystem::path& config_file, const std::filesystem::path& weights_file) {
  const auto cfg_bytes = read_bytes(config_file);
  nlohmann::json cfg_json;
  try {
    cfg_json = nlohmann::json::parse(cfg_bytes.begin(), cfg_bytes.end());
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(LoadErrorKind::malformed_header, std::string("config file: ") + e.what());
  }
  const ModelConfig cfg = config_from_json(cfg_json);
  Model m = decode_weights(read_bytes(weights_file));
  if (!(m.config == cfg))
    throw LoadError(LoadErrorKind::dimension_mismatch, "config file does not match the weights header");
  return m;
}

}  // namespace lisa
