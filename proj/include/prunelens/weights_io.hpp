#pragma once

// Weight bundle: a directory holding manifest.json (config + tensor table) and
// weights.bin (row-major little-endian float32 tensors, concatenated in the
// canonical order of for_each_tensor).

#include <nlohmann/json.hpp>

#include <map>
#include <string>

#include "prunelens/checksum.hpp"
#include "prunelens/io_util.hpp"
#include "prunelens/model.hpp"

namespace prunelens {

inline constexpr const char* kWeightsFormat = "prunelens-weights/1";

inline nlohmann::json config_to_json(const ModelConfig& c) {
  return {{"n_layers", c.n_layers},
          {"d_model", c.d_model},
          {"n_heads", c.n_heads},
          {"d_ff", c.d_ff},
          {"vocab_size", c.vocab_size},
          {"max_seq", c.max_seq},
          {"norm", {{"kind", to_string(c.norm.type)}, {"epsilon", c.norm.epsilon}}},
          {"seed", c.seed}};
}

inline ModelConfig config_from_json(const nlohmann::json& j) {
  try {
    ModelConfig c;
    c.n_layers = j.at("n_layers").get<std::size_t>();
    c.d_model = j.at("d_model").get<std::size_t>();
    c.n_heads = j.at("n_heads").get<std::size_t>();
    c.d_ff = j.at("d_ff").get<std::size_t>();
    c.vocab_size = j.at("vocab_size").get<std::size_t>();
    c.max_seq = j.at("max_seq").get<std::size_t>();
    const std::string kind = j.at("norm").at("kind").get<std::string>();
    if (kind == "rms") {
      c.norm.type = NormType::rms;
    } else if (kind == "layer") {
      c.norm.type = NormType::layer;
    } else {
      throw ConfigError("unknown norm kind '" + kind + "'");
    }
    c.norm.epsilon = j.at("norm").at("epsilon").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw CorruptFileError(std::string("model config: ") + e.what());
  }
}

inline void check_format_version(const std::string& format, const std::string& family, int major) {
  const auto slash = format.find('/');
  if (slash == std::string::npos || format.substr(0, slash) != family) {
    throw VersionError("unrecognised format '" + format + "', expected " + family + "/" + std::to_string(major));
  }
  const std::string ver = format.substr(slash + 1);
  const std::string want = std::to_string(major);
  if (ver != want && !ver.starts_with(want + ".")) {
    throw VersionError("unsupported " + family + " version '" + ver + "', reader supports " + want);
  }
}

inline void save_weights(const TransformerModel& model, const io::fs::path& dir) {
  io::ensure_dir(dir);
  nlohmann::json tensors = nlohmann::json::array();
  std::vector<std::uint8_t> blob;
  Crc32 total;
  for_each_tensor(model, [&](const std::string& name, TensorShape shape, std::span<const double> v) {
    const auto bytes = to_f32_bytes(v);
    tensors.push_back({{"name", name},
                       {"shape", {shape.rows, shape.cols}},
                       {"offset", blob.size()},
                       {"length", bytes.size()},
                       {"crc32", crc32_hex(bytes)}});
    total.update(bytes);
    blob.insert(blob.end(), bytes.begin(), bytes.end());
  });
  nlohmann::json manifest = {{"format", kWeightsFormat},
                             {"config", config_to_json(model.config)},
                             {"endianness", "little"},
                             {"dtype", "float32"},
                             {"tensors", tensors},
                             {"crc32", total.hex()}};
  io::write_bytes(dir / "weights.bin", blob.data(), blob.size());
  io::write_text(dir / "manifest.json", manifest.dump(2) + "\n");
}

inline TransformerModel load_weights(const io::fs::path& dir) {
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(io::read_text(dir / "manifest.json"));
  } catch (const nlohmann::json::exception& e) {
    throw CorruptFileError("weights manifest: " + std::string(e.what()));
  }
  if (!manifest.contains("format") || !manifest["format"].is_string()) {
    throw CorruptFileError("weights manifest: missing format field");
  }
  check_format_version(manifest["format"].get<std::string>(), "prunelens-weights", 1);
  if (!manifest.contains("config")) throw CorruptFileError("weights manifest: missing config");
  const ModelConfig config = config_from_json(manifest["config"]);
  const auto blob = io::read_bytes(dir / "weights.bin");

  std::map<std::string, nlohmann::json> table;
  try {
    for (const auto& t : manifest.at("tensors")) table[t.at("name").get<std::string>()] = t;
  } catch (const nlohmann::json::exception& e) {
    throw CorruptFileError("weights manifest: bad tensor table: " + std::string(e.what()));
  }
  const auto expected = expected_tensors(config);
  if (table.size() != expected.size()) {
    throw CorruptFileError("weights manifest: " + std::to_string(table.size()) + " tensors listed, config (n_layers=" +
                           std::to_string(config.n_layers) + ") requires " + std::to_string(expected.size()));
  }

  TransformerModel model = allocate_model(config);
  std::size_t consumed = 0;
  for_each_tensor(model, [&](const std::string& name, TensorShape shape, std::span<double> v) {
    auto it = table.find(name);
    if (it == table.end()) throw CorruptFileError("weights manifest: tensor '" + name + "' missing");
    const auto& t = it->second;
    std::size_t offset, length;
    TensorShape listed;
    std::string crc;
    try {
      listed = {t.at("shape").at(0).get<std::size_t>(), t.at("shape").at(1).get<std::size_t>()};
      offset = t.at("offset").get<std::size_t>();
      length = t.at("length").get<std::size_t>();
      crc = t.at("crc32").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw CorruptFileError("weights manifest: tensor '" + name + "': " + e.what());
    }
    if (!(listed == shape) || length != shape.numel() * 4) {
      throw CorruptFileError("weights manifest: tensor '" + name + "' has inconsistent shape/length");
    }
    if (offset > blob.size() || length > blob.size() - offset) {
      throw CorruptFileError("weights.bin: truncated at tensor '" + name + "'");
    }
    const std::span<const std::uint8_t> bytes(blob.data() + offset, length);
    if (crc32_hex(bytes) != crc) throw CorruptFileError("weights.bin: checksum mismatch for '" + name + "'");
    const auto values = from_f32_bytes(bytes);
    std::copy(values.begin(), values.end(), v.begin());
    consumed += length;
  });
  if (consumed != blob.size()) {
    throw CorruptFileError("weights.bin: " + std::to_string(blob.size()) + " bytes on disk, manifest accounts for " +
                           std::to_string(consumed));
  }
  return model;
}

}  // namespace prunelens
