#pragma once

// trace-bundle/1: a directory with manifest.json and one row-major
// little-endian array file per layer and signal. Float arrays are float32;
// labels are uint32. Every array carries its byte length and CRC32.
//
// manifest.json
//   format        "trace-bundle/1"
//   model_name    free text
//   n_layers      depth of the dense model the layer indices refer to
//   layers        retained dense indices, strictly increasing
//   d_model, M, N
//   signals       subset of ["decision", "pooled"]; "decision" is required
//   norm          "rms" | "layer"
//   scoring_mode  "label-token" | "length-normalized"
//   endianness    "little"
//   sample_ids    N strings
//   arrays        [{name, file, dtype, shape, bytes, crc32}]
//
// Array names: decision.<k>, pooled.<k>, scores.<k> for local layer k, and
// labels.

#include <nlohmann/json.hpp>

#include <cstdio>
#include <map>
#include <string>

#include "prunelens/checksum.hpp"
#include "prunelens/io_util.hpp"
#include "prunelens/probes.hpp"
#include "prunelens/weights_io.hpp"

namespace prunelens {

inline constexpr const char* kTraceFormat = "trace-bundle/1";

struct BundleInfo {
  std::string model_name = "unnamed";
  std::string norm = "rms";
  std::string scoring_mode = "label-token";
};

struct TraceBundle {
  BundleInfo info;
  CapturedTraces traces;
};

struct BundleSummary {
  io::fs::path path;
  std::size_t layers = 0;
  std::size_t samples = 0;
  std::size_t options = 0;
  std::size_t arrays = 0;
  std::size_t bytes = 0;
};

namespace detail {

inline std::string layer_file(const std::string& signal, std::size_t k) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s_%03zu.f32", signal.c_str(), k);
  return buf;
}

inline std::vector<std::uint8_t> u32_bytes(std::span<const std::size_t> values) {
  std::vector<std::uint8_t> out(values.size() * 4);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto v = static_cast<std::uint32_t>(values[i]);
    for (int b = 0; b < 4; ++b) out[i * 4 + b] = static_cast<std::uint8_t>(v >> (8 * b));
  }
  return out;
}

}  // namespace detail

inline BundleSummary write_bundle(const CapturedTraces& traces, const io::fs::path& dir, const BundleInfo& info = {}) {
  const DecisionTrace& t = traces.decision;
  if (t.layer_count() == 0 || t.sample_count() == 0) throw ArgumentError("write_bundle: empty trace");
  t.validate();
  const std::size_t L = t.layer_count(), N = t.sample_count(), M = t.option_count(), d = t.states.front().cols();
  if (traces.pooled && traces.pooled->states.size() != L) {
    throw ArgumentError("write_bundle: pooled trace layer count differs from decision trace");
  }
  io::ensure_dir(dir);

  BundleSummary summary{dir, L, N, M, 0, 0};
  nlohmann::json arrays = nlohmann::json::array();
  auto put = [&](const std::string& name, const std::string& file, const char* dtype, nlohmann::json shape,
                 const std::vector<std::uint8_t>& bytes) {
    io::write_bytes(dir / file, bytes.data(), bytes.size());
    arrays.push_back({{"name", name},
                      {"file", file},
                      {"dtype", dtype},
                      {"shape", std::move(shape)},
                      {"bytes", bytes.size()},
                      {"crc32", crc32_hex(bytes)}});
    ++summary.arrays;
    summary.bytes += bytes.size();
  };
  nlohmann::json signals = {"decision"};
  if (traces.pooled) signals.push_back("pooled");
  for (std::size_t k = 0; k < L; ++k) {
    put("decision." + std::to_string(k), detail::layer_file("decision", k), "float32", {N, d},
        to_f32_bytes(t.states[k].data()));
    if (traces.pooled) {
      const Tensor2& p = traces.pooled->states[k];
      if (p.rows() != N || p.cols() != d) throw ArgumentError("write_bundle: pooled shape mismatch");
      put("pooled." + std::to_string(k), detail::layer_file("pooled", k), "float32", {N, d}, to_f32_bytes(p.data()));
    }
    put("scores." + std::to_string(k), detail::layer_file("scores", k), "float32", {N, M},
        to_f32_bytes(t.scores[k].data()));
  }
  put("labels", "labels.u32", "uint32", {N}, detail::u32_bytes(t.correct));

  nlohmann::json manifest = {{"format", kTraceFormat},
                             {"model_name", info.model_name},
                             {"n_layers", t.dense_layers},
                             {"layers", t.topology.retained()},
                             {"d_model", d},
                             {"M", M},
                             {"N", N},
                             {"signals", signals},
                             {"norm", info.norm},
                             {"scoring_mode", info.scoring_mode},
                             {"endianness", "little"},
                             {"sample_ids", t.sample_ids},
                             {"arrays", arrays}};
  io::write_text(dir / "manifest.json", manifest.dump(2) + "\n");
  return summary;
}

inline TraceBundle read_bundle(const io::fs::path& dir) {
  nlohmann::json m;
  try {
    m = nlohmann::json::parse(io::read_text(dir / "manifest.json"));
  } catch (const nlohmann::json::exception& e) {
    throw CorruptFileError("trace manifest: " + std::string(e.what()));
  }
  if (!m.is_object() || !m.contains("format") || !m["format"].is_string()) {
    throw CorruptFileError("trace manifest: missing format field");
  }
  check_format_version(m["format"].get<std::string>(), "trace-bundle", 1);

  TraceBundle out;
  DecisionTrace& t = out.traces.decision;
  std::size_t d = 0, M = 0, N = 0;
  std::vector<std::string> signals;
  std::map<std::string, nlohmann::json> arrays;
  try {
    out.info.model_name = m.value("model_name", std::string("unnamed"));
    out.info.norm = m.value("norm", std::string("rms"));
    out.info.scoring_mode = m.value("scoring_mode", std::string("label-token"));
    if (m.value("endianness", std::string("little")) != "little") {
      throw CorruptFileError("trace manifest: only little-endian bundles are supported");
    }
    t.dense_layers = m.at("n_layers").get<std::size_t>();
    t.topology = Topology(m.at("layers").get<std::vector<std::size_t>>());
    d = m.at("d_model").get<std::size_t>();
    M = m.at("M").get<std::size_t>();
    N = m.at("N").get<std::size_t>();
    signals = m.at("signals").get<std::vector<std::string>>();
    t.sample_ids = m.at("sample_ids").get<std::vector<std::string>>();
    for (const auto& a : m.at("arrays")) arrays[a.at("name").get<std::string>()] = a;
  } catch (const nlohmann::json::exception& e) {
    throw CorruptFileError("trace manifest: " + std::string(e.what()));
  }
  try {
    t.topology.validate(t.dense_layers);
  } catch (const ArgumentError& e) {
    throw CorruptFileError(std::string("trace manifest: ") + e.what());
  }
  if (t.sample_ids.size() != N) throw CorruptFileError("trace manifest: sample_ids length differs from N");
  if (N == 0 || d == 0 || M < 2) throw CorruptFileError("trace manifest: N, d_model must be >= 1 and M >= 2");
  const bool has_decision = std::find(signals.begin(), signals.end(), "decision") != signals.end();
  const bool has_pooled = std::find(signals.begin(), signals.end(), "pooled") != signals.end();
  if (!has_decision) throw CorruptFileError("trace manifest: decision signal is required");

  // Returns the verified raw bytes of a listed array.
  auto load = [&](const std::string& name, const char* dtype, std::vector<std::size_t> shape) {
    auto it = arrays.find(name);
    if (it == arrays.end()) throw CorruptFileError("trace bundle: array '" + name + "' not listed");
    const auto& a = it->second;
    std::string file, crc, listed_dtype;
    std::size_t bytes_listed;
    std::vector<std::size_t> listed_shape;
    try {
      file = a.at("file").get<std::string>();
      crc = a.at("crc32").get<std::string>();
      listed_dtype = a.at("dtype").get<std::string>();
      bytes_listed = a.at("bytes").get<std::size_t>();
      listed_shape = a.at("shape").get<std::vector<std::size_t>>();
    } catch (const nlohmann::json::exception& e) {
      throw CorruptFileError("trace bundle: array '" + name + "': " + e.what());
    }
    if (file.find('/') != std::string::npos || file.find("..") != std::string::npos) {
      throw CorruptFileError("trace bundle: array '" + name + "' names a file outside the bundle");
    }
    if (listed_dtype != dtype) throw CorruptFileError("trace bundle: array '" + name + "' has dtype " + listed_dtype);
    if (listed_shape != shape) {
      throw CorruptFileError("trace bundle: array '" + name + "' shape disagrees with manifest dimensions");
    }
    std::size_t numel = 1;
    for (std::size_t s : shape) numel *= s;
    if (!io::fs::exists(dir / file)) throw CorruptFileError("trace bundle: missing file " + file);
    auto bytes = io::read_bytes(dir / file);
    if (bytes.size() != bytes_listed || bytes.size() != numel * 4) {
      throw CorruptFileError("trace bundle: " + file + " holds " + std::to_string(bytes.size()) + " bytes, expected " +
                             std::to_string(numel * 4));
    }
    if (crc32_hex(bytes) != crc) throw CorruptFileError("trace bundle: checksum mismatch in " + file);
    return bytes;
  };
  auto load_f32 = [&](const std::string& name, std::size_t rows, std::size_t cols) {
    return Tensor2(rows, cols, from_f32_bytes(load(name, "float32", {rows, cols})));
  };

  const std::size_t L = t.topology.size();
  PooledTrace pooled;
  for (std::size_t k = 0; k < L; ++k) {
    t.states.push_back(load_f32("decision." + std::to_string(k), N, d));
    t.scores.push_back(load_f32("scores." + std::to_string(k), N, M));
    if (has_pooled) pooled.states.push_back(load_f32("pooled." + std::to_string(k), N, d));
  }
  const auto label_bytes = load("labels", "uint32", {N});
  for (std::size_t i = 0; i < N; ++i) {
    std::uint32_t v = 0;
    for (int b = 0; b < 4; ++b) v |= static_cast<std::uint32_t>(label_bytes[i * 4 + b]) << (8 * b);
    t.correct.push_back(v);
  }
  for (const auto& tensor : t.states) {
    if (!tensor.all_finite()) throw CorruptFileError("trace bundle: non-finite state values");
  }
  try {
    t.validate();
  } catch (const DataError& e) {
    throw CorruptFileError(std::string("trace bundle: ") + e.what());
  }
  if (has_pooled) out.traces.pooled = std::move(pooled);
  return out;
}

}  // namespace prunelens
