#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "expertadapt/nn/model.hpp"

namespace expertadapt::nn {

/// Checkpoint container: magic, little-endian u64 header length, JSON header
/// (format version, model config, expert ids, opaque training config, step,
/// rng state, parameter manifest), then raw float32 parameter data in
/// manifest order. Loading rebuilds the architecture from the header and
/// verifies the manifest names/roles/sizes against it.
inline constexpr char kCheckpointMagic[8] = {'E', 'A', 'C', 'K', 'P', 'T', '0', '1'};

inline nlohmann::json model_config_to_json(const ModelConfig& cfg) {
  return nlohmann::json{
      {"input_h", cfg.input_h},
      {"input_w", cfg.input_w},
      {"base_width", cfg.base_width},
      {"stage_blocks", cfg.stage_blocks},
      {"decoder_widths", cfg.decoder_widths},
      {"n_experts", cfg.n_experts},
      {"norm_eps", cfg.norm_eps},
      {"condition_encoder", cfg.condition_encoder},
  };
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig cfg;
  try {
    cfg.input_h = j.at("input_h").get<int>();
    cfg.input_w = j.at("input_w").get<int>();
    cfg.base_width = j.at("base_width").get<int>();
    cfg.stage_blocks = j.at("stage_blocks").get<std::array<int, 4>>();
    cfg.decoder_widths = j.at("decoder_widths").get<std::array<int, 4>>();
    cfg.n_experts = j.at("n_experts").get<int>();
    cfg.norm_eps = j.at("norm_eps").get<double>();
    cfg.condition_encoder = j.at("condition_encoder").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad model config: ") + e.what());
  }
  return cfg;
}

struct CheckpointMeta {
  ModelConfig model_cfg;
  std::vector<int> expert_ids;
  nlohmann::json train_config;  // opaque to this layer
  long step = 0;
  std::uint64_t rng_state = 0;
};

namespace ckpt_detail {

template <class T>
inline nlohmann::json manifest_for(CinUNet<T>& model) {
  nlohmann::json manifest = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& p : model.parameters()) {
    nlohmann::json entry;
    entry["name"] = p.name;
    entry["expert"] =
        p.role.shared ? 0 : model.expert_ids()[static_cast<size_t>(p.role.expert_slot)];
    entry["count"] = p.value->size();
    entry["offset"] = offset;
    offset += p.value->size() * sizeof(float);
    manifest.push_back(std::move(entry));
  }
  return manifest;
}

}  // namespace ckpt_detail

template <class T>
inline void save_checkpoint(const std::string& path, CinUNet<T>& model,
                            const nlohmann::json& train_config, long step,
                            std::uint64_t rng_state) {
  nlohmann::json header;
  header["format"] = "expertadapt-checkpoint";
  header["version"] = 1;
  header["model"] = model_config_to_json(model.config());
  header["expert_ids"] = model.expert_ids();
  header["train_config"] = train_config;
  header["step"] = step;
  header["rng_state"] = rng_state;
  header["params"] = ckpt_detail::manifest_for(model);
  const std::string header_str = header.dump();

  namespace fs = std::filesystem;
  const fs::path final_path(path);
  if (final_path.has_parent_path()) fs::create_directories(final_path.parent_path());
  const fs::path tmp_path = final_path.string() + ".tmp";
  {
    std::ofstream out(tmp_path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + tmp_path.string());
    out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
    const std::uint64_t len = header_str.size();
    out.write(reinterpret_cast<const char*>(&len), sizeof(len));
    out.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
    for (const auto& p : model.parameters()) {
      std::vector<float> raw(p.value->size());
      for (size_t i = 0; i < raw.size(); ++i) raw[i] = static_cast<float>((*p.value)[i]);
      out.write(reinterpret_cast<const char*>(raw.data()),
                static_cast<std::streamsize>(raw.size() * sizeof(float)));
    }
    if (!out) throw DataError("write failed for " + tmp_path.string());
  }
  fs::rename(tmp_path, final_path);
}

template <class T>
inline CinUNet<T> load_checkpoint(const std::string& path, CheckpointMeta* meta = nullptr) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
    throw DataError(path + ": not a checkpoint file");
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  if (!in || len == 0 || len > (1u << 26)) throw DataError(path + ": corrupt header length");
  std::string header_str(len, '\0');
  in.read(header_str.data(), static_cast<std::streamsize>(len));
  if (!in) throw DataError(path + ": truncated header");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(header_str);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path + ": bad header: " + e.what());
  }
  CheckpointMeta local;
  CheckpointMeta& m = meta ? *meta : local;
  try {
    if (header.at("version").get<int>() != 1)
      throw DataError(path + ": unsupported checkpoint version");
    m.model_cfg = model_config_from_json(header.at("model"));
    m.expert_ids = header.at("expert_ids").get<std::vector<int>>();
    m.train_config = header.value("train_config", nlohmann::json::object());
    m.step = header.at("step").get<long>();
    m.rng_state = header.at("rng_state").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path + ": bad header: " + e.what());
  }

  CinUNet<T> model(m.model_cfg, m.expert_ids, 0);
  const nlohmann::json& manifest = header.at("params");
  auto params = model.parameters();
  if (manifest.size() != params.size())
    throw DataError(detail::strprintf("%s: manifest has %zu entries, architecture has %zu",
                                      path.c_str(), manifest.size(), params.size()));
  for (size_t i = 0; i < params.size(); ++i) {
    const auto& entry = manifest[i];
    const auto& p = params[i];
    const int expect_expert =
        p.role.shared ? 0 : m.expert_ids[static_cast<size_t>(p.role.expert_slot)];
    if (entry.at("name").get<std::string>() != p.name ||
        entry.at("expert").get<int>() != expect_expert ||
        entry.at("count").get<size_t>() != p.value->size())
      throw DataError(detail::strprintf("%s: manifest mismatch at %s", path.c_str(),
                                        p.name.c_str()));
    std::vector<float> raw(p.value->size());
    in.read(reinterpret_cast<char*>(raw.data()),
            static_cast<std::streamsize>(raw.size() * sizeof(float)));
    if (!in) throw DataError(path + ": truncated parameter data");
    for (size_t j = 0; j < raw.size(); ++j) (*p.value)[j] = static_cast<T>(raw[j]);
  }
  return model;
}

}  // namespace expertadapt::nn
