#pragma once

#include <string>
#include <string_view>

#include <json.hpp>

#include "fdti/error.hpp"
#include "fdti/model.hpp"
#include "fdti/text.hpp"

namespace fdti {

inline constexpr int kCheckpointVersion = 1;

inline nlohmann::json model_config_json(const ModelConfig& c) {
  return {{"hidden_dim", c.hidden_dim},
          {"n_layers", c.n_layers},
          {"window", c.window},
          {"discount", c.discount},
          {"clamp_nonneg", c.clamp_nonneg},
          {"use_residual", c.use_residual},
          {"seed", c.seed},
          {"normalize_green", c.graph.normalize_green},
          {"dynamic_edges", c.graph.dynamic_edges},
          {"constant_self_edges", c.graph.self_edges == SelfEdgeWeight::Constant},
          {"roadnet_features", c.features.roadnet_features},
          {"volume_scale", c.features.volume_scale}};
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.hidden_dim = j.at("hidden_dim").get<std::size_t>();
  c.n_layers = j.at("n_layers").get<std::size_t>();
  c.window = j.at("window").get<std::size_t>();
  c.discount = j.at("discount").get<double>();
  c.clamp_nonneg = j.at("clamp_nonneg").get<bool>();
  c.use_residual = j.at("use_residual").get<bool>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.graph.normalize_green = j.at("normalize_green").get<bool>();
  c.graph.dynamic_edges = j.at("dynamic_edges").get<bool>();
  c.graph.self_edges =
      j.at("constant_self_edges").get<bool>() ? SelfEdgeWeight::Constant : SelfEdgeWeight::SignalGated;
  c.features.roadnet_features = j.at("roadnet_features").get<bool>();
  c.features.volume_scale = j.at("volume_scale").get<double>();
  return c;
}

struct Checkpoint {
  ModelConfig config;
  ModelParams params;
};

inline std::string serialize_checkpoint(const ModelParams& params, const ModelConfig& config) {
  nlohmann::json tensors = nlohmann::json::array();
  const auto names = ModelParams::tensor_names(params.n_layers());
  const auto ts = params.tensors();
  for (std::size_t k = 0; k < ts.size(); ++k) {
    const auto flat = ts[k]->flat();
    tensors.push_back({{"name", names[k]},
                       {"rows", ts[k]->rows()},
                       {"cols", ts[k]->cols()},
                       {"data", std::vector<double>(flat.begin(), flat.end())}});
  }
  nlohmann::json doc{{"format", "fdti-checkpoint"},
                     {"version", kCheckpointVersion},
                     {"config", model_config_json(config)},
                     {"parameter_count", params.count()},
                     {"tensors", tensors}};
  return doc.dump() + "\n";
}

inline Checkpoint parse_checkpoint(std::string_view text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("checkpoint: parse error: ") + e.what());
  }
  try {
    require(doc.at("format") == "fdti-checkpoint", "checkpoint: unknown format");
    const int version = doc.at("version").get<int>();
    require(version == kCheckpointVersion,
            "checkpoint: version mismatch (file " + std::to_string(version) + ", expected " +
                std::to_string(kCheckpointVersion) + ")");
    Checkpoint ck;
    ck.config = model_config_from_json(doc.at("config"));
    ck.config.validate();
    ck.params = ModelParams::zeros(ck.config.hidden_dim, ck.config.n_layers);
    const auto names = ModelParams::tensor_names(ck.config.n_layers);
    auto ts = ck.params.tensors();
    const auto& list = doc.at("tensors");
    require(list.size() == ts.size(), "checkpoint: shape mismatch (tensor count)");
    for (std::size_t k = 0; k < ts.size(); ++k) {
      const auto& t = list[k];
      require(t.at("name") == names[k], "checkpoint: unexpected tensor " + t.at("name").dump());
      require(t.at("rows").get<std::size_t>() == ts[k]->rows() &&
                  t.at("cols").get<std::size_t>() == ts[k]->cols(),
              "checkpoint: shape mismatch for " + names[k]);
      const auto data = t.at("data").get<std::vector<double>>();
      require(data.size() == ts[k]->size(), "checkpoint: shape mismatch for " + names[k]);
      std::copy(data.begin(), data.end(), ts[k]->flat().begin());
    }
    return ck;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("checkpoint: malformed: ") + e.what());
  }
}

/// Rejects checkpoints whose architecture differs from `expected`.
inline void check_compatible(const Checkpoint& ck, const ModelConfig& expected) {
  require(ck.config.hidden_dim == expected.hidden_dim && ck.config.n_layers == expected.n_layers,
          "checkpoint: shape mismatch (hidden_dim " + std::to_string(ck.config.hidden_dim) + " x " +
              std::to_string(ck.config.n_layers) + " layers, expected " +
              std::to_string(expected.hidden_dim) + " x " + std::to_string(expected.n_layers) + ")");
}

inline void save_checkpoint(const ModelParams& params, const ModelConfig& config, const std::string& path) {
  write_file(path, serialize_checkpoint(params, config));
}

inline Checkpoint load_checkpoint(const std::string& path) { return parse_checkpoint(read_file(path)); }

inline Checkpoint load_checkpoint(const std::string& path, const ModelConfig& expected) {
  auto ck = load_checkpoint(path);
  check_compatible(ck, expected);
  return ck;
}

}  // namespace fdti
