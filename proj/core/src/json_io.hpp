#pragma once

#include "appp/prior_models.hpp"

#include <json.hpp>

namespace appp::detail {

nlohmann::json mlp_to_json(const Mlp& net);
Mlp mlp_from_json(const nlohmann::json& j);

nlohmann::json adam_to_json(const AdamConfig& c);
nlohmann::json layout_to_json(const ParamLayout& l);
nlohmann::json latent_to_json(const LatentSpace& s);

// Training configs without the seed, so a seed change leaves the config hash alone.
nlohmann::json gan_config_to_json(const GanTrainConfig& c);
nlohmann::json vae_config_to_json(const VaeTrainConfig& c);
nlohmann::json gmm_config_to_json(const GmmTrainConfig& c);

/// Reads a whole file; throws ParseError naming the path when it cannot be opened.
std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

} // namespace appp::detail
