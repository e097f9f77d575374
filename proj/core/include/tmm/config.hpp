#pragma once

#include <filesystem>
#include <string>

#include "tmm/data.hpp"
#include "tmm/model.hpp"
#include "tmm/trainer.hpp"

// Run configuration: `key = value` lines grouped in [spec], [train] and
// [model] sections. Unknown sections or keys are rejected.
namespace tmm::config {

struct RunConfig {
  data::SyntheticSpec spec;
  train::TrainConfig train;
  model::ModelConfig model;
};

RunConfig parse_config(const std::string& text, const std::string& origin = "<config>");
RunConfig load_config(const std::filesystem::path& path);
// Canonical text form; parse_config(to_text(c)) == c.
std::string to_text(const RunConfig& config);

}  // namespace tmm::config
