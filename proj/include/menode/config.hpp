#pragma once

#include "menode/dataset.hpp"
#include "menode/model.hpp"
#include "menode/trainer.hpp"

#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

namespace menode {

using KeyValue = std::pair<std::string, std::string>;

// Flat `key = value` text. Blank lines and lines starting with '#' are
// skipped. A line without '=' is a ContractError naming the line.
std::vector<KeyValue> parse_key_values(std::istream& in);

// Each returns false when the key does not belong to the struct, and throws
// ContractError when the value does not parse as the field's type.
bool apply_setting(ModelConfig& config, const std::string& key, const std::string& value);
bool apply_setting(TrainConfig& config, const std::string& key, const std::string& value);
bool apply_setting(ToySpec& spec, const std::string& key, const std::string& value);

// Every field, in declaration order, with values in a form apply_setting
// reads back exactly.
std::vector<KeyValue> settings(const ModelConfig& config);
std::vector<KeyValue> settings(const TrainConfig& config);
std::vector<KeyValue> settings(const ToySpec& spec);

// Everything a config file can set. Unknown keys are a ContractError.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  ToySpec toy;
};

void apply_settings(RunConfig& config, const std::vector<KeyValue>& values);
RunConfig load_config(const std::filesystem::path& path, RunConfig base = {});

}  // namespace menode
