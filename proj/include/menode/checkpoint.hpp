#pragma once

#include "menode/model.hpp"
#include "menode/optimizer.hpp"
#include "menode/trainer.hpp"

#include <filesystem>
#include <string>

namespace menode {

inline constexpr int kCheckpointVersion = 1;

// Text checkpoint:
//   menode-checkpoint <version>
//   model <key=value ...>
//   train <key=value ...>
//   adam <lr> <beta1> <beta2> <eps> <steps>
//   state epochs_done=<n> seed=<s>
//   param <name> <shape> <values...>      (one line per tensor)
//   m <index> <values...> / v <index> <values...>
//   checksum <fnv1a-64 of everything above>
// Floats are hexadecimal so values survive the round trip bitwise.
struct Checkpoint {
  MeNodeModel model;
  TrainConfig train;
  Adam optimizer;
  std::size_t epochs_done = 0;
};

std::string serialize_checkpoint(const MeNodeModel& model, const TrainConfig& train,
                                  const Adam& optimizer, std::size_t epochs_done);

// The version line is checked before anything else: a different version is
// UnsupportedVersionError. A missing or wrong checksum (truncation,
// corruption) is IntegrityError.
Checkpoint deserialize_checkpoint(const std::string& text);

// Writes to a temporary sibling and renames, so an interrupted save never
// replaces a good checkpoint.
void save_checkpoint(const std::filesystem::path& path, const MeNodeModel& model,
                     const TrainConfig& train, const Adam& optimizer,
                     std::size_t epochs_done);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace menode
