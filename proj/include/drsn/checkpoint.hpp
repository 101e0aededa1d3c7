#pragma once

#include <filesystem>
#include <string>

#include "drsn/model.hpp"

namespace drsn {

inline constexpr char kCheckpointMagic[4] = {'S', 'H', 'R', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

// Layout is documented in docs/checkpoint-format.md.
void save_checkpoint(Network& model, const std::filesystem::path& path);
std::string serialize_checkpoint(Network& model);

// Throws CheckpointCorruptError, CheckpointVersionError or
// CheckpointShapeError; IoError if the file cannot be opened.
Network load_checkpoint(const std::filesystem::path& path);
Network deserialize_checkpoint(const std::string& bytes);

}  // namespace drsn
