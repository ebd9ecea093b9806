#pragma once

#include <cstdint>
#include <filesystem>

#include "stylegen/config.hpp"
#include "stylegen/model.hpp"

namespace stylegen {

struct Checkpoint {
  RunConfig config;
  StyleSystem system;
  AdamState adam;
  std::int64_t step = 0;
};

// Parameters drawn from the run seed, projection from the feature seed,
// codebooks zeroed. Shapes follow the config.
StyleSystem fresh_system(const RunConfig& config);

FeatureExtractor make_features(const FeatureConfig& config, int vocab);

// Header: magic, version, step, config snapshot, array table with shapes and
// offsets. Payload: little-endian float64 arrays.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);

// Throws VersionError, TruncationError, CorruptionError or ShapeError.
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::uint64_t checkpoint_hash(const Checkpoint& ckpt);

}  // namespace stylegen
