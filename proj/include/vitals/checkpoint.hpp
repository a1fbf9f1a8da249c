#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>

#include "vitals/config.hpp"
#include "vitals/model.hpp"
#include "vitals/optimizer.hpp"

namespace vitals {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  RunConfig config;
  ModelParams<float> params;
  std::optional<AdamState> adam;
  std::uint64_t rng_state = 0;
  // Completed epochs.
  std::size_t epoch = 0;

  bool operator==(const Checkpoint&) const = default;
};

// "VTCK" | u32 version | u64 blob length | blob (key = value text) |
// records of (u32 name length | name | u32 rank | u64 dims... | f32 data).
// Records are param/<name>, and adam.m/<name>, adam.v/<name> when present.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);

// Bad magic -> FormatError, other version -> VersionError, truncation or
// inconsistent records -> CorruptionError.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace vitals
