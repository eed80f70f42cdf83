#pragma once

#include <cstdint>
#include <filesystem>

#include "transferlab/model.hpp"

namespace tl {

inline constexpr std::uint16_t kCheckpointVersion = 1;

// "ADVM" | u16 version | u32-length-prefixed UTF-8 description (network
// spec text plus seed and clean accuracy) | per parameter: u32-length-prefixed
// name, u8 rank, rank x u32 dims, raw little-endian doubles.
void save_checkpoint(const TrainedModel& model, const std::filesystem::path& path);

/// Throws FormatError on bad magic, unsupported version, truncation, or
/// parameters that do not match the described network. Nothing is returned
/// on failure.
TrainedModel load_checkpoint(const std::filesystem::path& path);

}  // namespace tl
