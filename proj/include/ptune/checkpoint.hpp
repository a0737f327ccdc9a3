#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "ptune/model.hpp"

namespace ptune {

// Layout: "PTCK" | u32 version | u64 metadata length | UTF-8 JSON metadata
// (config echo, group boundaries) | f64 parameter arrays in G0..G4 order.
// All integers and floats little-endian.
inline constexpr std::string_view kCheckpointMagic = "PTCK";
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string encode_checkpoint(const Model& model);
Model decode_checkpoint(std::string_view bytes);

void save_checkpoint(const Model& model, const std::filesystem::path& path);
Model load_checkpoint(const std::filesystem::path& path);

/// Little-endian parameter bytes of each group, in checkpoint order.
std::array<std::string, kGroupCount> group_bytes(const Model& model);

}  // namespace ptune
