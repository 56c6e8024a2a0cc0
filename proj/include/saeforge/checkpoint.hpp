// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <optional>

#include "json.hpp"
#include "saeforge/sae.hpp"

namespace saeforge {

// Binary layout, all little-endian:
//   uint32 magic "SAEK", uint32 version, uint32 d, uint32 n, uint32 k
//   float32 W_e [n][d], b_e [n], W_d [d][n], b_d [d]
// plus "<path>.json" holding {"config": SaeConfig, "training": summary}.
inline constexpr std::uint32_t kCheckpointMagic = 0x4B454153;  // "SAEK"
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::filesystem::path checkpoint_sidecar(const std::filesystem::path& path);

void save_checkpoint(const SaeModel& model, const std::filesystem::path& path,
                     const nlohmann::json& training_summary = nlohmann::json::object());
SaeModel load_checkpoint(const std::filesystem::path& path);
std::optional<nlohmann::json> load_checkpoint_sidecar(const std::filesystem::path& path);

}  // namespace saeforge
