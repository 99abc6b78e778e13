#pragma once

#include <string>
#include <utility>

#include "dos/network.hpp"

namespace dos {

// Binary checkpoint: "DOSM", u32 LE format version, field-tagged
// NetworkConfig, then each parameter tensor in canonical order as
// (u32 rank, u32 extents..., raw f32 little-endian data).  Tensors are
// stored in 32-bit precision regardless of the training precision mode.
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::string& path, const NetworkConfig& cfg,
                     const Parameters<float>& params);

std::pair<NetworkConfig, Parameters<float>> load_checkpoint(const std::string& path);

} // namespace dos
