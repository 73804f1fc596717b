// Copyright Contributors to the duosplat project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "duosplat/nn/tape.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace duosplat {

enum class CheckpointKind : std::uint8_t { stage1 = 1, stage2 = 2 };

/// Binary container, little-endian:
///   magic "DUOCKPT\0" | version u8 | kind u8 | config length u32 | config JSON bytes |
///   fingerprint u64 | delta f64 | tensor count u32 |
///   per tensor: name length u16, name bytes, rows u32, cols u32, rows*cols f64 row-major |
///   history length u32 | history f64 values
struct Checkpoint {
    static constexpr std::uint8_t kVersion = 1;

    CheckpointKind kind = CheckpointKind::stage1;
    nlohmann::json config;
    std::uint64_t fingerprint = 0;
    double delta = 1.0;
    std::vector<std::pair<std::string, nn::Tensor>> tensors;
    std::vector<double> loss_history;

    /// Copies every parameter value of the set.
    void store(const nn::ParameterSet &params);
    /// Restores values into a set with exactly the same names and shapes; throws
    /// FingerprintMismatch otherwise.
    void restore(nn::ParameterSet &params) const;
};

void save_checkpoint(const std::filesystem::path &path, const Checkpoint &ckpt);
/// Throws IoError for unreadable or malformed files.
Checkpoint load_checkpoint(const std::filesystem::path &path);

} // namespace duosplat
