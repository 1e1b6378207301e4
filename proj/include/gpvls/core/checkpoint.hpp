#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "gpvls/core/model.hpp"

namespace gpvls::core {

inline constexpr std::string_view kCheckpointFormat = "gpvls-toy-v1";

/// Model parameters plus the training progress needed to resume.
struct Checkpoint {
    ModelParams params;
    std::uint64_t step = 0;
    std::string optimizer = "sgd";
    /// Adam moments keyed like named_tensors(); empty for plain gradient descent.
    Gradients adam_m;
    Gradients adam_v;

    friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

/// Layout: the format tag and a newline, an 8-byte little-endian header length, a JSON
/// header (hyperparameters, seed, step, tensor directory, payload SHA-256), then every tensor
/// as little-endian IEEE-754 doubles in directory order.
std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint parse_checkpoint(std::string_view bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
/// Throws CheckpointError on a missing, truncated, or corrupted file.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace gpvls::core
