#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "beamcast/beamnet/model.hpp"
#include "beamcast/harness/harness.hpp"

namespace beamcast::cli {

// Binary layout, little-endian:
//   "BEAMCAST" | u32 version | str model-config JSON | str train-config JSON
//   | 16 f64 scaler (min, max) | u32 epochs completed
//   | u32 count, per tensor: str name, u32 rank, u64 dims..., f32 values...
//   | u32 count, per batchnorm layer: u64 channels, f32 mean..., f32 var...
//   | u8 has_adam [u64 step, per tensor: f32 m..., f32 v...]
//   | u64 FNV-1a of everything before
// str = u32 length + bytes.

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct TensorRecord {
    std::string name;
    Shape shape;
    std::vector<float> values;
};

struct BatchNormRecord {
    std::vector<float> mean;
    std::vector<float> var;
};

struct AdamRecord {
    std::uint64_t step = 0;
    std::vector<std::vector<float>> first_moment;
    std::vector<std::vector<float>> second_moment;
};

struct Checkpoint {
    beamnet::ModelConfig model;
    harness::TrainConfig train;
    pipeline::StructScaler scaler;
    int epoch = 0; // epochs completed
    std::vector<TensorRecord> parameters;
    std::vector<BatchNormRecord> batchnorm;
    std::optional<AdamRecord> adam;
};

Checkpoint capture(const harness::Trainer& trainer);

/// Copies parameters and batchnorm statistics; names and shapes must match.
void restore_model(const Checkpoint& ckpt, beamnet::BeamNet<float>& model);

/// Model, optimizer state and epoch counter. The trainer must have been built
/// from the checkpoint's configs on the same dataset.
void restore_trainer(const Checkpoint& ckpt, harness::Trainer& trainer);

std::vector<std::uint8_t> serialize(const Checkpoint& ckpt);

/// Throws FormatError on bad magic, unknown version, checksum mismatch or
/// truncation.
Checkpoint deserialize(std::span<const std::uint8_t> bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

} // namespace beamcast::cli
