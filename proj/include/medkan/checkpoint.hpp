#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "medkan/arch.hpp"

namespace medkan {

// Checkpoint container format:
//   magic "MDKN" | u32 version=1 | u64 json length | config JSON (UTF-8) |
//   u32 tensor count | per tensor:
//     u32 name length | name | u8 dtype (0=f32, 1=f64) | u8 rank |
//     u64 extents[rank] | raw little-endian element data
// All integers little-endian.

enum class CkptDtype : std::uint8_t { F32 = 0, F64 = 1 };

struct CheckpointTensor {
    CkptDtype dtype = CkptDtype::F32;
    Shape shape;
    std::vector<std::uint8_t> bytes;

    std::size_t numel() const { return shape_numel(shape); }
    std::size_t itemsize() const { return dtype == CkptDtype::F32 ? 4 : 8; }
};

struct Checkpoint {
    nlohmann::json config; // {"model": {...}, "train_state": {...}?}
    std::vector<std::pair<std::string, CheckpointTensor>> tensors; // ordered

    const CheckpointTensor* find(const std::string& name) const;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

// model config <-> JSON (strict: unknown keys are ConfigErrors)
nlohmann::json model_config_to_json(const MedKanConfig& cfg);
MedKanConfig model_config_from_json(const nlohmann::json& j);

template <class T> CheckpointTensor tensor_to_ckpt(const Tensor<T>& t);
template <class T> Tensor<T> tensor_from_ckpt(const CheckpointTensor& ct, const std::string& name);

/// Snapshot of the model weights plus its config.
template <class T> Checkpoint make_checkpoint(const MedKan<T>& model);

/// Restores weights by name; every model parameter must be present with
/// matching dtype and shape, otherwise DataError.
template <class T> void load_weights(MedKan<T>& model, const Checkpoint& ckpt);

} // namespace medkan
