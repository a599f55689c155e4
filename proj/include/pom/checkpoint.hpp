#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pom/tensor.hpp"

// Binary checkpoint, all integers and payloads little-endian:
//   "POM1" | u32 version | u64 step | u32 len + config text | u32 count |
//   count x (u32 len + name | u8 dtype (0 f32, 1 f64) | u32 rank | rank x u64 dim | payload)
namespace pom {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
    std::string name;
    Tensor<double> value;
};

struct Checkpoint {
    std::uint32_t version = kCheckpointVersion;
    std::uint64_t step = 0;
    std::string config;  // key = value echo of the training configuration
    std::vector<NamedTensor> tensors;

    /// Throws std::out_of_range if absent.
    const Tensor<double>& get(const std::string& name) const;
};

/// Tensors are stored as f64.
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
/// f32 payloads are widened to double. Throws std::runtime_error on bad magic,
/// unsupported version, truncation or trailing bytes.
Checkpoint load_checkpoint(const std::string& path);

}  // namespace pom
