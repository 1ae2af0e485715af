#pragma once

// Binary parameter files: "VPRP", u32 version, u32 record count, then per
// record a length-prefixed name, u32 ndim, i32 dims and little-endian
// float32 values, closed by a u64 FNV-1a checksum of everything before it.

#include <cstdint>
#include <string>
#include <vector>

#include "vprop/planners.hpp"

namespace vprop {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct TensorRecord {
  std::string name;
  Shape shape;
  std::vector<float> values;
};

std::vector<std::uint8_t> encode_records(const std::vector<TensorRecord>& records);
/// Throws on bad magic, unknown version, truncation or checksum mismatch.
std::vector<TensorRecord> decode_records(const std::vector<std::uint8_t>& bytes);

std::uint64_t fnv1a64(const std::uint8_t* data, std::size_t size);

/// Parameters plus the planner configuration needed to rebuild them.
std::vector<std::uint8_t> encode_checkpoint(const PlannerConfig& config, const PlannerParams<float>& params);
PlannerParams<float> decode_checkpoint(const std::vector<std::uint8_t>& bytes, PlannerConfig* config = nullptr);

void save_checkpoint(const std::string& path, const PlannerConfig& config, const PlannerParams<float>& params);
PlannerParams<float> load_checkpoint(const std::string& path, PlannerConfig* config = nullptr);

}  // namespace vprop
