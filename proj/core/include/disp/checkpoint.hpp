#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "disp/encoder.hpp"
#include "disp/tensor.hpp"

namespace disp {

// File layout: "DISPCKPT", u32 version, u64 header length, JSON header
// (kind, encoder config, vocabulary, attributes, tensor manifest of name and
// shape), then each tensor as little-endian f32 in manifest order.
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointHeader {
  std::string kind;
  EncoderConfig encoder;
  std::vector<std::string> vocabulary;  // regular tokens; ids start after the special ids
  std::map<std::string, std::int64_t> attributes;
};

struct CheckpointTensor {
  std::string name;
  Matrix<float> value;
};

struct Checkpoint {
  CheckpointHeader header;
  std::vector<CheckpointTensor> tensors;
};

void write_checkpoint(const std::filesystem::path& path, const CheckpointHeader& header,
                      const ConstParameterRefs<float>& tensors);
Checkpoint read_checkpoint(const std::filesystem::path& path);

// Copies tensors into `params` matching by position, name and shape.
void assign_tensors(const Checkpoint& checkpoint, const ParameterRefs<float>& params);

}  // namespace disp
