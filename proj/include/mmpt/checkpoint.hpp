#pragma once

#include <map>
#include <string>

#include "mmpt/tensor.hpp"

namespace mmpt {

// Binary container: magic "MMPT", uint32 LE format version, uint64 LE header
// length, JSON header {"tensors": [{"name", "shape", "offset"}...],
// "meta": {...}}, then raw little-endian float64 payload. Offsets are byte
// positions within the payload. Readers reject unknown versions.
inline constexpr uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::map<std::string, Tensor> tensors;
  std::map<std::string, std::string> meta;
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace mmpt
