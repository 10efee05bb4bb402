#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sdtc/tensor.hpp"

namespace sdtc {

// Versioned named-tensor store for a trained stage. Payloads are raw
// little-endian 64-bit floats behind a text manifest, with byte count and
// FNV-1a checksum for integrity.
struct Checkpoint {
  int version = 1;
  std::string stage;
  std::vector<std::string> config_lines;
  long epoch = 0;
  double final_loss = 0.0;
  std::uint64_t seed = 0;
  std::vector<NamedTensor> tensors;
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

// Deep-copies the current parameter values into a checkpoint.
Checkpoint snapshot(const std::string& stage,
                    std::vector<std::string> config_lines, long epoch,
                    double final_loss, std::uint64_t seed,
                    const std::vector<NamedTensor>& params);

// Copies checkpoint tensors into live parameters, matched by name.
// Throws (naming the tensor) on a missing name or shape mismatch.
void apply_checkpoint(const Checkpoint& ckpt,
                      std::vector<NamedTensor> params);

// FNV-1a over all parameter bytes; used by the freezing-contract checks.
std::uint64_t params_checksum(const std::vector<NamedTensor>& params);

}  // namespace sdtc
