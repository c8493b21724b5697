#pragma once

// Flat binary tensor files ("DCAPT\0") and checkpoint files ("DCAPC\0",
// a config hash followed by ordered parameter tensors). Little-endian.

#include <cstdint>
#include <string>
#include <vector>

#include "dcap/tensor.hpp"

namespace dcap {

void save_tensor(const std::string& path, const Tensor& t);
Tensor load_tensor(const std::string& path);

// FNV-1a over the canonical config text; stored in checkpoints so eval can
// refuse a checkpoint trained under a different configuration.
std::uint64_t config_hash(const std::string& canonical_text);

void save_checkpoint(const std::string& path, std::uint64_t cfg_hash,
                     const std::vector<const Tensor*>& params);
// Loads into pre-shaped parameter tensors; throws on magic/hash/shape mismatch.
void load_checkpoint(const std::string& path, std::uint64_t cfg_hash,
                     const std::vector<Tensor*>& params);
std::uint64_t read_checkpoint_hash(const std::string& path);

} // namespace dcap
