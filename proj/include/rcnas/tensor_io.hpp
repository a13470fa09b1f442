#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace rcnas {

// Versioned binary checkpoint: integer and string metadata plus named raw
// tensors. The byte layout is fixed, so save/load round-trips are bit-stable
// and files are comparable by hash.
struct Checkpoint {
  std::uint32_t version = 1;
  std::map<std::string, std::int64_t> meta;
  std::map<std::string, std::string> text;
  std::vector<std::pair<std::string, torch::Tensor>> tensors;

  std::int64_t meta_or(const std::string& key, std::int64_t fallback) const {
    auto it = meta.find(key);
    return it == meta.end() ? fallback : it->second;
  }
};

void save_checkpoint(const std::string& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::string& path);

// Copies checkpoint tensors into an existing module's parameters/buffers by
// name; throws on missing names or shape mismatch.
void load_named_tensors_into(torch::nn::Module& module, const Checkpoint& ck);
Checkpoint checkpoint_from_module(const torch::nn::Module& module);

// Hash of every parameter and buffer byte in a module; used by the
// freeze-invariant checks.
std::uint64_t module_state_hash(const torch::nn::Module& module);

}  // namespace rcnas
