#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "rcnas/arch.hpp"

namespace rcnas {

// Residual block factory: (in_channels, out_channels, stride) -> module.
// Registered variants let robust_block stages swap their block type without
// touching the rest of the network.
using BlockFactory =
    std::function<std::shared_ptr<torch::nn::Module>(int in_ch, int out_ch, int stride)>;

void register_block_variant(const std::string& name, BlockFactory factory);
std::vector<std::string> block_variant_names();

// Name of the variant used when a stage sets robust_block. The default
// ("smooth-preact") is a pre-activation block with a sigmoid-weighted
// activation in place of ReLU.
inline constexpr const char* kDefaultRobustVariant = "smooth-preact";
inline constexpr const char* kStandardVariant = "preact";

class WideResNetImpl;

// Trainable realization of a NetworkDescriptor: stem convolution, stages of
// pre-activation residual blocks, global average pooling, linear head.
// Value-semantic handle over a shared module; single-writer during training.
class MaterializedModel {
 public:
  MaterializedModel() = default;

  torch::Tensor forward(const torch::Tensor& input) const;  // NCHW in [0,1] -> logits
  std::int64_t param_count() const;
  const NetworkDescriptor& descriptor() const;
  std::uint64_t seed() const;
  bool defined() const { return net_ != nullptr; }

  void set_train(bool training) const;
  std::vector<torch::Tensor> parameters() const;
  torch::nn::Module& module() const;
  std::uint64_t state_hash() const;

  void save(const std::string& path) const;
  static MaterializedModel load(const std::string& path);

 private:
  friend MaterializedModel materialize(const NetworkDescriptor&, std::uint64_t,
                                       const std::string&);
  std::shared_ptr<WideResNetImpl> net_;
};

// Builds and deterministically initializes the model. Two calls with the same
// descriptor and seed produce identical parameters. Throws when a downsampling
// stage would shrink the spatial map below 1x1.
MaterializedModel materialize(const NetworkDescriptor& desc, std::uint64_t seed,
                              const std::string& robust_variant = kDefaultRobustVariant);

}  // namespace rcnas
