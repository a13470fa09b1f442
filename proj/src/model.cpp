#include "rcnas/model.hpp"

#include <cmath>
#include <map>
#include <mutex>
#include <stdexcept>

#include "rcnas/rng.hpp"
#include "rcnas/tensor_io.hpp"

namespace rcnas {

namespace {

torch::nn::Conv2d make_conv(int in_ch, int out_ch, int kernel, int stride, int pad) {
  return torch::nn::Conv2d(
      torch::nn::Conv2dOptions(in_ch, out_ch, kernel).stride(stride).padding(pad).bias(false));
}

// Pre-activation residual block (bn-act-conv twice); projection shortcut on
// width or stride change, fed from the activated input as in standard wide
// residual networks. `smooth` replaces ReLU with x*sigmoid(x).
class PreactBlockImpl : public torch::nn::Module {
 public:
  PreactBlockImpl(int in_ch, int out_ch, int stride, bool smooth)
      : equal_(in_ch == out_ch && stride == 1),
        smooth_(smooth),
        bn1_(register_module("bn1", torch::nn::BatchNorm2d(in_ch))),
        conv1_(register_module("conv1", make_conv(in_ch, out_ch, 3, stride, 1))),
        bn2_(register_module("bn2", torch::nn::BatchNorm2d(out_ch))),
        conv2_(register_module("conv2", make_conv(out_ch, out_ch, 3, 1, 1))) {
    if (!equal_) {
      shortcut_ = register_module("shortcut", make_conv(in_ch, out_ch, 1, stride, 0));
    }
  }

  torch::Tensor act(const torch::Tensor& x) const {
    return smooth_ ? torch::silu(x) : torch::relu(x);
  }

  torch::Tensor forward(const torch::Tensor& x) {
    auto pre = act(bn1_->forward(x));
    auto out = conv1_->forward(pre);
    out = conv2_->forward(act(bn2_->forward(out)));
    return out + (equal_ ? x : shortcut_->forward(pre));
  }

 private:
  bool equal_;
  bool smooth_;
  torch::nn::BatchNorm2d bn1_;
  torch::nn::Conv2d conv1_;
  torch::nn::BatchNorm2d bn2_;
  torch::nn::Conv2d conv2_;
  torch::nn::Conv2d shortcut_{nullptr};
};

struct BlockHolder {
  std::shared_ptr<torch::nn::Module> module;
  PreactBlockImpl* preact = nullptr;
};

std::map<std::string, BlockFactory>& registry() {
  static std::map<std::string, BlockFactory> reg = {
      {kStandardVariant,
       [](int in_ch, int out_ch, int stride) {
         return std::make_shared<PreactBlockImpl>(in_ch, out_ch, stride, /*smooth=*/false);
       }},
      {kDefaultRobustVariant,
       [](int in_ch, int out_ch, int stride) {
         return std::make_shared<PreactBlockImpl>(in_ch, out_ch, stride, /*smooth=*/true);
       }},
  };
  return reg;
}

std::mutex& registry_mutex() {
  static std::mutex m;
  return m;
}

}  // namespace

void register_block_variant(const std::string& name, BlockFactory factory) {
  std::lock_guard<std::mutex> lock(registry_mutex());
  registry()[name] = std::move(factory);
}

std::vector<std::string> block_variant_names() {
  std::lock_guard<std::mutex> lock(registry_mutex());
  std::vector<std::string> names;
  for (const auto& [k, v] : registry()) names.push_back(k);
  return names;
}

class WideResNetImpl : public torch::nn::Module {
 public:
  WideResNetImpl(NetworkDescriptor desc, std::uint64_t seed, std::string robust_variant)
      : desc_(std::move(desc)), seed_(seed), robust_variant_(std::move(robust_variant)) {
    validate_descriptor(desc_);

    BlockFactory standard, robust;
    {
      std::lock_guard<std::mutex> lock(registry_mutex());
      auto& reg = registry();
      standard = reg.at(kStandardVariant);
      auto it = reg.find(robust_variant_);
      if (it == reg.end()) {
        throw std::invalid_argument("unknown robust block variant '" + robust_variant_ + "'");
      }
      robust = it->second;
    }

    int map = desc_.input_resolution;
    stem_ = register_module("stem", make_conv(3, desc_.stem_width, 3, 1, 1));
    int in_ch = desc_.stem_width;
    for (std::size_t s = 0; s < desc_.stages.size(); ++s) {
      const auto& st = desc_.stages[s];
      if (st.downsample) {
        if (map < 2) {
          throw std::invalid_argument("stage " + std::to_string(s + 1) +
                                      " would downsample a " + std::to_string(map) + "x" +
                                      std::to_string(map) + " map below 1x1");
        }
        map = (map - 1) / 2 + 1;
      }
      auto seq = torch::nn::Sequential();
      for (int b = 0; b < st.depth; ++b) {
        const int stride = (b == 0 && st.downsample) ? 2 : 1;
        const auto& factory = st.robust_block ? robust : standard;
        auto block = factory(in_ch, st.width, stride);
        auto* preact = dynamic_cast<PreactBlockImpl*>(block.get());
        if (preact != nullptr) {
          seq->push_back(std::shared_ptr<PreactBlockImpl>(block, preact));
        } else {
          seq->push_back(torch::nn::AnyModule(block));
        }
        in_ch = st.width;
      }
      stages_.push_back(register_module("stage" + std::to_string(s + 1), seq));
    }
    bn_final_ = register_module("bn_final", torch::nn::BatchNorm2d(in_ch));
    head_ = register_module("head", torch::nn::Linear(in_ch, desc_.num_classes));

    init_parameters();
  }

  torch::Tensor forward(const torch::Tensor& x) {
    if (x.dim() != 4 || x.size(1) != 3 || x.size(2) != desc_.input_resolution ||
        x.size(3) != desc_.input_resolution) {
      throw std::invalid_argument("model expects input of shape Nx3x" +
                                  std::to_string(desc_.input_resolution) + "x" +
                                  std::to_string(desc_.input_resolution));
    }
    auto out = stem_->forward(x);
    for (auto& stage : stages_) out = stage->forward(out);
    out = torch::relu(bn_final_->forward(out));
    out = torch::adaptive_avg_pool2d(out, {1, 1}).flatten(1);
    return head_->forward(out);
  }

  const NetworkDescriptor& descriptor() const { return desc_; }
  std::uint64_t seed() const { return seed_; }
  const std::string& robust_variant() const { return robust_variant_; }

 private:
  // Deterministic initialization: each parameter gets its own substream keyed
  // by name, so two materializations with one seed are parameter-identical.
  void init_parameters() {
    torch::NoGradGuard guard;
    RngStream root(seed_);
    for (auto& p : named_parameters(/*recurse=*/true)) {
      auto stream = root.derive(p.key());
      auto& t = p.value();
      const auto name = p.key();
      if (name.find("conv") != std::string::npos || name.find("stem") != std::string::npos ||
          name.find("shortcut") != std::string::npos) {
        // He-normal on fan-in
        const double fan_in = static_cast<double>(t.numel() / t.size(0));
        fill_tensor(t, stream, std::sqrt(2.0 / fan_in));
      } else if (name.find("bn") != std::string::npos) {
        t.fill_(name.ends_with("weight") ? 1.0 : 0.0);
      } else if (name.find("head") != std::string::npos) {
        if (name.ends_with("weight")) {
          const double fan_in = static_cast<double>(t.size(1));
          fill_tensor(t, stream, 1.0 / std::sqrt(fan_in));
        } else {
          t.fill_(0.0);
        }
      } else {
        fill_tensor(t, stream, 0.01);
      }
    }
  }

  static void fill_tensor(torch::Tensor& t, RngStream& stream, double stddev) {
    auto cpu = torch::empty_like(t, torch::kFloat32).contiguous();
    stream.fill_normal(cpu.data_ptr<float>(), static_cast<std::size_t>(cpu.numel()), 0.0, stddev);
    t.copy_(cpu);
  }

  NetworkDescriptor desc_;
  std::uint64_t seed_;
  std::string robust_variant_;
  torch::nn::Conv2d stem_{nullptr};
  std::vector<torch::nn::Sequential> stages_;
  torch::nn::BatchNorm2d bn_final_{nullptr};
  torch::nn::Linear head_{nullptr};
};

torch::Tensor MaterializedModel::forward(const torch::Tensor& input) const {
  return net_->forward(input);
}

std::int64_t MaterializedModel::param_count() const {
  std::int64_t n = 0;
  for (const auto& p : net_->parameters()) n += p.numel();
  return n;
}

const NetworkDescriptor& MaterializedModel::descriptor() const { return net_->descriptor(); }

std::uint64_t MaterializedModel::seed() const { return net_->seed(); }

void MaterializedModel::set_train(bool training) const { net_->train(training); }

std::vector<torch::Tensor> MaterializedModel::parameters() const { return net_->parameters(); }

torch::nn::Module& MaterializedModel::module() const { return *net_; }

std::uint64_t MaterializedModel::state_hash() const { return module_state_hash(*net_); }

void MaterializedModel::save(const std::string& path) const {
  auto ck = checkpoint_from_module(*net_);
  ck.meta["format"] = 1;
  ck.meta["seed"] = static_cast<std::int64_t>(net_->seed());
  ck.text["descriptor"] = descriptor_to_string(net_->descriptor());
  ck.text["robust_variant"] = net_->robust_variant();
  save_checkpoint(path, ck);
}

MaterializedModel MaterializedModel::load(const std::string& path) {
  auto ck = load_checkpoint(path);
  if (ck.meta_or("format", -1) != 1) {
    throw std::runtime_error("'" + path + "' is not a model checkpoint of a supported version");
  }
  auto desc = descriptor_from_string(ck.text.at("descriptor"));
  auto model = materialize(desc, static_cast<std::uint64_t>(ck.meta.at("seed")),
                           ck.text.at("robust_variant"));
  load_named_tensors_into(model.module(), ck);
  return model;
}

MaterializedModel materialize(const NetworkDescriptor& desc, std::uint64_t seed,
                              const std::string& robust_variant) {
  MaterializedModel model;
  model.net_ = std::make_shared<WideResNetImpl>(desc, seed, robust_variant);
  model.net_->eval();
  return model;
}

}  // namespace rcnas
