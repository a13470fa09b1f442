#include "rcnas/tensor_io.hpp"

#include <fstream>
#include <stdexcept>

#include "rcnas/rng.hpp"

namespace rcnas {

namespace {

constexpr char kMagic[6] = {'R', 'C', 'N', 'A', 'S', '\0'};

std::uint8_t dtype_code(torch::ScalarType t) {
  switch (t) {
    case torch::kFloat32: return 0;
    case torch::kFloat64: return 1;
    case torch::kInt64: return 2;
    case torch::kUInt8: return 3;
    default: throw std::runtime_error("unsupported tensor dtype in checkpoint");
  }
}

torch::ScalarType dtype_from_code(std::uint8_t c) {
  switch (c) {
    case 0: return torch::kFloat32;
    case 1: return torch::kFloat64;
    case 2: return torch::kInt64;
    case 3: return torch::kUInt8;
    default: throw std::runtime_error("corrupt checkpoint: unknown dtype code");
  }
}

template <typename T>
void write_pod(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw std::runtime_error("corrupt checkpoint: truncated file");
  return v;
}

void write_string(std::ostream& out, const std::string& s) {
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& in) {
  const auto n = read_pod<std::uint32_t>(in);
  std::string s(n, '\0');
  in.read(s.data(), n);
  if (!in) throw std::runtime_error("corrupt checkpoint: truncated string");
  return s;
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out.write(kMagic, sizeof(kMagic));
  write_pod<std::uint32_t>(out, ck.version);
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(ck.meta.size()));
  for (const auto& [k, v] : ck.meta) {
    write_string(out, k);
    write_pod<std::int64_t>(out, v);
  }
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(ck.text.size()));
  for (const auto& [k, v] : ck.text) {
    write_string(out, k);
    write_string(out, v);
  }
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(ck.tensors.size()));
  for (const auto& [name, tensor] : ck.tensors) {
    auto t = tensor.detach().contiguous().cpu();
    write_string(out, name);
    write_pod<std::uint8_t>(out, dtype_code(t.scalar_type()));
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(t.dim()));
    for (std::int64_t d : t.sizes()) write_pod<std::int64_t>(out, d);
    const auto nbytes = static_cast<std::uint64_t>(t.numel() * t.element_size());
    write_pod<std::uint64_t>(out, nbytes);
    out.write(static_cast<const char*>(t.const_data_ptr()), static_cast<std::streamsize>(nbytes));
  }
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint '" + path + "'");
  char magic[sizeof(kMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw std::runtime_error("'" + path + "' is not a checkpoint file");
  }
  Checkpoint ck;
  ck.version = read_pod<std::uint32_t>(in);
  const auto n_meta = read_pod<std::uint32_t>(in);
  for (std::uint32_t i = 0; i < n_meta; ++i) {
    auto k = read_string(in);
    ck.meta[k] = read_pod<std::int64_t>(in);
  }
  const auto n_text = read_pod<std::uint32_t>(in);
  for (std::uint32_t i = 0; i < n_text; ++i) {
    auto k = read_string(in);
    ck.text[k] = read_string(in);
  }
  const auto n_tensors = read_pod<std::uint32_t>(in);
  for (std::uint32_t i = 0; i < n_tensors; ++i) {
    auto name = read_string(in);
    const auto dtype = dtype_from_code(read_pod<std::uint8_t>(in));
    const auto ndim = read_pod<std::uint32_t>(in);
    std::vector<std::int64_t> dims(ndim);
    for (auto& d : dims) d = read_pod<std::int64_t>(in);
    const auto nbytes = read_pod<std::uint64_t>(in);
    auto t = torch::empty(dims, torch::TensorOptions().dtype(dtype));
    if (static_cast<std::uint64_t>(t.numel() * t.element_size()) != nbytes) {
      throw std::runtime_error("corrupt checkpoint: tensor size mismatch for '" + name + "'");
    }
    in.read(static_cast<char*>(t.data_ptr()), static_cast<std::streamsize>(nbytes));
    if (!in) throw std::runtime_error("corrupt checkpoint: truncated tensor '" + name + "'");
    ck.tensors.emplace_back(std::move(name), std::move(t));
  }
  return ck;
}

void load_named_tensors_into(torch::nn::Module& module, const Checkpoint& ck) {
  torch::NoGradGuard guard;
  auto params = module.named_parameters(/*recurse=*/true);
  auto buffers = module.named_buffers(/*recurse=*/true);
  for (const auto& [name, tensor] : ck.tensors) {
    torch::Tensor dst;
    if (auto* p = params.find(name)) {
      dst = *p;
    } else if (auto* b = buffers.find(name)) {
      dst = *b;
    } else {
      throw std::runtime_error("checkpoint tensor '" + name + "' has no destination in module");
    }
    if (dst.sizes() != tensor.sizes() || dst.scalar_type() != tensor.scalar_type()) {
      throw std::runtime_error("checkpoint tensor '" + name + "' has incompatible shape or dtype");
    }
    dst.copy_(tensor);
  }
}

Checkpoint checkpoint_from_module(const torch::nn::Module& module) {
  Checkpoint ck;
  for (const auto& p : module.named_parameters(/*recurse=*/true)) {
    ck.tensors.emplace_back(p.key(), p.value().detach().clone());
  }
  for (const auto& b : module.named_buffers(/*recurse=*/true)) {
    ck.tensors.emplace_back(b.key(), b.value().detach().clone());
  }
  return ck;
}

std::uint64_t module_state_hash(const torch::nn::Module& module) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto absorb = [&h](const std::string& name, const torch::Tensor& t) {
    h = fnv1a64(name, h);
    auto c = t.detach().contiguous().cpu();
    h = fnv1a64(std::string_view(static_cast<const char*>(c.const_data_ptr()),
                                 static_cast<std::size_t>(c.numel() * c.element_size())),
                h);
  };
  for (const auto& p : module.named_parameters(/*recurse=*/true)) absorb(p.key(), p.value());
  for (const auto& b : module.named_buffers(/*recurse=*/true)) absorb(b.key(), b.value());
  return h;
}

}  // namespace rcnas
