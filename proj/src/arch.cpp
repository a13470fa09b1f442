#include "rcnas/arch.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "rcnas/rng.hpp"

namespace rcnas {

void validate_descriptor(const NetworkDescriptor& desc) {
  if (desc.stages.empty()) {
    throw std::invalid_argument("descriptor must have at least one stage");
  }
  if (desc.stem_width < 1) {
    throw std::invalid_argument("stem_width must be positive");
  }
  if (desc.num_classes < 1) {
    throw std::invalid_argument("num_classes must be positive");
  }
  if (desc.input_resolution < 1) {
    throw std::invalid_argument("input_resolution must be positive");
  }
  for (std::size_t i = 0; i < desc.stages.size(); ++i) {
    const auto& st = desc.stages[i];
    if (st.depth < 1) {
      throw std::invalid_argument("stage " + std::to_string(i + 1) + ": depth must be >= 1");
    }
    if (st.width < 8) {
      throw std::invalid_argument("stage " + std::to_string(i + 1) + ": width must be >= 8");
    }
    if (i == 0 && st.downsample) {
      throw std::invalid_argument("stage 1 must not downsample");
    }
  }
}

NetworkDescriptor teacher_from_name(const std::string& name) {
  int d = 0, k = 0;
  char tail = 0;
  if (std::sscanf(name.c_str(), "WRN-%d-%d%c", &d, &k, &tail) != 2) {
    throw std::invalid_argument("teacher name '" + name +
                                "' does not match the pattern WRN-<depth>-<widen>");
  }
  if (d <= 4 || (d - 4) % 6 != 0) {
    throw std::invalid_argument("teacher name '" + name +
                                "': depth must satisfy depth = 6n + 4 with n >= 1");
  }
  if (k < 1) {
    throw std::invalid_argument("teacher name '" + name + "': widen factor must be >= 1");
  }
  const int blocks = (d - 4) / 6;
  NetworkDescriptor desc;
  desc.stem_width = 16;
  desc.stages = {
      {blocks, 16 * k, false, false},
      {blocks, 32 * k, true, false},
      {blocks, 64 * k, true, false},
  };
  return desc;
}

namespace {

int round_width(double x) {
  const long long m = std::llround(x / 4.0);
  return static_cast<int>(std::max(8LL, 4LL * m));
}

}  // namespace

NetworkDescriptor apply_action(const NetworkDescriptor& teacher, const CompressionAction& action) {
  validate_descriptor(teacher);
  if (action.per_stage.size() != teacher.stages.size()) {
    throw std::invalid_argument("action has " + std::to_string(action.per_stage.size()) +
                                " stages, descriptor has " + std::to_string(teacher.stages.size()));
  }
  NetworkDescriptor out = teacher;
  for (std::size_t i = 0; i < teacher.stages.size(); ++i) {
    const auto& a = action.per_stage[i];
    if (!(a.width_keep > 0.0 && a.width_keep <= 1.0) ||
        !(a.depth_keep > 0.0 && a.depth_keep <= 1.0)) {
      throw std::invalid_argument("stage " + std::to_string(i + 1) +
                                  ": keep fractions must lie in (0, 1]");
    }
    const auto& t = teacher.stages[i];
    StageDescriptor s;
    s.depth = static_cast<int>(std::max(1LL, std::llround(a.depth_keep * t.depth)));
    s.width = round_width(a.width_keep * t.width);
    s.downsample = (i == 0) ? false : a.downsample;
    s.robust_block = a.robust_block;
    out.stages[i] = s;
  }
  return out;
}

CompressionAction identity_action(const NetworkDescriptor& desc) {
  CompressionAction a;
  a.per_stage.reserve(desc.stages.size());
  for (const auto& st : desc.stages) {
    a.per_stage.push_back({1.0, 1.0, st.downsample, st.robust_block});
  }
  return a;
}

CostReport cost_model(const NetworkDescriptor& desc, int resolution) {
  validate_descriptor(desc);
  if (resolution < 8) {
    throw std::invalid_argument("resolution must be >= 8");
  }

  auto conv_out = [](int size, int stride) { return (size - 1) / stride + 1; };

  CostReport report;
  std::int64_t map = resolution;

  // stem: 3x3, 3 -> stem_width, stride 1, pad 1
  report.flops += 3LL * desc.stem_width * 9 * map * map;
  report.params += 3LL * desc.stem_width * 9;
  std::int64_t in_ch = desc.stem_width;

  for (const auto& st : desc.stages) {
    std::int64_t stage_flops = 0;
    for (int b = 0; b < st.depth; ++b) {
      const int stride = (b == 0 && st.downsample) ? 2 : 1;
      const std::int64_t out_map = conv_out(static_cast<int>(map), stride);
      const std::int64_t width = st.width;

      // two 3x3 convolutions per pre-activation block
      stage_flops += in_ch * width * 9 * out_map * out_map;
      stage_flops += width * width * 9 * out_map * out_map;
      report.params += in_ch * width * 9 + width * width * 9;
      // batch-norm affine pairs preceding each convolution
      report.params += 2 * in_ch + 2 * width;

      // 1x1 projection shortcut on any width or stride change
      if (b == 0 && (in_ch != width || stride != 1)) {
        stage_flops += in_ch * width * out_map * out_map;
        report.params += in_ch * width;
      }

      in_ch = width;
      map = out_map;
    }
    report.per_stage_flops.push_back(stage_flops);
    report.flops += stage_flops;
  }

  // final batch-norm, global average pool (uncounted), linear head
  report.params += 2 * in_ch;
  report.flops += in_ch * desc.num_classes;
  report.params += in_ch * desc.num_classes + desc.num_classes;
  return report;
}

nlohmann::ordered_json descriptor_to_json(const NetworkDescriptor& desc) {
  nlohmann::ordered_json stages = nlohmann::ordered_json::array();
  for (const auto& st : desc.stages) {
    stages.push_back({{"depth", st.depth},
                      {"width", st.width},
                      {"downsample", st.downsample},
                      {"robust_block", st.robust_block}});
  }
  return {{"stages", std::move(stages)},
          {"stem_width", desc.stem_width},
          {"num_classes", desc.num_classes},
          {"input_resolution", desc.input_resolution}};
}

NetworkDescriptor descriptor_from_json(const nlohmann::json& j) {
  NetworkDescriptor desc;
  desc.stages.clear();
  for (const auto& st : j.at("stages")) {
    desc.stages.push_back({st.at("depth").get<int>(), st.at("width").get<int>(),
                           st.at("downsample").get<bool>(), st.at("robust_block").get<bool>()});
  }
  desc.stem_width = j.at("stem_width").get<int>();
  desc.num_classes = j.at("num_classes").get<int>();
  desc.input_resolution = j.at("input_resolution").get<int>();
  validate_descriptor(desc);
  return desc;
}

std::string descriptor_to_string(const NetworkDescriptor& desc) {
  return descriptor_to_json(desc).dump();
}

NetworkDescriptor descriptor_from_string(const std::string& text) {
  return descriptor_from_json(nlohmann::json::parse(text));
}

void save_descriptor(const NetworkDescriptor& desc, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw std::runtime_error("cannot open '" + path + "' for writing");
  }
  out << descriptor_to_json(desc).dump(2) << "\n";
}

NetworkDescriptor load_descriptor(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::runtime_error("cannot open descriptor file '" + path + "'");
  }
  nlohmann::json j;
  in >> j;
  return descriptor_from_json(j);
}

std::string descriptor_hash(const NetworkDescriptor& desc) {
  const std::uint64_t h = fnv1a64(descriptor_to_string(desc));
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

}  // namespace rcnas
