#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

namespace rcnas {

// One stage of a staged residual network: `depth` pre-activation blocks at a
// common `width`. `downsample` puts a stride-2 first layer on the stage;
// `robust_block` swaps in the registered robust block variant.
struct StageDescriptor {
  int depth = 1;
  int width = 16;
  bool downsample = false;
  bool robust_block = false;

  bool operator==(const StageDescriptor&) const = default;
};

// Immutable description of a whole network: stem conv -> stages -> global
// pooling -> linear head. All operations return new descriptors.
struct NetworkDescriptor {
  std::vector<StageDescriptor> stages;
  int stem_width = 16;
  int num_classes = 10;
  int input_resolution = 32;

  bool operator==(const NetworkDescriptor&) const = default;
};

// Per-stage compression decision. Keep fractions are in (0, 1]; the booleans
// overwrite the stage flags (stage 1 downsample is forced off on apply).
struct StageAction {
  double width_keep = 1.0;
  double depth_keep = 1.0;
  bool downsample = false;
  bool robust_block = false;
};

struct CompressionAction {
  std::vector<StageAction> per_stage;
};

// Analytic cost of a descriptor at a given input resolution. FLOPs are
// multiply-accumulates (one MAC counted once), the convention that matches
// published wide-residual cost tables.
struct CostReport {
  std::int64_t params = 0;
  std::int64_t flops = 0;
  std::vector<std::int64_t> per_stage_flops;
};

// Throws std::invalid_argument when a descriptor violates its invariants
// (empty stages, depth < 1, width < 8, stage-1 downsample set, ...).
void validate_descriptor(const NetworkDescriptor& desc);

// Builds the standard three-stage wide residual teacher from a "WRN-d-k"
// name: (d-4)/6 blocks per stage, widths (16k, 32k, 64k), downsampling on
// stages 2 and 3.
NetworkDescriptor teacher_from_name(const std::string& name);

// Applies a compression action: depth_i -> max(1, round(keep*depth_i)),
// width_i -> max(8, round-to-multiple-of-4(keep*width_i)); flags copied from
// the action. The teacher is not mutated.
NetworkDescriptor apply_action(const NetworkDescriptor& teacher, const CompressionAction& action);

CompressionAction identity_action(const NetworkDescriptor& desc);

// Analytic parameter and MAC count. Counts 3x3 convolutions, 1x1 shortcut
// convolutions (on width or stride change), batch-norm affine pairs and the
// linear head, mirroring what materialize() instantiates.
CostReport cost_model(const NetworkDescriptor& desc, int resolution);

inline CostReport cost_model(const NetworkDescriptor& desc) {
  return cost_model(desc, desc.input_resolution);
}

// Canonical JSON form: fixed key order, integer/boolean fields only, so the
// serialization is bit-stable and hashable.
nlohmann::ordered_json descriptor_to_json(const NetworkDescriptor& desc);
NetworkDescriptor descriptor_from_json(const nlohmann::json& j);
std::string descriptor_to_string(const NetworkDescriptor& desc);
NetworkDescriptor descriptor_from_string(const std::string& text);
void save_descriptor(const NetworkDescriptor& desc, const std::string& path);
NetworkDescriptor load_descriptor(const std::string& path);

// Hash of the canonical JSON form, as fixed-width hex. Used as the teacher
// identity in run records and cache keys.
std::string descriptor_hash(const NetworkDescriptor& desc);

}  // namespace rcnas
