#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "skar/layers.hpp"
#include "skar/sequence.hpp"
#include "skar/skelgraph.hpp"
#include "skar/tensor.hpp"

namespace skar {

enum class Variant { stgcn, agcn_2s, msg3d };
enum class ScalePreset { paper, desk };

std::string to_string(Variant variant);
std::string to_string(ScalePreset preset);
Variant parse_variant(const std::string& text);
ScalePreset parse_preset(const std::string& text);

struct BlockPlan {
  std::size_t in_channels;
  std::size_t out_channels;
  std::size_t stride;
  bool operator==(const BlockPlan&) const = default;
};

struct ModelSpec {
  Variant variant = Variant::stgcn;
  SkeletonTopology topology = SkeletonTopology::kinect_v2();
  std::size_t num_classes = 2;
  std::vector<BlockPlan> blocks;
  std::size_t num_scales = 1;  // msg3d multi-scale pathway
  std::size_t window = 3;      // msg3d windowed pathway
  std::size_t temporal_kernel = 9;
  ScalePreset preset = ScalePreset::desk;

  // Paper preset: 9 / 9 per stream / 3 blocks. Desk preset: 3 / 3 / 2
  // blocks with at most 32 channels.
  static ModelSpec make(Variant variant, ScalePreset preset, std::size_t num_classes,
                        SkeletonTopology topology = SkeletonTopology::kinect_v2());

  void validate() const;
  LayerSpec layer_spec(std::size_t block) const;
  std::size_t streams() const { return variant == Variant::agcn_2s ? 2 : 1; }
  // Equal in everything except the class count.
  bool same_backbone(const ModelSpec& other) const;
};

// Model input for a minibatch: joint positions as (N, 3, T, V, M), bone
// vectors for the second stream, and labels.
struct Batch {
  Tensor<double> joints;
  std::optional<Tensor<double>> bones;
  std::vector<std::size_t> labels;
};

class Model {
 public:
  using Param = Parameter<double>;

  static Model build(const ModelSpec& spec, std::uint64_t seed);

  // Copies own their parameter values; nothing is shared with the source.
  Model(const Model& other);
  Model& operator=(const Model& other);
  Model(Model&&) = default;
  Model& operator=(Model&&) = default;

  const ModelSpec& spec() const { return spec_; }
  std::size_t streams() const { return spec_.streams(); }

  std::vector<Param>& parameters() { return params_; }
  const std::vector<Param>& parameters() const { return params_; }
  Param& parameter(const std::string& name);
  const Param& parameter(const std::string& name) const;
  bool has_parameter(const std::string& name) const { return index_.contains(name); }

  // Stream prefixes ("" for single-stream, "joint." / "bone." for two).
  std::vector<std::string> stream_prefixes() const;

  Batch make_batch(const std::vector<const ActionSample*>& samples) const;
  Batch make_batch(const std::vector<const SkeletonSequence*>& sequences) const;

  // Raw class logits per stream, each [N, classes].
  std::vector<Tensor<double>> stream_logits(const Batch& batch) const;
  // Sum over streams of the mean cross-entropy.
  Tensor<double> loss(const Batch& batch) const;
  // Per-sample class probabilities; two streams are fused by summing their
  // softmax scores and renormalizing.
  std::vector<std::vector<double>> predict_batch(const Batch& batch) const;

  const std::string& plan_name() const { return plan_name_; }
  void set_plan_name(std::string name) { plan_name_ = std::move(name); }
  bool head_pending() const { return head_pending_; }
  void set_head_pending(bool flag) { head_pending_ = flag; }

  // Replaces every head weight with zeros sized for num_classes.
  void reset_head(std::size_t num_classes);

 private:
  struct BlockSlots {
    std::vector<std::size_t> spatial;
    std::optional<std::size_t> g3d;
    std::optional<std::size_t> b;
    std::optional<std::size_t> theta;
    std::optional<std::size_t> phi;
    std::size_t temporal = 0;
  };
  struct StreamSlots {
    std::vector<BlockSlots> blocks;
    std::size_t head = 0;
  };

  Model() = default;
  std::size_t add_param(std::string name, Shape shape, RoleTag role, double bound, std::uint64_t seed);
  Tensor<double> stream_forward(const StreamSlots& stream, const Tensor<double>& input) const;

  ModelSpec spec_;
  std::vector<Param> params_;
  std::map<std::string, std::size_t> index_;
  std::vector<StreamSlots> streams_;
  GraphOperators<double> ops_;
  std::string plan_name_ = "none";
  bool head_pending_ = false;
};

std::vector<double> predict(const Model& model, const SkeletonSequence& sequence);

// Parameters whose role tag is in the filter, in construction order.
std::vector<Parameter<double>*> parameter_view(Model& model, const std::set<RoleTag>& roles);
std::vector<const Parameter<double>*> parameter_view(const Model& model, const std::set<RoleTag>& roles);

const std::set<RoleTag>& all_role_tags();

}  // namespace skar
