#include "skar/models.hpp"

#include <algorithm>
#include <cmath>

#include "skar/error.hpp"
#include "skar/random.hpp"

namespace skar {
namespace {

std::uint64_t name_hash(const std::string& name) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : name) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::vector<BlockPlan> chain(std::size_t in, const std::vector<std::pair<std::size_t, std::size_t>>& outs) {
  std::vector<BlockPlan> blocks;
  for (const auto& [out, stride] : outs) {
    blocks.push_back({in, out, stride});
    in = out;
  }
  return blocks;
}

}  // namespace

std::string to_string(Variant variant) {
  switch (variant) {
    case Variant::stgcn: return "stgcn";
    case Variant::agcn_2s: return "agcn_2s";
    case Variant::msg3d: return "msg3d";
  }
  return "unknown";
}

std::string to_string(ScalePreset preset) { return preset == ScalePreset::paper ? "paper" : "desk"; }

Variant parse_variant(const std::string& text) {
  if (text == "stgcn") return Variant::stgcn;
  if (text == "agcn_2s") return Variant::agcn_2s;
  if (text == "msg3d") return Variant::msg3d;
  throw DataError("unknown model variant '" + text + "' (expected stgcn, agcn_2s or msg3d)");
}

ScalePreset parse_preset(const std::string& text) {
  if (text == "paper") return ScalePreset::paper;
  if (text == "desk") return ScalePreset::desk;
  throw DataError("unknown scale preset '" + text + "' (expected paper or desk)");
}

ModelSpec ModelSpec::make(Variant variant, ScalePreset preset, std::size_t num_classes, SkeletonTopology topology) {
  ModelSpec spec;
  spec.variant = variant;
  spec.preset = preset;
  spec.num_classes = num_classes;
  spec.topology = std::move(topology);
  spec.temporal_kernel = 9;
  spec.window = 3;
  if (preset == ScalePreset::paper) {
    if (variant == Variant::msg3d) {
      spec.blocks = chain(3, {{96, 1}, {192, 2}, {384, 2}});
      spec.num_scales = 13;
    } else {
      spec.blocks = chain(3, {{64, 1}, {64, 1}, {64, 1}, {128, 2}, {128, 1}, {128, 1}, {256, 2}, {256, 1}, {256, 1}});
    }
  } else {
    if (variant == Variant::msg3d) {
      spec.blocks = chain(3, {{16, 2}, {32, 2}});
      spec.num_scales = 4;
    } else {
      spec.blocks = chain(3, {{16, 2}, {16, 2}, {32, 2}});
    }
  }
  spec.validate();
  return spec;
}

void ModelSpec::validate() const {
  if (blocks.empty()) throw ShapeError("model needs at least one block");
  if (num_classes < 1) throw ShapeError("model needs at least one class");
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    if (blocks[i].in_channels == 0 || blocks[i].out_channels == 0 || blocks[i].stride == 0) {
      throw ShapeError("block " + std::to_string(i) + " has a zero channel count or stride");
    }
    if (i > 0 && blocks[i].in_channels != blocks[i - 1].out_channels) {
      throw ShapeError("block " + std::to_string(i) + " expects " + std::to_string(blocks[i].in_channels) +
                       " channels but block " + std::to_string(i - 1) + " emits " +
                       std::to_string(blocks[i - 1].out_channels));
    }
  }
  if (blocks.front().in_channels != 3) throw ShapeError("first block must take 3 coordinate channels");
  if (temporal_kernel % 2 == 0) throw ShapeError("temporal kernel must be odd");
  if (window % 2 == 0) throw ShapeError("window must be odd");
  if (num_scales == 0) throw ShapeError("need at least one scale");
}

LayerSpec ModelSpec::layer_spec(std::size_t block) const {
  LayerSpec layer;
  switch (variant) {
    case Variant::stgcn: layer.kind = LayerKind::spatial_gcn; break;
    case Variant::agcn_2s: layer.kind = LayerKind::adaptive_gcn; break;
    case Variant::msg3d: layer.kind = LayerKind::ms_gcn; break;
  }
  layer.in_channels = blocks.at(block).in_channels;
  layer.out_channels = blocks.at(block).out_channels;
  layer.temporal_stride = blocks.at(block).stride;
  layer.temporal_kernel = temporal_kernel;
  layer.num_scales = num_scales;
  layer.window = window;
  layer.activation = Activation::relu;
  layer.residual = true;
  return layer;
}

bool ModelSpec::same_backbone(const ModelSpec& other) const {
  return variant == other.variant && topology == other.topology && blocks == other.blocks &&
         num_scales == other.num_scales && window == other.window && temporal_kernel == other.temporal_kernel;
}

std::size_t Model::add_param(std::string name, Shape shape, RoleTag role, double bound, std::uint64_t seed) {
  Tensor<double> tensor(shape);
  if (bound > 0.0) {
    Rng rng(derive_seed(seed, name_hash(name)));
    for (double& v : tensor.mutable_values()) v = rng.uniform(-bound, bound);
  }
  if (index_.contains(name)) throw ShapeError("duplicate parameter name " + name);
  index_[name] = params_.size();
  params_.emplace_back(std::move(name), std::move(tensor), role);
  return params_.size() - 1;
}

Model Model::build(const ModelSpec& spec, std::uint64_t seed) {
  spec.validate();
  Model model;
  model.spec_ = spec;
  const AdjacencyMatrix a = build_adjacency(spec.topology);
  model.ops_ = GraphOperators<double>::build(a, spec.num_scales, spec.window);
  const std::size_t joints = spec.topology.joint_count();

  for (const std::string& prefix : model.stream_prefixes()) {
    StreamSlots stream;
    for (std::size_t i = 0; i < spec.blocks.size(); ++i) {
      const BlockPlan& plan = spec.blocks[i];
      const std::string base = prefix + "block" + std::to_string(i) + ".";
      const double cin = static_cast<double>(plan.in_channels);
      BlockSlots slots;
      switch (spec.variant) {
        case Variant::stgcn:
          slots.spatial.push_back(model.add_param(base + "spatial.W", {plan.out_channels, plan.in_channels},
                                                  RoleTag::spatial, std::sqrt(6.0 / cin), seed));
          break;
        case Variant::agcn_2s: {
          const std::size_t embed = std::max<std::size_t>(1, plan.in_channels / 4);
          slots.spatial.push_back(model.add_param(base + "spatial.W", {plan.out_channels, plan.in_channels},
                                                  RoleTag::spatial, std::sqrt(6.0 / cin), seed));
          slots.b = model.add_param(base + "adaptive.B", {joints, joints}, RoleTag::adaptive, 0.0, seed);
          slots.theta = model.add_param(base + "embedding.theta", {plan.in_channels, embed}, RoleTag::embedding,
                                        std::sqrt(3.0 / cin), seed);
          slots.phi = model.add_param(base + "embedding.phi", {plan.in_channels, embed}, RoleTag::embedding,
                                      std::sqrt(3.0 / cin), seed);
          break;
        }
        case Variant::msg3d: {
          // The pathways are summed, so each map is scaled down by their count.
          const double fan_in = cin * static_cast<double>(spec.num_scales + 1);
          for (std::size_t k = 0; k < spec.num_scales; ++k) {
            slots.spatial.push_back(model.add_param(base + "spatial.W" + std::to_string(k + 1),
                                                    {plan.out_channels, plan.in_channels}, RoleTag::spatial,
                                                    std::sqrt(6.0 / fan_in), seed));
          }
          slots.g3d = model.add_param(base + "g3d.W", {plan.out_channels, plan.in_channels}, RoleTag::spatial,
                                      std::sqrt(6.0 / fan_in), seed);
          break;
        }
      }
      const double temporal_fan_in = static_cast<double>(plan.out_channels * spec.temporal_kernel);
      slots.temporal = model.add_param(base + "temporal.W",
                                       {plan.out_channels, plan.out_channels, spec.temporal_kernel},
                                       RoleTag::temporal, std::sqrt(6.0 / temporal_fan_in), seed);
      stream.blocks.push_back(std::move(slots));
    }
    stream.head = model.add_param(prefix + "head.W", {spec.num_classes, spec.blocks.back().out_channels},
                                  RoleTag::head, 0.0, seed);
    model.streams_.push_back(std::move(stream));
  }
  return model;
}

Model::Model(const Model& other)
    : spec_(other.spec_),
      index_(other.index_),
      streams_(other.streams_),
      ops_(other.ops_),
      plan_name_(other.plan_name_),
      head_pending_(other.head_pending_) {
  params_.reserve(other.params_.size());
  for (const Param& p : other.params_) {
    params_.emplace_back(p.name(), p.tensor().detach(), p.role());
    params_.back().set_trainable(p.trainable());
  }
}

Model& Model::operator=(const Model& other) {
  if (this != &other) *this = Model(other);
  return *this;
}

Model::Param& Model::parameter(const std::string& name) {
  const auto it = index_.find(name);
  if (it == index_.end()) throw ShapeError("model has no parameter named " + name);
  return params_[it->second];
}

const Model::Param& Model::parameter(const std::string& name) const {
  return const_cast<Model*>(this)->parameter(name);
}

std::vector<std::string> Model::stream_prefixes() const {
  if (spec_.streams() == 2) return {"joint.", "bone."};
  return {""};
}

Batch Model::make_batch(const std::vector<const ActionSample*>& samples) const {
  std::vector<const SkeletonSequence*> sequences;
  Batch batch;
  for (const ActionSample* s : samples) {
    sequences.push_back(&s->sequence);
    batch.labels.push_back(s->label);
  }
  Batch out = make_batch(sequences);
  out.labels = std::move(batch.labels);
  return out;
}

Batch Model::make_batch(const std::vector<const SkeletonSequence*>& sequences) const {
  if (sequences.empty()) throw ShapeError("cannot build an empty batch");
  const SkeletonSequence& first = *sequences.front();
  const std::size_t frames = first.frames();
  const std::size_t bodies = first.bodies();
  const std::size_t joints = spec_.topology.joint_count();
  const std::size_t n = sequences.size();
  for (const SkeletonSequence* s : sequences) {
    if (s->joints() != joints) {
      throw ShapeError("sequence has " + std::to_string(s->joints()) + " joints but the model topology has " +
                       std::to_string(joints));
    }
    if (s->frames() != frames || s->bodies() != bodies) {
      throw ShapeError("batch sequences must share frame and body counts");
    }
  }
  auto fill = [&](const std::vector<const SkeletonSequence*>& source) {
    std::vector<double> values(n * 3 * frames * joints * bodies);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t t = 0; t < frames; ++t) {
        for (std::size_t m = 0; m < bodies; ++m) {
          for (std::size_t v = 0; v < joints; ++v) {
            const Point3& p = source[i]->at(t, m, v);
            for (std::size_t c = 0; c < 3; ++c) {
              values[(((i * 3 + c) * frames + t) * joints + v) * bodies + m] = p[c];
            }
          }
        }
      }
    }
    return Tensor<double>(Shape{n, 3, frames, joints, bodies}, std::move(values));
  };
  Batch batch;
  batch.joints = fill(sequences);
  if (spec_.streams() == 2) {
    std::vector<SkeletonSequence> bones;
    bones.reserve(n);
    for (const SkeletonSequence* s : sequences) bones.push_back(bone_vectors(*s, spec_.topology));
    std::vector<const SkeletonSequence*> pointers;
    for (const auto& b : bones) pointers.push_back(&b);
    batch.bones = fill(pointers);
  }
  return batch;
}

Tensor<double> Model::stream_forward(const StreamSlots& stream, const Tensor<double>& input) const {
  Tensor<double> x = input;
  for (std::size_t i = 0; i < stream.blocks.size(); ++i) {
    const BlockSlots& slots = stream.blocks[i];
    BlockParams<double> block;
    for (std::size_t s : slots.spatial) block.spatial.push_back(params_[s].tensor());
    if (slots.g3d) block.g3d_weight = params_[*slots.g3d].tensor();
    if (slots.b) block.b = params_[*slots.b].tensor();
    if (slots.theta) block.theta = params_[*slots.theta].tensor();
    if (slots.phi) block.phi = params_[*slots.phi].tensor();
    block.temporal = params_[slots.temporal].tensor();
    x = stgcn_block(x, spec_.layer_spec(i), ops_, block);
  }
  return head_logits(x, params_[stream.head].tensor());
}

std::vector<Tensor<double>> Model::stream_logits(const Batch& batch) const {
  std::vector<Tensor<double>> logits;
  logits.push_back(stream_forward(streams_[0], batch.joints));
  if (streams_.size() == 2) {
    if (!batch.bones) throw ShapeError("two-stream model needs bone inputs");
    logits.push_back(stream_forward(streams_[1], *batch.bones));
  }
  return logits;
}

Tensor<double> Model::loss(const Batch& batch) const {
  const auto logits = stream_logits(batch);
  Tensor<double> total = cross_entropy(logits[0], batch.labels);
  for (std::size_t s = 1; s < logits.size(); ++s) total = add(total, cross_entropy(logits[s], batch.labels));
  return total;
}

std::vector<std::vector<double>> Model::predict_batch(const Batch& batch) const {
  const auto logits = stream_logits(batch);
  const std::size_t n = logits[0].dim(0);
  const std::size_t classes = logits[0].dim(1);
  std::vector<std::vector<double>> scores(n, std::vector<double>(classes, 0.0));
  for (const auto& stream : logits) {
    const Tensor<double> probs = softmax(stream.detach(), 1);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < classes; ++j) scores[i][j] += probs[i * classes + j];
    }
  }
  if (logits.size() > 1) {
    for (auto& row : scores) {
      double total = 0.0;
      for (double v : row) total += v;
      for (double& v : row) v /= total;
    }
  }
  return scores;
}

void Model::reset_head(std::size_t num_classes) {
  spec_.num_classes = num_classes;
  for (const StreamSlots& stream : streams_) {
    Param& old = params_[stream.head];
    const bool trainable = old.trainable();
    Param fresh(old.name(), Tensor<double>(Shape{num_classes, spec_.blocks.back().out_channels}), RoleTag::head);
    fresh.set_trainable(trainable);
    old = std::move(fresh);
  }
}

std::vector<double> predict(const Model& model, const SkeletonSequence& sequence) {
  return model.predict_batch(model.make_batch(std::vector<const SkeletonSequence*>{&sequence})).front();
}

std::vector<Parameter<double>*> parameter_view(Model& model, const std::set<RoleTag>& roles) {
  std::vector<Parameter<double>*> out;
  for (auto& p : model.parameters()) {
    if (roles.contains(p.role())) out.push_back(&p);
  }
  return out;
}

std::vector<const Parameter<double>*> parameter_view(const Model& model, const std::set<RoleTag>& roles) {
  std::vector<const Parameter<double>*> out;
  for (const auto& p : model.parameters()) {
    if (roles.contains(p.role())) out.push_back(&p);
  }
  return out;
}

const std::set<RoleTag>& all_role_tags() {
  static const std::set<RoleTag> tags{RoleTag::spatial, RoleTag::temporal, RoleTag::adaptive, RoleTag::head,
                                      RoleTag::embedding};
  return tags;
}

}  // namespace skar
