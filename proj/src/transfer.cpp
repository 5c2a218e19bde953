#include "skar/transfer.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "skar/error.hpp"
#include "skar/textio.hpp"

namespace skar {
namespace {

std::vector<std::string> split_ws(const std::string& line) {
  std::istringstream in(line);
  std::vector<std::string> out;
  std::string token;
  while (in >> token) out.push_back(token);
  return out;
}

std::size_t parse_size(const std::string& text, const std::string& where) {
  std::size_t value = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw DataError(where + ": malformed integer '" + text + "'");
  }
  return value;
}

bool parse_real(const std::string& text, double& value) {
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  return ec == std::errc() && ptr == text.data() + text.size();
}

std::string shape_text(const Shape& shape) {
  std::string out;
  for (std::size_t i = 0; i < shape.size(); ++i) out += (i ? "x" : "") + std::to_string(shape[i]);
  return out;
}

Shape parse_shape(const std::string& text, const std::string& where) {
  Shape shape;
  std::size_t start = 0;
  while (true) {
    const std::size_t x = text.find('x', start);
    shape.push_back(parse_size(text.substr(start, x - start), where));
    if (x == std::string::npos) break;
    start = x + 1;
  }
  return shape;
}

}  // namespace

std::string format_checkpoint(const Model& model, const CheckpointMeta& meta) {
  const ModelSpec& spec = model.spec();
  std::string text = "SKCKPT " + std::to_string(kCheckpointVersion) + "\n[spec]\n";
  text += "variant " + to_string(spec.variant) + "\n";
  text += "preset " + to_string(spec.preset) + "\n";
  text += "classes " + std::to_string(spec.num_classes) + "\n";
  text += "joints " + std::to_string(spec.topology.joint_count()) + "\n";
  text += "center " + std::to_string(spec.topology.center_joint()) + "\n";
  text += "spine " + std::to_string(spec.topology.spine_top_joint()) + "\n";
  text += "edges";
  for (const auto& [a, b] : spec.topology.edges()) text += " " + std::to_string(a) + "-" + std::to_string(b);
  text += "\nblocks";
  for (const auto& b : spec.blocks) {
    text += " " + std::to_string(b.in_channels) + ":" + std::to_string(b.out_channels) + ":" + std::to_string(b.stride);
  }
  text += "\nscales " + std::to_string(spec.num_scales) + "\n";
  text += "window " + std::to_string(spec.window) + "\n";
  text += "kernel " + std::to_string(spec.temporal_kernel) + "\n";
  text += "[meta]\n";
  text += "dataset " + meta.dataset + "\n";
  text += "seed " + std::to_string(meta.seed) + "\n";
  text += "epochs " + std::to_string(meta.epochs) + "\n";
  text += "accuracy " + format_exact(meta.accuracy) + "\n";
  text += "[params]\n";
  for (const auto& p : model.parameters()) {
    text += p.name() + " " + shape_text(p.tensor().shape());
    for (double v : p.tensor().values()) text += " " + format_exact(v);
    text += "\n";
  }
  return text;
}

void save_checkpoint(const Model& model, const CheckpointMeta& meta, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  out << format_checkpoint(model, meta);
  if (!out) throw DataError("failed writing checkpoint " + path.string());
}

LoadedCheckpoint parse_checkpoint(const std::string& text, const std::string& source_name,
                                  const std::optional<ModelSpec>& expected) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  auto where = [&] { return source_name + ":" + std::to_string(line_no); };

  if (!std::getline(in, line)) throw DataError(source_name + ": empty checkpoint");
  ++line_no;
  const auto header = split_ws(line);
  if (header.size() != 2 || header[0] != "SKCKPT") throw DataError(where() + ": not a checkpoint (expected SKCKPT)");
  if (header[1] != std::to_string(kCheckpointVersion)) {
    throw DataError(where() + ": unsupported checkpoint version " + header[1]);
  }

  std::map<std::string, std::vector<std::string>> spec_fields;
  CheckpointMeta meta;
  std::string section;
  std::map<std::string, std::pair<Shape, std::vector<double>>> values;
  std::vector<std::string> order;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line == "[spec]" || line == "[meta]" || line == "[params]") {
      section = line;
      continue;
    }
    auto fields = split_ws(line);
    if (fields.empty()) continue;
    if (section == "[spec]") {
      const std::string key = fields[0];
      fields.erase(fields.begin());
      spec_fields[key] = fields;
    } else if (section == "[meta]") {
      if (fields.size() != 2) throw DataError(where() + ": expected 'key value' in meta block");
      if (fields[0] == "dataset") {
        meta.dataset = fields[1];
      } else if (fields[0] == "seed") {
        meta.seed = std::stoull(fields[1]);
      } else if (fields[0] == "epochs") {
        meta.epochs = parse_size(fields[1], where());
      } else if (fields[0] == "accuracy") {
        if (!parse_real(fields[1], meta.accuracy)) throw DataError(where() + ": malformed accuracy");
      } else {
        throw DataError(where() + ": unknown meta key '" + fields[0] + "'");
      }
    } else if (section == "[params]") {
      if (fields.size() < 2) throw DataError(where() + ": parameter line needs a name and a shape");
      const std::string& name = fields[0];
      const Shape shape = parse_shape(fields[1], where() + " (parameter " + name + ")");
      if (fields.size() - 2 != numel(shape)) {
        throw DataError(where() + ": parameter " + name + " declares " + std::to_string(numel(shape)) +
                        " values but the line has " + std::to_string(fields.size() - 2));
      }
      std::vector<double> data(numel(shape));
      for (std::size_t i = 0; i < data.size(); ++i) {
        if (!parse_real(fields[i + 2], data[i]) || !std::isfinite(data[i])) {
          throw DataError(where() + ": parameter " + name + " has a corrupt value '" + fields[i + 2] + "'");
        }
      }
      if (values.contains(name)) throw DataError(where() + ": parameter " + name + " appears twice");
      values[name] = {shape, std::move(data)};
      order.push_back(name);
    } else {
      throw DataError(where() + ": content outside a [spec]/[meta]/[params] block");
    }
  }

  auto field = [&](const std::string& key) -> const std::vector<std::string>& {
    const auto it = spec_fields.find(key);
    if (it == spec_fields.end()) throw DataError(source_name + ": spec block lacks '" + key + "'");
    return it->second;
  };
  auto single = [&](const std::string& key) {
    const auto& f = field(key);
    if (f.size() != 1) throw DataError(source_name + ": spec '" + key + "' needs one value");
    return f[0];
  };
  auto number = [&](const std::string& key) { return parse_size(single(key), source_name + " spec " + key); };

  std::vector<Edge> edges;
  for (const auto& e : field("edges")) {
    const auto dash = e.find('-');
    if (dash == std::string::npos) throw DataError(source_name + ": malformed edge '" + e + "'");
    edges.emplace_back(parse_size(e.substr(0, dash), source_name), parse_size(e.substr(dash + 1), source_name));
  }
  ModelSpec spec;
  spec.variant = parse_variant(single("variant"));
  spec.preset = parse_preset(single("preset"));
  spec.num_classes = number("classes");
  spec.topology = SkeletonTopology(number("joints"), std::move(edges), number("center"), number("spine"));
  for (const auto& b : field("blocks")) {
    const auto first = b.find(':');
    const auto second = b.find(':', first + 1);
    if (first == std::string::npos || second == std::string::npos) {
      throw DataError(source_name + ": malformed block '" + b + "'");
    }
    spec.blocks.push_back({parse_size(b.substr(0, first), source_name),
                           parse_size(b.substr(first + 1, second - first - 1), source_name),
                           parse_size(b.substr(second + 1), source_name)});
  }
  spec.num_scales = number("scales");
  spec.window = number("window");
  spec.temporal_kernel = number("kernel");
  try {
    spec.validate();
  } catch (const ShapeError& e) {
    throw DataError(source_name + ": invalid model spec: " + e.what());
  }
  if (expected && !spec.same_backbone(*expected)) {
    throw DataError(source_name + ": checkpoint backbone (" + to_string(spec.variant) + ", " +
                    std::to_string(spec.blocks.size()) + " blocks) does not match the expected model");
  }

  LoadedCheckpoint out{Model::build(spec, 0), meta};
  for (auto& p : out.model.parameters()) {
    const auto it = values.find(p.name());
    if (it == values.end()) throw DataError(source_name + ": missing parameter " + p.name());
    if (it->second.first != p.tensor().shape()) {
      throw DataError(source_name + ": parameter " + p.name() + " has shape " + shape_text(it->second.first) +
                      ", expected " + shape_text(p.tensor().shape()));
    }
    std::copy(it->second.second.begin(), it->second.second.end(), p.tensor().mutable_values().begin());
    values.erase(it);
  }
  if (!values.empty()) throw DataError(source_name + ": unexpected parameter " + values.begin()->first);
  if (expected && expected->num_classes != spec.num_classes) out.model.set_head_pending(true);
  return out;
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path, const std::optional<ModelSpec>& expected) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_checkpoint(buffer.str(), path.string(), expected);
}

void replace_head(Model& model, std::size_t num_classes) {
  if (num_classes < 2) {
    throw DataError("a classifier head needs at least 2 classes, got " + std::to_string(num_classes));
  }
  model.reset_head(num_classes);
  model.set_head_pending(false);
}

FreezePlan make_freeze_plan(const std::string& name, const ScheduleConfig& source_schedule, Config2Rate config2_rate) {
  FreezePlan plan;
  plan.name = name;
  if (name == "none") {
    plan.trainable = all_role_tags();
    plan.lr_override = source_schedule;
  } else if (name == "config1") {
    plan.trainable = {RoleTag::head};
    plan.lr_override = {source_schedule.initial_lr / 10.0, 0.1, 10, 10};
  } else if (name == "config2") {
    plan.trainable = {RoleTag::temporal, RoleTag::head};
    const double lr = config2_rate == Config2Rate::multiply ? source_schedule.initial_lr * 0.01 : 0.01;
    plan.lr_override = {lr, 0.1, 10, 10};
  } else {
    throw DataError("unknown freeze plan '" + name + "' (expected config1, config2 or none)");
  }
  return plan;
}

void apply_freeze(Model& model, const FreezePlan& plan) {
  if (plan.name != "none" && plan.name != "config1" && plan.name != "config2") {
    throw DataError("unknown freeze plan '" + plan.name + "'");
  }
  for (auto& p : model.parameters()) p.set_trainable(plan.trainable.contains(p.role()));
  model.set_plan_name(plan.name);
}

TrainReport transfer_run(Model model, const std::string& source_tag, const std::vector<std::string>& class_names,
                         const std::vector<ActionSample>& train, const std::vector<ActionSample>& test,
                         const FreezePlan& plan, const TransferOptions& options, Model* trained) {
  if (model.head_pending() || model.spec().num_classes != class_names.size()) {
    replace_head(model, class_names.size());
  }
  apply_freeze(model, plan);
  FitOptions fit_options;
  fit_options.epochs = options.epochs;
  fit_options.schedule = plan.lr_override;
  fit_options.seed = options.seed;
  fit_options.batch_size = options.batch_size;
  fit_options.track_train_accuracy = options.track_train_accuracy;
  fit_options.verbose = options.verbose;
  TrainReport report = fit(model, train, test, fit_options);
  report.plan = plan.name;
  report.source = source_tag;
  if (trained) *trained = model;
  return report;
}

TrainReport transfer_run(const std::filesystem::path& source_checkpoint, const std::vector<std::string>& class_names,
                         const std::vector<ActionSample>& train, const std::vector<ActionSample>& test,
                         const FreezePlan& plan, const TransferOptions& options, Model* trained) {
  LoadedCheckpoint loaded = load_checkpoint(source_checkpoint);
  const std::string tag = loaded.meta.dataset + "@seed" + std::to_string(loaded.meta.seed);
  return transfer_run(std::move(loaded.model), tag, class_names, train, test, plan, options, trained);
}

std::string parameter_checksum(const Parameter<double>& param) {
  std::uint64_t h = 1469598103934665603ULL;
  for (double v : param.tensor().values()) {
    unsigned char bytes[sizeof(double)];
    std::memcpy(bytes, &v, sizeof v);
    for (unsigned char b : bytes) {
      h ^= b;
      h *= 1099511628211ULL;
    }
  }
  char buffer[17];
  std::snprintf(buffer, sizeof buffer, "%016llx", static_cast<unsigned long long>(h));
  return buffer;
}

}  // namespace skar
