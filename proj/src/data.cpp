#include "skar/data.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

#include "skar/error.hpp"
#include "skar/random.hpp"
#include "skar/textio.hpp"

namespace skar {
namespace {

constexpr std::size_t kNeck = 2;
constexpr std::size_t kHead = 3;
constexpr std::size_t kHandLeft = 7;
constexpr std::size_t kHandRight = 11;
constexpr std::size_t kHandTipLeft = 21;
constexpr std::size_t kThumbLeft = 22;
constexpr std::size_t kHandTipRight = 23;
constexpr std::size_t kThumbRight = 24;

std::string format_number(double value) {
  char buffer[32];
  std::snprintf(buffer, sizeof buffer, "%.9g", value);
  return buffer;
}

double parse_number(const std::string& token, const std::string& where) {
  double value = 0.0;
  const char* begin = token.data();
  const char* end = begin + token.size();
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end || !std::isfinite(value)) {
    throw DataError(where + ": malformed number '" + token + "'");
  }
  return value;
}

std::size_t parse_count(const std::string& token, const std::string& where) {
  std::size_t value = 0;
  const char* begin = token.data();
  const char* end = begin + token.size();
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end) throw DataError(where + ": malformed integer '" + token + "'");
  return value;
}

std::vector<std::string> split_ws(const std::string& line) {
  std::istringstream in(line);
  std::vector<std::string> out;
  std::string token;
  while (in >> token) out.push_back(token);
  return out;
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t tab = line.find('\t', start);
    out.push_back(line.substr(start, tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  return out;
}

}  // namespace

const std::vector<std::size_t>& v1_to_v2_index() {
  // hip center -> spine base, spine -> spine mid, shoulder center -> spine
  // shoulder; the remaining joints keep their index.
  static const std::vector<std::size_t> map = {0, 1, 20, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16, 17, 18, 19};
  return map;
}

SkeletonSequence expand_20_to_25(const SkeletonSequence& seq) {
  if (seq.joints() != 20) {
    throw DataError("expand_20_to_25 needs a 20-joint sequence, got " + std::to_string(seq.joints()) + " joints");
  }
  const auto& map = v1_to_v2_index();
  SkeletonSequence out(seq.frames(), seq.bodies(), 25);
  for (std::size_t t = 0; t < seq.frames(); ++t) {
    for (std::size_t m = 0; m < seq.bodies(); ++m) {
      for (std::size_t v = 0; v < 20; ++v) out.at(t, m, map[v]) = seq.at(t, m, v);
      out.at(t, m, kNeck) = out.at(t, m, kHead);
      out.at(t, m, kHandTipRight) = out.at(t, m, kHandRight);
      out.at(t, m, kThumbRight) = out.at(t, m, kHandRight);
      out.at(t, m, kHandTipLeft) = out.at(t, m, kHandLeft);
      out.at(t, m, kThumbLeft) = out.at(t, m, kHandLeft);
    }
  }
  for (std::size_t m = 0; m < seq.bodies(); ++m) out.set_present(m, seq.present(m));
  return out;
}

SkeletonSequence project_25_to_20(const SkeletonSequence& seq) {
  if (seq.joints() != 25) throw DataError("project_25_to_20 needs a 25-joint sequence");
  const auto& map = v1_to_v2_index();
  SkeletonSequence out(seq.frames(), seq.bodies(), 20);
  for (std::size_t t = 0; t < seq.frames(); ++t) {
    for (std::size_t m = 0; m < seq.bodies(); ++m) {
      for (std::size_t v = 0; v < 20; ++v) out.at(t, m, v) = seq.at(t, m, map[v]);
    }
  }
  for (std::size_t m = 0; m < seq.bodies(); ++m) out.set_present(m, seq.present(m));
  return out;
}

SkeletonSequence pad_replay(const SkeletonSequence& seq, std::size_t target_frames) {
  if (seq.frames() == 0) throw DataError("cannot pad an empty sequence");
  if (seq.frames() > target_frames) {
    throw DataError("sequence has " + std::to_string(seq.frames()) + " frames, more than the " +
                    std::to_string(target_frames) + "-frame cap");
  }
  SkeletonSequence out(target_frames, seq.bodies(), seq.joints());
  for (std::size_t t = 0; t < target_frames; ++t) {
    const std::size_t src = t % seq.frames();
    for (std::size_t m = 0; m < seq.bodies(); ++m) {
      for (std::size_t v = 0; v < seq.joints(); ++v) out.at(t, m, v) = seq.at(src, m, v);
    }
  }
  for (std::size_t m = 0; m < seq.bodies(); ++m) out.set_present(m, seq.present(m));
  return out;
}

SkeletonSequence normalize_translate(const SkeletonSequence& seq, const SkeletonTopology& topology) {
  if (seq.joints() != topology.joint_count()) {
    throw DataError("sequence has " + std::to_string(seq.joints()) + " joints but topology has " +
                    std::to_string(topology.joint_count()));
  }
  SkeletonSequence out = seq;
  std::size_t anchor_body = seq.bodies();
  for (std::size_t m = 0; m < seq.bodies(); ++m) {
    if (seq.present(m)) {
      anchor_body = m;
      break;
    }
  }
  if (anchor_body == seq.bodies()) return out;

  const Point3 origin = seq.at(0, anchor_body, topology.center_joint());
  const Point3 top = seq.at(0, anchor_body, topology.spine_top_joint());
  const double dx = top[0] - origin[0];
  const double dy = top[1] - origin[1];
  const double dz = top[2] - origin[2];
  const double spine = std::sqrt(dx * dx + dy * dy + dz * dz);
  const double factor = spine > 0.0 ? 1.0 / spine : 1.0;
  for (std::size_t t = 0; t < seq.frames(); ++t) {
    for (std::size_t m = 0; m < seq.bodies(); ++m) {
      if (!seq.present(m)) continue;
      for (std::size_t v = 0; v < seq.joints(); ++v) {
        Point3& p = out.at(t, m, v);
        for (std::size_t c = 0; c < 3; ++c) p[c] = (p[c] - origin[c]) * factor;
      }
    }
  }
  return out;
}

SkeletonSequence preprocess(const SkeletonSequence& seq, const PreprocessOptions& options) {
  SkeletonSequence out = seq.joints() == 20 ? expand_20_to_25(seq) : seq;
  if (out.joints() != 25) throw DataError("unsupported joint count " + std::to_string(out.joints()));
  out = pad_replay(out, options.target_frames);
  if (options.normalize) out = normalize_translate(out, SkeletonTopology::kinect_v2());
  return out;
}

std::string format_sequence(const ActionSample& sample) {
  const SkeletonSequence& seq = sample.sequence;
  std::string text = "SKSEQ 1\n";
  text += std::to_string(seq.frames()) + " " + std::to_string(seq.bodies()) + " " + std::to_string(seq.joints()) +
          " " + std::to_string(sample.label) + " " + to_string(sample.view) + " " + sample.subject + "\n";
  for (std::size_t t = 0; t < seq.frames(); ++t) {
    for (std::size_t m = 0; m < seq.bodies(); ++m) {
      for (std::size_t v = 0; v < seq.joints(); ++v) {
        const Point3& p = seq.at(t, m, v);
        text += format_number(p[0]) + " " + format_number(p[1]) + " " + format_number(p[2]) + "\n";
      }
    }
  }
  return text;
}

ActionSample parse_sequence(const std::string& text, const std::string& source_name) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  auto where = [&] { return source_name + ":" + std::to_string(line_no); };
  auto next_line = [&](const char* expecting) {
    if (!std::getline(in, line)) {
      throw DataError(source_name + ": unexpected end of file after line " + std::to_string(line_no) + ", expected " +
                      expecting);
    }
    ++line_no;
  };

  next_line("header");
  const auto header = split_ws(line);
  if (header.size() != 2 || header[0] != "SKSEQ") throw DataError(where() + ": malformed header, expected 'SKSEQ 1'");
  if (header[1] != "1") throw DataError(where() + ": unknown sequence format version " + header[1]);

  next_line("dimension line");
  const auto dims = split_ws(line);
  if (dims.size() != 6) throw DataError(where() + ": expected 'T M V label view subject'");
  const std::size_t frames = parse_count(dims[0], where());
  const std::size_t bodies = parse_count(dims[1], where());
  const std::size_t joints = parse_count(dims[2], where());
  if (frames == 0 || bodies < 1 || bodies > 2 || joints == 0) {
    throw DataError(where() + ": invalid dimensions T=" + dims[0] + " M=" + dims[1] + " V=" + dims[2]);
  }
  ActionSample sample;
  sample.label = parse_count(dims[3], where());
  try {
    sample.view = parse_view_tag(dims[4]);
  } catch (const DataError& e) {
    throw DataError(where() + ": " + e.what());
  }
  sample.subject = dims[5];
  sample.sequence = SkeletonSequence(frames, bodies, joints);
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t m = 0; m < bodies; ++m) {
      for (std::size_t v = 0; v < joints; ++v) {
        next_line("coordinate line");
        const auto xyz = split_ws(line);
        if (xyz.size() != 3) {
          throw DataError(where() + ": expected 3 coordinates, found " + std::to_string(xyz.size()));
        }
        Point3& p = sample.sequence.at(t, m, v);
        for (std::size_t c = 0; c < 3; ++c) p[c] = parse_number(xyz[c], where());
      }
    }
  }
  while (std::getline(in, line)) {
    ++line_no;
    if (!split_ws(line).empty()) throw DataError(where() + ": more coordinate lines than T*M*V");
  }
  sample.sequence.detect_presence();
  return sample;
}

ActionSample load_sequence(const std::filesystem::path& path) {
  return parse_sequence(read_text(path), path.string());
}

void save_sequence(const ActionSample& sample, const std::filesystem::path& path) {
  write_text(path, format_sequence(sample));
}

std::string to_string(Split split) { return split == Split::train ? "train" : "test"; }

Split parse_split(const std::string& text) {
  if (text == "train") return Split::train;
  if (text == "test") return Split::test;
  throw DataError("unknown split '" + text + "'");
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
  std::istringstream in(read_text(path));
  std::string line;
  std::size_t line_no = 0;
  auto where = [&] { return path.string() + ":" + std::to_string(line_no); };
  auto next = [&]() -> bool {
    if (!std::getline(in, line)) return false;
    ++line_no;
    return true;
  };
  if (!next() || split_ws(line) != std::vector<std::string>{"SKMANIFEST", "1"}) {
    throw DataError(where() + ": expected header 'SKMANIFEST 1'");
  }
  if (!next()) throw DataError(where() + ": missing class count");
  DatasetManifest manifest;
  const std::size_t classes = parse_count(split_ws(line).empty() ? "" : split_ws(line)[0], where());
  for (std::size_t i = 0; i < classes; ++i) {
    if (!next()) throw DataError(where() + ": missing class line " + std::to_string(i));
    const auto fields = split_tabs(line);
    if (fields.size() != 2 || parse_count(fields[0], where()) != i) {
      throw DataError(where() + ": expected '" + std::to_string(i) + "<TAB>name'");
    }
    manifest.class_names.push_back(fields[1]);
  }
  std::set<std::string> seen;
  while (next()) {
    if (split_ws(line).empty()) continue;
    const auto fields = split_tabs(line);
    if (fields.size() == 3 && fields[0] == "meta") {
      if (fields[1] == "joints") {
        manifest.joints = parse_count(fields[2], where());
      } else if (fields[1] == "fps") {
        manifest.fps = parse_number(fields[2], where());
      } else {
        throw DataError(where() + ": unknown meta key '" + fields[1] + "'");
      }
    } else if (fields.size() == 3 && fields[0] == "sample") {
      if (!seen.insert(fields[1]).second) throw DataError(where() + ": sample " + fields[1] + " listed twice");
      try {
        manifest.entries.push_back({fields[1], parse_split(fields[2])});
      } catch (const DataError& e) {
        throw DataError(where() + ": " + e.what());
      }
    } else {
      throw DataError(where() + ": expected 'sample<TAB>path<TAB>split'");
    }
  }
  return manifest;
}

void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
  std::string text = "SKMANIFEST 1\n" + std::to_string(manifest.class_names.size()) + "\n";
  for (std::size_t i = 0; i < manifest.class_names.size(); ++i) {
    text += std::to_string(i) + "\t" + manifest.class_names[i] + "\n";
  }
  text += "meta\tjoints\t" + std::to_string(manifest.joints) + "\n";
  text += "meta\tfps\t" + format_number(manifest.fps) + "\n";
  for (const auto& entry : manifest.entries) text += "sample\t" + entry.path + "\t" + to_string(entry.split) + "\n";
  write_text(path, text);
}

Dataset load_dataset(const std::filesystem::path& manifest_path) {
  const DatasetManifest manifest = load_manifest(manifest_path);
  const std::filesystem::path root = manifest_path.parent_path();
  Dataset dataset;
  dataset.class_names = manifest.class_names;
  for (const auto& entry : manifest.entries) {
    ActionSample sample = load_sequence(root / entry.path);
    if (sample.label >= manifest.class_names.size()) {
      throw DataError(entry.path + ": label " + std::to_string(sample.label) + " outside the " +
                      std::to_string(manifest.class_names.size()) + "-class table");
    }
    if (sample.sequence.joints() != manifest.joints) {
      throw DataError(entry.path + ": has " + std::to_string(sample.sequence.joints()) +
                      " joints but the manifest declares " + std::to_string(manifest.joints));
    }
    sample.class_name = manifest.class_names[sample.label];
    (entry.split == Split::train ? dataset.train : dataset.test).push_back(std::move(sample));
  }
  return dataset;
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& dir, double fps) {
  DatasetManifest manifest;
  manifest.class_names = dataset.class_names;
  manifest.fps = fps;
  std::size_t joints = 0;
  std::size_t index = 0;
  for (Split split : {Split::train, Split::test}) {
    for (const ActionSample& sample : split == Split::train ? dataset.train : dataset.test) {
      if (joints == 0) joints = sample.sequence.joints();
      if (sample.sequence.joints() != joints) throw DataError("dataset mixes joint counts");
      char name[32];
      std::snprintf(name, sizeof name, "samples/s%05zu.skseq", index++);
      save_sequence(sample, dir / name);
      manifest.entries.push_back({name, split});
    }
  }
  manifest.joints = joints == 0 ? 25 : joints;
  save_manifest(manifest, dir / "manifest.txt");
}

Dataset preprocess_dataset(const Dataset& dataset, const PreprocessOptions& options) {
  Dataset out;
  out.class_names = dataset.class_names;
  std::set<std::size_t> joint_counts;
  for (const auto* split : {&dataset.train, &dataset.test}) {
    for (const auto& s : *split) joint_counts.insert(s.sequence.joints());
  }
  if (joint_counts.size() > 1) throw DataError("dataset mixes 20- and 25-joint sequences");
  for (auto [src, dst] : {std::pair{&dataset.train, &out.train}, std::pair{&dataset.test, &out.test}}) {
    for (const ActionSample& s : *src) {
      ActionSample p = s;
      p.sequence = preprocess(s.sequence, options);
      dst->push_back(std::move(p));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic motion domains

namespace {

// Standing pose in Kinect v2 order, meters in sensor coordinates.
const std::array<Point3, 25> kRestPose = {{
    {0.00, 0.00, 3.00},    // spine base
    {0.00, 0.30, 3.00},    // spine mid
    {0.00, 0.62, 3.00},    // neck
    {0.00, 0.78, 3.00},    // head
    {-0.18, 0.52, 3.00},   // shoulder left
    {-0.22, 0.25, 3.00},   // elbow left
    {-0.24, 0.02, 3.00},   // wrist left
    {-0.25, -0.06, 3.00},  // hand left
    {0.18, 0.52, 3.00},    // shoulder right
    {0.22, 0.25, 3.00},    // elbow right
    {0.24, 0.02, 3.00},    // wrist right
    {0.25, -0.06, 3.00},   // hand right
    {-0.10, -0.05, 3.00},  // hip left
    {-0.11, -0.48, 3.00},  // knee left
    {-0.12, -0.88, 3.00},  // ankle left
    {-0.12, -0.93, 2.90},  // foot left
    {0.10, -0.05, 3.00},   // hip right
    {0.11, -0.48, 3.00},   // knee right
    {0.12, -0.88, 3.00},   // ankle right
    {0.12, -0.93, 2.90},   // foot right
    {0.00, 0.55, 3.00},    // spine shoulder
    {-0.26, -0.14, 3.00},  // hand tip left
    {-0.22, -0.08, 2.98},  // thumb left
    {0.26, -0.14, 3.00},   // hand tip right
    {0.22, -0.08, 2.98},   // thumb right
}};

struct Limb {
  const char* name;
  std::size_t pivot;
  std::vector<std::size_t> joints;  // rotated rigidly about the pivot
};

const std::vector<Limb>& limbs() {
  static const std::vector<Limb> table = {
      {"left_arm", 4, {5, 6, 7, 21, 22}},
      {"right_arm", 8, {9, 10, 11, 23, 24}},
      {"left_leg", 12, {13, 14, 15}},
      {"right_leg", 16, {17, 18, 19}},
      {"torso", 1, {20, 2, 3, 4, 5, 6, 7, 21, 22, 8, 9, 10, 11, 23, 24}},
  };
  return table;
}

struct Primitive {
  std::size_t limb;
  std::size_t axis;  // 0: rotate about x (forward swing), 2: about z (side swing)
  double amplitude;  // radians
  double cycles;     // oscillations over the whole action
  double phase;
};

std::vector<Primitive> class_primitives(std::size_t global_class) {
  Rng rng(derive_seed(0x5eed'c1a5ULL, global_class));
  const std::size_t limb_count = limbs().size();
  std::vector<Primitive> out;
  Primitive main;
  main.limb = global_class % limb_count;
  main.cycles = static_cast<double>(1 + (global_class / limb_count) % 3);
  main.axis = (global_class / (3 * limb_count)) % 2 == 0 ? 0 : 2;
  main.amplitude = main.limb == 4 ? rng.uniform(0.35, 0.5) : rng.uniform(0.7, 1.1);
  main.phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  out.push_back(main);
  const std::size_t second = (global_class * 7 + 3) % limb_count;
  Primitive extra;
  extra.limb = second;
  extra.axis = 2 - main.axis;
  extra.amplitude = extra.limb == 4 ? rng.uniform(0.1, 0.2) : rng.uniform(0.25, 0.45);
  extra.cycles = 1.0;
  extra.phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  if (second != main.limb) out.push_back(extra);
  return out;
}

std::string class_name(std::size_t global_class) {
  const auto primitives = class_primitives(global_class);
  const Primitive& p = primitives.front();
  return std::string(limbs()[p.limb].name) + (p.axis == 0 ? "_swing" : "_raise") + "_x" +
         std::to_string(static_cast<int>(p.cycles)) + "_c" + std::to_string(global_class);
}

Point3 rotate(const Point3& p, const Point3& pivot, std::size_t axis, double angle) {
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  Point3 d{p[0] - pivot[0], p[1] - pivot[1], p[2] - pivot[2]};
  Point3 r = d;
  if (axis == 0) {  // y-z plane
    r[1] = c * d[1] - s * d[2];
    r[2] = s * d[1] + c * d[2];
  } else {  // x-y plane
    r[0] = c * d[0] - s * d[1];
    r[1] = s * d[0] + c * d[1];
  }
  return {pivot[0] + r[0], pivot[1] + r[1], pivot[2] + r[2]};
}

struct SampleJitter {
  double amplitude_scale = 1.0;
  double phase_shift = 0.0;
  Point3 offset{0.0, 0.0, 0.0};
};

// 25-joint pose of a class at normalized time s.
std::array<Point3, 25> pose_at(const std::vector<Primitive>& primitives, double s, const SampleJitter& jitter) {
  std::array<Point3, 25> pose = kRestPose;
  // Apply distal limbs first so the torso bend carries the arms with it.
  std::vector<const Primitive*> order;
  for (const auto& p : primitives) {
    if (p.limb != 4) order.push_back(&p);
  }
  for (const auto& p : primitives) {
    if (p.limb == 4) order.push_back(&p);
  }
  for (const Primitive* p : order) {
    const Limb& limb = limbs()[p->limb];
    const double angle = jitter.amplitude_scale * p->amplitude *
                         std::sin(2.0 * std::numbers::pi * p->cycles * s + p->phase + jitter.phase_shift);
    const Point3 pivot = pose[limb.pivot];
    for (std::size_t j : limb.joints) pose[j] = rotate(pose[j], pivot, p->axis, angle);
  }
  for (auto& q : pose) {
    for (std::size_t c = 0; c < 3; ++c) q[c] += jitter.offset[c];
  }
  return pose;
}

SkeletonSequence render(const SynthDomainSpec& spec, std::size_t class_index, std::size_t frames,
                        const SampleJitter& jitter, Rng* noise_rng) {
  const auto primitives = class_primitives(spec.class_offset + class_index);
  SkeletonSequence seq(frames, spec.bodies, 25);
  for (std::size_t t = 0; t < frames; ++t) {
    const double s = frames > 1 ? static_cast<double>(t) / static_cast<double>(frames - 1) : 0.0;
    const auto pose = pose_at(primitives, s, jitter);
    for (std::size_t v = 0; v < 25; ++v) {
      Point3 p = pose[v];
      if (noise_rng) {
        for (double& c : p) c += spec.noise * noise_rng->normal();
      }
      seq.at(t, 0, v) = p;
    }
  }
  for (std::size_t m = 1; m < spec.bodies; ++m) seq.set_present(m, false);
  return spec.joints == 20 ? project_25_to_20(seq) : seq;
}

}  // namespace

void SynthDomainSpec::validate() const {
  if (classes == 0) throw DataError("synthetic domain needs at least one class");
  if (per_class == 0) throw DataError("synthetic domain needs at least one sample per class");
  if (!(tempo > 0.0)) throw DataError("tempo multiplier must be positive");
  if (!(noise >= 0.0)) throw DataError("noise level must be non-negative");
  if (joints != 20 && joints != 25) throw DataError("synthetic joints must be 20 or 25");
  if (base_frames == 0) throw DataError("base frame count must be positive");
  if (!(test_fraction >= 0.0 && test_fraction < 1.0)) throw DataError("test fraction must be in [0, 1)");
  if (bodies < 1 || bodies > 2) throw DataError("bodies must be 1 or 2");
  if (!(tempo_jitter >= 0.0 && tempo_jitter < 1.0)) throw DataError("tempo jitter must be in [0, 1)");
}

SkeletonSequence synth_prototype(const SynthDomainSpec& spec, std::size_t class_index, std::size_t frames) {
  spec.validate();
  return render(spec, class_index, frames, SampleJitter{}, nullptr);
}

Dataset synth_generate(const SynthDomainSpec& spec, std::uint64_t seed) {
  spec.validate();
  Dataset dataset;
  for (std::size_t c = 0; c < spec.classes; ++c) dataset.class_names.push_back(class_name(spec.class_offset + c));
  const std::size_t test_per_class =
      static_cast<std::size_t>(std::lround(spec.test_fraction * static_cast<double>(spec.per_class)));
  for (std::size_t c = 0; c < spec.classes; ++c) {
    Rng rng(derive_seed(seed, c));
    std::vector<std::size_t> order(spec.per_class);
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);
    std::vector<bool> is_test(spec.per_class, false);
    for (std::size_t i = 0; i < test_per_class; ++i) is_test[order[i]] = true;

    for (std::size_t i = 0; i < spec.per_class; ++i) {
      const double stretch = 1.0 + spec.tempo_jitter * rng.uniform(-1.0, 1.0);
      const double raw = static_cast<double>(spec.base_frames) * spec.tempo * stretch;
      const std::size_t frames = std::clamp<std::size_t>(static_cast<std::size_t>(std::lround(raw)), 1, kMaxFrames);
      SampleJitter jitter;
      jitter.amplitude_scale = 1.0 + 5.0 * spec.noise * rng.normal();
      jitter.phase_shift = 10.0 * spec.noise * rng.normal();
      for (double& o : jitter.offset) o = 20.0 * spec.noise * rng.normal();

      ActionSample sample;
      sample.sequence = render(spec, c, frames, jitter, spec.noise > 0.0 ? &rng : nullptr);
      sample.label = c;
      sample.class_name = dataset.class_names[c];
      sample.view = ViewTag::synthetic;
      sample.subject = "synth" + std::to_string(i % 3);
      (is_test[i] ? dataset.test : dataset.train).push_back(std::move(sample));
    }
  }
  return dataset;
}

}  // namespace skar
