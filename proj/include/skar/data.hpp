#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "skar/sequence.hpp"
#include "skar/skelgraph.hpp"

namespace skar {

inline constexpr std::size_t kMaxFrames = 300;

// Kinect v2 index of each Kinect v1 joint.
const std::vector<std::size_t>& v1_to_v2_index();

// Copies the 20 Kinect v1 joints into their v2 slots and fills the five
// missing joints by duplication: neck <- head, hand tips and thumbs <- the
// hand on the same side.
SkeletonSequence expand_20_to_25(const SkeletonSequence& seq);

// Inverse index map: picks the 20 source joints back out of a v2 sequence.
SkeletonSequence project_25_to_20(const SkeletonSequence& seq);

// Output frame t is input frame (t mod T).
SkeletonSequence pad_replay(const SkeletonSequence& seq, std::size_t target_frames = kMaxFrames);

// Subtracts the first-frame center joint of the first present body from
// every present body, then divides by that frame's spine length (center to
// spine-top distance). Absent bodies stay zero.
SkeletonSequence normalize_translate(const SkeletonSequence& seq, const SkeletonTopology& topology);

struct PreprocessOptions {
  std::size_t target_frames = kMaxFrames;
  bool normalize = true;
};

// 20-joint input is expanded to 25 joints, then replay padding and
// (optionally) normalization are applied.
SkeletonSequence preprocess(const SkeletonSequence& seq, const PreprocessOptions& options = {});

// `SKSEQ 1` text format; coordinates written with 9 significant digits.
ActionSample load_sequence(const std::filesystem::path& path);
void save_sequence(const ActionSample& sample, const std::filesystem::path& path);
std::string format_sequence(const ActionSample& sample);
ActionSample parse_sequence(const std::string& text, const std::string& source_name);

enum class Split { train, test };
std::string to_string(Split split);
Split parse_split(const std::string& text);

struct ManifestEntry {
  std::string path;  // relative to the manifest directory
  Split split = Split::train;
};

struct DatasetManifest {
  std::vector<std::string> class_names;
  std::size_t joints = 25;
  double fps = 30.0;
  std::vector<ManifestEntry> entries;
};

DatasetManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

struct Dataset {
  std::vector<std::string> class_names;
  std::vector<ActionSample> train;
  std::vector<ActionSample> test;

  std::size_t size() const { return train.size() + test.size(); }
};

// Loads every sample referenced by a manifest and checks labels, joint
// counts and split disjointness.
Dataset load_dataset(const std::filesystem::path& manifest_path);

// Writes `manifest.txt` plus one sequence file per sample under dir.
void save_dataset(const Dataset& dataset, const std::filesystem::path& dir, double fps = 30.0);

Dataset preprocess_dataset(const Dataset& dataset, const PreprocessOptions& options = {});

struct SynthDomainSpec {
  std::size_t classes = 4;
  std::size_t per_class = 10;
  double tempo = 1.0;        // frame-count multiplier; slower motions take more frames
  double noise = 0.01;       // meters of coordinate noise; also scales per-sample jitter
  std::size_t joints = 25;
  std::size_t base_frames = 95;
  std::size_t class_offset = 0;  // global index of the first class's motion primitive
  double test_fraction = 0.3;
  std::size_t bodies = 2;     // second body is left absent
  double tempo_jitter = 0.15;

  void validate() const;
};

// Motion of a class at normalized time s in [0, 1], without noise; for
// 20-joint domains the pose is given in Kinect v1 order.
SkeletonSequence synth_prototype(const SynthDomainSpec& spec, std::size_t class_index, std::size_t frames);

Dataset synth_generate(const SynthDomainSpec& spec, std::uint64_t seed);

}  // namespace skar
