#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "skar/models.hpp"
#include "skar/training.hpp"

namespace skar {

inline constexpr int kCheckpointVersion = 1;

struct CheckpointMeta {
  std::string dataset = "unknown";
  std::uint64_t seed = 0;
  std::size_t epochs = 0;
  double accuracy = 0.0;
};

struct LoadedCheckpoint {
  Model model;
  CheckpointMeta meta;
};

// `SKCKPT 1`, a [spec] block, a [meta] block, then one `name shape values...`
// line per parameter in construction order. Values use 17 significant digits
// so a round trip is exact.
std::string format_checkpoint(const Model& model, const CheckpointMeta& meta);
void save_checkpoint(const Model& model, const CheckpointMeta& meta, const std::filesystem::path& path);

// With an expected spec, the backbone must match; a different class count is
// accepted and leaves the model flagged head_pending.
LoadedCheckpoint parse_checkpoint(const std::string& text, const std::string& source_name,
                                  const std::optional<ModelSpec>& expected = std::nullopt);
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path,
                                 const std::optional<ModelSpec>& expected = std::nullopt);

// Zeroes a fresh head for num_classes; other parameters are not touched.
void replace_head(Model& model, std::size_t num_classes);

enum class Config2Rate { multiply, set };  // initial lr x 0.01, or exactly 0.01

struct FreezePlan {
  std::string name = "none";
  std::set<RoleTag> trainable;
  ScheduleConfig lr_override;
};

// config1: head only, lr = source / 10; config2: temporal + head,
// lr = source x 0.01 (or 0.01). Both decay x0.1 every 10 epochs. none: all
// parameters trainable on the source schedule.
FreezePlan make_freeze_plan(const std::string& name, const ScheduleConfig& source_schedule,
                            Config2Rate config2_rate = Config2Rate::multiply);

void apply_freeze(Model& model, const FreezePlan& plan);

struct TransferOptions {
  std::size_t epochs = 10;
  std::uint64_t seed = 1;
  std::size_t batch_size = 8;
  bool track_train_accuracy = true;
  bool verbose = false;
};

// replace_head (when the class count differs or the head is pending), then
// apply_freeze, then fit on the plan's schedule.
TrainReport transfer_run(Model model, const std::string& source_tag, const std::vector<std::string>& class_names,
                         const std::vector<ActionSample>& train, const std::vector<ActionSample>& test,
                         const FreezePlan& plan, const TransferOptions& options, Model* trained = nullptr);

TrainReport transfer_run(const std::filesystem::path& source_checkpoint, const std::vector<std::string>& class_names,
                         const std::vector<ActionSample>& train, const std::vector<ActionSample>& test,
                         const FreezePlan& plan, const TransferOptions& options, Model* trained = nullptr);

// FNV-1a over the raw value bytes, as 16 hex digits.
std::string parameter_checksum(const Parameter<double>& param);

}  // namespace skar
