#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "skar/models.hpp"
#include "skar/sequence.hpp"

namespace skar {

// Stepped decay: lr = initial_lr * decay_factor^d, where d counts the decay
// points start_epoch, start_epoch + interval, ... that are <= epoch.
struct ScheduleConfig {
  double initial_lr = 0.1;
  double decay_factor = 0.1;
  std::size_t interval_epochs = 20;
  std::size_t start_epoch = 20;

  void validate() const;
  bool operator==(const ScheduleConfig&) const = default;
};

ScheduleConfig schedule_preset(Variant variant);
// Desk models train with Adam and no normalization layers: the initial rate
// is 0.002 (0.003 for agcn_2s) and the decay start and interval are doubled.
ScheduleConfig schedule_preset(Variant variant, ScalePreset preset);
double lr_at_epoch(const ScheduleConfig& schedule, std::size_t epoch);

struct Moments {
  std::vector<double> first;
  std::vector<double> second;
};

struct OptimizerState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t step = 0;
  std::map<std::string, Moments> moments;  // keyed by parameter name, trainable only
};

// One bias-corrected Adam update of every trainable parameter. Frozen
// parameters, and their (absent) state, are left alone.
void adam_step(std::vector<Parameter<double>>& params, OptimizerState& state, double lr);

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based count of completed epochs
  double lr = 0.0;        // rate used during this epoch
  double loss = 0.0;      // sample-weighted mean training loss
  double train_acc = 0.0;
  double test_acc = 0.0;
};

struct TrainReport {
  std::vector<EpochRecord> curve;
  double epoch0_test_acc = 0.0;  // before any update
  std::uint64_t seed = 0;
  double wall_seconds = 0.0;     // not serialized
  std::string plan = "none";
  std::string source;            // checkpoint tag for transferred runs
  std::vector<std::pair<std::string, std::string>> config;

  std::size_t epochs() const { return curve.size(); }
  // Test accuracy after the first epoch.
  double initial() const;
  // Best test accuracy over the run.
  double final() const;

  std::string curve_csv() const;
  std::string summary_text() const;
  bool operator==(const TrainReport& other) const;  // ignores wall time
};

// Writes <stem>_curve.csv and <stem>_summary.txt.
void save_report(const TrainReport& report, const std::filesystem::path& dir, const std::string& stem);
TrainReport load_report(const std::filesystem::path& dir, const std::string& stem);

struct FitOptions {
  std::size_t epochs = 10;
  ScheduleConfig schedule;
  std::uint64_t seed = 1;
  std::size_t batch_size = 8;
  bool track_train_accuracy = true;
  bool verbose = false;
  // Stop after the first epoch whose train accuracy reaches this value.
  std::optional<double> stop_at_train_accuracy;
};

TrainReport fit(Model& model, const std::vector<ActionSample>& train, const std::vector<ActionSample>& test,
                const FitOptions& options);

// Arg-max class per sample; ties go to the lowest class index.
std::vector<std::size_t> predict_labels(const Model& model, const std::vector<ActionSample>& samples);
double evaluate(const Model& model, const std::vector<ActionSample>& samples);

std::size_t argmax_lowest(const std::vector<double>& scores);

}  // namespace skar
