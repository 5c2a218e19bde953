#pragma once

#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "skar/data.hpp"
#include "skar/metrics.hpp"
#include "skar/models.hpp"
#include "skar/transfer.hpp"

namespace skar {

// Line-oriented `key = value` settings. Blank lines and lines starting with
// '#' are skipped; a repeated key is an error.
using KeyValues = std::map<std::string, std::string>;
KeyValues parse_key_values(const std::string& text, const std::string& source_name);
std::string format_key_values(const KeyValues& values);

// Source-to-target transfer study: one source model per variant, then for
// every seed a baseline (fresh model, plan none) and one transferred run per
// plan on the target domain.
struct TransferRecipe {
  std::vector<Variant> variants = {Variant::stgcn, Variant::agcn_2s, Variant::msg3d};
  ScalePreset preset = ScalePreset::desk;
  std::vector<std::string> plans = {"config1", "config2"};
  std::vector<std::uint64_t> seeds = {1, 2, 3};
  Config2Rate config2_rate = Config2Rate::multiply;
  std::size_t batch_size = 8;

  SynthDomainSpec source;  // defaults: 8 classes at tempo 1.0
  std::uint64_t source_seed = 100;
  std::size_t source_epochs = 40;
  std::optional<double> source_stop_accuracy;

  SynthDomainSpec target;  // defaults: 6 further classes at tempo 1.8
  std::size_t target_epochs = 15;
  bool track_train_accuracy = false;

  TransferRecipe();
  void validate() const;

  // Keys: variants, preset, plans, seeds, config2_rate, batch_size,
  // source.{classes,per_class,tempo,noise,seed,epochs,stop_accuracy},
  // target.{classes,per_class,tempo,noise,class_offset,epochs},
  // track_train_accuracy. Unknown keys are rejected.
  static TransferRecipe from_key_values(const KeyValues& values);
  KeyValues to_key_values() const;
};

struct VariantOutcome {
  Variant variant;
  CheckpointMeta source_meta;
  std::vector<TransferComparison> per_seed;  // seed-major, plan-minor
  std::vector<TransferComparison> averaged;  // one per plan
};

struct RecipeOutcome {
  std::vector<VariantOutcome> variants;
  std::vector<TransferComparison> rows() const;  // averaged rows in recipe order
};

// Writes checkpoints/, runs/<variant>/ report files, the rendered report and
// recipe.txt under out_dir. log receives one line per finished run (may be
// null).
RecipeOutcome run_recipe(const TransferRecipe& recipe, const std::filesystem::path& out_dir, std::FILE* log);

}  // namespace skar
