#include "skar/experiment.hpp"

#include <algorithm>
#include <set>
#include <sstream>

#include "skar/error.hpp"
#include "skar/textio.hpp"
#include "skar/training.hpp"

namespace skar {
namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (const auto& item : items) out += (out.empty() ? "" : ",") + item;
  return out;
}

std::size_t to_size(const std::string& key, const std::string& value) {
  const double v = parse_double(value, "recipe key " + key);
  if (v < 0 || v != static_cast<double>(static_cast<std::size_t>(v))) {
    throw DataError("recipe key " + key + " needs a non-negative integer, got '" + value + "'");
  }
  return static_cast<std::size_t>(v);
}

bool to_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw DataError("recipe key " + key + " needs true or false, got '" + value + "'");
}

std::string bool_text(bool v) { return v ? "true" : "false"; }

}  // namespace

KeyValues parse_key_values(const std::string& text, const std::string& source_name) {
  KeyValues values;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string body = trim(line);
    if (body.empty() || body.front() == '#') continue;
    const auto eq = body.find('=');
    const std::string where = source_name + ":" + std::to_string(line_no);
    if (eq == std::string::npos) throw DataError(where + ": expected 'key = value'");
    const std::string key = trim(body.substr(0, eq));
    if (key.empty()) throw DataError(where + ": empty key");
    if (!values.emplace(key, trim(body.substr(eq + 1))).second) throw DataError(where + ": repeated key '" + key + "'");
  }
  return values;
}

std::string format_key_values(const KeyValues& values) {
  std::string text;
  for (const auto& [key, value] : values) text += key + " = " + value + "\n";
  return text;
}

TransferRecipe::TransferRecipe() {
  source.classes = 8;
  source.per_class = 10;
  source.tempo = 1.0;
  target.classes = 6;
  target.per_class = 10;
  target.tempo = 1.8;
  target.class_offset = 8;
}

void TransferRecipe::validate() const {
  if (variants.empty()) throw DataError("recipe lists no variants");
  if (seeds.empty()) throw DataError("recipe lists no seeds");
  if (plans.empty()) throw DataError("recipe lists no plans");
  for (const auto& plan : plans) {
    if (plan != "config1" && plan != "config2") throw DataError("recipe plan must be config1 or config2, got " + plan);
  }
  if (std::set<std::string>(plans.begin(), plans.end()).size() != plans.size()) {
    throw DataError("recipe lists a plan twice");
  }
  if (batch_size == 0) throw DataError("batch size must be positive");
  if (source_epochs == 0 || target_epochs == 0) throw DataError("recipe epochs must be positive");
  if (source.classes < 2 || target.classes < 2) throw DataError("source and target need at least 2 classes");
  source.validate();
  target.validate();
}

TransferRecipe TransferRecipe::from_key_values(const KeyValues& values) {
  TransferRecipe r;
  for (const auto& [key, value] : values) {
    if (key == "variants") {
      r.variants.clear();
      for (const auto& v : split_list(value)) r.variants.push_back(parse_variant(v));
    } else if (key == "preset") {
      r.preset = parse_preset(value);
    } else if (key == "plans") {
      r.plans = split_list(value);
    } else if (key == "seeds") {
      r.seeds.clear();
      for (const auto& s : split_list(value)) r.seeds.push_back(to_size(key, s));
    } else if (key == "config2_rate") {
      if (value == "multiply") {
        r.config2_rate = Config2Rate::multiply;
      } else if (value == "set") {
        r.config2_rate = Config2Rate::set;
      } else {
        throw DataError("config2_rate must be multiply or set, got '" + value + "'");
      }
    } else if (key == "batch_size") {
      r.batch_size = to_size(key, value);
    } else if (key == "track_train_accuracy") {
      r.track_train_accuracy = to_bool(key, value);
    } else if (key == "source.classes") {
      r.source.classes = to_size(key, value);
    } else if (key == "source.per_class") {
      r.source.per_class = to_size(key, value);
    } else if (key == "source.tempo") {
      r.source.tempo = parse_double(value, key);
    } else if (key == "source.noise") {
      r.source.noise = parse_double(value, key);
    } else if (key == "source.seed") {
      r.source_seed = to_size(key, value);
    } else if (key == "source.epochs") {
      r.source_epochs = to_size(key, value);
    } else if (key == "source.stop_accuracy") {
      if (value == "none") {
        r.source_stop_accuracy.reset();
      } else {
        r.source_stop_accuracy = parse_double(value, key);
      }
    } else if (key == "target.classes") {
      r.target.classes = to_size(key, value);
    } else if (key == "target.per_class") {
      r.target.per_class = to_size(key, value);
    } else if (key == "target.tempo") {
      r.target.tempo = parse_double(value, key);
    } else if (key == "target.noise") {
      r.target.noise = parse_double(value, key);
    } else if (key == "target.class_offset") {
      r.target.class_offset = to_size(key, value);
    } else if (key == "target.epochs") {
      r.target_epochs = to_size(key, value);
    } else {
      throw DataError("unknown recipe key '" + key + "'");
    }
  }
  r.validate();
  return r;
}

KeyValues TransferRecipe::to_key_values() const {
  std::vector<std::string> variant_names;
  for (Variant v : variants) variant_names.push_back(to_string(v));
  std::vector<std::string> seed_names;
  for (auto s : seeds) seed_names.push_back(std::to_string(s));
  return {
      {"variants", join(variant_names)},
      {"preset", to_string(preset)},
      {"plans", join(plans)},
      {"seeds", join(seed_names)},
      {"config2_rate", config2_rate == Config2Rate::multiply ? "multiply" : "set"},
      {"batch_size", std::to_string(batch_size)},
      {"track_train_accuracy", bool_text(track_train_accuracy)},
      {"source.classes", std::to_string(source.classes)},
      {"source.per_class", std::to_string(source.per_class)},
      {"source.tempo", format_exact(source.tempo)},
      {"source.noise", format_exact(source.noise)},
      {"source.seed", std::to_string(source_seed)},
      {"source.epochs", std::to_string(source_epochs)},
      {"source.stop_accuracy", source_stop_accuracy ? format_exact(*source_stop_accuracy) : "none"},
      {"target.classes", std::to_string(target.classes)},
      {"target.per_class", std::to_string(target.per_class)},
      {"target.tempo", format_exact(target.tempo)},
      {"target.noise", format_exact(target.noise)},
      {"target.class_offset", std::to_string(target.class_offset)},
      {"target.epochs", std::to_string(target_epochs)},
  };
}

std::vector<TransferComparison> RecipeOutcome::rows() const {
  std::vector<TransferComparison> out;
  for (const auto& v : variants) out.insert(out.end(), v.averaged.begin(), v.averaged.end());
  return out;
}

RecipeOutcome run_recipe(const TransferRecipe& recipe, const std::filesystem::path& out_dir, std::FILE* log) {
  recipe.validate();
  write_text(out_dir / "recipe.txt", format_key_values(recipe.to_key_values()));
  auto note = [&](const std::string& line) {
    if (!log) return;
    std::fprintf(log, "%s\n", line.c_str());
    std::fflush(log);
  };

  const Dataset source = preprocess_dataset(synth_generate(recipe.source, recipe.source_seed));
  std::vector<Dataset> targets;
  for (auto seed : recipe.seeds) targets.push_back(preprocess_dataset(synth_generate(recipe.target, seed)));

  RecipeOutcome outcome;
  for (Variant variant : recipe.variants) {
    const std::string name = to_string(variant);
    const ScheduleConfig schedule = schedule_preset(variant, recipe.preset);
    VariantOutcome vo{variant, {}, {}, {}};

    Model source_model = Model::build(ModelSpec::make(variant, recipe.preset, recipe.source.classes),
                                      recipe.source_seed);
    FitOptions fit_options;
    fit_options.epochs = recipe.source_epochs;
    fit_options.schedule = schedule;
    fit_options.seed = recipe.source_seed;
    fit_options.batch_size = recipe.batch_size;
    fit_options.track_train_accuracy = true;
    fit_options.stop_at_train_accuracy = recipe.source_stop_accuracy;
    TrainReport source_report = fit(source_model, source.train, source.test, fit_options);
    source_report.config = {{"role", "source"}, {"variant", name}};
    save_report(source_report, out_dir / "runs" / name, "source");
    vo.source_meta = {"synth-source", recipe.source_seed, source_report.epochs(), source_report.curve.back().test_acc};
    const auto checkpoint = out_dir / "checkpoints" / (name + "_source.skckpt");
    save_checkpoint(source_model, vo.source_meta, checkpoint);
    note(name + " source: " + std::to_string(source_report.epochs()) + " epochs, train " +
         format_fixed(source_report.curve.back().train_acc, 4) + ", test " +
         format_fixed(source_report.curve.back().test_acc, 4));
    const Model pretrained = load_checkpoint(checkpoint).model;
    const std::string tag = vo.source_meta.dataset + "@seed" + std::to_string(vo.source_meta.seed);

    std::map<std::string, std::vector<TransferComparison>> by_plan;
    for (std::size_t s = 0; s < recipe.seeds.size(); ++s) {
      const auto seed = recipe.seeds[s];
      const Dataset& target = targets[s];
      TransferOptions options;
      options.epochs = recipe.target_epochs;
      options.seed = seed;
      options.batch_size = recipe.batch_size;
      options.track_train_accuracy = recipe.track_train_accuracy;
      const std::string stem = "seed" + std::to_string(seed);

      const Model fresh = Model::build(ModelSpec::make(variant, recipe.preset, recipe.target.classes), seed);
      TrainReport baseline = transfer_run(fresh, "", target.class_names, target.train, target.test,
                                          make_freeze_plan("none", schedule), options);
      save_report(baseline, out_dir / "runs" / name, stem + "_baseline");
      note(name + " " + stem + " baseline: initial " + format_fixed(baseline.initial(), 4) + ", final " +
           format_fixed(baseline.final(), 4));

      for (const auto& plan_name : recipe.plans) {
        const FreezePlan plan = make_freeze_plan(plan_name, schedule, recipe.config2_rate);
        TrainReport transferred =
            transfer_run(pretrained, tag, target.class_names, target.train, target.test, plan, options);
        save_report(transferred, out_dir / "runs" / name, stem + "_" + plan_name);
        TransferComparison c = compare(name, baseline, transferred);
        note(name + " " + stem + " " + plan_name + ": initial " + format_fixed(transferred.initial(), 4) +
             ", final " + format_fixed(transferred.final(), 4) + ", jumpstart " + format_fixed(c.jumpstart, 4));
        vo.per_seed.push_back(c);
        by_plan[plan_name].push_back(std::move(c));
      }
    }
    for (const auto& plan_name : recipe.plans) vo.averaged.push_back(average(by_plan[plan_name]));
    outcome.variants.push_back(std::move(vo));
  }
  render_report(outcome.rows(), out_dir);
  return outcome;
}

}  // namespace skar
