#include "cli.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>

#include "CLI11.hpp"
#include "skar/check/selfcheck.hpp"
#include "skar/data.hpp"
#include "skar/error.hpp"
#include "skar/experiment.hpp"
#include "skar/metrics.hpp"
#include "skar/textio.hpp"
#include "skar/training.hpp"
#include "skar/transfer.hpp"

namespace skar::cli {
namespace {

namespace fs = std::filesystem;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Options that are never echoed into config.txt.
const std::set<std::string> kNotEchoed = {"help", "config", "out"};

std::string first_lname(const CLI::Option* o) { return o->get_lnames().empty() ? "" : o->get_lnames().front(); }

// Values from a `key = value` file fill every option not given on the
// command line. Keys are long flag names; '_' and '-' are interchangeable.
void apply_config_file(CLI::App& sub, const std::string& path) {
  KeyValues values;
  try {
    values = parse_key_values(read_text(path), path);
  } catch (const DataError& e) {
    throw UsageError(e.what());
  }
  for (const auto& [raw_key, value] : values) {
    std::string key = raw_key;
    std::replace(key.begin(), key.end(), '_', '-');
    CLI::Option* option = nullptr;
    for (auto* o : sub.get_options()) {
      if (first_lname(o) == key) option = o;
    }
    if (!option || kNotEchoed.contains(key)) {
      throw UsageError(path + ": unknown key '" + raw_key + "' for command " + sub.get_name());
    }
    if (option->count() > 0) continue;
    if (option->get_expected_max() > 1) {
      std::stringstream items(value);
      std::string item;
      while (std::getline(items, item, ',')) option->add_result(item);
    } else {
      option->add_result(value);
    }
    try {
      option->run_callback();
    } catch (const CLI::Error& e) {
      throw UsageError(path + ": key '" + raw_key + "': " + e.what());
    }
  }
}

std::string resolved_config(const CLI::App& sub) {
  KeyValues values;
  for (const auto* o : sub.get_options()) {
    const std::string name = first_lname(o);
    if (name.empty() || kNotEchoed.contains(name)) continue;
    std::string value;
    if (o->count() > 0) {
      for (const auto& r : o->results()) value += (value.empty() ? "" : ",") + r;
    } else {
      value = o->get_default_str();
    }
    if (!value.empty()) values[name] = value;
  }
  return "# " + sub.get_name() + "\n" + format_key_values(values);
}

fs::path manifest_path(const std::string& data) {
  const fs::path p(data);
  return fs::is_directory(p) ? p / "manifest.txt" : p;
}

std::string dataset_tag(const std::string& data, const std::string& fallback) {
  if (data.empty()) return fallback;
  fs::path p(data);
  if (!fs::is_directory(p)) p = p.parent_path();
  std::string tag = p.filename().string();
  for (char& c : tag) {
    if (std::isspace(static_cast<unsigned char>(c))) c = '_';
  }
  return tag.empty() ? fallback : tag;
}

Config2Rate parse_rate(const std::string& text) {
  if (text == "multiply") return Config2Rate::multiply;
  if (text == "set") return Config2Rate::set;
  throw UsageError("--config2-rate must be multiply or set");
}

struct Context {
  std::FILE* out;
  std::FILE* err;
};

void say(const Context& ctx, const std::string& line) {
  std::fprintf(ctx.out, "%s\n", line.c_str());
  std::fflush(ctx.out);
}

// ---- gen-synth ----

struct GenSynthArgs {
  SynthDomainSpec spec;
  std::uint64_t seed = 1;
};

void cmd_gen_synth(const GenSynthArgs& a, const fs::path& out_dir, const Context& ctx) {
  const Dataset d = synth_generate(a.spec, a.seed);
  save_dataset(d, out_dir);
  say(ctx, "wrote " + std::to_string(d.size()) + " samples (" + std::to_string(d.train.size()) + " train, " +
               std::to_string(d.test.size()) + " test) to " + out_dir.string());
}

// ---- convert ----

struct ConvertArgs {
  std::string in;
  std::size_t frames = kMaxFrames;
  bool no_normalize = false;
};

void cmd_convert(const ConvertArgs& a, const fs::path& out_dir, const Context& ctx) {
  const Dataset raw = load_dataset(manifest_path(a.in));
  PreprocessOptions options;
  options.target_frames = a.frames;
  options.normalize = !a.no_normalize;
  const Dataset converted = preprocess_dataset(raw, options);
  save_dataset(converted, out_dir);
  say(ctx, "converted " + std::to_string(converted.size()) + " samples to " +
               std::to_string(converted.train.empty() ? converted.test.front().sequence.joints()
                                                      : converted.train.front().sequence.joints()) +
               " joints x " + std::to_string(a.frames) + " frames in " + out_dir.string());
}

// ---- train ----

struct TrainArgs {
  std::string data;
  std::string variant = "stgcn";
  std::string preset = "desk";
  std::size_t epochs = 50;
  std::uint64_t seed = 1;
  std::optional<double> lr;
  std::size_t batch_size = 8;
  std::optional<double> stop_accuracy;
  bool verbose = false;
};

Dataset training_data(const std::string& data, std::uint64_t seed, const SynthDomainSpec& fallback) {
  if (data.empty()) return preprocess_dataset(synth_generate(fallback, seed));
  return preprocess_dataset(load_dataset(manifest_path(data)));
}

void print_report_lines(const TrainReport& report, const Context& ctx) {
  say(ctx, "epoch 0 test " + format_fixed(report.epoch0_test_acc, 4));
  for (const auto& r : report.curve) {
    say(ctx, "epoch " + std::to_string(r.epoch) + " lr " + format_exact(r.lr) + " loss " + format_fixed(r.loss, 4) +
                 " train " + format_fixed(r.train_acc, 4) + " test " + format_fixed(r.test_acc, 4));
  }
}

void cmd_train(const TrainArgs& a, const fs::path& out_dir, const Context& ctx) {
  const Variant variant = parse_variant(a.variant);
  const ScalePreset preset = parse_preset(a.preset);
  const Dataset d = training_data(a.data, a.seed, SynthDomainSpec{});
  Model model = Model::build(ModelSpec::make(variant, preset, d.class_names.size()), a.seed);
  FitOptions options;
  options.epochs = a.epochs;
  options.schedule = schedule_preset(variant, preset);
  if (a.lr) options.schedule.initial_lr = *a.lr;
  options.seed = a.seed;
  options.batch_size = a.batch_size;
  options.stop_at_train_accuracy = a.stop_accuracy;
  options.verbose = a.verbose;
  TrainReport report = fit(model, d.train, d.test, options);
  report.config = {{"variant", a.variant}, {"preset", a.preset}, {"classes", std::to_string(d.class_names.size())}};
  if (!a.verbose) print_report_lines(report, ctx);
  save_report(report, out_dir, "report");
  const double last = report.curve.empty() ? report.epoch0_test_acc : report.curve.back().test_acc;
  save_checkpoint(model, {dataset_tag(a.data, "synth-default"), a.seed, report.epochs(), last}, out_dir / "model.skckpt");
  say(ctx, "wall " + format_fixed(report.wall_seconds, 1) + " s");
  say(ctx, "wrote " + (out_dir / "model.skckpt").string());
}

// ---- transfer ----

struct TransferArgs {
  std::string source;
  std::string plan = "config1";
  std::string data;
  std::size_t epochs = 15;
  std::uint64_t seed = 1;
  std::optional<double> lr;
  std::string config2_rate = "multiply";
  std::size_t batch_size = 8;
  bool verbose = false;
};

SynthDomainSpec default_target_domain() {
  TransferRecipe recipe;
  return recipe.target;
}

void cmd_transfer(const TransferArgs& a, const fs::path& out_dir, const Context& ctx) {
  LoadedCheckpoint loaded = load_checkpoint(a.source);
  const ModelSpec& source_spec = loaded.model.spec();
  const Dataset d = training_data(a.data, a.seed, default_target_domain());
  FreezePlan plan = make_freeze_plan(a.plan, schedule_preset(source_spec.variant, source_spec.preset),
                                     parse_rate(a.config2_rate));
  if (a.lr) plan.lr_override.initial_lr = *a.lr;
  TransferOptions options;
  options.epochs = a.epochs;
  options.seed = a.seed;
  options.batch_size = a.batch_size;
  options.verbose = a.verbose;
  const Model before = loaded.model;
  const std::string tag = loaded.meta.dataset + "@seed" + std::to_string(loaded.meta.seed);
  Model trained = loaded.model;
  TrainReport report = transfer_run(std::move(loaded.model), tag, d.class_names, d.train, d.test, plan, options, &trained);
  report.config = {{"variant", to_string(source_spec.variant)},
                   {"preset", to_string(source_spec.preset)},
                   {"source_checkpoint", a.source},
                   {"lr", format_exact(plan.lr_override.initial_lr)}};
  if (!a.verbose) print_report_lines(report, ctx);
  save_report(report, out_dir, "report");

  std::string frozen = "# name\trole\tchecksum\tunchanged\n";
  std::size_t changed = 0;
  for (const auto& p : trained.parameters()) {
    if (p.trainable()) continue;
    const std::string sum = parameter_checksum(p);
    const bool same = sum == parameter_checksum(before.parameter(p.name()));
    if (!same) ++changed;
    frozen += p.name() + "\t" + to_string(p.role()) + "\t" + sum + "\t" + (same ? "yes" : "no") + "\n";
  }
  write_text(out_dir / "frozen_parameters.txt", frozen);
  save_checkpoint(trained, {dataset_tag(a.data, "synth-target"), a.seed, report.epochs(),
                            report.curve.empty() ? report.epoch0_test_acc : report.curve.back().test_acc},
                  out_dir / "model.skckpt");
  say(ctx, "plan " + plan.name + ": " + std::to_string(std::count_if(trained.parameters().begin(),
                                                                     trained.parameters().end(),
                                                                     [](const auto& p) { return !p.trainable(); })) +
               " frozen parameters, " + std::to_string(changed) + " changed");
  if (changed != 0) throw NumericalError("frozen parameters changed during transfer");
  say(ctx, "wall " + format_fixed(report.wall_seconds, 1) + " s");
}

// ---- eval ----

struct EvalArgs {
  std::string checkpoint;
  std::string data;
  std::string split = "test";
};

void cmd_eval(const EvalArgs& a, const std::optional<fs::path>& out_dir, const Context& ctx) {
  const LoadedCheckpoint loaded = load_checkpoint(a.checkpoint);
  const Dataset d = preprocess_dataset(load_dataset(manifest_path(a.data)));
  if (d.class_names.size() != loaded.model.spec().num_classes) {
    throw DataError("checkpoint has " + std::to_string(loaded.model.spec().num_classes) + " classes, dataset has " +
                    std::to_string(d.class_names.size()));
  }
  std::vector<ActionSample> samples;
  if (a.split == "train" || a.split == "all") samples.insert(samples.end(), d.train.begin(), d.train.end());
  if (a.split == "test" || a.split == "all") samples.insert(samples.end(), d.test.begin(), d.test.end());
  if (a.split != "train" && a.split != "test" && a.split != "all") throw UsageError("--split must be train, test or all");
  const auto predicted = predict_labels(loaded.model, samples);
  std::size_t correct = 0;
  std::string csv = "index,label,predicted\n";
  for (std::size_t i = 0; i < samples.size(); ++i) {
    correct += predicted[i] == samples[i].label;
    csv += std::to_string(i) + "," + std::to_string(samples[i].label) + "," + std::to_string(predicted[i]) + "\n";
  }
  if (samples.empty()) throw DataError("no samples in split " + a.split);
  const double accuracy = static_cast<double>(correct) / static_cast<double>(samples.size());
  if (out_dir) write_text(*out_dir / "predictions.csv", csv);
  say(ctx, "accuracy " + format_fixed(accuracy, 4) + " (" + std::to_string(correct) + "/" +
               std::to_string(samples.size()) + ")");
}

// ---- report ----

struct ReportArgs {
  std::string recipe;
  std::vector<std::string> baselines;
  std::vector<std::string> transferred;
  std::string model = "model";
};

TrainReport load_stem(const std::string& stem_path) {
  const fs::path p(stem_path);
  if (fs::is_directory(p)) return load_report(p, "report");
  return load_report(p.parent_path().empty() ? fs::path(".") : p.parent_path(), p.filename().string());
}

void cmd_report(const ReportArgs& a, const fs::path& out_dir, const Context& ctx) {
  std::vector<TransferComparison> rows;
  if (!a.recipe.empty()) {
    if (!a.baselines.empty() || !a.transferred.empty()) throw UsageError("--recipe excludes --baseline/--transferred");
    const TransferRecipe recipe = TransferRecipe::from_key_values(parse_key_values(read_text(a.recipe), a.recipe));
    rows = run_recipe(recipe, out_dir, ctx.out).rows();
  } else {
    if (a.baselines.empty() || a.transferred.empty()) {
      throw UsageError("report needs --recipe, or --baseline and --transferred");
    }
    std::vector<TrainReport> baselines;
    for (const auto& b : a.baselines) baselines.push_back(load_stem(b));
    std::map<std::string, std::vector<TransferComparison>> by_plan;
    std::vector<std::string> plan_order;
    for (const auto& t : a.transferred) {
      TrainReport report = load_stem(t);
      auto& group = by_plan[report.plan];
      if (group.empty()) plan_order.push_back(report.plan);
      if (group.size() >= baselines.size()) {
        throw UsageError("plan " + report.plan + " has more transferred reports than baselines");
      }
      group.push_back(compare(a.model, baselines[group.size()], report));
    }
    for (const auto& plan : plan_order) {
      if (by_plan[plan].size() != baselines.size()) {
        throw UsageError("plan " + plan + " needs one transferred report per baseline");
      }
      rows.push_back(average(by_plan[plan]));
    }
    render_report(rows, out_dir);
  }
  std::fputs(summary_table(rows).c_str(), ctx.out);
  say(ctx, "wrote " + (out_dir / "summary.txt").string());
}

// ---- selftest ----

int cmd_selftest(std::uint64_t seed, const Context& ctx) {
  std::vector<check::CheckResult> results = check::gradient_suite(seed);
  for (auto& r : check::oracle_suite(seed)) results.push_back(std::move(r));
  results.push_back(check::k_adjacency_exhaustive());
  for (auto& r : check::reduction_suite(seed)) results.push_back(std::move(r));
  for (const auto& r : results) say(ctx, check::format_result(r));
  const bool ok = check::all_passed(results);
  say(ctx, ok ? "selftest passed" : "selftest FAILED");
  return ok ? kOk : kSelfTestFailure;
}

}  // namespace

std::string default_output_dir(const std::string& command) {
  const char* root = std::getenv("SKAR_OUTPUT_ROOT");
  const fs::path base = (root && *root) ? fs::path(root) : fs::path("skar_out");
  return (base / command).string();
}

int run(const std::vector<std::string>& args, std::FILE* out, std::FILE* err) {
  const Context ctx{out, err};
  CLI::App app{"Skeleton action recognition: training, transfer and evaluation", "skar"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Print help for every command");

  std::map<std::string, std::string> config_files;
  std::map<std::string, std::string> out_dirs;
  auto common = [&](CLI::App* sub, bool with_out) {
    sub->add_option("--config", config_files[sub->get_name()], "Read unset options from a `key = value` file");
    if (with_out) {
      sub->add_option("--out", out_dirs[sub->get_name()],
                      "Output directory (default $SKAR_OUTPUT_ROOT/" + sub->get_name() + ")");
    }
  };

  GenSynthArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-synth", "Generate a synthetic skeleton action dataset");
  gen_cmd->add_option("--classes", gen.spec.classes, "Number of action classes")
      ->check(CLI::Range(std::size_t{1}, std::size_t{100000}))
      ->capture_default_str();
  gen_cmd->add_option("--per-class", gen.spec.per_class, "Samples per class")
      ->check(CLI::Range(std::size_t{1}, std::size_t{100000}))
      ->capture_default_str();
  gen_cmd->add_option("--tempo", gen.spec.tempo, "Frame-count multiplier")->check(CLI::PositiveNumber)->capture_default_str();
  gen_cmd->add_option("--noise", gen.spec.noise, "Coordinate noise in meters")->capture_default_str();
  gen_cmd->add_option("--joints", gen.spec.joints, "Joints per body (20 or 25)")
      ->check(CLI::IsMember({20, 25}))
      ->capture_default_str();
  gen_cmd->add_option("--base-frames", gen.spec.base_frames, "Frames per motion at tempo 1")->capture_default_str();
  gen_cmd->add_option("--class-offset", gen.spec.class_offset, "Index of the first motion primitive")
      ->capture_default_str();
  gen_cmd->add_option("--test-fraction", gen.spec.test_fraction, "Fraction of each class held out for testing")
      ->capture_default_str();
  gen_cmd->add_option("--tempo-jitter", gen.spec.tempo_jitter, "Per-sample relative tempo variation")
      ->capture_default_str();
  gen_cmd->add_option("--seed", gen.seed, "Random seed")->capture_default_str();
  common(gen_cmd, true);

  ConvertArgs conv;
  auto* conv_cmd = app.add_subcommand("convert", "Expand to 25 joints, pad to a fixed length and normalize");
  conv_cmd->add_option("--in", conv.in, "Input dataset directory or manifest")->required();
  conv_cmd->add_option("--frames", conv.frames, "Target frame count")
      ->check(CLI::Range(std::size_t{1}, kMaxFrames))
      ->capture_default_str();
  conv_cmd->add_flag("--no-normalize", conv.no_normalize, "Skip translation normalization")->default_str("false");
  common(conv_cmd, true);

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "Train a model from scratch");
  train_cmd->add_option("--data", train.data, "Dataset directory or manifest (default: synthetic 4-class set)");
  train_cmd->add_option("--variant", train.variant, "stgcn, agcn_2s or msg3d")
      ->check(CLI::IsMember({"stgcn", "agcn_2s", "msg3d"}))
      ->capture_default_str();
  train_cmd->add_option("--preset", train.preset, "paper or desk")
      ->check(CLI::IsMember({"paper", "desk"}))
      ->capture_default_str();
  train_cmd->add_option("--epochs", train.epochs, "Training epochs")->capture_default_str();
  train_cmd->add_option("--seed", train.seed, "Random seed")->capture_default_str();
  train_cmd->add_option("--lr", train.lr, "Override the preset's initial learning rate")->check(CLI::PositiveNumber);
  train_cmd->add_option("--batch-size", train.batch_size, "Minibatch size")
      ->check(CLI::Range(std::size_t{1}, std::size_t{4096}))
      ->capture_default_str();
  train_cmd->add_option("--stop-accuracy", train.stop_accuracy, "Stop once train accuracy reaches this value")
      ->check(CLI::Range(0.0, 1.0));
  train_cmd->add_flag("--verbose", train.verbose, "Print each epoch as it finishes")->default_str("false");
  common(train_cmd, true);

  TransferArgs xfer;
  auto* xfer_cmd = app.add_subcommand("transfer", "Fine-tune a source checkpoint on a target dataset");
  xfer_cmd->add_option("--source", xfer.source, "Source checkpoint (.skckpt)")->required();
  xfer_cmd->add_option("--plan", xfer.plan, "config1 (head only), config2 (temporal + head) or none")
      ->check(CLI::IsMember({"config1", "config2", "none"}))
      ->capture_default_str();
  xfer_cmd->add_option("--data", xfer.data, "Target dataset directory or manifest (default: synthetic target set)");
  xfer_cmd->add_option("--epochs", xfer.epochs, "Training epochs")->capture_default_str();
  xfer_cmd->add_option("--seed", xfer.seed, "Random seed")->capture_default_str();
  xfer_cmd->add_option("--lr", xfer.lr, "Override the plan's initial learning rate")->check(CLI::PositiveNumber);
  xfer_cmd->add_option("--config2-rate", xfer.config2_rate, "config2 rate: multiply (source x 0.01) or set (0.01)")
      ->check(CLI::IsMember({"multiply", "set"}))
      ->capture_default_str();
  xfer_cmd->add_option("--batch-size", xfer.batch_size, "Minibatch size")
      ->check(CLI::Range(std::size_t{1}, std::size_t{4096}))
      ->capture_default_str();
  xfer_cmd->add_flag("--verbose", xfer.verbose, "Print each epoch as it finishes")->default_str("false");
  common(xfer_cmd, true);

  EvalArgs eval;
  auto* eval_cmd = app.add_subcommand("eval", "Measure checkpoint accuracy on a dataset");
  eval_cmd->add_option("--checkpoint", eval.checkpoint, "Checkpoint (.skckpt)")->required();
  eval_cmd->add_option("--data", eval.data, "Dataset directory or manifest")->required();
  eval_cmd->add_option("--split", eval.split, "train, test or all")
      ->check(CLI::IsMember({"train", "test", "all"}))
      ->capture_default_str();
  common(eval_cmd, false);
  eval_cmd->add_option("--out", out_dirs["eval"], "Write predictions.csv here");

  ReportArgs rep;
  auto* rep_cmd = app.add_subcommand("report", "Run a transfer recipe, or tabulate saved reports");
  rep_cmd->add_option("--recipe", rep.recipe, "Recipe file (baseline, config1 and config2 per variant)");
  rep_cmd->add_option("--baseline", rep.baselines, "Baseline report (directory or <dir>/<stem>); repeat per seed");
  rep_cmd->add_option("--transferred", rep.transferred,
                      "Transferred report (directory or <dir>/<stem>); repeat per seed and plan");
  rep_cmd->add_option("--model", rep.model, "Model label for tables and plot names")->capture_default_str();
  common(rep_cmd, true);

  std::uint64_t selftest_seed = 1;
  auto* self_cmd = app.add_subcommand("selftest", "Run gradient, oracle and reduction checks");
  self_cmd->add_option("--seed", selftest_seed, "Random seed")->capture_default_str();
  common(self_cmd, false);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
    CLI::App* sub = app.get_subcommands().front();
    const std::string name = sub->get_name();
    if (!config_files[name].empty()) apply_config_file(*sub, config_files[name]);

    if (name == "selftest") return cmd_selftest(selftest_seed, ctx);
    if (name == "eval") {
      std::optional<fs::path> dir;
      if (!out_dirs["eval"].empty()) dir = out_dirs["eval"];
      cmd_eval(eval, dir, ctx);
      return kOk;
    }

    const fs::path out_dir = out_dirs[name].empty() ? fs::path(default_output_dir(name)) : fs::path(out_dirs[name]);
    fs::create_directories(out_dir);
    write_text(out_dir / "config.txt", resolved_config(*sub));
    if (name == "gen-synth") cmd_gen_synth(gen, out_dir, ctx);
    if (name == "convert") cmd_convert(conv, out_dir, ctx);
    if (name == "train") cmd_train(train, out_dir, ctx);
    if (name == "transfer") cmd_transfer(xfer, out_dir, ctx);
    if (name == "report") cmd_report(rep, out_dir, ctx);
    return kOk;
  } catch (const CLI::CallForHelp&) {
    std::fputs(app.help().c_str(), out);
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    std::fputs(app.help("", CLI::AppFormatMode::All).c_str(), out);
    return kOk;
  } catch (const CLI::ParseError& e) {
    std::fprintf(err, "usage error: %s\nRun with --help for more information.\n", e.what());
    return kUsage;
  } catch (const UsageError& e) {
    std::fprintf(err, "usage error: %s\n", e.what());
    return kUsage;
  } catch (const std::exception& e) {
    std::fprintf(err, "error: %s\n", e.what());
    return kDataError;
  }
}

}  // namespace skar::cli
