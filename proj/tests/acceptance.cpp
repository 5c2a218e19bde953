// Runs the ten acceptance criteria and prints one PASS/FAIL line for each.
// Exit status is 0 only when every selected criterion passes. Artifacts go to
// ./acceptance_out (or $SKAR_ACCEPTANCE_OUT).

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "cli.hpp"
#include "skar/check/selfcheck.hpp"
#include "skar/data.hpp"
#include "skar/experiment.hpp"
#include "skar/layers.hpp"
#include "skar/metrics.hpp"
#include "skar/random.hpp"
#include "skar/training.hpp"
#include "skar/transfer.hpp"

namespace fs = std::filesystem;
using namespace skar;

namespace {

// Tolerances and budgets.
constexpr double kGradientRelError = 1e-4;
constexpr double kGradientBudgetSeconds = 120.0;
constexpr std::size_t kInstances = 5;
constexpr double kOracleAbsError = 1e-10;
constexpr double kIdempotenceError = 1e-12;
constexpr double kLearningTarget = 0.95;
constexpr std::size_t kLearningEpochs = 200;
constexpr double kLearningBudgetSeconds = 600.0;
constexpr double kJumpstartFloor = -0.05;
constexpr double kMetricError = 1e-12;

// Kinect v1 joints and the v2 slots that v1 lacks.
constexpr std::size_t kV1Head = 3;
constexpr std::size_t kV1HandLeft = 7;
constexpr std::size_t kV1HandRight = 11;
constexpr std::size_t kNeck = 2;
constexpr std::size_t kHandTipLeft = 21;
constexpr std::size_t kThumbLeft = 22;
constexpr std::size_t kHandTipRight = 23;
constexpr std::size_t kThumbRight = 24;

struct Verdict {
  bool passed = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      passed = false;
      detail += (detail.empty() ? "" : "; ") + std::string("failed: ") + what;
    }
  }
  void note(const std::string& text) { detail += (detail.empty() ? "" : "; ") + text; }
};

fs::path output_root() {
  const char* env = std::getenv("SKAR_ACCEPTANCE_OUT");
  return (env && *env) ? fs::path(env) : fs::path("acceptance_out");
}

std::string fmt(const char* format, double value) {
  char buffer[64];
  std::snprintf(buffer, sizeof buffer, format, value);
  return buffer;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

void merge(Verdict& v, const std::vector<check::CheckResult>& results) {
  for (const auto& r : results) v.require(r.passed, check::format_result(r));
}

// ---- 1 ----
Verdict gradient_correctness() {
  static_assert(kGradientRelError == check::kGradientTolerance);
  Verdict v;
  const auto start = std::chrono::steady_clock::now();
  const auto results = check::gradient_suite(20240601, kInstances);
  const double elapsed = seconds_since(start);
  merge(v, results);
  double worst = 0.0;
  std::size_t kinds = 0;
  for (const auto& r : results) {
    worst = std::max(worst, r.worst);
    v.require(r.cases >= kInstances, r.name + " ran " + std::to_string(r.cases) + " instances");
    ++kinds;
  }
  v.require(kinds >= 6, "expected six layer kinds");
  v.require(elapsed < kGradientBudgetSeconds, "runtime " + fmt("%.1f", elapsed) + " s");
  v.note(std::to_string(kinds) + " layer kinds, worst relative error " + fmt("%.2e", worst) + ", " +
         fmt("%.2f", elapsed) + " s");
  return v;
}

// ---- 2 ----
Verdict oracle_equivalence() {
  static_assert(kOracleAbsError == check::kOracleTolerance);
  Verdict v;
  const auto results = check::oracle_suite(20240602, 10);
  merge(v, results);
  double worst = 0.0;
  for (const auto& r : results) worst = std::max(worst, r.worst);
  const auto k = check::k_adjacency_exhaustive(5);
  v.require(k.passed, check::format_result(k));
  v.note(std::to_string(results.size()) + " kernels, worst abs error " + fmt("%.2e", worst) + "; " +
         std::to_string(k.cases) + " graphs on <= 5 nodes");
  return v;
}

// ---- 3 ----
Verdict algebraic_reductions() {
  Verdict v;
  const auto results = check::reduction_suite(20240603, kInstances);
  merge(v, results);
  v.note(std::to_string(results.size()) + " reductions compared bit for bit");
  return v;
}

// ---- 4 ----
Verdict preprocessing_contracts() {
  Verdict v;
  Rng rng(20240604);
  const auto random_sequence = [&](std::size_t frames, std::size_t joints) {
    SkeletonSequence seq(frames, 2, joints);
    for (std::size_t t = 0; t < frames; ++t) {
      for (std::size_t m = 0; m < 2; ++m) {
        for (std::size_t j = 0; j < joints; ++j) {
          seq.at(t, m, j) = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(0.5, 3)};
        }
      }
    }
    seq.detect_presence();
    return seq;
  };

  // v1 head and hands, and the new v2 slots filled from them.
  const std::pair<std::size_t, std::size_t> duplicated[] = {{kV1Head, kNeck},
                                                           {kV1HandRight, kHandTipRight},
                                                           {kV1HandRight, kThumbRight},
                                                           {kV1HandLeft, kHandTipLeft},
                                                           {kV1HandLeft, kThumbLeft}};
  const auto& map = v1_to_v2_index();
  for (int trial = 0; trial < 20; ++trial) {
    const auto seq = random_sequence(1 + rng.below(20), 20);
    const auto out = expand_20_to_25(seq);
    bool ok = out.joints() == 25 && project_25_to_20(out) == seq;
    for (std::size_t t = 0; t < seq.frames(); ++t) {
      for (std::size_t m = 0; m < 2; ++m) {
        for (const auto& [src, dst] : duplicated) ok = ok && out.at(t, m, dst) == seq.at(t, m, src);
        for (std::size_t j = 0; j < 20; ++j) ok = ok && out.at(t, m, map[j]) == seq.at(t, m, j);
      }
    }
    v.require(ok, "expand_20_to_25 trial " + std::to_string(trial));
  }

  for (std::size_t frames : {1UL, 2UL, 95UL, 170UL, 299UL, 300UL}) {
    const auto seq = random_sequence(frames, 25);
    const auto out = pad_replay(seq, kMaxFrames);
    bool ok = out.frames() == kMaxFrames;
    for (std::size_t t = 0; t < kMaxFrames && ok; ++t) {
      for (std::size_t m = 0; m < 2; ++m) {
        for (std::size_t j = 0; j < 25; ++j) ok = ok && out.at(t, m, j) == seq.at(t % frames, m, j);
      }
    }
    v.require(ok, "pad_replay T=" + std::to_string(frames));
  }

  const auto topology = SkeletonTopology::kinect_v2();
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const auto once = normalize_translate(random_sequence(1 + rng.below(30), 25), topology);
    const auto twice = normalize_translate(once, topology);
    for (std::size_t i = 0; i < once.positions().size(); ++i) {
      for (std::size_t c = 0; c < 3; ++c) {
        worst = std::max(worst, std::abs(once.positions()[i][c] - twice.positions()[i][c]));
      }
    }
  }
  v.require(worst <= kIdempotenceError, "normalize_translate idempotence error " + fmt("%.2e", worst));
  v.note("20 expansion trials, 6 replay lengths, idempotence error " + fmt("%.2e", worst));
  return v;
}

// ---- 5 ----
Dataset small_domain(std::size_t classes, std::size_t offset, std::uint64_t seed) {
  SynthDomainSpec spec;
  spec.classes = classes;
  spec.per_class = 6;
  spec.base_frames = 40;
  spec.class_offset = offset;
  return preprocess_dataset(synth_generate(spec, seed), {48, true});
}

std::map<std::string, std::string> checksums(const Model& model) {
  std::map<std::string, std::string> out;
  for (const auto& p : model.parameters()) out[p.name()] = parameter_checksum(p);
  return out;
}

Verdict freeze_guarantees() {
  Verdict v;
  const auto source_data = small_domain(3, 0, 51);
  const auto target = small_domain(3, 3, 52);
  TransferOptions options;
  options.seed = 5;
  options.batch_size = 4;

  for (Variant variant : {Variant::stgcn, Variant::agcn_2s, Variant::msg3d}) {
    const std::string name = to_string(variant);
    const auto schedule = schedule_preset(variant, ScalePreset::desk);
    Model source = Model::build(ModelSpec::make(variant, ScalePreset::desk, 3), 50);
    FitOptions warmup;
    warmup.epochs = 2;
    warmup.schedule = schedule;
    warmup.track_train_accuracy = false;
    fit(source, source_data.train, source_data.test, warmup);
    const auto before = checksums(source);

    options.epochs = 5;
    Model trained = source;
    transfer_run(source, "source", target.class_names, target.train, target.test,
                 make_freeze_plan("config1", schedule), options, &trained);
    std::size_t unchanged = 0;
    for (const auto& p : trained.parameters()) {
      if (p.role() == RoleTag::head) continue;
      const bool same = parameter_checksum(p) == before.at(p.name());
      v.require(same, name + " config1 changed " + p.name());
      unchanged += same;
    }

    options.epochs = 1;
    transfer_run(source, "source", target.class_names, target.train, target.test,
                 make_freeze_plan("config2", schedule), options, &trained);
    std::size_t temporal_changed = 0;
    for (const auto& p : trained.parameters()) {
      const bool same = parameter_checksum(p) == before.at(p.name());
      if (p.role() == RoleTag::spatial || p.role() == RoleTag::adaptive || p.role() == RoleTag::embedding) {
        v.require(same, name + " config2 changed " + p.name());
      }
      if (p.role() == RoleTag::temporal && !same) ++temporal_changed;
    }
    v.require(temporal_changed >= 1, name + " config2 left every temporal parameter unchanged");

    options.epochs = 3;
    const auto spec = ModelSpec::make(variant, ScalePreset::desk, 3);
    Model baseline_model = Model::build(spec, 9);
    FitOptions fit_options;
    fit_options.epochs = options.epochs;
    fit_options.schedule = schedule;
    fit_options.seed = options.seed;
    fit_options.batch_size = options.batch_size;
    const auto baseline = fit(baseline_model, target.train, target.test, fit_options);
    const auto none = transfer_run(Model::build(spec, 9), "fresh", target.class_names, target.train, target.test,
                                   make_freeze_plan("none", schedule), options);
    v.require(none.curve_csv() == baseline.curve_csv() && none.epoch0_test_acc == baseline.epoch0_test_acc,
              name + " plan none differs from the baseline");
    v.note(name + ": " + std::to_string(unchanged) + " frozen under config1, " + std::to_string(temporal_changed) +
           " temporal changed under config2");
  }
  return v;
}

// ---- 6 ----
Verdict schedule_contract() {
  Verdict v;
  const auto stgcn = schedule_preset(Variant::stgcn);
  const auto agcn = schedule_preset(Variant::agcn_2s);
  const auto msg3d = schedule_preset(Variant::msg3d);
  const std::vector<std::tuple<std::string, ScheduleConfig, std::size_t, double>> expected = {
      {"stgcn", stgcn, 0, 0.1},     {"stgcn", stgcn, 20, 0.01},  {"stgcn", stgcn, 40, 0.001},
      {"agcn_2s", agcn, 0, 0.1},    {"agcn_2s", agcn, 29, 0.1},  {"agcn_2s", agcn, 30, 0.01},
      {"agcn_2s", agcn, 49, 0.01},  {"agcn_2s", agcn, 50, 0.001}, {"agcn_2s", agcn, 70, 0.0001},
      {"msg3d", msg3d, 9, 0.5},     {"msg3d", msg3d, 10, 0.05},  {"msg3d", msg3d, 40, 0.005},
  };
  for (const auto& [name, schedule, epoch, lr] : expected) {
    const double got = lr_at_epoch(schedule, epoch);
    v.require(got == lr, name + " epoch " + std::to_string(epoch) + " gave " + fmt("%.17g", got));
  }
  // agcn_2s decays exactly at 30, 50 and 70 within the first 80 epochs.
  std::vector<std::size_t> points;
  for (std::size_t e = 1; e < 80; ++e) {
    if (lr_at_epoch(agcn, e) != lr_at_epoch(agcn, e - 1)) points.push_back(e);
  }
  v.require(points == std::vector<std::size_t>{30, 50, 70}, "agcn_2s decay points");
  v.note(std::to_string(expected.size()) + " preset values compared with ==");
  return v;
}

// ---- 7 ----
Verdict desk_learning() {
  Verdict v;
  SynthDomainSpec spec;
  spec.classes = 4;
  spec.per_class = 40;
  const Dataset data = preprocess_dataset(synth_generate(spec, 7));
  Model model = Model::build(ModelSpec::make(Variant::stgcn, ScalePreset::desk, 4), 7);
  FitOptions options;
  options.epochs = kLearningEpochs;
  options.schedule = schedule_preset(Variant::stgcn, ScalePreset::desk);
  options.seed = 7;
  options.stop_at_train_accuracy = kLearningTarget;
  const auto start = std::chrono::steady_clock::now();
  const auto report = fit(model, data.train, data.test, options);
  const double elapsed = seconds_since(start);
  const double reached = report.curve.empty() ? 0.0 : report.curve.back().train_acc;
  v.require(reached >= kLearningTarget, "train accuracy " + fmt("%.4f", reached));
  v.require(elapsed < kLearningBudgetSeconds, "wall time " + fmt("%.1f", elapsed) + " s");
  save_report(report, output_root() / "c7", "stgcn_desk");
  v.note("train accuracy " + fmt("%.4f", reached) + " after " + std::to_string(report.epochs()) + " epochs (" +
         std::to_string(data.train.size()) + " train samples), test " + fmt("%.4f", report.curve.back().test_acc) +
         ", " + fmt("%.1f", elapsed) + " s");
  return v;
}

// ---- 8 ----
Verdict desk_transfer() {
  Verdict v;
  TransferRecipe recipe;
  recipe.variants = {Variant::stgcn};
  recipe.plans = {"config1", "config2"};
  recipe.seeds = {1, 2, 3};
  const auto dir = output_root() / "c8";
  const auto start = std::chrono::steady_clock::now();
  const auto outcome = run_recipe(recipe, dir, stdout);
  const double elapsed = seconds_since(start);
  const auto& stgcn = outcome.variants.at(0);
  v.note("source test accuracy " + fmt("%.4f", stgcn.source_meta.accuracy));

  double config1_jumpstart = -1.0;
  for (const char* plan : {"config1", "config2"}) {
    const TransferComparison* row = nullptr;
    for (const auto& c : stgcn.averaged) {
      if (c.plan == plan) row = &c;
    }
    v.require(row != nullptr, std::string("no ") + plan + " row");
    if (!row) continue;
    const bool complete = row->seeds == recipe.seeds.size() && std::isfinite(row->final) &&
                          std::isfinite(row->jumpstart) && std::isfinite(row->asymptotic);
    v.require(complete, std::string(plan) + " row incomplete");
    v.require(fs::exists(dir / ("curves_stgcn_" + std::string(plan) + ".svg")), std::string(plan) + " plot missing");
    if (std::string(plan) == "config1") config1_jumpstart = row->jumpstart;
    v.note(std::string(plan) + " final " + fmt("%.4f", row->final) + " jumpstart " + fmt("%+.4f", row->jumpstart) +
           " asymptotic " + fmt("%+.4f", row->asymptotic));
  }
  const auto rows = parse_summary_csv([&] {
    std::ifstream in(dir / "summary.csv");
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
  }());
  v.require(rows.size() == 2, "summary.csv has " + std::to_string(rows.size()) + " rows");
  v.require(config1_jumpstart >= kJumpstartFloor, "mean config1 jumpstart " + fmt("%+.4f", config1_jumpstart));
  v.note(fmt("%.1f", elapsed) + " s");
  return v;
}

// ---- 9 ----
TrainReport curve(std::vector<double> test_acc) {
  TrainReport r;
  for (std::size_t e = 0; e < test_acc.size(); ++e) {
    EpochRecord rec;
    rec.epoch = e + 1;
    rec.test_acc = test_acc[e];
    r.curve.push_back(rec);
  }
  return r;
}

Verdict metric_arithmetic() {
  Verdict v;
  // Hand-computed: initial = epoch-1 test accuracy, final = best over the run.
  const auto baseline = curve({0.30, 0.35, 0.41, 0.40});
  const auto transferred = curve({0.67, 0.82, 0.75});
  v.require(asymptotic(baseline, transferred) == 0.41, "asymptotic 0.82 - 0.41");
  v.require(std::abs(jumpstart(baseline, transferred) - 0.37) < kMetricError, "jumpstart 0.67 - 0.30");
  const auto early = curve({0.50, 0.45});
  v.require(std::abs(jumpstart(early, transferred) - 0.17) < kMetricError, "jumpstart 0.67 - 0.50");
  v.require(jumpstart(transferred, early) == -jumpstart(early, transferred), "jumpstart antisymmetry");
  v.require(jumpstart(baseline, baseline) == 0.0 && asymptotic(baseline, baseline) == 0.0, "identity");
  const auto negative = curve({0.25, 0.30});
  v.require(std::abs(jumpstart(early, negative) + 0.25) < kMetricError, "negative jumpstart -0.25");
  v.require(std::abs(asymptotic(early, negative) + 0.20) < kMetricError, "negative asymptotic -0.20");
  const auto rising_a = curve({0.1, 0.2, 0.3});
  const auto rising_b = curve({0.2, 0.4, 0.7});
  v.require(std::abs(asymptotic(rising_a, rising_b) - 0.4) < kMetricError, "monotone curves use the last epoch");
  v.note("asymptotic(0.41 -> 0.82) = " + fmt("%.17g", asymptotic(baseline, transferred)));
  return v;
}

// ---- 10 ----
std::map<std::string, std::string> tree(const fs::path& dir) {
  std::map<std::string, std::string> files;
  if (!fs::is_directory(dir)) return files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    std::ifstream in(e.path(), std::ios::binary);
    std::stringstream s;
    s << in.rdbuf();
    files[fs::relative(e.path(), dir).string()] = s.str();
  }
  return files;
}

Verdict reproducibility() {
  Verdict v;
  const auto root = output_root() / "c10";
  fs::remove_all(root);
  std::FILE* sink = std::tmpfile();
  const auto twice = [&](const std::string& name, std::vector<std::string> args) {
    std::vector<std::map<std::string, std::string>> trees;
    for (const char* run : {"a", "b"}) {
      auto full = args;
      const auto out = root / (name + "_" + run);
      full.insert(full.end(), {"--out", out.string()});
      const int code = cli::run(full, sink, sink);
      v.require(code == 0, name + " run " + run + " exited " + std::to_string(code));
      trees.push_back(tree(out));
    }
    v.require(!trees[0].empty() && trees[0] == trees[1], name + " outputs differ");
    return (root / (name + "_a")).string();
  };
  const auto raw =
      twice("gen-synth", {"gen-synth", "--classes", "3", "--per-class", "4", "--base-frames", "24", "--seed", "11"});
  const auto data = twice("convert", {"convert", "--in", raw, "--frames", "32"});
  const auto train = twice("train", {"train", "--data", data, "--epochs", "2", "--seed", "3", "--batch-size", "4"});
  const auto target_raw =
      twice("gen-synth-target", {"gen-synth", "--classes", "2", "--per-class", "4", "--base-frames", "24", "--class-offset",
                                 "3", "--tempo", "1.8", "--seed", "12"});
  const auto target = twice("convert-target", {"convert", "--in", target_raw, "--frames", "64"});
  const auto ckpt = (fs::path(train) / "model.skckpt").string();
  for (const char* plan : {"config1", "config2", "none"}) {
    twice(std::string("transfer-") + plan,
          {"transfer", "--source", ckpt, "--plan", plan, "--data", target, "--epochs", "2", "--seed", "4"});
  }
  twice("eval", {"eval", "--checkpoint", ckpt, "--data", data, "--split", "all"});
  twice("report", {"report", "--baseline", (root / "transfer-none_a").string(), "--transferred",
                   (root / "transfer-config1_a").string(), "--transferred", (root / "transfer-config2_a").string(),
                   "--model", "stgcn"});
  std::fclose(sink);

  // selftest writes no files; its printed report is compared instead.
  std::string printed[2];
  for (auto& text : printed) {
    std::FILE* out = std::tmpfile();
    const int code = cli::run({"selftest", "--seed", "2"}, out, out);
    v.require(code == 0, "selftest exited " + std::to_string(code));
    std::rewind(out);
    char buffer[4096];
    for (std::size_t n; (n = std::fread(buffer, 1, sizeof buffer, out)) > 0;) text.append(buffer, n);
    std::fclose(out);
  }
  v.require(!printed[0].empty() && printed[0] == printed[1], "selftest output differs");
  v.note("gen-synth, convert, train, transfer x3, eval, report and selftest compared byte for byte");
  return v;
}

}  // namespace

int main(int argc, char** argv) {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
  fs::create_directories(output_root());
  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria = {
      {"gradient correctness", gradient_correctness},
      {"oracle equivalence", oracle_equivalence},
      {"algebraic reductions", algebraic_reductions},
      {"preprocessing contracts", preprocessing_contracts},
      {"freeze-plan guarantees", freeze_guarantees},
      {"schedule contract", schedule_contract},
      {"desk-scale learning", desk_learning},
      {"desk-scale transfer", desk_transfer},
      {"metric arithmetic", metric_arithmetic},
      {"reproducibility", reproducibility},
  };
  // Optional arguments pick criteria by number; the default runs all of them.
  std::vector<bool> selected(criteria.size(), argc <= 1);
  for (int a = 1; a < argc; ++a) {
    const int n = std::atoi(argv[a]);
    if (n < 1 || n > static_cast<int>(criteria.size())) {
      std::fprintf(stderr, "usage: acceptance [criterion number]...\n");
      return 2;
    }
    selected[n - 1] = true;
  }
  std::vector<std::string> lines;
  bool all = true;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (!selected[i]) continue;
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v.require(false, std::string("exception: ") + e.what());
    }
    all = all && v.passed;
    char head[96];
    std::snprintf(head, sizeof head, "criterion %2zu %-24s %s", i + 1, criteria[i].first.c_str(),
                  v.passed ? "PASS" : "FAIL");
    lines.push_back(std::string(head) + "  " + v.detail);
    std::printf("%s\n", lines.back().c_str());
    std::fflush(stdout);
  }
  std::printf("\nsummary\n");
  for (const auto& line : lines) std::printf("%s\n", line.c_str());
  std::ofstream(output_root() / "acceptance.txt") << [&] {
    std::string text;
    for (const auto& line : lines) text += line + "\n";
    return text;
  }();
  return all ? 0 : 1;
}
