#include "skar/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "skar/error.hpp"
#include "skar/random.hpp"
#include "skar/textio.hpp"

namespace skar {
namespace {

constexpr std::size_t kEvalBatch = 16;

}  // namespace

void ScheduleConfig::validate() const {
  if (!(initial_lr > 0.0)) throw DataError("initial learning rate must be positive");
  if (!(decay_factor > 0.0 && decay_factor <= 1.0)) throw DataError("decay factor must be in (0, 1]");
  if (interval_epochs == 0) throw DataError("decay interval must be positive");
}

ScheduleConfig schedule_preset(Variant variant) {
  switch (variant) {
    case Variant::stgcn: return {0.1, 0.1, 20, 20};
    case Variant::agcn_2s: return {0.1, 0.1, 20, 30};
    case Variant::msg3d: return {0.5, 0.1, 30, 10};
  }
  throw DataError("unknown variant");
}

ScheduleConfig schedule_preset(Variant variant, ScalePreset preset) {
  ScheduleConfig schedule = schedule_preset(variant);
  if (preset == ScalePreset::desk) {
    schedule.initial_lr = variant == Variant::agcn_2s ? 0.003 : 0.002;
    schedule.start_epoch *= 2;
    schedule.interval_epochs *= 2;
  }
  return schedule;
}

double lr_at_epoch(const ScheduleConfig& schedule, std::size_t epoch) {
  if (epoch < schedule.start_epoch) return schedule.initial_lr;
  const std::size_t points = (epoch - schedule.start_epoch) / schedule.interval_epochs + 1;
  // Dividing by the reciprocal (10 for a 0.1 factor) keeps decimal rates
  // correctly rounded: 0.1 / 10 == 0.01, whereas 0.1 * 0.1 != 0.01.
  return schedule.initial_lr / std::pow(1.0 / schedule.decay_factor, static_cast<double>(points));
}

void adam_step(std::vector<Parameter<double>>& params, OptimizerState& state, double lr) {
  for (const auto& p : params) {
    if (p.trainable() && !p.tensor().has_grad()) {
      throw NumericalError("trainable parameter " + p.name() + " has no gradient");
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(state.beta1, t);
  const double correction2 = 1.0 - std::pow(state.beta2, t);
  for (auto& p : params) {
    if (!p.trainable()) continue;
    auto values = p.tensor().mutable_values();
    const auto grad = p.tensor().grad();
    Moments& m = state.moments[p.name()];
    if (m.first.size() != values.size()) {
      m.first.assign(values.size(), 0.0);
      m.second.assign(values.size(), 0.0);
    }
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double g = grad[i];
      m.first[i] = state.beta1 * m.first[i] + (1.0 - state.beta1) * g;
      m.second[i] = state.beta2 * m.second[i] + (1.0 - state.beta2) * g * g;
      const double mhat = m.first[i] / correction1;
      const double vhat = m.second[i] / correction2;
      values[i] -= lr * mhat / (std::sqrt(vhat) + state.epsilon);
    }
  }
}

double TrainReport::initial() const {
  if (curve.empty()) throw DataError("report has an empty curve");
  return curve.front().test_acc;
}

double TrainReport::final() const {
  if (curve.empty()) throw DataError("report has an empty curve");
  double best = curve.front().test_acc;
  for (const auto& r : curve) best = std::max(best, r.test_acc);
  return best;
}

std::string TrainReport::curve_csv() const {
  std::string text = "epoch,lr,loss,train_acc,test_acc\n";
  for (const auto& r : curve) {
    text += std::to_string(r.epoch) + "," + format_exact(r.lr) + "," + format_exact(r.loss) + "," +
            format_exact(r.train_acc) + "," + format_exact(r.test_acc) + "\n";
  }
  return text;
}

std::string TrainReport::summary_text() const {
  std::string text;
  text += "epochs\t" + std::to_string(curve.size()) + "\n";
  text += "seed\t" + std::to_string(seed) + "\n";
  text += "plan\t" + plan + "\n";
  text += "source\t" + (source.empty() ? std::string("-") : source) + "\n";
  text += "epoch0_test_acc\t" + format_exact(epoch0_test_acc) + "\n";
  if (!curve.empty()) {
    text += "initial_test_acc\t" + format_exact(initial()) + "\n";
    text += "final_test_acc\t" + format_exact(final()) + "\n";
    text += "last_test_acc\t" + format_exact(curve.back().test_acc) + "\n";
    text += "last_train_acc\t" + format_exact(curve.back().train_acc) + "\n";
  }
  for (const auto& [key, value] : config) text += "config." + key + "\t" + value + "\n";
  return text;
}

bool TrainReport::operator==(const TrainReport& other) const {
  auto same = [](const EpochRecord& a, const EpochRecord& b) {
    return a.epoch == b.epoch && a.lr == b.lr && a.loss == b.loss && a.train_acc == b.train_acc &&
           a.test_acc == b.test_acc;
  };
  return curve.size() == other.curve.size() &&
         std::equal(curve.begin(), curve.end(), other.curve.begin(), same) &&
         epoch0_test_acc == other.epoch0_test_acc && seed == other.seed && plan == other.plan &&
         source == other.source && config == other.config;
}

void save_report(const TrainReport& report, const std::filesystem::path& dir, const std::string& stem) {
  write_text(dir / (stem + "_curve.csv"), report.curve_csv());
  write_text(dir / (stem + "_summary.txt"), report.summary_text());
}

TrainReport load_report(const std::filesystem::path& dir, const std::string& stem) {
  TrainReport report;
  const auto curve_path = dir / (stem + "_curve.csv");
  std::istringstream curve(read_text(curve_path));
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(curve, line) || line != "epoch,lr,loss,train_acc,test_acc") {
    throw DataError(curve_path.string() + ":1: unexpected curve header");
  }
  while (std::getline(curve, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string where = curve_path.string() + ":" + std::to_string(line_no);
    std::vector<std::string> fields;
    std::stringstream row(line);
    std::string field;
    while (std::getline(row, field, ',')) fields.push_back(field);
    if (fields.size() != 5) throw DataError(where + ": expected 5 columns");
    EpochRecord r;
    r.epoch = static_cast<std::size_t>(parse_double(fields[0], where));
    r.lr = parse_double(fields[1], where);
    r.loss = parse_double(fields[2], where);
    r.train_acc = parse_double(fields[3], where);
    r.test_acc = parse_double(fields[4], where);
    report.curve.push_back(r);
  }
  const auto summary_path = dir / (stem + "_summary.txt");
  std::istringstream summary(read_text(summary_path));
  line_no = 0;
  while (std::getline(summary, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string where = summary_path.string() + ":" + std::to_string(line_no);
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw DataError(where + ": expected key<TAB>value");
    const std::string key = line.substr(0, tab);
    const std::string value = line.substr(tab + 1);
    if (key == "seed") {
      report.seed = std::stoull(value);
    } else if (key == "plan") {
      report.plan = value;
    } else if (key == "source") {
      report.source = value == "-" ? "" : value;
    } else if (key == "epoch0_test_acc") {
      report.epoch0_test_acc = parse_double(value, where);
    } else if (key.rfind("config.", 0) == 0) {
      report.config.emplace_back(key.substr(7), value);
    }
  }
  return report;
}

std::size_t argmax_lowest(const std::vector<double>& scores) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i) {
    if (scores[i] > scores[best]) best = i;
  }
  return best;
}

std::vector<std::size_t> predict_labels(const Model& model, const std::vector<ActionSample>& samples) {
  NoGradGuard no_grad;
  std::vector<std::size_t> labels;
  labels.reserve(samples.size());
  for (std::size_t start = 0; start < samples.size(); start += kEvalBatch) {
    std::vector<const ActionSample*> chunk;
    for (std::size_t i = start; i < std::min(samples.size(), start + kEvalBatch); ++i) chunk.push_back(&samples[i]);
    for (const auto& scores : model.predict_batch(model.make_batch(chunk))) labels.push_back(argmax_lowest(scores));
  }
  return labels;
}

double evaluate(const Model& model, const std::vector<ActionSample>& samples) {
  if (samples.empty()) throw DataError("cannot evaluate on an empty dataset");
  const auto labels = predict_labels(model, samples);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) correct += labels[i] == samples[i].label ? 1 : 0;
  return static_cast<double>(correct) / static_cast<double>(samples.size());
}

TrainReport fit(Model& model, const std::vector<ActionSample>& train, const std::vector<ActionSample>& test,
                const FitOptions& options) {
  options.schedule.validate();
  if (options.batch_size == 0) throw DataError("batch size must be positive");
  const auto started = std::chrono::steady_clock::now();
  TrainReport report;
  report.seed = options.seed;
  report.plan = model.plan_name();
  if (options.epochs == 0) return report;
  if (train.empty()) throw DataError("cannot train on an empty dataset");
  if (test.empty()) throw DataError("cannot evaluate on an empty test set");

  report.epoch0_test_acc = evaluate(model, test);
  OptimizerState state;
  std::vector<std::size_t> order(train.size());
  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed(options.seed, epoch));
    rng.shuffle(order);
    const double lr = lr_at_epoch(options.schedule, epoch);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += options.batch_size) {
      std::vector<const ActionSample*> chunk;
      for (std::size_t i = start; i < std::min(order.size(), start + options.batch_size); ++i) {
        chunk.push_back(&train[order[i]]);
      }
      for (auto& p : model.parameters()) p.tensor().clear_grad();
      const Tensor<double> loss = model.loss(model.make_batch(chunk));
      backward(loss);
      adam_step(model.parameters(), state, lr);
      loss_sum += loss.item() * static_cast<double>(chunk.size());
    }
    for (auto& p : model.parameters()) p.tensor().clear_grad();

    EpochRecord record;
    record.epoch = epoch + 1;
    record.lr = lr;
    record.loss = loss_sum / static_cast<double>(train.size());
    const bool need_train = options.track_train_accuracy || options.stop_at_train_accuracy.has_value();
    record.train_acc = need_train ? evaluate(model, train) : 0.0;
    record.test_acc = evaluate(model, test);
    report.curve.push_back(record);
    if (options.verbose) {
      std::printf("epoch %zu lr %.3g loss %.4f train %.4f test %.4f\n", record.epoch, lr, record.loss,
                  record.train_acc, record.test_acc);
      std::fflush(stdout);
    }
    if (options.stop_at_train_accuracy && record.train_acc >= *options.stop_at_train_accuracy) break;
  }
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return report;
}

}  // namespace skar
