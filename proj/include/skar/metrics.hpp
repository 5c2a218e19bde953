#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "skar/training.hpp"

namespace skar {

// Transferred minus baseline test accuracy after the first epoch.
double jumpstart(const TrainReport& baseline, const TrainReport& transferred);
// Transferred minus baseline best test accuracy over the run.
double asymptotic(const TrainReport& baseline, const TrainReport& transferred);

struct TransferComparison {
  std::string model;  // variant label used in file names
  std::string plan;
  TrainReport baseline;
  TrainReport transferred;
  double jumpstart = 0.0;
  double asymptotic = 0.0;
  double final = 0.0;
  double baseline_initial = 0.0;
  double baseline_final = 0.0;
  double baseline_epoch0 = 0.0;
  double transferred_epoch0 = 0.0;
  std::size_t seeds = 1;
};

TransferComparison compare(const std::string& model, const TrainReport& baseline, const TrainReport& transferred);

// Per-seed comparisons of one model and plan: metrics are seed means, and the
// stored reports hold the per-epoch mean curves for plotting.
TransferComparison average(const std::vector<TransferComparison>& runs);

// Element-wise mean of equally long curves.
TrainReport mean_report(const std::vector<TrainReport>& reports);

std::string summary_table(const std::vector<TransferComparison>& comparisons);
std::string summary_csv(const std::vector<TransferComparison>& comparisons);
// Baseline and transferred test accuracy against epoch, epoch 0 included.
std::string curves_svg(const TransferComparison& comparison);

struct SummaryRow {
  std::string model;
  std::string plan;
  std::size_t seeds = 0;
  double final = 0.0;
  double jumpstart = 0.0;
  double asymptotic = 0.0;
  double baseline_initial = 0.0;
  double baseline_final = 0.0;
  double baseline_epoch0 = 0.0;
  double transferred_epoch0 = 0.0;
};

std::vector<SummaryRow> parse_summary_csv(const std::string& text);

// Writes summary.txt, summary.csv and curves_<model>_<plan>.svg into out_dir.
std::vector<std::filesystem::path> render_report(const std::vector<TransferComparison>& comparisons,
                                                 const std::filesystem::path& out_dir);

}  // namespace skar
