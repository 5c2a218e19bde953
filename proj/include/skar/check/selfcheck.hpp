#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace skar::check {

struct CheckResult {
  std::string name;
  bool passed = true;
  double worst = 0.0;  // largest error seen (relative or absolute, per suite)
  std::size_t cases = 0;
  std::string detail;
};

// Central finite differences in long double against the recorded backward
// pass, for every input and parameter of each layer kind.
inline constexpr double kGradientTolerance = 1e-4;
inline constexpr long double kGradientStep = 1e-6L;
std::vector<CheckResult> gradient_suite(std::uint64_t seed, std::size_t instances = 5);

// Optimized kernels against the scalar-loop oracles (max absolute error).
inline constexpr double kOracleTolerance = 1e-10;
std::vector<CheckResult> oracle_suite(std::uint64_t seed, std::size_t instances = 10);

// k_adjacency and hop_distance on every graph with up to max_nodes nodes.
CheckResult k_adjacency_exhaustive(std::size_t max_nodes = 5);

// ms_gcn(K=1), g3d(window 1) and adaptive_gcn(B=0, no similarity) against
// spatial_gcn, compared bit for bit.
std::vector<CheckResult> reduction_suite(std::uint64_t seed, std::size_t instances = 5);

bool all_passed(const std::vector<CheckResult>& results);
std::string format_result(const CheckResult& result);

}  // namespace skar::check
