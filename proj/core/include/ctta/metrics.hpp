// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ctta/matrix.hpp"

namespace ctta {

/// Accuracy of every domain after every round of a continual run.
struct RoundMetrics {
  Matrix accuracy;  // rounds x D, entries a_kj in [0, 1]
  /// a~_j: accuracy on domain j right after its first task window in round 1.
  std::vector<double> first_pass;
  std::uint64_t param_count = 0;
  std::vector<std::string> domain_names;
  /// Per MoDE layer, D_router x N expert selection rates.
  std::vector<Matrix> expert_freq;
};

double avg_acc(const Matrix& a, std::size_t round);
double bwt(const Matrix& a, std::span<const double> first_pass, std::size_t round);
/// Mean accuracy of the last round minus that of the first.
double delta(const Matrix& a);

/// Sums support-count tables and normalizes each row; an empty row becomes uniform.
Matrix expert_frequency(std::span<const Matrix> selection_snapshots);

/// Shortest decimal text that parses back to the same double.
std::string format_number(double v);

// run_id,round,domain,accuracy,mean,delta,avg_acc,bwt,param_count
void write_metrics_csv(std::ostream& out, const std::string& run_id, const RoundMetrics& m);
void write_summary_json(std::ostream& out, const std::string& run_id, const RoundMetrics& m);
void write_expert_frequency_csv(std::ostream& out, const Matrix& freq);

/// What a metrics file holds when read back.
struct MetricsFile {
  std::string run_id;
  std::vector<std::string> domain_names;
  Matrix accuracy;
  std::vector<double> bwt;  // per round, as exported
  std::optional<std::vector<double>> first_pass;
  std::uint64_t param_count = 0;
};

MetricsFile read_metrics_csv(std::istream& in);
MetricsFile read_summary_json(std::istream& in);
/// Dispatches on the extension (.csv or .json).
MetricsFile read_metrics_file(const std::string& path);

/// Per-domain accuracies of the first and last round with Mean, Delta, AvgAcc,
/// BWT and the parameter count. All derived values are recomputed from the
/// accuracy matrix; BWT needs the first-pass vector and falls back to the
/// exported column when it is absent.
void print_report(std::ostream& out, const MetricsFile& run);
/// Cell-by-cell differences (b - a) of two runs with matching shapes.
void print_comparison(std::ostream& out, const MetricsFile& a, const MetricsFile& b);

}  // namespace ctta
