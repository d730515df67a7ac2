// SPDX-License-Identifier: Apache-2.0
#include "ctta/metrics.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <nlohmann/json.hpp>
#include <ostream>
#include <sstream>

#include "ctta/errors.hpp"

namespace ctta {

using nlohmann::json;

double avg_acc(const Matrix& a, std::size_t round) {
  if (round >= a.rows) throw ContractError("avg_acc: round " + std::to_string(round) + " does not exist");
  if (a.cols == 0) throw ContractError("avg_acc: empty row");
  double s = 0.0;
  for (double v : a.row(round)) s += v;
  return s / static_cast<double>(a.cols);
}

double bwt(const Matrix& a, std::span<const double> first_pass, std::size_t round) {
  if (first_pass.size() != a.cols) throw DimensionError("bwt: first-pass vector does not match the domain count");
  if (round >= a.rows) throw ContractError("bwt: round " + std::to_string(round) + " does not exist");
  if (a.cols == 0) throw ContractError("bwt: empty row");
  double s = 0.0;
  for (std::size_t j = 0; j < a.cols; ++j) s += a(round, j) - first_pass[j];
  return s / static_cast<double>(a.cols);
}

double delta(const Matrix& a) {
  if (a.rows < 2) throw ContractError("delta needs at least two rounds");
  return avg_acc(a, a.rows - 1) - avg_acc(a, 0);
}

Matrix expert_frequency(std::span<const Matrix> snapshots) {
  if (snapshots.empty()) throw ContractError("expert_frequency: no snapshots");
  Matrix total(snapshots[0].rows, snapshots[0].cols, 0.0);
  for (const auto& s : snapshots) {
    if (s.rows != total.rows || s.cols != total.cols) throw DimensionError("expert_frequency: snapshot shapes differ");
    for (std::size_t i = 0; i < s.data.size(); ++i) total.data[i] += s.data[i];
  }
  for (std::size_t d = 0; d < total.rows; ++d) {
    auto row = total.row(d);
    double s = 0.0;
    for (double v : row) s += v;
    for (auto& v : row) v = s > 0.0 ? v / s : 1.0 / static_cast<double>(total.cols);
  }
  return total;
}

std::string format_number(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

namespace {

double parse_number(const std::string& s) {
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) throw DataError("malformed number '" + s + "'");
  return v;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

constexpr const char* kCsvHeader = "run_id,round,domain,accuracy,mean,delta,avg_acc,bwt,param_count";

void check_shape(const RoundMetrics& m) {
  if (m.accuracy.rows == 0 || m.accuracy.cols == 0) throw ContractError("metrics: empty accuracy matrix");
  if (m.domain_names.size() != m.accuracy.cols) throw ContractError("metrics: one name per domain required");
  if (m.first_pass.size() != m.accuracy.cols) throw ContractError("metrics: first-pass vector has the wrong length");
}

}  // namespace

void write_metrics_csv(std::ostream& out, const std::string& run_id, const RoundMetrics& m) {
  check_shape(m);
  out << kCsvHeader << '\n';
  const std::string d = m.accuracy.rows >= 2 ? format_number(delta(m.accuracy)) : "";
  for (std::size_t k = 0; k < m.accuracy.rows; ++k) {
    const std::string mean = format_number(avg_acc(m.accuracy, k));
    const std::string b = format_number(bwt(m.accuracy, m.first_pass, k));
    for (std::size_t j = 0; j < m.accuracy.cols; ++j) {
      out << run_id << ',' << (k + 1) << ',' << m.domain_names[j] << ',' << format_number(m.accuracy(k, j)) << ','
          << mean << ',' << d << ',' << mean << ',' << b << ',' << m.param_count << '\n';
    }
  }
}

void write_summary_json(std::ostream& out, const std::string& run_id, const RoundMetrics& m) {
  check_shape(m);
  json j;
  j["run_id"] = run_id;
  j["domains"] = m.domain_names;
  j["param_count"] = m.param_count;
  j["first_pass"] = m.first_pass;
  json rounds = json::array();
  for (std::size_t k = 0; k < m.accuracy.rows; ++k) {
    auto row = m.accuracy.row(k);
    rounds.push_back({{"round", k + 1},
                      {"accuracy", std::vector<double>(row.begin(), row.end())},
                      {"mean", avg_acc(m.accuracy, k)},
                      {"avg_acc", avg_acc(m.accuracy, k)},
                      {"bwt", bwt(m.accuracy, m.first_pass, k)}});
  }
  j["rounds"] = rounds;
  j["delta"] = m.accuracy.rows >= 2 ? json(delta(m.accuracy)) : json(nullptr);
  out << j.dump(2) << '\n';
}

void write_expert_frequency_csv(std::ostream& out, const Matrix& freq) {
  out << "domain";
  for (std::size_t i = 0; i < freq.cols; ++i) out << ",expert_" << i;
  out << '\n';
  for (std::size_t d = 0; d < freq.rows; ++d) {
    out << d;
    for (std::size_t i = 0; i < freq.cols; ++i) out << ',' << format_number(freq(d, i));
    out << '\n';
  }
}

MetricsFile read_metrics_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("metrics file is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kCsvHeader) throw DataError("metrics CSV header mismatch");
  MetricsFile f;
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    auto cells = split_csv(line);
    if (cells.size() != 9) throw DataError("metrics CSV row needs 9 cells: " + line);
    const auto round = static_cast<std::size_t>(parse_number(cells[1]));
    if (round == 0) throw DataError("metrics CSV rounds start at 1");
    if (f.run_id.empty()) f.run_id = cells[0];
    if (round > rows.size()) {
      if (round != rows.size() + 1) throw DataError("metrics CSV rounds out of order");
      rows.emplace_back();
      f.bwt.push_back(parse_number(cells[7]));
    }
    if (round == 1) f.domain_names.push_back(cells[2]);
    rows.back().push_back(parse_number(cells[3]));
    f.param_count = static_cast<std::uint64_t>(parse_number(cells[8]));
  }
  if (rows.empty()) throw DataError("metrics CSV has no rows");
  f.accuracy = Matrix(rows.size(), rows[0].size());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    if (rows[k].size() != f.accuracy.cols) throw DataError("metrics CSV rounds cover different domains");
    for (std::size_t j = 0; j < f.accuracy.cols; ++j) f.accuracy(k, j) = rows[k][j];
  }
  return f;
}

MetricsFile read_summary_json(std::istream& in) {
  MetricsFile f;
  try {
    const json j = json::parse(in);
    f.run_id = j.at("run_id").get<std::string>();
    f.domain_names = j.at("domains").get<std::vector<std::string>>();
    f.param_count = j.at("param_count").get<std::uint64_t>();
    f.first_pass = j.at("first_pass").get<std::vector<double>>();
    const auto& rounds = j.at("rounds");
    if (rounds.empty()) throw DataError("metrics summary has no rounds");
    f.accuracy = Matrix(rounds.size(), f.domain_names.size());
    for (std::size_t k = 0; k < rounds.size(); ++k) {
      auto acc = rounds[k].at("accuracy").get<std::vector<double>>();
      if (acc.size() != f.accuracy.cols) throw DataError("metrics summary round has the wrong width");
      for (std::size_t c = 0; c < acc.size(); ++c) f.accuracy(k, c) = acc[c];
      f.bwt.push_back(rounds[k].at("bwt").get<double>());
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed metrics summary: ") + e.what());
  }
  return f;
}

MetricsFile read_metrics_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open metrics file " + path);
  if (path.size() >= 5 && path.substr(path.size() - 5) == ".json") return read_summary_json(in);
  return read_metrics_csv(in);
}

namespace {

std::string pct(double v) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(2) << 100.0 * v;
  return s.str();
}

}  // namespace

void print_report(std::ostream& out, const MetricsFile& run) {
  const Matrix& a = run.accuracy;
  if (a.rows == 0 || a.cols == 0) throw DataError("report: run has no accuracies");
  const std::size_t last = a.rows - 1;
  std::vector<double> bwt_per_round = run.bwt;
  if (run.first_pass) {
    for (std::size_t k = 0; k < a.rows; ++k) bwt_per_round[k] = bwt(a, *run.first_pass, k);
  }
  out << "run " << run.run_id << "  (" << a.rows << " rounds, " << a.cols << " domains, " << run.param_count
      << " adapted parameters)\n";
  out << std::left << std::setw(10) << "round";
  for (const auto& n : run.domain_names) out << std::right << std::setw(9) << n;
  out << std::right << std::setw(9) << "Mean" << '\n';
  auto row = [&](std::size_t k) {
    out << std::left << std::setw(10) << ("R" + std::to_string(k + 1));
    for (std::size_t j = 0; j < a.cols; ++j) out << std::right << std::setw(9) << pct(a(k, j));
    out << std::right << std::setw(9) << pct(avg_acc(a, k)) << '\n';
  };
  row(0);
  if (last > 0) row(last);
  out << "Delta   " << (a.rows >= 2 ? pct(delta(a)) : std::string("n/a")) << '\n';
  out << "AvgAcc  " << pct(avg_acc(a, last)) << '\n';
  out << "BWT     " << pct(bwt_per_round[last]) << '\n';
  out << "Params  " << run.param_count << '\n';
}

void print_comparison(std::ostream& out, const MetricsFile& a, const MetricsFile& b) {
  if (a.accuracy.rows != b.accuracy.rows || a.accuracy.cols != b.accuracy.cols) {
    throw DataError("compare: runs have different shapes");
  }
  out << "difference " << b.run_id << " - " << a.run_id << " (accuracy points)\n";
  out << std::left << std::setw(10) << "round";
  for (const auto& n : a.domain_names) out << std::right << std::setw(9) << n;
  out << std::right << std::setw(9) << "Mean" << '\n';
  for (std::size_t k = 0; k < a.accuracy.rows; ++k) {
    out << std::left << std::setw(10) << ("R" + std::to_string(k + 1));
    for (std::size_t j = 0; j < a.accuracy.cols; ++j)
      out << std::right << std::setw(9) << pct(b.accuracy(k, j) - a.accuracy(k, j));
    out << std::right << std::setw(9) << pct(avg_acc(b.accuracy, k) - avg_acc(a.accuracy, k)) << '\n';
  }
}

}  // namespace ctta
