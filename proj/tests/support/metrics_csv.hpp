#pragma once

// Minimal reader for the trainer's metrics CSV, used by tests to compare runs.

#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace testsupport {

struct MetricsRow {
  int epoch = 0;
  double train_loss = 0, train_error = 0, test_error = 0, lr = 0, wall_seconds = 0;
  int diverged = 0;
};

inline std::vector<MetricsRow> read_metrics_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) ||
      line != "epoch,train_loss,train_error,test_error,lr,wall_seconds,diverged")
    throw std::runtime_error("unexpected CSV header in " + path.string());
  std::vector<MetricsRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string field;
    MetricsRow row;
    auto next = [&]() {
      if (!std::getline(ss, field, ',')) throw std::runtime_error("short CSV row: " + line);
      return field;
    };
    row.epoch = std::stoi(next());
    row.train_loss = std::stod(next());
    row.train_error = std::stod(next());
    row.test_error = std::stod(next());
    row.lr = std::stod(next());
    row.wall_seconds = std::stod(next());
    row.diverged = std::stoi(next());
    rows.push_back(row);
  }
  return rows;
}

// Everything except the wall-clock column, for determinism comparisons.
inline std::string stable_fields(const MetricsRow& r) {
  std::stringstream ss;
  ss << r.epoch << '|' << r.train_loss << '|' << r.train_error << '|' << r.test_error
     << '|' << r.lr << '|' << r.diverged;
  return ss.str();
}

}  // namespace testsupport
