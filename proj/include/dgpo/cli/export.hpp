#pragma once

#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace dgpo::cli {

class MetricsFormatError : public std::runtime_error {
 public:
  MetricsFormatError(const std::string& source, std::size_t line, const std::string& message)
      : std::runtime_error(source + ":" + std::to_string(line) + ": " + message), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

struct MetricRow {
  std::string phase;
  std::size_t step = 0;
  std::map<std::string, double> values;
};

std::vector<MetricRow> parse_metrics(const std::string& text, const std::string& source = "<metrics>");
std::vector<MetricRow> read_metrics(const std::filesystem::path& path);

// Columns: phase, step, then every metric name in sorted order. Missing
// values are empty cells.
std::string metrics_to_csv(const std::vector<MetricRow>& rows);

// One row per (phase, step) present in any log, with "<label>.<metric>"
// columns per log. Phases keep their first-seen order; steps ascend.
std::string compare_to_csv(const std::vector<std::pair<std::string, std::vector<MetricRow>>>& logs);

}  // namespace dgpo::cli
