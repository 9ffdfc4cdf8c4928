#include "dgpo/cli/export.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace dgpo::cli {

using nlohmann::json;

namespace {

std::string format_number(double v) { return json(v).dump(); }

std::string csv_cell(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

std::vector<MetricRow> parse_metrics(const std::string& text, const std::string& source) {
  std::vector<MetricRow> rows;
  std::istringstream in(text);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error&) {
      throw MetricsFormatError(source, n, "not a JSON object");
    }
    if (!j.is_object()) throw MetricsFormatError(source, n, "not a JSON object");
    if (!j.contains("phase") || !j["phase"].is_string()) throw MetricsFormatError(source, n, "missing phase");
    if (!j.contains("step") || !j["step"].is_number_unsigned()) throw MetricsFormatError(source, n, "missing step");
    MetricRow row;
    row.phase = j["phase"].get<std::string>();
    row.step = j["step"].get<std::size_t>();
    for (const auto& [key, value] : j.items()) {
      if (key == "phase" || key == "step") continue;
      if (!value.is_number()) throw MetricsFormatError(source, n, "metric '" + key + "' is not a number");
      row.values[key] = value.get<double>();
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<MetricRow> read_metrics(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_metrics(ss.str(), path.string());
}

std::string metrics_to_csv(const std::vector<MetricRow>& rows) {
  std::set<std::string> names;
  for (const auto& r : rows)
    for (const auto& [k, v] : r.values) names.insert(k);
  std::ostringstream out;
  out << "phase,step";
  for (const auto& k : names) out << ',' << csv_cell(k);
  out << '\n';
  for (const auto& r : rows) {
    out << csv_cell(r.phase) << ',' << r.step;
    for (const auto& k : names) {
      out << ',';
      if (auto it = r.values.find(k); it != r.values.end()) out << format_number(it->second);
    }
    out << '\n';
  }
  return out.str();
}

std::string compare_to_csv(const std::vector<std::pair<std::string, std::vector<MetricRow>>>& logs) {
  std::vector<std::string> phases;
  std::vector<std::vector<std::string>> columns(logs.size());
  using Key = std::pair<std::size_t, std::size_t>;            // phase index, step
  std::set<Key> keys;
  std::vector<std::map<Key, const MetricRow*>> index(logs.size());
  for (std::size_t li = 0; li < logs.size(); ++li) {
    std::set<std::string> names;
    for (const auto& r : logs[li].second) {
      auto it = std::find(phases.begin(), phases.end(), r.phase);
      if (it == phases.end()) it = phases.insert(phases.end(), r.phase);
      const Key key{static_cast<std::size_t>(it - phases.begin()), r.step};
      keys.insert(key);
      index[li][key] = &r;
      for (const auto& [k, v] : r.values) names.insert(k);
    }
    columns[li].assign(names.begin(), names.end());
  }
  std::ostringstream out;
  out << "phase,step";
  for (std::size_t li = 0; li < logs.size(); ++li)
    for (const auto& metric : columns[li]) out << ',' << csv_cell(logs[li].first + "." + metric);
  out << '\n';
  for (const auto& key : keys) {
    out << csv_cell(phases[key.first]) << ',' << key.second;
    for (std::size_t li = 0; li < logs.size(); ++li) {
      const auto it = index[li].find(key);
      for (const auto& metric : columns[li]) {
        out << ',';
        if (it == index[li].end()) continue;
        if (auto v = it->second->values.find(metric); v != it->second->values.end()) out << format_number(v->second);
      }
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace dgpo::cli
