// Copyright 2026 The ECCT Simulator Authors
// SPDX-License-Identifier: Apache-2.0

#include "ecct/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "ecct/errors.hpp"

namespace ecct::experiments {
namespace {

std::string slug(const std::string& s) {
  std::string out;
  for (char c : s) out += std::isalnum(static_cast<unsigned char>(c)) ? static_cast<char>(std::tolower(c)) : '_';
  return out;
}

std::string format_percent(double v) {
  std::ostringstream o;
  o << std::fixed << std::setprecision(2) << 100.0 * v;
  return o.str();
}

std::string format_change(double pct) {
  std::ostringstream o;
  o << std::fixed << std::setprecision(1) << (pct >= 0 ? "+" : "") << pct << "%";
  return o.str();
}

nlohmann::json number_or_null(double v) { return std::isnan(v) ? nlohmann::json(nullptr) : nlohmann::json(v); }

Table make_table(std::string name, std::string title, std::vector<std::string> rows, std::vector<std::string> columns) {
  Table t;
  t.name = std::move(name);
  t.title = std::move(title);
  t.rows = std::move(rows);
  t.columns = std::move(columns);
  t.cells.assign(t.rows.size(), std::vector<Cell>(t.columns.size()));
  return t;
}

void report(const SuiteOptions& options, const std::string& msg) {
  if (options.progress) options.progress(msg);
}

}  // namespace

double median(std::vector<double> values) {
  if (values.empty()) return eval::kUndefined;
  std::sort(values.begin(), values.end());
  const std::size_t m = values.size() / 2;
  return values.size() % 2 ? values[m] : 0.5 * (values[m - 1] + values[m]);
}

const Cell& Table::at(const std::string& row, const std::string& column) const {
  const auto r = std::find(rows.begin(), rows.end(), row);
  const auto c = std::find(columns.begin(), columns.end(), column);
  if (r == rows.end() || c == columns.end()) throw InputError("no cell (" + row + ", " + column + ")");
  return cells[static_cast<std::size_t>(r - rows.begin())][static_cast<std::size_t>(c - columns.begin())];
}

std::string Table::to_text() const {
  std::vector<std::vector<std::string>> grid;
  grid.push_back({""});
  for (const auto& c : columns) grid.back().push_back(c);
  const bool any_change = std::any_of(cells.begin(), cells.end(), [](const std::vector<Cell>& row) {
    return std::any_of(row.begin(), row.end(), [](const Cell& c) { return !c.per_seed.empty() && !std::isnan(c.change_percent); });
  });
  for (std::size_t r = 0; r < rows.size(); ++r) {
    std::vector<std::string> line{rows[r]};
    std::vector<std::string> change{""};
    for (const Cell& cell : cells[r]) {
      line.push_back(cell.failed ? "error" : cell.per_seed.empty() ? "" : format_percent(cell.value));
      change.push_back(cell.failed || cell.per_seed.empty() ? ""
                       : std::isnan(cell.change_percent) ? "-"
                                                         : format_change(cell.change_percent));
    }
    grid.push_back(line);
    if (any_change) grid.push_back(change);
  }
  std::vector<std::size_t> width(grid.front().size(), 0);
  for (const auto& line : grid)
    for (std::size_t i = 0; i < line.size(); ++i) width[i] = std::max(width[i], line[i].size());
  std::ostringstream out;
  out << title << '\n';
  for (std::size_t li = 0; li < grid.size(); ++li) {
    for (std::size_t i = 0; i < grid[li].size(); ++i) {
      if (i) out << " | ";
      out << (i ? std::right : std::left) << std::setw(static_cast<int>(width[i])) << grid[li][i];
    }
    out << '\n';
    if (li == 0) {
      std::size_t total = 0;
      for (auto w : width) total += w + 3;
      out << std::string(total - 3, '-') << '\n';
    }
  }
  return out.str();
}

nlohmann::json Table::to_json() const {
  nlohmann::json j;
  j["name"] = name;
  j["title"] = title;
  j["rows"] = rows;
  j["columns"] = columns;
  nlohmann::json cells_json = nlohmann::json::array();
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < columns.size(); ++c) {
      const Cell& cell = cells[r][c];
      nlohmann::json per_seed = nlohmann::json::array();
      for (double v : cell.per_seed) per_seed.push_back(number_or_null(v));
      cells_json.push_back({{"row", rows[r]},
                            {"column", columns[c]},
                            {"value", number_or_null(cell.value)},
                            {"change_percent", number_or_null(cell.change_percent)},
                            {"per_seed", per_seed},
                            {"failed", cell.failed},
                            {"error", cell.error}});
    }
  }
  j["cells"] = cells_json;
  return j;
}

Cell run_cell(const TrainingConfig& cfg, const SuiteOptions& options, const std::string& label) {
  Cell cell;
  for (std::uint64_t seed : options.seeds) {
    TrainingConfig member = cfg;
    member.seed = seed;
    std::optional<std::filesystem::path> run_dir;
    if (options.dir && options.keep_runs)
      run_dir = *options.dir / "runs" / slug(label.empty() ? "run" : label) / ("seed_" + std::to_string(seed));
    try {
      member.validate();
    } catch (const ConfigError& e) {
      cell.failed = true;
      cell.error = e.what();
      report(options, label + ": rejected (" + cell.error + ")");
      return cell;
    }
    const RunResult result = run(member, run_dir);
    cell.per_seed.push_back(final_edge_accuracy(result, options.window));
    report(options, label + " seed " + std::to_string(seed) + ": " + format_percent(cell.per_seed.back()));
  }
  cell.value = median(cell.per_seed);
  return cell;
}

TrainingConfig feature_settings_member(const TrainingConfig& base, Method method, data::FeatureSetting setting,
                                       PartitionKind partition, bool hetero) {
  TrainingConfig c = base;
  c.method = method;
  c.feature_setting = setting;
  c.data.partition = partition;
  c.model.hetero = hetero;
  return c;
}

TrainingConfig async_member(const TrainingConfig& base, Method method, AsyncMode mode, double ratio) {
  TrainingConfig c = base;
  c.method = method;
  c.feature_setting = method == Method::kEcct ? data::FeatureSetting::kCandF : data::FeatureSetting::kC2F;
  c.data.partition = PartitionKind::kDirichlet;
  c.device_epochs = 3;
  c.device_epoch_overrides.clear();
  c.async_mode = mode;
  c.select_ratio = ratio;
  return c;
}

TrainingConfig scaling_member(const TrainingConfig& base, Method method, int devices, double ratio) {
  TrainingConfig c = base;
  c.method = method;
  c.feature_setting = method == Method::kEcct ? data::FeatureSetting::kCandF : data::FeatureSetting::kF;
  c.devices = devices;
  c.select_ratio = ratio;
  c.device_epoch_overrides.clear();
  return c;
}

Table suite_feature_settings(const TrainingConfig& base, const SuiteOptions& options) {
  using data::FeatureSetting;
  struct Member {
    const char* name;
    Method method;
    FeatureSetting setting;
  };
  const std::vector<Member> members = {{"FedAvg-F", Method::kFedAvg, FeatureSetting::kF},
                                       {"FedGKT-F", Method::kFedGkt, FeatureSetting::kF},
                                       {"FedAvg-C2F", Method::kFedAvg, FeatureSetting::kC2F},
                                       {"FedGKT-C2F", Method::kFedGkt, FeatureSetting::kC2F},
                                       {"ECCT-CandF", Method::kEcct, FeatureSetting::kCandF}};
  const std::vector<std::pair<const char*, PartitionKind>> partitions = {{"IID", PartitionKind::kIid},
                                                                         {"Dirichlet", PartitionKind::kDirichlet}};
  std::vector<std::string> rows;
  for (const auto& [pname, kind] : partitions)
    for (const auto& m : members) rows.push_back(std::string(m.name) + " (" + pname + ")");
  Table t = make_table("feature_settings", "Edge-based top-1 accuracy (%) by feature setting and data heterogeneity",
                       rows, {"homo", "hetero"});
  std::size_t r = 0;
  for (const auto& [pname, kind] : partitions) {
    for (const auto& m : members) {
      for (int h = 0; h < 2; ++h) {
        const TrainingConfig cfg = feature_settings_member(base, m.method, m.setting, kind, h == 1);
        t.cells[r][static_cast<std::size_t>(h)] = run_cell(cfg, options, t.rows[r] + " " + t.columns[h]);
      }
      ++r;
    }
  }
  return t;
}

Table suite_async(const TrainingConfig& base, const SuiteOptions& options) {
  const std::vector<std::pair<const char*, AsyncMode>> regimes = {{"sync", AsyncMode::kSync},
                                                                  {"asyn_version", AsyncMode::kAsynVersion},
                                                                  {"asyn_epoch", AsyncMode::kAsynEpoch},
                                                                  {"asyn_both", AsyncMode::kAsynBoth}};
  const std::vector<std::pair<Method, double>> columns = {
      {Method::kFedAvg, 1.0}, {Method::kFedAvg, 0.5}, {Method::kEcct, 1.0}, {Method::kEcct, 0.5}};
  std::vector<std::string> rows, cols;
  for (const auto& [name, mode] : regimes) rows.push_back(name);
  for (const auto& [method, ratio] : columns) {
    std::ostringstream o;
    o << (method == Method::kEcct ? "ECCT" : "FedAvg") << " " << std::fixed << std::setprecision(1) << ratio;
    cols.push_back(o.str());
  }
  Table t = make_table("async", "Edge-based top-1 accuracy (%) under asynchronization; change vs sync at ratio 1.0",
                       rows, cols);
  for (std::size_t r = 0; r < regimes.size(); ++r)
    for (std::size_t c = 0; c < columns.size(); ++c)
      t.cells[r][c] = run_cell(async_member(base, columns[c].first, regimes[r].second, columns[c].second), options,
                               t.rows[r] + " " + t.columns[c]);
  for (std::size_t c = 0; c < columns.size(); ++c) {
    const std::size_t ref_col = columns[c].first == Method::kEcct ? 2 : 0;
    const double ref = t.cells[0][ref_col].value;
    for (std::size_t r = 0; r < regimes.size(); ++r) {
      if (r == 0 && c == ref_col) continue;
      t.cells[r][c].change_percent = 100.0 * (t.cells[r][c].value - ref) / ref;
    }
  }
  return t;
}

Table suite_scaling(const TrainingConfig& base, const SuiteOptions& options) {
  const std::vector<std::pair<const char*, Method>> methods = {
      {"FedAvg", Method::kFedAvg}, {"FedGKT", Method::kFedGkt}, {"ECCT", Method::kEcct}};
  const std::vector<int> device_counts = {50, 100};
  const std::vector<double> ratios = {0.6, 0.3, 0.1};
  std::vector<std::string> rows, cols;
  for (const auto& [name, m] : methods) rows.push_back(name);
  for (int k : device_counts) {
    for (double ratio : ratios) {
      std::ostringstream o;
      o << "K=" << k << " r=" << ratio;
      cols.push_back(o.str());
    }
  }
  Table t = make_table("scaling", "Edge-based top-1 accuracy (%) by device number and select ratio", rows, cols);
  for (std::size_t r = 0; r < methods.size(); ++r) {
    std::size_t c = 0;
    for (int k : device_counts)
      for (double ratio : ratios) {
        t.cells[r][c] = run_cell(scaling_member(base, methods[r].second, k, ratio), options, t.rows[r] + " " + t.columns[c]);
        ++c;
      }
  }
  return t;
}

Table run_suite(const std::string& name, const TrainingConfig& base, const SuiteOptions& options) {
  Table t;
  if (name == "feature_settings") {
    t = suite_feature_settings(base, options);
  } else if (name == "async") {
    t = suite_async(base, options);
  } else if (name == "scaling") {
    t = suite_scaling(base, options);
  } else {
    throw ConfigError("unknown suite '" + name + "' (feature_settings, async, scaling)");
  }
  if (options.dir) {
    std::filesystem::create_directories(*options.dir);
    std::ofstream(*options.dir / "table.txt") << t.to_text();
    std::ofstream(*options.dir / "table.json") << t.to_json().dump(2) << '\n';
  }
  return t;
}

}  // namespace ecct::experiments
