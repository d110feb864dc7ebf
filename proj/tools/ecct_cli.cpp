// Copyright 2026 The ECCT Simulator Authors
// SPDX-License-Identifier: Apache-2.0

// Command-line front end: run, gradcheck, gen-data, report, compare, suite.

#include <cmath>
#include <cstdio>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "ecct/config.hpp"
#include "ecct/datagen.hpp"
#include "ecct/errors.hpp"
#include "ecct/experiments.hpp"
#include "ecct/gradcheck.hpp"
#include "ecct/orchestrator.hpp"

namespace {

using ecct::TrainingConfig;

/// --config plus one --<dotted.key> option per config field.
struct ConfigOptions {
  std::string config_path;
  std::map<std::string, std::string> overrides;

  void attach(CLI::App* app) {
    app->add_option("--config", config_path, "Key/value config file")->check(CLI::ExistingFile);
    for (const auto& key : ecct::config_keys()) {
      app->add_option_function<std::string>(
             "--" + key, [this, key](const std::string& v) { overrides[key] = v; }, "Override " + key)
          ->group("Config overrides");
    }
  }

  TrainingConfig resolve() const {
    TrainingConfig cfg;
    if (!config_path.empty()) cfg = ecct::load_config(config_path);
    for (const auto& [k, v] : overrides) ecct::set_config_value(cfg, k, v);
    cfg.validate();
    return cfg;
  }
};

std::string pct(double v) {
  if (std::isnan(v)) return "-";
  std::ostringstream o;
  o << std::fixed << std::setprecision(2) << 100.0 * v;
  return o.str();
}

std::string num(double v, int precision = 4) {
  if (std::isnan(v)) return "-";
  std::ostringstream o;
  o << std::fixed << std::setprecision(precision) << v;
  return o.str();
}

void print_round_line(const ecct::eval::RoundReport& r) {
  std::cout << "round " << std::setw(4) << r.round << "  edge " << std::setw(6) << pct(r.edge_accuracy_pooled)
            << "  cloud " << std::setw(6) << pct(r.cloud_accuracy_pooled) << "  loss " << num(r.device_loss_mean)
            << "  packets " << r.packets_up << "/" << r.packets_down << '\n';
}

struct Summary {
  double final_edge;
  double final_cloud;
  double auc;
  double mse;
  long long bytes_up;
  long long bytes_down;
  double staleness_edge;
  double staleness_cloud;
  int rounds;
};

Summary summarize(const std::vector<ecct::eval::RoundReport>& reports, int window) {
  ecct::RunResult rr{reports};
  Summary s{};
  s.final_edge = ecct::final_edge_accuracy(rr, window);
  const std::size_t trained = reports.size() - 1;
  const std::size_t w = trained == 0 ? 1 : std::min<std::size_t>(static_cast<std::size_t>(window), trained);
  double cloud = 0;
  for (std::size_t i = reports.size() - w; i < reports.size(); ++i) cloud += reports[i].cloud_accuracy_pooled;
  s.final_cloud = cloud / static_cast<double>(w);
  s.auc = reports.back().edge_auc_pooled;
  s.mse = reports.back().edge_mse_pooled;
  for (const auto& r : reports) {
    s.bytes_up += r.bytes_up;
    s.bytes_down += r.bytes_down;
  }
  s.staleness_edge = reports.back().staleness_edge;
  s.staleness_cloud = reports.back().staleness_cloud;
  s.rounds = static_cast<int>(trained);
  return s;
}

std::vector<std::pair<std::string, std::string>> summary_rows(const Summary& s) {
  return {{"rounds", std::to_string(s.rounds)},
          {"edge accuracy (%)", pct(s.final_edge)},
          {"cloud accuracy (%)", pct(s.final_cloud)},
          {"edge AUC", num(s.auc)},
          {"edge MSE", num(s.mse)},
          {"bytes up", std::to_string(s.bytes_up)},
          {"bytes down", std::to_string(s.bytes_down)},
          {"staleness edge", num(s.staleness_edge, 3)},
          {"staleness cloud", num(s.staleness_cloud, 3)}};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Edge-cloud collaborative knowledge transfer simulator"};
  app.require_subcommand(1);

  // run
  auto* run_cmd = app.add_subcommand("run", "Execute one training run");
  ConfigOptions run_cfg;
  run_cfg.attach(run_cmd);
  std::string run_out;
  bool quiet = false;
  run_cmd->add_option("--out", run_out, "Run directory")->required();
  run_cmd->add_flag("--quiet", quiet, "Only print the final summary");

  // gradcheck
  auto* grad_cmd = app.add_subcommand("gradcheck", "Finite-difference check of every analytic gradient");
  int grad_cases = 200;
  std::uint64_t grad_seed = 7;
  double grad_tol = 1e-4;
  grad_cmd->add_option("--cases", grad_cases, "Random configurations")->check(CLI::PositiveNumber);
  grad_cmd->add_option("--seed", grad_seed, "Seed");
  grad_cmd->add_option("--tolerance", grad_tol, "Maximum relative error");

  // gen-data
  auto* gen_cmd = app.add_subcommand("gen-data", "Write the synthetic feature-split dataset as CSV");
  ConfigOptions gen_cfg;
  gen_cfg.attach(gen_cmd);
  std::string gen_out;
  gen_cmd->add_option("--out", gen_out, "CSV path")->required();

  // report
  auto* report_cmd = app.add_subcommand("report", "Summarize a run directory");
  std::string report_dir;
  int report_every = 10;
  int window = 5;
  report_cmd->add_option("run_dir", report_dir, "Run directory")->required()->check(CLI::ExistingDirectory);
  report_cmd->add_option("--every", report_every, "Print every n-th round")->check(CLI::PositiveNumber);
  report_cmd->add_option("--window", window, "Rounds averaged for final accuracy")->check(CLI::PositiveNumber);

  // compare
  auto* compare_cmd = app.add_subcommand("compare", "Metric differences between two run directories");
  std::string compare_a, compare_b;
  compare_cmd->add_option("run_a", compare_a, "First run directory")->required()->check(CLI::ExistingDirectory);
  compare_cmd->add_option("run_b", compare_b, "Second run directory")->required()->check(CLI::ExistingDirectory);
  compare_cmd->add_option("--window", window, "Rounds averaged for final accuracy")->check(CLI::PositiveNumber);

  // suite
  auto* suite_cmd = app.add_subcommand("suite", "Run a comparison grid");
  ConfigOptions suite_cfg;
  suite_cfg.attach(suite_cmd);
  std::string suite_name, suite_out;
  std::vector<std::uint64_t> seeds = {1, 2, 3};
  bool keep_runs = false;
  suite_cmd->add_option("name", suite_name, "feature_settings | async | scaling")
      ->required()
      ->check(CLI::IsMember({"feature_settings", "async", "scaling"}));
  suite_cmd->add_option("--out", suite_out, "Suite directory")->required();
  suite_cmd->add_option("--seeds", seeds, "Seeds")->delimiter(',');
  suite_cmd->add_option("--window", window, "Rounds averaged for final accuracy")->check(CLI::PositiveNumber);
  suite_cmd->add_flag("--keep-runs", keep_runs, "Keep every member's run directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run_cmd->parsed()) {
      const TrainingConfig cfg = run_cfg.resolve();
      ecct::ReportObserver observer;
      if (!quiet) observer = print_round_line;
      const auto result = ecct::run(cfg, run_out, observer);
      for (const auto& [k, v] : summary_rows(summarize(result.reports, window)))
        std::cout << std::left << std::setw(20) << k << v << '\n';
    } else if (grad_cmd->parsed()) {
      const auto s = ecct::gradcheck::run(grad_cases, grad_seed, grad_tol);
      std::map<std::string, std::pair<int, double>> by_objective;
      for (const auto& c : s.cases) {
        auto& e = by_objective[ecct::gradcheck::to_string(c.objective)];
        ++e.first;
        e.second = std::max(e.second, c.max_relative_error);
      }
      for (const auto& [name, e] : by_objective)
        std::cout << std::left << std::setw(16) << name << std::setw(6) << e.first << "worst " << std::scientific
                  << std::setprecision(2) << e.second << std::defaultfloat << '\n';
      std::cout << s.cases.size() << " cases, " << s.failures << " failures, worst relative error " << std::scientific
                << s.worst << '\n';
      return s.failures == 0 ? 0 : 1;
    } else if (gen_cmd->parsed()) {
      const TrainingConfig cfg = gen_cfg.resolve();
      const auto dataset = ecct::build_dataset(cfg);
      ecct::data::write_csv(dataset, gen_out);
      std::cout << "wrote " << dataset.size() << " rows to " << gen_out << '\n';
    } else if (report_cmd->parsed()) {
      const auto reports = ecct::load_metrics(report_dir);
      if (reports.empty()) throw ecct::InputError("metrics.jsonl is empty");
      for (const auto& r : reports)
        if (r.round < 0 || r.round % report_every == report_every - 1 || &r == &reports.back()) print_round_line(r);
      std::cout << '\n';
      for (const auto& [k, v] : summary_rows(summarize(reports, window)))
        std::cout << std::left << std::setw(20) << k << v << '\n';
    } else if (compare_cmd->parsed()) {
      const auto a = summary_rows(summarize(ecct::load_metrics(compare_a), window));
      const auto b = summary_rows(summarize(ecct::load_metrics(compare_b), window));
      std::cout << std::left << std::setw(20) << "metric" << std::right << std::setw(14) << "A" << std::setw(14) << "B"
                << std::setw(14) << "B - A" << '\n';
      for (std::size_t i = 0; i < a.size(); ++i) {
        std::string diff = "-";
        try {
          std::ostringstream o;
          o << std::fixed << std::setprecision(4) << std::stod(b[i].second) - std::stod(a[i].second);
          diff = o.str();
        } catch (const std::exception&) {
        }
        std::cout << std::left << std::setw(20) << a[i].first << std::right << std::setw(14) << a[i].second
                  << std::setw(14) << b[i].second << std::setw(14) << diff << '\n';
      }
    } else if (suite_cmd->parsed()) {
      ecct::experiments::SuiteOptions options;
      options.seeds = seeds;
      options.window = window;
      options.dir = suite_out;
      options.keep_runs = keep_runs;
      options.progress = [](const std::string& m) { std::cerr << m << '\n'; };
      const auto table = ecct::experiments::run_suite(suite_name, suite_cfg.resolve(), options);
      std::cout << table.to_text();
    }
  } catch (const ecct::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
