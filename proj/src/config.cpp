// Copyright 2026 The ECCT Simulator Authors
// SPDX-License-Identifier: Apache-2.0

#include "ecct/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

#include "ecct/errors.hpp"

namespace ecct {
namespace {

namespace pt = boost::property_tree;

std::string fmt_double(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

double parse_double(const std::string& key, const std::string& s) {
  if (s == "inf" || s == "infinity") return std::numeric_limits<double>::infinity();
  double v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw ConfigError(key + ": expected a number, got '" + s + "'");
  return v;
}

template <typename Int>
Int parse_int(const std::string& key, const std::string& s) {
  Int v{};
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw ConfigError(key + ": expected an integer, got '" + s + "'");
  return v;
}

bool parse_bool(const std::string& key, const std::string& s) {
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw ConfigError(key + ": expected a boolean, got '" + s + "'");
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, ',')) {
    const auto b = cur.find_first_not_of(" \t");
    if (b == std::string::npos) continue;
    out.push_back(cur.substr(b, cur.find_last_not_of(" \t") - b + 1));
  }
  return out;
}

template <typename T>
std::string join(const std::vector<T>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ',';
    if constexpr (std::is_same_v<T, std::string>) {
      s += v[i];
    } else {
      s += std::to_string(v[i]);
    }
  }
  return s;
}

template <typename Int>
std::vector<Int> parse_int_list(const std::string& key, const std::string& s) {
  std::vector<Int> out;
  for (const auto& item : split_list(s)) out.push_back(parse_int<Int>(key, item));
  return out;
}

struct Field {
  std::string key;
  std::function<std::string(const TrainingConfig&)> get;
  std::function<void(TrainingConfig&, const std::string&)> set;
};

#define ECCT_DOUBLE(KEY, MEMBER)                                                         \
  Field {                                                                                \
    KEY, [](const TrainingConfig& c) { return fmt_double(c.MEMBER); },                   \
        [](TrainingConfig& c, const std::string& v) { c.MEMBER = parse_double(KEY, v); } \
  }
#define ECCT_INT(KEY, MEMBER)                                                                               \
  Field {                                                                                                   \
    KEY, [](const TrainingConfig& c) { return std::to_string(c.MEMBER); },                                  \
        [](TrainingConfig& c, const std::string& v) { c.MEMBER = parse_int<decltype(c.MEMBER)>(KEY, v); } \
  }
#define ECCT_BOOL(KEY, MEMBER)                                                         \
  Field {                                                                              \
    KEY, [](const TrainingConfig& c) { return std::string(c.MEMBER ? "true" : "false"); }, \
        [](TrainingConfig& c, const std::string& v) { c.MEMBER = parse_bool(KEY, v); } \
  }
#define ECCT_INT_LIST(KEY, MEMBER)                                                 \
  Field {                                                                          \
    KEY, [](const TrainingConfig& c) { return join(c.MEMBER); },                   \
        [](TrainingConfig& c, const std::string& v) {                              \
          c.MEMBER = parse_int_list<decltype(c.MEMBER)::value_type>(KEY, v);       \
        }                                                                          \
  }
#define ECCT_STRING_LIST(KEY, MEMBER)                                                             \
  Field {                                                                                         \
    KEY, [](const TrainingConfig& c) { return join(c.MEMBER); },                                  \
        [](TrainingConfig& c, const std::string& v) { c.MEMBER = split_list(v); }                 \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      {"method", [](const TrainingConfig& c) { return std::string(to_string(c.method)); },
       [](TrainingConfig& c, const std::string& v) { c.method = method_from_string(v); }},
      {"feature_setting", [](const TrainingConfig& c) { return std::string(data::to_string(c.feature_setting)); },
       [](TrainingConfig& c, const std::string& v) { c.feature_setting = data::feature_setting_from_string(v); }},
      ECCT_INT("devices", devices),
      ECCT_INT("rounds", rounds),
      ECCT_DOUBLE("select_ratio", select_ratio),
      {"async_mode", [](const TrainingConfig& c) { return std::string(to_string(c.async_mode)); },
       [](TrainingConfig& c, const std::string& v) { c.async_mode = async_mode_from_string(v); }},
      ECCT_INT("seed", seed),
      ECCT_BOOL("parallel", parallel),
      ECCT_INT("epochs.device", device_epochs),
      ECCT_INT_LIST("epochs.device_overrides", device_epoch_overrides),
      ECCT_INT("epochs.cloud", cloud_epochs),
      ECCT_INT_LIST("async.version_periods", async.version_periods),
      ECCT_DOUBLE("loss.alpha_s", loss.alpha_s),
      ECCT_DOUBLE("loss.alpha_d", loss.alpha_d),
      ECCT_DOUBLE("loss.temperature", loss.kd_temperature),
      ECCT_INT("loss.switch_round", loss.two_stage_switch_round),
      ECCT_BOOL("loss.filtered", loss.filtered_kd),
      {"loss.kd_direction",
       [](const TrainingConfig& c) {
         return std::string(c.loss.kd_direction == loss::KdDirection::kTeacherStudent ? "teacher_student"
                                                                                      : "student_teacher");
       },
       [](TrainingConfig& c, const std::string& v) {
         if (v == "teacher_student") {
           c.loss.kd_direction = loss::KdDirection::kTeacherStudent;
         } else if (v == "student_teacher") {
           c.loss.kd_direction = loss::KdDirection::kStudentTeacher;
         } else {
           throw ConfigError("loss.kd_direction: expected teacher_student or student_teacher");
         }
       }},
      {"loss.server_kd_norm",
       [](const TrainingConfig& c) {
         return std::string(c.loss.server_kd_norm == loss::ServerKdNorm::kMeanOverDevices ? "mean" : "sum");
       },
       [](TrainingConfig& c, const std::string& v) {
         if (v == "mean") {
           c.loss.server_kd_norm = loss::ServerKdNorm::kMeanOverDevices;
         } else if (v == "sum") {
           c.loss.server_kd_norm = loss::ServerKdNorm::kSum;
         } else {
           throw ConfigError("loss.server_kd_norm: expected mean or sum");
         }
       }},
      {"data.source",
       [](const TrainingConfig& c) { return std::string(c.data.source == DataSource::kCsv ? "csv" : "synthetic"); },
       [](TrainingConfig& c, const std::string& v) {
         if (v == "csv") {
           c.data.source = DataSource::kCsv;
         } else if (v == "synthetic") {
           c.data.source = DataSource::kSynthetic;
         } else {
           throw ConfigError("data.source: expected synthetic or csv");
         }
       }},
      ECCT_INT("data.classes", data.classes),
      ECCT_INT("data.samples", data.samples),
      ECCT_INT("data.fed_dim", data.fed_dim),
      ECCT_INT("data.cen_dim", data.cen_dim),
      ECCT_DOUBLE("data.separation", data.separation),
      {"data.csv_path", [](const TrainingConfig& c) { return c.data.csv_path; },
       [](TrainingConfig& c, const std::string& v) { c.data.csv_path = v; }},
      ECCT_STRING_LIST("data.csv_federated", data.csv_schema.federated),
      ECCT_STRING_LIST("data.csv_centralized", data.csv_schema.centralized),
      {"data.csv_label", [](const TrainingConfig& c) { return c.data.csv_schema.label; },
       [](TrainingConfig& c, const std::string& v) { c.data.csv_schema.label = v; }},
      {"data.partition", [](const TrainingConfig& c) { return std::string(to_string(c.data.partition)); },
       [](TrainingConfig& c, const std::string& v) {
         if (v == "iid") {
           c.data.partition = PartitionKind::kIid;
         } else if (v == "dirichlet") {
           c.data.partition = PartitionKind::kDirichlet;
         } else {
           throw ConfigError("data.partition: expected iid or dirichlet");
         }
       }},
      ECCT_DOUBLE("data.dirichlet_alpha", data.dirichlet_alpha),
      ECCT_DOUBLE("data.test_ratio", data.test_ratio),
      ECCT_INT("model.embedding_dim", model.embedding_dim),
      ECCT_INT_LIST("model.edge_encoder", model.edge_encoder),
      ECCT_INT_LIST("model.edge_classifier", model.edge_classifier),
      ECCT_INT_LIST("model.cloud_encoder", model.cloud_encoder),
      ECCT_INT_LIST("model.cloud_classifier", model.cloud_classifier),
      ECCT_BOOL("model.hetero", model.hetero),
      ECCT_INT_LIST("model.hetero_widths", model.hetero_widths),
      ECCT_INT("train.batch_size", batch_size),
      {"optimizer.kind", [](const TrainingConfig& c) { return std::string(nn::to_string(c.optimizer.kind)); },
       [](TrainingConfig& c, const std::string& v) { c.optimizer.kind = nn::optimizer_kind_from_string(v); }},
      ECCT_DOUBLE("optimizer.lr", optimizer.learning_rate),
      ECCT_DOUBLE("optimizer.momentum", optimizer.momentum),
      ECCT_DOUBLE("optimizer.beta1", optimizer.beta1),
      ECCT_DOUBLE("optimizer.beta2", optimizer.beta2),
      ECCT_DOUBLE("optimizer.epsilon", optimizer.epsilon),
      ECCT_INT("transfer.edge_buffer", transfer.edge_buffer_capacity),
      ECCT_INT("transfer.cloud_buffer", transfer.cloud_buffer_capacity),
      ECCT_BOOL("privacy.enabled", privacy.enabled),
      ECCT_DOUBLE("privacy.clip_norm", privacy.clip_norm),
      ECCT_DOUBLE("privacy.noise_sigma", privacy.noise_sigma),
      ECCT_BOOL("output.events", output.events),
      ECCT_BOOL("output.event_ids", output.event_ids),
      ECCT_BOOL("output.payloads", output.payloads),
      ECCT_BOOL("output.checkpoints", output.checkpoints),
  };
  return table;
}

#undef ECCT_DOUBLE
#undef ECCT_INT
#undef ECCT_BOOL
#undef ECCT_INT_LIST
#undef ECCT_STRING_LIST

void collect(const pt::ptree& node, const std::string& prefix, std::vector<std::pair<std::string, std::string>>& out) {
  for (const auto& [name, child] : node) {
    const std::string key = prefix.empty() ? name : prefix + "." + name;
    if (child.empty()) {
      out.emplace_back(key, child.data());
    } else {
      collect(child, key, out);
    }
  }
}

}  // namespace

const char* to_string(Method m) {
  switch (m) {
    case Method::kEcct: return "ecct";
    case Method::kFedAvg: return "fedavg";
    case Method::kFedGkt: return "fedgkt";
  }
  return "?";
}

const char* to_string(AsyncMode m) {
  switch (m) {
    case AsyncMode::kSync: return "sync";
    case AsyncMode::kAsynVersion: return "asyn_version";
    case AsyncMode::kAsynEpoch: return "asyn_epoch";
    case AsyncMode::kAsynBoth: return "asyn_both";
  }
  return "?";
}

const char* to_string(PartitionKind p) { return p == PartitionKind::kIid ? "iid" : "dirichlet"; }

Method method_from_string(const std::string& s) {
  if (s == "ecct") return Method::kEcct;
  if (s == "fedavg") return Method::kFedAvg;
  if (s == "fedgkt") return Method::kFedGkt;
  throw ConfigError("unknown method '" + s + "'");
}

AsyncMode async_mode_from_string(const std::string& s) {
  if (s == "sync") return AsyncMode::kSync;
  if (s == "asyn_version") return AsyncMode::kAsynVersion;
  if (s == "asyn_epoch") return AsyncMode::kAsynEpoch;
  if (s == "asyn_both") return AsyncMode::kAsynBoth;
  throw ConfigError("unknown async mode '" + s + "'");
}

void TrainingConfig::validate() const {
  using data::FeatureSetting;
  if (devices < 1) throw ConfigError("devices must be >= 1");
  if (rounds < 0) throw ConfigError("rounds must be >= 0");
  if (device_epochs < 1) throw ConfigError("epochs.device must be >= 1");
  if (cloud_epochs < 1) throw ConfigError("epochs.cloud must be >= 1");
  if (!device_epoch_overrides.empty()) {
    if (static_cast<int>(device_epoch_overrides.size()) != devices)
      throw ConfigError("epochs.device_overrides needs one entry per device");
    for (int e : device_epoch_overrides)
      if (e < 1) throw ConfigError("per-device epochs must be >= 1");
  }
  if (!(select_ratio > 0 && select_ratio <= 1)) throw ConfigError("select_ratio must lie in (0, 1]");
  if (select_ratio * devices < 1 - 1e-9) throw ConfigError("select_ratio * devices must be >= 1");
  switch (method) {
    case Method::kEcct:
      if (feature_setting == FeatureSetting::kC2F) throw ConfigError("ecct runs under CandF (or degenerate F)");
      break;
    case Method::kFedAvg:
    case Method::kFedGkt:
      if (feature_setting == FeatureSetting::kCandF)
        throw ConfigError(std::string(to_string(method)) + " runs under F or C2F");
      break;
  }
  if (method == Method::kFedAvg && model.hetero)
    throw ConfigError("fedavg averages parameters and cannot run heterogeneous edge models");
  if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (model.embedding_dim < 1) throw ConfigError("model.embedding_dim must be >= 1");
  for (const auto* widths : {&model.edge_encoder, &model.edge_classifier, &model.cloud_encoder,
                             &model.cloud_classifier, &model.hetero_widths})
    for (auto w : *widths)
      if (w < 1) throw ConfigError("layer widths must be positive");
  if (model.hetero && model.hetero_widths.empty()) throw ConfigError("model.hetero_widths is empty");
  if (async.version_periods.empty()) throw ConfigError("async.version_periods is empty");
  for (int f : async.version_periods)
    if (f < 1) throw ConfigError("communication periods must be >= 1");
  if (transfer.edge_buffer_capacity < 1 || transfer.cloud_buffer_capacity < 1)
    throw ConfigError("buffer capacities must be >= 1");
  if (privacy.enabled && (!(privacy.clip_norm > 0) || !(privacy.noise_sigma >= 0)))
    throw ConfigError("privacy needs clip_norm > 0 and noise_sigma >= 0");
  if (!(optimizer.learning_rate > 0)) throw ConfigError("optimizer.lr must be positive");
  if (!(data.test_ratio > 0 && data.test_ratio < 1)) throw ConfigError("data.test_ratio must lie in (0, 1)");
  if (data.source == DataSource::kCsv && data.csv_path.empty()) throw ConfigError("data.csv_path is required");
  loss.validate();
}

int TrainingConfig::device_epochs_for(int device) const {
  if (device_epoch_overrides.empty()) return device_epochs;
  return device_epoch_overrides.at(static_cast<std::size_t>(device));
}

int TrainingConfig::selected_per_round() const {
  const int n = static_cast<int>(std::ceil(select_ratio * devices - 1e-9));
  return std::clamp(n, 1, devices);
}

std::map<std::string, std::string> to_key_values(const TrainingConfig& cfg) {
  std::map<std::string, std::string> out;
  for (const auto& f : fields()) out[f.key] = f.get(cfg);
  return out;
}

void set_config_value(TrainingConfig& cfg, const std::string& key, const std::string& value) {
  for (const auto& f : fields()) {
    if (f.key == key) {
      f.set(cfg, value);
      return;
    }
  }
  throw ConfigError("unknown config key '" + key + "'");
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& f : fields()) keys.push_back(f.key);
  return keys;
}

TrainingConfig parse_config(const std::string& text, TrainingConfig base) {
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
  std::vector<std::pair<std::string, std::string>> kv;
  collect(tree, "", kv);
  for (const auto& [k, v] : kv) set_config_value(base, k, v);
  return base;
}

TrainingConfig load_config(const std::filesystem::path& path, TrainingConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), std::move(base));
}

std::string format_config(const TrainingConfig& cfg) {
  pt::ptree tree;
  for (const auto& [k, v] : to_key_values(cfg)) tree.put(k, v);
  std::ostringstream out;
  pt::write_ini(out, tree);
  return out.str();
}

}  // namespace ecct
