// SPDX-License-Identifier: Apache-2.0
//
// JSON experiment configuration. Unknown keys are rejected with the full
// dotted field name so typos never silently fall back to defaults.
#pragma once

#include <fstream>
#include <set>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "wit/training/procedures.hpp"
#include "wit/video/dataset_io.hpp"

namespace wit::experiment {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct SplitCounts {
  std::size_t train = 500, val = 100, test = 100;
};

struct ModelConfig {
  std::size_t hidden = 32;
  std::size_t refocus_dim = 0;
  std::size_t attention_dim = 0;
};

struct ScstConfig {
  std::string metric = "cider";
  std::size_t epochs = 5;
  double learning_rate = 5e-5;
};

struct ExperimentConfig {
  std::uint64_t seed = 1;
  std::string phase = "joint";  // pretrain | joint | freeze-retrain | scst
  video::SyntheticTaskSpec task;
  SplitCounts counts;
  ModelConfig model;
  TrainConfig train;
  ScstConfig scst;

  /// Copies the master seed into the task and training seeds.
  void apply_seed() {
    task.seed = seed;
    train.seed = seed;
  }

  void validate() const {
    static const std::set<std::string> phases = {"pretrain", "joint", "freeze-retrain", "scst"};
    if (!phases.count(phase)) throw ConfigError("phase: unknown value '" + phase + "'");
    try {
      task.validate();
    } catch (const std::exception& e) {
      throw ConfigError(std::string("task: ") + e.what());
    }
    try {
      train.validate();
    } catch (const std::exception& e) {
      throw ConfigError(std::string("train: ") + e.what());
    }
    if (model.hidden == 0) throw ConfigError("model.hidden: must be >= 1");
    if (counts.train == 0) throw ConfigError("counts.train: must be >= 1");
    scst_metric_from_name(scst.metric);
  }
};

namespace detail {

/// Reads known keys from `j` into fields; throws on unknown keys or type errors.
class Reader {
 public:
  Reader(const nlohmann::json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ConfigError(where_ + ": expected a JSON object");
  }
  template <class T>
  Reader& get(const char* key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return *this;
    try {
      it->get_to(out);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(path(key) + ": " + e.what());
    }
    return *this;
  }
  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) throw ConfigError(path(it.key()) + ": unknown field");
  }
  std::string path(const std::string& key) const { return where_.empty() ? key : where_ + "." + key; }

 private:
  const nlohmann::json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

}  // namespace detail

inline nlohmann::json to_json(const ExperimentConfig& c) {
  nlohmann::json task = c.task;
  task.erase("seed");
  return {{"seed", c.seed},
          {"phase", c.phase},
          {"task", task},
          {"counts", {{"train", c.counts.train}, {"val", c.counts.val}, {"test", c.counts.test}}},
          {"model", {{"hidden", c.model.hidden}, {"refocus_dim", c.model.refocus_dim}, {"attention_dim", c.model.attention_dim}}},
          {"train",
           {{"learning_rate", c.train.learning_rate},
            {"epochs", c.train.epochs},
            {"pretrain_epochs", c.train.pretrain_epochs},
            {"beta", c.train.beta},
            {"scheduled_sampling_p", c.train.scheduled_sampling_p},
            {"dropout", c.train.dropout},
            {"max_len", c.train.max_len},
            {"optimizer", c.train.optimizer},
            {"clip_norm", c.train.clip_norm},
            {"batch_size", c.train.batch_size},
            {"workers", c.train.workers}}},
          {"scst", {{"metric", c.scst.metric}, {"epochs", c.scst.epochs}, {"learning_rate", c.scst.learning_rate}}}};
}

/// Overlays `j` onto `c` (fields absent from `j` keep their current values).
inline void merge_json(ExperimentConfig& c, const nlohmann::json& j) {
  detail::Reader top(j, "");
  top.get("seed", c.seed).get("phase", c.phase);
  nlohmann::json task, counts, model, train, scst;
  top.get("task", task).get("counts", counts).get("model", model).get("train", train).get("scst", scst);
  top.finish();

  if (!task.is_null()) {
    if (!task.is_object()) throw ConfigError("task: expected a JSON object");
    nlohmann::json known = c.task;
    known.erase("seed");
    for (auto it = task.begin(); it != task.end(); ++it)
      if (!known.contains(it.key())) throw ConfigError("task." + it.key() + ": unknown field");
    nlohmann::json merged = c.task;
    merged.update(task);
    try {
      c.task = merged.get<video::SyntheticTaskSpec>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("task: ") + e.what());
    }
  }
  if (!counts.is_null())
    detail::Reader(counts, "counts").get("train", c.counts.train).get("val", c.counts.val).get("test", c.counts.test).finish();
  if (!model.is_null())
    detail::Reader(model, "model")
        .get("hidden", c.model.hidden)
        .get("refocus_dim", c.model.refocus_dim)
        .get("attention_dim", c.model.attention_dim)
        .finish();
  if (!train.is_null())
    detail::Reader(train, "train")
        .get("learning_rate", c.train.learning_rate)
        .get("epochs", c.train.epochs)
        .get("pretrain_epochs", c.train.pretrain_epochs)
        .get("beta", c.train.beta)
        .get("scheduled_sampling_p", c.train.scheduled_sampling_p)
        .get("dropout", c.train.dropout)
        .get("max_len", c.train.max_len)
        .get("optimizer", c.train.optimizer)
        .get("clip_norm", c.train.clip_norm)
        .get("batch_size", c.train.batch_size)
        .get("workers", c.train.workers)
        .finish();
  if (!scst.is_null())
    detail::Reader(scst, "scst")
        .get("metric", c.scst.metric)
        .get("epochs", c.scst.epochs)
        .get("learning_rate", c.scst.learning_rate)
        .finish();
}

/// Applies "a.b=value" overrides; value is parsed as JSON, falling back to a string.
inline void apply_override(ExperimentConfig& c, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "': expected key=value");
  const std::string key = assignment.substr(0, eq), text = assignment.substr(eq + 1);
  nlohmann::json value;
  try {
    value = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception&) {
    value = text;
  }
  nlohmann::json patch;
  nlohmann::json* cur = &patch;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ConfigError("override '" + assignment + "': empty key segment");
    cur = &(*cur)[part];
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  *cur = value;
  merge_json(c, patch);
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("config: cannot open " + path);
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config " + path + ": " + e.what());
  }
  ExperimentConfig c;
  merge_json(c, j);
  return c;
}

}  // namespace wit::experiment
