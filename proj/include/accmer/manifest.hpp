#pragma once

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <string>

#include "json.hpp"

#include "accmer/config.hpp"

#ifndef ACCMER_BUILD_ID
#define ACCMER_BUILD_ID "unknown"
#endif

namespace accmer {

inline std::string iso8601_utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[80];
  std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:%02d:%02dZ",
                tm.tm_year + 1900, tm.tm_mon + 1, tm.tm_mday, tm.tm_hour,
                tm.tm_min, tm.tm_sec);
  return buf;
}

inline nlohmann::json config_to_json(const RunConfig& c) {
  return nlohmann::json{{"n_agents", c.n_agents},
                        {"grid_size", c.grid_size},
                        {"n_prey", c.n_prey},
                        {"punishment", c.punishment},
                        {"buffer_capacity", c.buffer_capacity},
                        {"batch_size", c.batch_size},
                        {"reuse_ratio", c.reuse_ratio},
                        {"env_discount", c.env_discount},
                        {"weight_decay", c.weight_decay},
                        {"epsilon_start", c.epsilon_start},
                        {"epsilon_end", c.epsilon_end},
                        {"epsilon_anneal_steps", c.epsilon_anneal_steps},
                        {"learning_rate", c.learning_rate},
                        {"target_sync_episodes", c.target_sync_episodes},
                        {"total_steps", c.total_steps},
                        {"seed", c.seed}};
}

/// Run metadata written before training starts and finalized at exit.
/// Together with the config it pins everything needed to reproduce the
/// run's deterministic artifacts.
class RunManifest {
 public:
  RunManifest(const RunConfig& cfg, nlohmann::json options, std::string path)
      : path_(std::move(path)) {
    doc_["config"] = config_to_json(cfg);
    doc_["options"] = std::move(options);
    doc_["build_id"] = ACCMER_BUILD_ID;
    doc_["start_time"] = iso8601_utc_now();
    doc_["end_time"] = nullptr;
    doc_["status"] = "running";
    doc_["artifacts"] = nlohmann::json::object();
  }

  void add_artifact(const std::string& name, const std::string& file) {
    doc_["artifacts"][name] = file;
  }

  void write() const {
    std::ofstream out(path_);
    if (!out) throw std::runtime_error("cannot write manifest: " + path_);
    out << doc_.dump(2) << '\n';
  }

  void finalize(nlohmann::json summary, const std::string& status = "complete") {
    doc_["summary"] = std::move(summary);
    doc_["end_time"] = iso8601_utc_now();
    doc_["status"] = status;
    write();
  }

  const nlohmann::json& json() const { return doc_; }

 private:
  nlohmann::json doc_;
  std::string path_;
};

}  // namespace accmer
