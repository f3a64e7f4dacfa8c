/*
 * Copyright 2026 PISE Contributors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#pragma once

#include <chrono>
#include <ctime>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pise/config.hpp"

namespace pise {

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// Record of one CLI command: what ran, with which resolved inputs, and
/// whether it finished. Written as <output>/manifest.json before the work
/// starts (status "running") and finalized afterwards, so a directory is
/// re-runnable from its manifest alone and interrupted runs are visible.
struct ExperimentManifest {
  std::string command;
  ConfigMap config;             // fully resolved (defaults materialized)
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  std::string version = version_string();
  std::string started_at;
  std::string finished_at;
  std::string status = "running";  // running | complete | failed

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["command"] = command;
    j["config"] = config;
    j["inputs"] = inputs;
    j["outputs"] = outputs;
    j["toolkit_version"] = version;
    j["started_at"] = started_at;
    j["finished_at"] = finished_at;
    j["status"] = status;
    return j;
  }

  static ExperimentManifest from_json(const nlohmann::json& j) {
    ExperimentManifest m;
    m.command = j.at("command").get<std::string>();
    for (const auto& [k, v] : j.at("config").items())
      m.config[k] = v.get<std::string>();
    m.inputs = j.at("inputs").get<std::vector<std::string>>();
    m.outputs = j.at("outputs").get<std::vector<std::string>>();
    m.version = j.at("toolkit_version").get<std::string>();
    m.started_at = j.at("started_at").get<std::string>();
    m.finished_at = j.value("finished_at", "");
    m.status = j.at("status").get<std::string>();
    return m;
  }
};

inline void save_manifest(const ExperimentManifest& m,
                          const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out.good()) throw IoError("cannot write manifest: " + path);
  out << m.to_json().dump(2) << "\n";
  if (!out.good()) throw IoError("failed writing manifest: " + path);
}

inline ExperimentManifest load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in.good()) throw IoError("cannot read manifest: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed manifest " + path + ": " + e.what());
  }
  try {
    return ExperimentManifest::from_json(j);
  } catch (const nlohmann::json::exception& e) {
    throw IoError("manifest missing fields " + path + ": " + e.what());
  }
}

/// Opens a manifest in the running state (start timestamp set).
inline ExperimentManifest begin_manifest(const std::string& command,
                                         const ConfigMap& config) {
  ExperimentManifest m;
  m.command = command;
  m.config = config;
  m.started_at = utc_timestamp();
  m.status = "running";
  return m;
}

/// Stamps the end state and rewrites the file.
inline void finalize_manifest(ExperimentManifest& m, bool ok,
                              const std::string& path) {
  m.finished_at = utc_timestamp();
  m.status = ok ? "complete" : "failed";
  save_manifest(m, path);
}

}  // namespace pise
