// Copyright 2026 The confens Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <chrono>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace confens::cli {

/// Output directory of one command invocation. Result files are written
/// deterministically; wall-clock data goes to timing.json only.
class RunDir {
 public:
  RunDir(std::filesystem::path dir, std::string command);

  const std::filesystem::path& path() const noexcept { return dir_; }

  void write_json(const std::string& name, const nlohmann::json& j);
  void write_text(const std::string& name, const std::string& text);
  /// Records a file written into the directory by other means.
  void add_artifact(const std::string& name);

  /// Writes run_config.json, run_manifest.json and timing.json.
  void finish(const nlohmann::json& resolved_config);

 private:
  std::filesystem::path dir_;
  std::string command_;
  std::vector<std::string> artifacts_;
  std::chrono::system_clock::time_point started_;
  std::chrono::steady_clock::time_point clock_;
};

}  // namespace confens::cli
