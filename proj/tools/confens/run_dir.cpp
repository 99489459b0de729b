// Copyright 2026 The confens Authors
// SPDX-License-Identifier: Apache-2.0

#include "run_dir.hpp"

#include <algorithm>
#include <ctime>
#include <fstream>

#include "confens/error.hpp"

namespace confens::cli {

RunDir::RunDir(std::filesystem::path dir, std::string command)
    : dir_(std::move(dir)),
      command_(std::move(command)),
      started_(std::chrono::system_clock::now()),
      clock_(std::chrono::steady_clock::now()) {
  std::error_code ec;
  std::filesystem::create_directories(dir_, ec);
  if (ec) throw ValidationError("cannot create output directory '" + dir_.string() + "': " + ec.message());
}

void RunDir::write_text(const std::string& name, const std::string& text) {
  std::ofstream out(dir_ / name, std::ios::binary);
  if (!out) throw ValidationError("cannot write '" + (dir_ / name).string() + "'");
  out << text;
  add_artifact(name);
}

void RunDir::add_artifact(const std::string& name) {
  if (std::find(artifacts_.begin(), artifacts_.end(), name) == artifacts_.end()) artifacts_.push_back(name);
}

void RunDir::write_json(const std::string& name, const nlohmann::json& j) {
  write_text(name, j.dump(2) + "\n");
}

void RunDir::finish(const nlohmann::json& resolved_config) {
  nlohmann::json config = resolved_config;
  config["command"] = command_;
  write_json("run_config.json", config);

  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - clock_).count();
  const std::time_t t = std::chrono::system_clock::to_time_t(started_);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  std::ofstream(dir_ / "timing.json") << nlohmann::json{{"started_at", stamp}, {"wall_seconds", wall}}.dump(2)
                                      << "\n";

  nlohmann::json manifest = {{"command", command_},
                             {"config", "run_config.json"},
                             {"artifacts", artifacts_},
                             {"timing_sidecar", "timing.json"}};
  std::ofstream(dir_ / "run_manifest.json") << manifest.dump(2) << "\n";
}

}  // namespace confens::cli
