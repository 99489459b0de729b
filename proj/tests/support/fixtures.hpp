// Copyright 2026 The confens Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <unistd.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "confens/confens.hpp"

namespace confens::testing {

inline ProbabilityStream prob_stream(const std::vector<std::vector<double>>& steps,
                                     const std::vector<int>& emitted, int blank = 0,
                                     ValueKind kind = ValueKind::probabilities) {
  ProbabilityStream s;
  s.utterance_id = "u";
  s.model_id = "m";
  s.frame_rate_hz = 10.0;
  s.vocab_size = static_cast<int>(steps.at(0).size());
  s.blank_index = blank;
  s.kind = kind;
  for (const auto& row : steps) s.values.insert(s.values.end(), row.begin(), row.end());
  s.emitted_tokens = emitted;
  return s;
}

/// Small simulated corpus: `models` models/datasets, modest splits.
inline SimSpec small_spec(std::size_t models = 3, std::uint64_t seed = 7) {
  SimSpec s;
  s.seed = seed;
  s.match_quality.assign(models, std::vector<double>(models, 0.4));
  s.error_rate.assign(models, std::vector<double>(models, 0.25));
  for (std::size_t i = 0; i < models; ++i) {
    s.models.push_back("m" + std::to_string(i));
    s.datasets.push_back({"d" + std::to_string(i), i});
    s.match_quality[i][i] = 0.5;
    s.error_rate[i][i] = 0.05;
  }
  s.train_utterances = 30;
  s.validation_utterances = 40;
  s.test_utterances = 20;
  s.min_steps = 10;
  s.max_steps = 30;
  s.aux_noise = 0.7;
  return s;
}

class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("confens-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace confens::testing
