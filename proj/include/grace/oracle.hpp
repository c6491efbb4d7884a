// Copyright 2026 The GRACE Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef GRACE_ORACLE_HPP
#define GRACE_ORACLE_HPP

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

namespace grace {

struct UtilityQuery {
  std::string concept_name;
  std::string model_name;
  std::filesystem::path vector_path; // may be empty for synthetic oracles
  std::size_t layer = 0;
  double coefficient = 0.0;
  std::uint64_t seed = 0;
};

struct UtilityResult {
  double concept_score = 0.0;
  double coherence = 0.0;
  double utility = 0.0;

  static UtilityResult from_scores(double concept_score, double coherence) {
    return {concept_score, coherence, (concept_score + coherence) / 2.0};
  }
};

class UtilityOracle {
public:
  virtual ~UtilityOracle() = default;
  virtual UtilityResult evaluate(const UtilityQuery &query) = 0;
  std::size_t call_count() const { return calls_; }

protected:
  std::size_t calls_ = 0;
};

// Synthetic landscape: a Gaussian concept-score bump over (layer,
// coefficient), a coherence ramp that degrades linearly past the collapse
// coefficient, and optional seeded noise. A pure function of
// (config, query.seed, layer, coefficient).
struct LandscapeConfig {
  std::size_t peak_layer = 0;
  double peak_coefficient = 2.0;
  double peak_utility = 90.0;
  double width_layer = 3.0;
  double width_coefficient = 1.0;
  double base_utility = 0.0;
  double collapse_coefficient = 2.5;
  double collapse_slope = 30.0; // coherence points lost per unit coefficient
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;

  static LandscapeConfig from_json(const nlohmann::json &j);
  nlohmann::json to_json() const;
};

class LandscapeOracle : public UtilityOracle {
public:
  explicit LandscapeOracle(LandscapeConfig config) : config_(config) {}
  UtilityResult evaluate(const UtilityQuery &query) override;
  const LandscapeConfig &config() const { return config_; }

private:
  LandscapeConfig config_;
};

// Child-process evaluator speaking line-delimited JSON over stdio.
// Request:  {"concept", "model", "vector_path", "layer", "coefficient",
//            "seed"}
// Response: {"concept_score", "coherence"}, both in [0, 100].
// Requests are serialized; {"shutdown": true} ends the child.
struct EvaluatorOptions {
  std::vector<std::string> command; // argv, command[0] is the executable
  std::chrono::milliseconds timeout{10000};
  int retries = 2;
};

class ExternalEvaluator : public UtilityOracle {
public:
  explicit ExternalEvaluator(EvaluatorOptions options);
  ~ExternalEvaluator() override;

  ExternalEvaluator(const ExternalEvaluator &) = delete;
  ExternalEvaluator &operator=(const ExternalEvaluator &) = delete;

  UtilityResult evaluate(const UtilityQuery &query) override;

  // Total re-sends performed across all evaluations.
  std::size_t retry_count() const { return retries_used_; }

private:
  void launch();
  void shutdown() noexcept;
  std::string drain_stderr();
  bool child_alive();
  // Reads one line within the deadline; returns false on timeout.
  bool read_line(std::string &line, std::chrono::milliseconds timeout);

  EvaluatorOptions options_;
  int to_child_ = -1;
  int from_child_ = -1;
  int err_child_ = -1;
  long pid_ = -1;
  std::string buffer_;
  std::size_t retries_used_ = 0;
};

} // namespace grace

#endif // GRACE_ORACLE_HPP
