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

#ifndef GRACE_VECTORS_HPP
#define GRACE_VECTORS_HPP

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "grace/tensor.hpp"

namespace grace {

enum class VectorMethod {
  diffmeans,
  unit_mean,
  cluster,
  prompt_weighted,
  drop_worst_prompt,
  question_svd,
};

const char *vector_method_name(VectorMethod m);
std::optional<VectorMethod> vector_method_from_name(std::string_view name);

struct SteeringVector {
  std::vector<double> direction;
  std::size_t layer = 0;
  VectorMethod method = VectorMethod::diffmeans;
  std::vector<std::size_t> included_prompts;
  // diffmeans keeps the raw magnitude (coefficients scale it directly);
  // every other construction emits a unit direction.
  bool unit_norm = false;
  double cluster_threshold = 0.0;
  bool cluster_fallback = false;
  std::vector<double> prompt_weights;
};

// Mean of the raw differences over non-dropped samples.
SteeringVector diffmeans(const DiffTensor &raw, std::size_t layer,
                         double eps = 1e-12);

// Normalized mean of unit-normalized samples.
SteeringVector unit_mean(const DiffTensor &raw, std::size_t layer,
                         double eps = 1e-12);

// Largest subset of prompt pairs (size >= 2) whose per-prompt mean
// directions all exceed `threshold` pairwise cosine; falls back to the full
// set (flagged) when no such subset exists. Direction is the normalized
// diffmeans over the selected prompts. Requires P <= 12.
SteeringVector cluster_vector(const DiffTensor &raw, std::size_t layer,
                              double threshold = 0.7, double eps = 1e-12);

// Per-prompt means weighted inversely to each prompt's interaction sum of
// squares, then normalized.
SteeringVector prompt_weighted(const DiffTensor &raw, std::size_t layer,
                               double eps = 1e-12);

// Diffmeans with the highest-interaction prompt removed, normalized.
// Requires P >= 3.
SteeringVector drop_worst_prompt(const DiffTensor &raw, std::size_t layer,
                                 double eps = 1e-12);

// Top right singular vector of the centered question-mean matrix; sign fixed
// toward the diffmeans direction (or first nonzero component when exactly
// orthogonal).
SteeringVector question_svd(const DiffTensor &raw, std::size_t layer,
                            double eps = 1e-12);

SteeringVector build_vector(VectorMethod method, const DiffTensor &raw,
                            std::size_t layer, double cluster_threshold = 0.7,
                            double eps = 1e-12);

// Persists as <stem>.json (metadata) + <stem>.bin (f32 LE components);
// returns the JSON path.
std::filesystem::path save_vector(const SteeringVector &vec,
                                  const std::filesystem::path &stem);
SteeringVector load_vector(const std::filesystem::path &json_path);

// Brute-force reference for the cluster subset rule, shared with the test
// oracles: operates on an arbitrary P x P similarity matrix.
std::vector<std::size_t> best_cluster_subset(const std::vector<double> &sim,
                                             std::size_t prompt_pairs,
                                             double threshold);

} // namespace grace

#endif // GRACE_VECTORS_HPP
