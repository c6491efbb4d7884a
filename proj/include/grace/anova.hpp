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

#ifndef GRACE_ANOVA_HPP
#define GRACE_ANOVA_HPP

#include <optional>
#include <span>
#include <vector>

#include "grace/geometry.hpp"
#include "grace/tensor.hpp"

namespace grace {

struct AnovaLayer {
  double ss_prompt = 0.0, ss_question = 0.0, ss_interaction = 0.0,
         ss_total = 0.0;
  // nullopt when ss_total == 0 (all cell vectors identical).
  std::optional<double> eta2_prompt, eta2_question, eta2_interaction;
};

struct AnovaResult {
  std::vector<AnovaLayer> layers;
  std::optional<double> mean_eta2_prompt, mean_eta2_question,
      mean_eta2_interaction;
};

// Two-way decomposition of a balanced P x Q grid of D-dimensional cell
// vectors (one observation per cell, so interaction = residual):
//   ss_total    = sum_pq ||v_pq - grand||^2
//   ss_prompt   = Q * sum_p ||rowmean_p - grand||^2
//   ss_question = P * sum_q ||colmean_q - grand||^2
// Negative values from cancellation are clamped to zero before eta^2.
AnovaLayer anova_cells(std::span<const double> cells, std::size_t prompt_pairs,
                       std::size_t questions, std::size_t dim);

// Unit-normalized (directional) decomposition at one layer. Requires a
// balanced grid: any dropped sample at the layer is an error, and P, Q >= 2.
AnovaLayer eta_squared(const UnitTensor &unit, std::size_t layer);

AnovaResult anova_all_layers(const UnitTensor &unit);

// Raw-vector variant for diagnostics (no normalization applied).
AnovaResult anova_all_layers_raw(const DiffTensor &raw);

// Per-prompt interaction contribution at one layer:
//   c_p = sum_q ||v_pq - rowmean_p - colmean_q + grand||^2.
// Used by the prompt-weighted and drop-worst-prompt constructions.
std::vector<double> prompt_interaction_ss(const UnitTensor &unit,
                                          std::size_t layer);

} // namespace grace

#endif // GRACE_ANOVA_HPP
