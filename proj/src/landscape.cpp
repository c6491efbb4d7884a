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

#include <algorithm>
#include <cmath>

#include "grace/error.hpp"
#include "grace/oracle.hpp"
#include "grace/rng.hpp"

namespace grace {

LandscapeConfig LandscapeConfig::from_json(const nlohmann::json &j) {
  LandscapeConfig c;
  c.peak_layer = j.at("peak_layer").get<std::size_t>();
  c.peak_coefficient = j.at("peak_coefficient").get<double>();
  c.peak_utility = j.value("peak_utility", c.peak_utility);
  c.width_layer = j.at("width_layer").get<double>();
  c.width_coefficient = j.at("width_coefficient").get<double>();
  c.base_utility = j.value("base_utility", c.base_utility);
  c.collapse_coefficient = j.value("collapse_coefficient",
                                   c.collapse_coefficient);
  c.collapse_slope = j.value("collapse_slope", c.collapse_slope);
  c.noise_sigma = j.value("noise_sigma", c.noise_sigma);
  c.seed = j.value("seed", c.seed);
  if (c.width_layer <= 0 || c.width_coefficient <= 0)
    throw ValidationError("landscape widths must be positive");
  if (c.peak_utility <= 0 || c.peak_utility > 100)
    throw ValidationError("peak_utility must lie in (0, 100]");
  return c;
}

nlohmann::json LandscapeConfig::to_json() const {
  return {{"peak_layer", peak_layer},
          {"peak_coefficient", peak_coefficient},
          {"peak_utility", peak_utility},
          {"width_layer", width_layer},
          {"width_coefficient", width_coefficient},
          {"base_utility", base_utility},
          {"collapse_coefficient", collapse_coefficient},
          {"collapse_slope", collapse_slope},
          {"noise_sigma", noise_sigma},
          {"seed", seed}};
}

UtilityResult LandscapeOracle::evaluate(const UtilityQuery &query) {
  ++calls_;
  const auto &c = config_;
  double dl = static_cast<double>(query.layer) -
              static_cast<double>(c.peak_layer);
  double da = query.coefficient - c.peak_coefficient;
  double bump = std::exp(-(dl * dl / (2.0 * c.width_layer * c.width_layer) +
                           da * da /
                               (2.0 * c.width_coefficient *
                                c.width_coefficient)));
  double concept_score = c.base_utility + (c.peak_utility - c.base_utility) *
                                              bump;
  double coherence =
      100.0 -
      c.collapse_slope * std::max(0.0, query.coefficient -
                                           c.collapse_coefficient);

  if (c.noise_sigma > 0.0) {
    Rng rng(mix_seed({c.seed, query.seed,
                      static_cast<std::uint64_t>(query.layer),
                      double_bits(query.coefficient)}));
    concept_score += rng.normal(0.0, c.noise_sigma);
    coherence += rng.normal(0.0, c.noise_sigma);
  }
  concept_score = std::clamp(concept_score, 0.0, 100.0);
  coherence = std::clamp(coherence, 0.0, 100.0);
  return UtilityResult::from_scores(concept_score, coherence);
}

} // namespace grace
