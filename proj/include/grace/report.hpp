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

#ifndef GRACE_REPORT_HPP
#define GRACE_REPORT_HPP

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "grace/anova.hpp"
#include "grace/geometry.hpp"
#include "grace/search.hpp"

namespace grace {

inline constexpr const char *kToolVersion = "0.1.0";

// FNV-1a over the file bytes, hex encoded. Embedded in reports so a rerun
// can prove it saw the same inputs.
std::string file_digest(const std::filesystem::path &path);

nlohmann::json to_json(const std::vector<std::optional<double>> &values);
nlohmann::json to_json(const GeometryProfile &profile);
nlohmann::json to_json(const AnovaResult &anova);
nlohmann::json to_json(const PromptSimilarityMatrix &matrix);
nlohmann::json to_json(const MagnitudeStats &stats);
nlohmann::json to_json(const LayerSet &layers);
nlohmann::json to_json(const Trial &trial);
nlohmann::json to_json(const SeedResult &seed_result);
nlohmann::json to_json(const SearchResult &result);

// One row per layer: layer, alignment, within_q, cross_q, granularity.
void write_geometry_csv(const GeometryProfile &profile,
                        const std::filesystem::path &path);
// One row per layer: layer, eta2_prompt, eta2_question, eta2_interaction.
void write_anova_csv(const AnovaResult &anova,
                     const std::filesystem::path &path);
// Best-so-far curve: trial, utility, best_utility.
void write_convergence_csv(const SeedResult &seed_result,
                           const std::filesystem::path &path);

void write_json_file(const nlohmann::json &j,
                     const std::filesystem::path &path);

} // namespace grace

#endif // GRACE_REPORT_HPP
