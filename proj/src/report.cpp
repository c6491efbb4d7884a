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

#include "grace/report.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

#include "grace/error.hpp"

namespace grace {

std::string file_digest(const std::filesystem::path &path) {
  std::ifstream is(path, std::ios::binary);
  if (!is)
    throw PersistenceError("cannot open " + path.string() + " for digest");
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[8192];
  while (is.read(buf, sizeof(buf)) || is.gcount() > 0) {
    for (std::streamsize i = 0; i < is.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
  }
  char out[17];
  std::snprintf(out, sizeof(out), "%016llx",
                static_cast<unsigned long long>(h));
  return out;
}

nlohmann::json to_json(const std::vector<std::optional<double>> &values) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto &v : values) {
    if (v)
      arr.push_back(*v);
    else
      arr.push_back(nullptr);
  }
  return arr;
}

nlohmann::json to_json(const GeometryProfile &profile) {
  return {{"alignment", to_json(profile.alignment)},
          {"within_q", to_json(profile.within_q)},
          {"cross_q", to_json(profile.cross_q)},
          {"granularity", to_json(profile.granularity)},
          {"weight_within", profile.weight_within},
          {"weight_cross", profile.weight_cross},
          {"concept_granularity", profile.concept_granularity},
          {"granularity_undefined_layers",
           profile.granularity_undefined_layers},
          {"n_vectors", profile.n_vectors},
          {"dropped_samples", profile.dropped_samples}};
}

nlohmann::json to_json(const AnovaResult &anova) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto &l : anova.layers) {
    nlohmann::json e{{"ss_prompt", l.ss_prompt},
                     {"ss_question", l.ss_question},
                     {"ss_interaction", l.ss_interaction},
                     {"ss_total", l.ss_total}};
    e["eta2_prompt"] = l.eta2_prompt ? nlohmann::json(*l.eta2_prompt)
                                     : nlohmann::json(nullptr);
    e["eta2_question"] = l.eta2_question ? nlohmann::json(*l.eta2_question)
                                         : nlohmann::json(nullptr);
    e["eta2_interaction"] = l.eta2_interaction
                                ? nlohmann::json(*l.eta2_interaction)
                                : nlohmann::json(nullptr);
    layers.push_back(e);
  }
  nlohmann::json j{{"layers", layers}};
  j["mean_eta2_prompt"] = anova.mean_eta2_prompt
                              ? nlohmann::json(*anova.mean_eta2_prompt)
                              : nlohmann::json(nullptr);
  j["mean_eta2_question"] = anova.mean_eta2_question
                                ? nlohmann::json(*anova.mean_eta2_question)
                                : nlohmann::json(nullptr);
  j["mean_eta2_interaction"] =
      anova.mean_eta2_interaction ? nlohmann::json(*anova.mean_eta2_interaction)
                                  : nlohmann::json(nullptr);
  return j;
}

nlohmann::json to_json(const PromptSimilarityMatrix &matrix) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto &m : matrix.per_layer) {
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t p = 0; p < matrix.prompt_pairs; ++p) {
      nlohmann::json row = nlohmann::json::array();
      for (std::size_t pp = 0; pp < matrix.prompt_pairs; ++pp)
        row.push_back(m[p * matrix.prompt_pairs + pp]);
      rows.push_back(row);
    }
    layers.push_back(rows);
  }
  return {{"prompt_pairs", matrix.prompt_pairs}, {"per_layer", layers}};
}

nlohmann::json to_json(const MagnitudeStats &stats) {
  auto scope = [](const MagnitudeScope &s) {
    nlohmann::json j{{"mean", s.mean}, {"stddev", s.stddev}};
    j["cv"] = s.cv ? nlohmann::json(*s.cv) : nlohmann::json(nullptr);
    return j;
  };
  nlohmann::json per_layer = nlohmann::json::array();
  for (const auto &s : stats.per_layer)
    per_layer.push_back(scope(s));
  return {{"per_layer", per_layer}, {"pooled", scope(stats.pooled)}};
}

nlohmann::json to_json(const LayerSet &layers) {
  const char *prov = "full";
  if (layers.provenance == LayerSetProvenance::top_k_alignment)
    prov = "top_k_alignment";
  else if (layers.provenance == LayerSetProvenance::union_top_k)
    prov = "union_top_k";
  return {{"indices", layers.indices},
          {"provenance", prov},
          {"truncated", layers.truncated},
          {"label", layers.label}};
}

nlohmann::json to_json(const Trial &trial) {
  return {{"index", trial.index},
          {"layer", trial.layer},
          {"coefficient", trial.coefficient},
          {"seed", trial.seed},
          {"utility", trial.utility},
          {"concept_score", trial.concept_score},
          // cache_hit is deliberately omitted: a rerun served from the
          // journal must produce byte-identical reports
          {"coherence", trial.coherence}};
}

nlohmann::json to_json(const SeedResult &seed_result) {
  nlohmann::json history = nlohmann::json::array();
  for (const auto &t : seed_result.history)
    history.push_back(to_json(t));
  return {{"seed", seed_result.seed},
          {"best_layer", seed_result.best_layer},
          {"best_coefficient", seed_result.best_coefficient},
          {"best_utility", seed_result.best_utility},
          {"t95", seed_result.t95},
          {"exhausted_space", seed_result.exhausted_space},
          {"history", history}};
}

nlohmann::json to_json(const SearchResult &result) {
  nlohmann::json per_seed = nlohmann::json::array();
  for (const auto &s : result.per_seed)
    per_seed.push_back(to_json(s));
  return {{"per_seed", per_seed},
          {"aggregate",
           {{"mean_best_utility", result.aggregate.mean_best_utility},
            {"std_best_utility", result.aggregate.std_best_utility},
            {"mean_t95", result.aggregate.mean_t95},
            {"std_t95", result.aggregate.std_t95}}},
          {"space_provenance", result.space_provenance}};
}

namespace {

std::ofstream open_out(const std::filesystem::path &path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os)
    throw PersistenceError("cannot write " + path.string());
  return os;
}

std::string cell(const std::optional<double> &v) {
  if (!v)
    return "";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", *v);
  return buf;
}

} // namespace

void write_geometry_csv(const GeometryProfile &profile,
                        const std::filesystem::path &path) {
  auto os = open_out(path);
  os << "layer,alignment,within_q,cross_q,granularity\n";
  for (std::size_t l = 0; l < profile.alignment.size(); ++l)
    os << l << "," << cell(profile.alignment[l]) << ","
       << cell(profile.within_q[l]) << "," << cell(profile.cross_q[l]) << ","
       << cell(profile.granularity[l]) << "\n";
}

void write_anova_csv(const AnovaResult &anova,
                     const std::filesystem::path &path) {
  auto os = open_out(path);
  os << "layer,eta2_prompt,eta2_question,eta2_interaction\n";
  for (std::size_t l = 0; l < anova.layers.size(); ++l)
    os << l << "," << cell(anova.layers[l].eta2_prompt) << ","
       << cell(anova.layers[l].eta2_question) << ","
       << cell(anova.layers[l].eta2_interaction) << "\n";
}

void write_convergence_csv(const SeedResult &seed_result,
                           const std::filesystem::path &path) {
  auto os = open_out(path);
  os << "trial,utility,best_utility\n";
  double best = -1.0;
  for (const auto &t : seed_result.history) {
    best = std::max(best, t.utility);
    char u[40], b[40];
    std::snprintf(u, sizeof(u), "%.12g", t.utility);
    std::snprintf(b, sizeof(b), "%.12g", best);
    os << t.index << "," << u << "," << b << "\n";
  }
}

void write_json_file(const nlohmann::json &j,
                     const std::filesystem::path &path) {
  auto os = open_out(path);
  os << j.dump(2) << "\n";
}

} // namespace grace
