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

#ifndef GRACE_SEARCH_HPP
#define GRACE_SEARCH_HPP

#include <cstdio>
#include <filesystem>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "grace/geometry.hpp"
#include "grace/oracle.hpp"
#include "grace/rng.hpp"

namespace grace {

inline const std::vector<double> kDefaultCoefficients{0.5, 1.0, 1.5, 2.0, 2.5,
                                                      3.0, 3.5, 4.0, 4.5};
inline const std::vector<double> kGridCoefficients{1.0, 2.0, 3.0};

struct SearchSpace {
  LayerSet layers;
  std::vector<double> coefficients = kDefaultCoefficients;

  std::size_t point_count() const {
    return layers.indices.size() * coefficients.size();
  }
  void validate() const;
};

struct SearchConfig {
  std::size_t budget = 50;
  std::vector<std::uint64_t> seeds = {1, 2, 3};
  std::size_t n_startup = 10;
  double gamma_fraction = 0.25;
  std::size_t n_candidates = 24;
  double prior_weight = 1.0;

  void validate() const;
  nlohmann::json to_json() const;
  static SearchConfig from_json(const nlohmann::json &j);
};

struct Trial {
  std::size_t index = 0; // 1-based within the run
  std::size_t layer = 0;
  double coefficient = 0.0;
  std::uint64_t seed = 0;
  double utility = 0.0, concept_score = 0.0, coherence = 0.0;
  bool cache_hit = false;
};

struct SeedResult {
  std::uint64_t seed = 0;
  std::size_t best_layer = 0;
  double best_coefficient = 0.0;
  double best_utility = 0.0;
  std::size_t t95 = 0;
  bool exhausted_space = false;
  std::vector<Trial> history;
};

struct SearchAggregate {
  double mean_best_utility = 0.0, std_best_utility = 0.0;
  double mean_t95 = 0.0, std_t95 = 0.0;
};

struct SearchResult {
  std::vector<SeedResult> per_seed;
  SearchAggregate aggregate;
  std::string space_provenance;
};

// Smallest 1-based index t with max(utility[0..t)) >= 0.95 * overall max.
std::size_t compute_t95(const std::vector<Trial> &history);

// ---------------------------------------------------------------------------
// Trial cache

struct TrialKey {
  std::string concept_name, model_name, vector_id;
  std::size_t layer = 0;
  double coefficient = 0.0;
  std::uint64_t seed = 0;

  std::string to_string() const;
};

// Durable map (concept, model, vector_id, layer, coefficient, seed) ->
// scores, backed by an append-only JSONL journal. Results are journaled
// before being returned, so a crash after the append never re-evaluates.
class TrialCache {
public:
  TrialCache() = default; // in-memory only
  explicit TrialCache(std::filesystem::path journal_path,
                      bool fsync_each = false);
  ~TrialCache();

  TrialCache(const TrialCache &) = delete;
  TrialCache &operator=(const TrialCache &) = delete;

  std::optional<UtilityResult> lookup(const TrialKey &key) const;

  // Returns (result, was_hit). On a miss the oracle is called exactly once
  // with `query` and the result journaled before return. Journal write
  // failures emit a warning on stderr but still return the evaluation.
  std::pair<UtilityResult, bool> get_or_evaluate(const TrialKey &key,
                                                 const UtilityQuery &query,
                                                 UtilityOracle &oracle);

  std::size_t size() const;
  std::size_t hits() const { return hits_; }
  std::size_t misses() const { return misses_; }

private:
  void append_journal(const TrialKey &key, const UtilityResult &r);

  mutable std::mutex mu_;
  std::unordered_map<std::string, UtilityResult> map_;
  std::filesystem::path journal_path_;
  std::FILE *journal_ = nullptr;
  bool fsync_each_ = false;
  std::size_t hits_ = 0, misses_ = 0;
};

// ---------------------------------------------------------------------------
// Samplers

// TPE over two independent categorical dimensions (layer, coefficient).
// Returns indices into the space arrays; nullopt when every point has been
// evaluated.
class TpeSampler {
public:
  TpeSampler(const SearchSpace &space, const SearchConfig &config,
             std::uint64_t seed);

  struct Point {
    std::size_t layer_index, coefficient_index;
  };

  std::optional<Point> suggest(const std::vector<Trial> &history);

private:
  const SearchSpace &space_;
  SearchConfig config_;
  Rng rng_;
};

enum class SearchMode { tpe, random, grid };
const char *search_mode_name(SearchMode m);

// Maps a layer to the vector file handed to the oracle. Synthetic oracles
// ignore the path, so the null source returns an empty path.
class VectorSource {
public:
  virtual ~VectorSource() = default;
  virtual std::filesystem::path vector_path(std::size_t layer) = 0;
  virtual std::string id() const = 0;
};

class NullVectorSource : public VectorSource {
public:
  explicit NullVectorSource(std::string id = "none") : id_(std::move(id)) {}
  std::filesystem::path vector_path(std::size_t) override { return {}; }
  std::string id() const override { return id_; }

private:
  std::string id_;
};

struct SearchContext {
  std::string concept_name, model_name;
  UtilityOracle *oracle = nullptr;
  VectorSource *vectors = nullptr;
  TrialCache *cache = nullptr; // optional; nullptr = no caching
};

SeedResult run_seed(SearchMode mode, const SearchContext &ctx,
                    const SearchSpace &space, const SearchConfig &config,
                    std::uint64_t seed);

SearchResult run_search(SearchMode mode, const SearchContext &ctx,
                        const SearchSpace &space, const SearchConfig &config);

// Fixed-interval baseline: layers {0, stride, 2*stride, ...} over
// [0, layer_count), every coefficient, row-major, one pass per seed.
SearchResult grid_search(const SearchContext &ctx, std::size_t layer_count,
                         std::size_t stride,
                         const std::vector<double> &coefficients,
                         const std::vector<std::uint64_t> &seeds);

SearchSpace grid_space(std::size_t layer_count, std::size_t stride,
                       const std::vector<double> &coefficients);

} // namespace grace

#endif // GRACE_SEARCH_HPP
