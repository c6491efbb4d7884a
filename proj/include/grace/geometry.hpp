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

#ifndef GRACE_GEOMETRY_HPP
#define GRACE_GEOMETRY_HPP

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "grace/tensor.hpp"

namespace grace {

struct SampleIndex {
  std::size_t layer, prompt, question;
};

// Unit-normalized copy of a difference tensor, in double precision.
// Samples whose raw norm fell below the normalization epsilon are marked
// unusable and excluded from every pairwise statistic.
struct UnitTensor {
  std::size_t layers = 0, prompt_pairs = 0, questions = 0, dim = 0;
  std::vector<double> data;
  std::vector<std::uint8_t> usable; // one flag per sample
  std::vector<SampleIndex> dropped;

  std::size_t sample_index(std::size_t l, std::size_t p, std::size_t q) const {
    return (l * prompt_pairs + p) * questions + q;
  }
  const double *at(std::size_t l, std::size_t p, std::size_t q) const {
    return data.data() + sample_index(l, p, q) * dim;
  }
  bool is_usable(std::size_t l, std::size_t p, std::size_t q) const {
    return usable[sample_index(l, p, q)] != 0;
  }
  std::size_t usable_in_layer(std::size_t l) const;
};

UnitTensor unit_normalize(const DiffTensor &tensor, double eps = 1e-12);

// Mean pairwise cosine per layer via the closed form
// (||sum v||^2 - sum ||v||^2) / (N(N-1)); nullopt where fewer than two
// usable samples exist.
std::vector<std::optional<double>> alignment_profile(const UnitTensor &unit);

struct PairCounts {
  std::size_t total = 0, within = 0, cross = 0;
};
PairCounts full_grid_pair_counts(std::size_t prompt_pairs,
                                 std::size_t questions);

struct DecompositionProfile {
  std::vector<std::optional<double>> within_q; // gamma
  std::vector<std::optional<double>> cross_q;  // lambda
  // Actual pair counts per layer (differ from the full grid only when
  // samples were dropped).
  std::vector<PairCounts> layer_counts;
  // Full-grid weights: w_W = N_W/N_T, w_C = N_C/N_T.
  double weight_within = 0.0, weight_cross = 0.0;
  PairCounts counts;
};

// Requires P >= 2 and Q >= 2 (throws ValidationError otherwise).
DecompositionProfile decompose_alignment(const UnitTensor &unit);

// lambda via per-question mean directions: mean over q != q' of the dot of
// (1/P_q) sum_p v-hat. Used as an independent cross-check of decompose.
std::vector<std::optional<double>>
question_mean_lambda(const UnitTensor &unit);

struct GranularityProfile {
  std::vector<std::optional<double>> per_layer;
  double concept_mean = 0.0;
  std::size_t undefined_layers = 0;
};

GranularityProfile
granularity_profile(const std::vector<std::optional<double>> &alignment,
                    const std::vector<std::optional<double>> &within_q,
                    double eps = 1e-6);

// Per-layer P x P matrices; entry (p, p') is the mean over questions of the
// unit-vector dot, diagonal forced to 1.
struct PromptSimilarityMatrix {
  std::size_t prompt_pairs = 0;
  std::vector<std::vector<double>> per_layer; // each P*P row-major
  double entry(std::size_t layer, std::size_t p, std::size_t pp) const {
    return per_layer[layer][p * prompt_pairs + pp];
  }
};
PromptSimilarityMatrix prompt_pair_matrix(const UnitTensor &unit);

struct MagnitudeScope {
  double mean = 0.0, stddev = 0.0;
  std::optional<double> cv; // nullopt when the mean magnitude is zero
};
struct MagnitudeStats {
  std::vector<MagnitudeScope> per_layer;
  MagnitudeScope pooled;
};
MagnitudeStats magnitude_cv(const DiffTensor &raw);

struct CorrelationStats {
  std::optional<double> pearson, spearman; // nullopt on zero variance
};
// Requires equal lengths >= 3 (throws InsufficientDataError otherwise).
CorrelationStats correlation_stats(const std::vector<double> &x,
                                   const std::vector<double> &y);

// Pearson correlation between two alignment profiles over their common
// defined layers; nullopt when fewer than 3 common layers exist.
std::optional<double>
fragmentation_correlation(const std::vector<std::optional<double>> &profile_pb,
                          const std::vector<std::optional<double>> &profile_ra);

enum class LayerSetProvenance { full, top_k_alignment, union_top_k };

struct LayerSet {
  std::vector<std::size_t> indices;
  LayerSetProvenance provenance = LayerSetProvenance::full;
  // Set when k exceeded the number of defined layers.
  bool truncated = false;
  std::string label;
};

// Top-k by descending alignment, ties to the lower layer index; result is
// ordered by rank. Undefined layers are never selected.
LayerSet rank_layers(const std::vector<std::optional<double>> &alignment,
                     std::size_t k);
// Set union of the two top-k sets, sorted ascending.
LayerSet union_top_k(const std::vector<std::optional<double>> &profile_pb,
                     const std::vector<std::optional<double>> &profile_ra,
                     std::size_t k);
LayerSet full_layers(std::size_t layer_count);

// Assembled per-concept geometry.
struct GeometryProfile {
  std::vector<std::optional<double>> alignment, within_q, cross_q, granularity;
  double weight_within = 0.0, weight_cross = 0.0;
  double concept_granularity = 0.0;
  std::size_t granularity_undefined_layers = 0;
  std::size_t n_vectors = 0; // full-grid P*Q
  std::size_t dropped_samples = 0;
};
GeometryProfile compute_geometry(const DiffTensor &raw, double eps = 1e-12);

} // namespace grace

#endif // GRACE_GEOMETRY_HPP
