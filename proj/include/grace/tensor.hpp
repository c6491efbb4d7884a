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

#ifndef GRACE_TENSOR_HPP
#define GRACE_TENSOR_HPP

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace grace {

enum class Variant { prompt_boundary, response_avg };

const char *variant_name(Variant v);
std::optional<Variant> variant_from_name(std::string_view name);

// Contrastive activation differences for one concept variant: one vector of
// length `dim` per (layer, prompt pair, question), row-major. Data is stored
// as f32 (matching the on-disk format); all statistics are computed in
// double.
struct DiffTensor {
  std::size_t layers = 0;
  std::size_t prompt_pairs = 0;
  std::size_t questions = 0;
  std::size_t dim = 0;
  std::vector<float> data;

  std::size_t sample_count() const { return layers * prompt_pairs * questions; }
  std::size_t value_count() const { return sample_count() * dim; }

  std::size_t sample_index(std::size_t l, std::size_t p, std::size_t q) const {
    return (l * prompt_pairs + p) * questions + q;
  }

  const float *at(std::size_t l, std::size_t p, std::size_t q) const {
    return data.data() + sample_index(l, p, q) * dim;
  }
  float *at(std::size_t l, std::size_t p, std::size_t q) {
    return data.data() + sample_index(l, p, q) * dim;
  }

  // Throws ValidationError on zero dimensions, length mismatch, or
  // non-finite values.
  void validate() const;
};

struct ConceptDataset {
  std::string concept_name;
  std::string model_name;
  std::string notes;
  std::map<Variant, DiffTensor> tensors;
  std::filesystem::path manifest_path;

  bool has(Variant v) const { return tensors.count(v) != 0; }

  // Throws ValidationError naming the variant when absent.
  const DiffTensor &tensor(Variant v) const;
};

} // namespace grace

#endif // GRACE_TENSOR_HPP
