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

#include "grace/tensor.hpp"

#include <cmath>

#include "grace/error.hpp"

namespace grace {

const char *variant_name(Variant v) {
  switch (v) {
  case Variant::prompt_boundary:
    return "prompt_boundary";
  case Variant::response_avg:
    return "response_avg";
  }
  return "?";
}

std::optional<Variant> variant_from_name(std::string_view name) {
  if (name == "prompt_boundary")
    return Variant::prompt_boundary;
  if (name == "response_avg")
    return Variant::response_avg;
  return std::nullopt;
}

void DiffTensor::validate() const {
  if (layers == 0 || prompt_pairs == 0 || questions == 0 || dim == 0)
    throw ValidationError("tensor has a zero dimension (L=" +
                          std::to_string(layers) + " P=" +
                          std::to_string(prompt_pairs) + " Q=" +
                          std::to_string(questions) + " D=" +
                          std::to_string(dim) + ")");
  if (data.size() != value_count())
    throw ValidationError("tensor data length " + std::to_string(data.size()) +
                          " does not match L*P*Q*D = " +
                          std::to_string(value_count()));
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!std::isfinite(data[i])) {
      std::size_t sample = i / dim;
      std::size_t q = sample % questions;
      std::size_t p = (sample / questions) % prompt_pairs;
      std::size_t l = sample / (questions * prompt_pairs);
      throw ValidationError("non-finite value at (layer=" + std::to_string(l) +
                            ", prompt=" + std::to_string(p) + ", question=" +
                            std::to_string(q) + ", component=" +
                            std::to_string(i % dim) + ")");
    }
  }
}

const DiffTensor &ConceptDataset::tensor(Variant v) const {
  auto it = tensors.find(v);
  if (it == tensors.end())
    throw ValidationError(std::string("dataset '") + concept_name +
                          "' is missing variant " + variant_name(v));
  return it->second;
}

} // namespace grace
