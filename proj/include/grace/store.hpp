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

#ifndef GRACE_STORE_HPP
#define GRACE_STORE_HPP

#include <filesystem>

#include "grace/tensor.hpp"

namespace grace {

// Tensor file layout: magic "GRAT", u32 LE version (=1), u32 LE L, P, Q, D,
// then L*P*Q*D f32 LE values row-major [layer][prompt][question][component].
inline constexpr char kTensorMagic[4] = {'G', 'R', 'A', 'T'};
inline constexpr std::uint32_t kTensorFormatVersion = 1;

void write_tensor(const DiffTensor &tensor, const std::filesystem::path &path);
DiffTensor read_tensor(const std::filesystem::path &path);

// Loads a manifest (JSON: concept_name, model_name, variants map, optional
// notes), reads every referenced tensor, and checks cross-variant shape
// agreement and finiteness.
ConceptDataset validate_dataset(const std::filesystem::path &manifest_path);

// Writes all tensors of `dataset` next to a manifest at
// `dir/manifest.json`; returns the manifest path.
std::filesystem::path save_dataset(const ConceptDataset &dataset,
                                   const std::filesystem::path &dir);

} // namespace grace

#endif // GRACE_STORE_HPP
