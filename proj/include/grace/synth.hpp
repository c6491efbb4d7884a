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

#ifndef GRACE_SYNTH_HPP
#define GRACE_SYNTH_HPP

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "grace/tensor.hpp"

namespace grace {

// Synthetic concept generator. Per layer l a global unit direction g_l is
// drawn; per question q a direction u_q = normalize(g_l + sq(l) * eps_q)
// with sq(l) = sigma_question / envelope(l); per (p, q) the sample direction
// is normalize(u_q + sigma_prompt * eps_pq), scaled by a log-normal
// magnitude. High-envelope layers are tighter, so the alignment profile
// peaks where the envelope does.
struct SynthConfig {
  std::size_t prompt_pairs = 5;
  std::size_t questions = 100;
  std::size_t dim = 64;
  std::size_t layers = 1;
  double sigma_question = 0.0;
  double sigma_prompt = 0.0;
  double magnitude_mu = 0.0;
  double magnitude_sigma = 0.0;
  // Per-layer scale in (0, 1]; empty means all ones. Must have `layers`
  // entries when nonempty.
  std::vector<double> alignment_envelope;
  // When set, the prompt_boundary variant gets an independently seeded
  // random envelope instead of sharing the one above.
  bool fragmentation = false;
  std::uint64_t seed = 0;
  std::string concept_name = "synthetic";
  std::string model_name = "synthetic";

  void validate() const;
  nlohmann::json to_json() const;
  static SynthConfig from_json(const nlohmann::json &j);
};

// Generates both variants.
ConceptDataset generate_concept(const SynthConfig &config);

// envelope(l) = floor + (1 - floor) * exp(-(l - center)^2 / (2 width^2)),
// values in (0, 1] for floor in (0, 1].
std::vector<double> gaussian_envelope(std::size_t layers, double center,
                                      double width, double floor_value);

// Random smooth envelope (one Gaussian bump, seeded placement). Used by the
// fragmentation scenario.
std::vector<double> random_envelope(std::size_t layers, std::uint64_t seed,
                                    double floor_value = 0.15);

} // namespace grace

#endif // GRACE_SYNTH_HPP
