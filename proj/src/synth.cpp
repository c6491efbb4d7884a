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

#include "grace/synth.hpp"

#include <cmath>

#include "grace/error.hpp"
#include "grace/rng.hpp"

namespace grace {
namespace {

void normalize(std::vector<double> &v) {
  double n = 0.0;
  for (double x : v)
    n += x * x;
  n = std::sqrt(n);
  if (n > 0.0)
    for (double &x : v)
      x /= n;
}

std::vector<double> random_unit(Rng &rng, std::size_t d) {
  auto v = rng.normal_vector(d);
  normalize(v);
  return v;
}

DiffTensor generate_variant(const SynthConfig &c,
                            const std::vector<double> &envelope,
                            std::uint64_t variant_seed) {
  DiffTensor t;
  t.layers = c.layers;
  t.prompt_pairs = c.prompt_pairs;
  t.questions = c.questions;
  t.dim = c.dim;
  t.data.resize(t.value_count());

  Rng rng(variant_seed);
  std::vector<double> dir(c.dim);
  for (std::size_t l = 0; l < c.layers; ++l) {
    auto global = random_unit(rng, c.dim);
    double sq = c.sigma_question / envelope[l];
    for (std::size_t q = 0; q < c.questions; ++q) {
      std::vector<double> u = global;
      if (sq > 0.0) {
        auto eps = rng.normal_vector(c.dim);
        for (std::size_t i = 0; i < c.dim; ++i)
          u[i] += sq * eps[i];
        normalize(u);
      }
      for (std::size_t p = 0; p < c.prompt_pairs; ++p) {
        dir = u;
        if (c.sigma_prompt > 0.0) {
          auto eps = rng.normal_vector(c.dim);
          for (std::size_t i = 0; i < c.dim; ++i)
            dir[i] += c.sigma_prompt * eps[i];
          normalize(dir);
        }
        double mag = c.magnitude_sigma > 0.0
                         ? rng.lognormal(c.magnitude_mu, c.magnitude_sigma)
                         : std::exp(c.magnitude_mu);
        float *dst = t.at(l, p, q);
        for (std::size_t i = 0; i < c.dim; ++i)
          dst[i] = static_cast<float>(mag * dir[i]);
      }
    }
  }
  return t;
}

} // namespace

void SynthConfig::validate() const {
  if (dim < 2)
    throw ValidationError("synth: dim must be >= 2");
  if (layers == 0 || prompt_pairs == 0 || questions == 0)
    throw ValidationError("synth: zero-sized dimension");
  if (sigma_question < 0.0 || sigma_prompt < 0.0 || magnitude_sigma < 0.0)
    throw ValidationError("synth: dispersions must be nonnegative");
  if (!alignment_envelope.empty()) {
    if (alignment_envelope.size() != layers)
      throw ValidationError("synth: envelope length must equal layer count");
    for (double e : alignment_envelope)
      if (e <= 0.0 || e > 1.0)
        throw ValidationError("synth: envelope values must lie in (0, 1]");
  }
}

nlohmann::json SynthConfig::to_json() const {
  nlohmann::json j{{"prompt_pairs", prompt_pairs},
                   {"questions", questions},
                   {"dim", dim},
                   {"layers", layers},
                   {"sigma_question", sigma_question},
                   {"sigma_prompt", sigma_prompt},
                   {"magnitude_mu", magnitude_mu},
                   {"magnitude_sigma", magnitude_sigma},
                   {"fragmentation", fragmentation},
                   {"seed", seed},
                   {"concept_name", concept_name},
                   {"model_name", model_name}};
  if (!alignment_envelope.empty())
    j["alignment_envelope"] = alignment_envelope;
  return j;
}

SynthConfig SynthConfig::from_json(const nlohmann::json &j) {
  SynthConfig c;
  c.prompt_pairs = j.value("prompt_pairs", c.prompt_pairs);
  c.questions = j.value("questions", c.questions);
  c.dim = j.value("dim", c.dim);
  c.layers = j.value("layers", c.layers);
  c.sigma_question = j.value("sigma_question", c.sigma_question);
  c.sigma_prompt = j.value("sigma_prompt", c.sigma_prompt);
  c.magnitude_mu = j.value("magnitude_mu", c.magnitude_mu);
  c.magnitude_sigma = j.value("magnitude_sigma", c.magnitude_sigma);
  if (j.contains("alignment_envelope"))
    c.alignment_envelope =
        j.at("alignment_envelope").get<std::vector<double>>();
  c.fragmentation = j.value("fragmentation", c.fragmentation);
  c.seed = j.value("seed", c.seed);
  c.concept_name = j.value("concept_name", c.concept_name);
  c.model_name = j.value("model_name", c.model_name);
  c.validate();
  return c;
}

std::vector<double> gaussian_envelope(std::size_t layers, double center,
                                      double width, double floor_value) {
  if (floor_value <= 0.0 || floor_value > 1.0)
    throw ValidationError("envelope floor must lie in (0, 1]");
  if (width <= 0.0)
    throw ValidationError("envelope width must be positive");
  std::vector<double> env(layers);
  for (std::size_t l = 0; l < layers; ++l) {
    double d = static_cast<double>(l) - center;
    env[l] = floor_value +
             (1.0 - floor_value) * std::exp(-d * d / (2.0 * width * width));
  }
  return env;
}

std::vector<double> random_envelope(std::size_t layers, std::uint64_t seed,
                                    double floor_value) {
  Rng rng(mix_seed({seed, 0x656e76ULL}));
  double center = rng.uniform() * static_cast<double>(layers - 1);
  double width = (0.05 + 0.1 * rng.uniform()) * static_cast<double>(layers);
  return gaussian_envelope(layers, center, width, floor_value);
}

ConceptDataset generate_concept(const SynthConfig &config) {
  config.validate();
  std::vector<double> env = config.alignment_envelope;
  if (env.empty())
    env.assign(config.layers, 1.0);

  ConceptDataset ds;
  ds.concept_name = config.concept_name;
  ds.model_name = config.model_name;

  ds.tensors[Variant::response_avg] =
      generate_variant(config, env, mix_seed({config.seed, 0x7261ULL}));

  std::vector<double> pb_env = env;
  if (config.fragmentation)
    pb_env = random_envelope(config.layers, mix_seed({config.seed, 0x7062ULL}));
  ds.tensors[Variant::prompt_boundary] =
      generate_variant(config, pb_env, mix_seed({config.seed, 0x7062aULL}));
  return ds;
}

} // namespace grace
