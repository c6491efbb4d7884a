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

#include "grace/anova.hpp"

#include <algorithm>
#include <cmath>

#include "grace/error.hpp"

namespace grace {
namespace {

double clamp0(double x) { return x < 0.0 ? 0.0 : x; }

std::vector<double> layer_cells(const UnitTensor &unit, std::size_t layer) {
  if (layer >= unit.layers)
    throw ValidationError("anova: layer out of range");
  if (unit.prompt_pairs < 2 || unit.questions < 2)
    throw ValidationError("anova requires P >= 2 and Q >= 2");
  std::vector<double> cells;
  cells.reserve(unit.prompt_pairs * unit.questions * unit.dim);
  for (std::size_t p = 0; p < unit.prompt_pairs; ++p)
    for (std::size_t q = 0; q < unit.questions; ++q) {
      if (!unit.is_usable(layer, p, q))
        throw ValidationError(
            "anova requires a balanced grid; sample (layer=" +
            std::to_string(layer) + ", prompt=" + std::to_string(p) +
            ", question=" + std::to_string(q) +
            ") was dropped -- impute or sub-select before calling");
      const double *v = unit.at(layer, p, q);
      cells.insert(cells.end(), v, v + unit.dim);
    }
  return cells;
}

} // namespace

AnovaLayer anova_cells(std::span<const double> cells, std::size_t prompt_pairs,
                       std::size_t questions, std::size_t dim) {
  const std::size_t P = prompt_pairs, Q = questions, D = dim;
  if (P < 2 || Q < 2)
    throw ValidationError("anova requires P >= 2 and Q >= 2");
  if (cells.size() != P * Q * D)
    throw ValidationError("anova: cell buffer size mismatch");

  std::vector<double> grand(D, 0.0), row(P * D, 0.0), col(Q * D, 0.0);
  for (std::size_t p = 0; p < P; ++p)
    for (std::size_t q = 0; q < Q; ++q) {
      const double *v = cells.data() + (p * Q + q) * D;
      for (std::size_t i = 0; i < D; ++i) {
        grand[i] += v[i];
        row[p * D + i] += v[i];
        col[q * D + i] += v[i];
      }
    }
  for (std::size_t i = 0; i < D; ++i)
    grand[i] /= static_cast<double>(P * Q);
  for (std::size_t p = 0; p < P; ++p)
    for (std::size_t i = 0; i < D; ++i)
      row[p * D + i] /= static_cast<double>(Q);
  for (std::size_t q = 0; q < Q; ++q)
    for (std::size_t i = 0; i < D; ++i)
      col[q * D + i] /= static_cast<double>(P);

  AnovaLayer r;
  for (std::size_t p = 0; p < P; ++p)
    for (std::size_t q = 0; q < Q; ++q) {
      const double *v = cells.data() + (p * Q + q) * D;
      for (std::size_t i = 0; i < D; ++i) {
        double d = v[i] - grand[i];
        r.ss_total += d * d;
      }
    }
  for (std::size_t p = 0; p < P; ++p)
    for (std::size_t i = 0; i < D; ++i) {
      double d = row[p * D + i] - grand[i];
      r.ss_prompt += static_cast<double>(Q) * d * d;
    }
  for (std::size_t q = 0; q < Q; ++q)
    for (std::size_t i = 0; i < D; ++i) {
      double d = col[q * D + i] - grand[i];
      r.ss_question += static_cast<double>(P) * d * d;
    }
  r.ss_interaction = clamp0(r.ss_total - r.ss_prompt - r.ss_question);
  r.ss_prompt = clamp0(r.ss_prompt);
  r.ss_question = clamp0(r.ss_question);

  if (r.ss_total > 0.0) {
    r.eta2_prompt = r.ss_prompt / r.ss_total;
    r.eta2_question = r.ss_question / r.ss_total;
    r.eta2_interaction = r.ss_interaction / r.ss_total;
  }
  return r;
}

AnovaLayer eta_squared(const UnitTensor &unit, std::size_t layer) {
  auto cells = layer_cells(unit, layer);
  return anova_cells(cells, unit.prompt_pairs, unit.questions, unit.dim);
}

namespace {

AnovaResult finalize(std::vector<AnovaLayer> layers) {
  AnovaResult res;
  res.layers = std::move(layers);
  double sp = 0, sq = 0, si = 0;
  std::size_t n = 0;
  for (const auto &l : res.layers)
    if (l.eta2_prompt) {
      sp += *l.eta2_prompt;
      sq += *l.eta2_question;
      si += *l.eta2_interaction;
      ++n;
    }
  if (n > 0) {
    res.mean_eta2_prompt = sp / static_cast<double>(n);
    res.mean_eta2_question = sq / static_cast<double>(n);
    res.mean_eta2_interaction = si / static_cast<double>(n);
  }
  return res;
}

} // namespace

AnovaResult anova_all_layers(const UnitTensor &unit) {
  std::vector<AnovaLayer> layers;
  layers.reserve(unit.layers);
  for (std::size_t l = 0; l < unit.layers; ++l)
    layers.push_back(eta_squared(unit, l));
  return finalize(std::move(layers));
}

AnovaResult anova_all_layers_raw(const DiffTensor &raw) {
  std::vector<AnovaLayer> layers;
  layers.reserve(raw.layers);
  std::vector<double> cells(raw.prompt_pairs * raw.questions * raw.dim);
  for (std::size_t l = 0; l < raw.layers; ++l) {
    std::size_t k = 0;
    for (std::size_t p = 0; p < raw.prompt_pairs; ++p)
      for (std::size_t q = 0; q < raw.questions; ++q) {
        const float *v = raw.at(l, p, q);
        for (std::size_t i = 0; i < raw.dim; ++i)
          cells[k++] = static_cast<double>(v[i]);
      }
    layers.push_back(
        anova_cells(cells, raw.prompt_pairs, raw.questions, raw.dim));
  }
  return finalize(std::move(layers));
}

std::vector<double> prompt_interaction_ss(const UnitTensor &unit,
                                          std::size_t layer) {
  auto cells = layer_cells(unit, layer);
  const std::size_t P = unit.prompt_pairs, Q = unit.questions, D = unit.dim;
  std::vector<double> grand(D, 0.0), row(P * D, 0.0), col(Q * D, 0.0);
  for (std::size_t p = 0; p < P; ++p)
    for (std::size_t q = 0; q < Q; ++q) {
      const double *v = cells.data() + (p * Q + q) * D;
      for (std::size_t i = 0; i < D; ++i) {
        grand[i] += v[i];
        row[p * D + i] += v[i];
        col[q * D + i] += v[i];
      }
    }
  for (std::size_t i = 0; i < D; ++i)
    grand[i] /= static_cast<double>(P * Q);
  for (std::size_t p = 0; p < P; ++p)
    for (std::size_t i = 0; i < D; ++i)
      row[p * D + i] /= static_cast<double>(Q);
  for (std::size_t q = 0; q < Q; ++q)
    for (std::size_t i = 0; i < D; ++i)
      col[q * D + i] /= static_cast<double>(P);

  std::vector<double> c(P, 0.0);
  for (std::size_t p = 0; p < P; ++p)
    for (std::size_t q = 0; q < Q; ++q) {
      const double *v = cells.data() + (p * Q + q) * D;
      for (std::size_t i = 0; i < D; ++i) {
        double d = v[i] - row[p * D + i] - col[q * D + i] + grand[i];
        c[p] += d * d;
      }
    }
  return c;
}

} // namespace grace
