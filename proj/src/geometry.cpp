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

#include "grace/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "grace/error.hpp"

namespace grace {
namespace {

double dot(const double *a, const double *b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    s += a[i] * b[i];
  return s;
}

std::size_t choose2(std::size_t n) { return n < 2 ? 0 : n * (n - 1) / 2; }

} // namespace

std::size_t UnitTensor::usable_in_layer(std::size_t l) const {
  std::size_t per_layer = prompt_pairs * questions;
  std::size_t begin = l * per_layer;
  std::size_t n = 0;
  for (std::size_t i = 0; i < per_layer; ++i)
    n += usable[begin + i];
  return n;
}

UnitTensor unit_normalize(const DiffTensor &tensor, double eps) {
  if (eps <= 0)
    throw ValidationError("unit_normalize eps must be positive");
  UnitTensor u;
  u.layers = tensor.layers;
  u.prompt_pairs = tensor.prompt_pairs;
  u.questions = tensor.questions;
  u.dim = tensor.dim;
  u.data.assign(tensor.data.size(), 0.0);
  u.usable.assign(tensor.sample_count(), 0);
  for (std::size_t l = 0; l < u.layers; ++l)
    for (std::size_t p = 0; p < u.prompt_pairs; ++p)
      for (std::size_t q = 0; q < u.questions; ++q) {
        const float *src = tensor.at(l, p, q);
        double *dst = u.data.data() + u.sample_index(l, p, q) * u.dim;
        double norm2 = 0.0;
        for (std::size_t i = 0; i < u.dim; ++i) {
          double x = static_cast<double>(src[i]);
          dst[i] = x;
          norm2 += x * x;
        }
        double norm = std::sqrt(norm2);
        if (norm < eps) {
          u.dropped.push_back({l, p, q});
          std::fill(dst, dst + u.dim, 0.0);
        } else {
          u.usable[u.sample_index(l, p, q)] = 1;
          for (std::size_t i = 0; i < u.dim; ++i)
            dst[i] /= norm;
        }
      }
  return u;
}

std::vector<std::optional<double>> alignment_profile(const UnitTensor &unit) {
  std::vector<std::optional<double>> out(unit.layers);
  std::vector<double> sum(unit.dim);
  for (std::size_t l = 0; l < unit.layers; ++l) {
    std::fill(sum.begin(), sum.end(), 0.0);
    double sumsq = 0.0;
    std::size_t n = 0;
    for (std::size_t p = 0; p < unit.prompt_pairs; ++p)
      for (std::size_t q = 0; q < unit.questions; ++q) {
        if (!unit.is_usable(l, p, q))
          continue;
        const double *v = unit.at(l, p, q);
        for (std::size_t i = 0; i < unit.dim; ++i)
          sum[i] += v[i];
        sumsq += dot(v, v, unit.dim);
        ++n;
      }
    if (n < 2)
      continue;
    double pair_sum = (dot(sum.data(), sum.data(), unit.dim) - sumsq) / 2.0;
    out[l] = pair_sum / static_cast<double>(choose2(n));
  }
  return out;
}

PairCounts full_grid_pair_counts(std::size_t prompt_pairs,
                                 std::size_t questions) {
  PairCounts c;
  std::size_t n = prompt_pairs * questions;
  c.total = choose2(n);
  c.within = questions * choose2(prompt_pairs);
  c.cross = c.total - c.within;
  return c;
}

DecompositionProfile decompose_alignment(const UnitTensor &unit) {
  if (unit.prompt_pairs < 2 || unit.questions < 2)
    throw ValidationError("alignment decomposition requires P >= 2 and Q >= 2");

  DecompositionProfile d;
  d.counts = full_grid_pair_counts(unit.prompt_pairs, unit.questions);
  d.weight_within =
      static_cast<double>(d.counts.within) / static_cast<double>(d.counts.total);
  d.weight_cross =
      static_cast<double>(d.counts.cross) / static_cast<double>(d.counts.total);
  d.within_q.resize(unit.layers);
  d.cross_q.resize(unit.layers);
  d.layer_counts.resize(unit.layers);

  std::vector<double> layer_sum(unit.dim), q_sum(unit.dim);
  for (std::size_t l = 0; l < unit.layers; ++l) {
    std::fill(layer_sum.begin(), layer_sum.end(), 0.0);
    double layer_sumsq = 0.0;
    std::size_t n = 0;
    double within_sum = 0.0;
    std::size_t n_within = 0;
    for (std::size_t q = 0; q < unit.questions; ++q) {
      std::fill(q_sum.begin(), q_sum.end(), 0.0);
      double q_sumsq = 0.0;
      std::size_t nq = 0;
      for (std::size_t p = 0; p < unit.prompt_pairs; ++p) {
        if (!unit.is_usable(l, p, q))
          continue;
        const double *v = unit.at(l, p, q);
        for (std::size_t i = 0; i < unit.dim; ++i)
          q_sum[i] += v[i];
        q_sumsq += dot(v, v, unit.dim);
        ++nq;
      }
      within_sum += (dot(q_sum.data(), q_sum.data(), unit.dim) - q_sumsq) / 2.0;
      n_within += choose2(nq);
      for (std::size_t i = 0; i < unit.dim; ++i)
        layer_sum[i] += q_sum[i];
      layer_sumsq += q_sumsq;
      n += nq;
    }
    std::size_t n_total = choose2(n);
    std::size_t n_cross = n_total - n_within;
    d.layer_counts[l] = {n_total, n_within, n_cross};
    double total_sum =
        (dot(layer_sum.data(), layer_sum.data(), unit.dim) - layer_sumsq) / 2.0;
    double cross_sum = total_sum - within_sum;
    if (n_within > 0)
      d.within_q[l] = within_sum / static_cast<double>(n_within);
    if (n_cross > 0)
      d.cross_q[l] = cross_sum / static_cast<double>(n_cross);
  }
  return d;
}

std::vector<std::optional<double>> question_mean_lambda(const UnitTensor &unit) {
  std::vector<std::optional<double>> out(unit.layers);
  std::vector<double> total(unit.dim), q_mean(unit.dim);
  for (std::size_t l = 0; l < unit.layers; ++l) {
    std::fill(total.begin(), total.end(), 0.0);
    double sumsq = 0.0;
    std::size_t n_questions = 0;
    for (std::size_t q = 0; q < unit.questions; ++q) {
      std::fill(q_mean.begin(), q_mean.end(), 0.0);
      std::size_t nq = 0;
      for (std::size_t p = 0; p < unit.prompt_pairs; ++p) {
        if (!unit.is_usable(l, p, q))
          continue;
        const double *v = unit.at(l, p, q);
        for (std::size_t i = 0; i < unit.dim; ++i)
          q_mean[i] += v[i];
        ++nq;
      }
      if (nq == 0)
        continue;
      for (std::size_t i = 0; i < unit.dim; ++i)
        q_mean[i] /= static_cast<double>(nq);
      for (std::size_t i = 0; i < unit.dim; ++i)
        total[i] += q_mean[i];
      sumsq += dot(q_mean.data(), q_mean.data(), unit.dim);
      ++n_questions;
    }
    if (n_questions < 2)
      continue;
    double pair_sum = (dot(total.data(), total.data(), unit.dim) - sumsq) / 2.0;
    out[l] = pair_sum / static_cast<double>(choose2(n_questions));
  }
  return out;
}

GranularityProfile
granularity_profile(const std::vector<std::optional<double>> &alignment,
                    const std::vector<std::optional<double>> &within_q,
                    double eps) {
  if (alignment.size() != within_q.size())
    throw ValidationError("granularity: profile length mismatch");
  GranularityProfile g;
  g.per_layer.resize(alignment.size());
  double sum = 0.0;
  std::size_t defined = 0;
  for (std::size_t l = 0; l < alignment.size(); ++l) {
    if (alignment[l] && within_q[l] && std::abs(*alignment[l]) > eps) {
      g.per_layer[l] = *within_q[l] / *alignment[l];
      sum += *g.per_layer[l];
      ++defined;
    } else {
      ++g.undefined_layers;
    }
  }
  if (defined == 0)
    throw InsufficientDataError("granularity undefined at every layer");
  g.concept_mean = sum / static_cast<double>(defined);
  return g;
}

PromptSimilarityMatrix prompt_pair_matrix(const UnitTensor &unit) {
  PromptSimilarityMatrix m;
  m.prompt_pairs = unit.prompt_pairs;
  m.per_layer.assign(unit.layers,
                     std::vector<double>(unit.prompt_pairs * unit.prompt_pairs,
                                         0.0));
  for (std::size_t l = 0; l < unit.layers; ++l) {
    auto &mat = m.per_layer[l];
    for (std::size_t p = 0; p < unit.prompt_pairs; ++p) {
      mat[p * unit.prompt_pairs + p] = 1.0;
      for (std::size_t pp = p + 1; pp < unit.prompt_pairs; ++pp) {
        double s = 0.0;
        std::size_t n = 0;
        for (std::size_t q = 0; q < unit.questions; ++q) {
          if (!unit.is_usable(l, p, q) || !unit.is_usable(l, pp, q))
            continue;
          s += dot(unit.at(l, p, q), unit.at(l, pp, q), unit.dim);
          ++n;
        }
        double v = n == 0 ? 0.0 : s / static_cast<double>(n);
        mat[p * unit.prompt_pairs + pp] = v;
        mat[pp * unit.prompt_pairs + p] = v;
      }
    }
  }
  return m;
}

namespace {

MagnitudeScope scope_stats(const std::vector<double> &mags) {
  MagnitudeScope s;
  if (mags.empty())
    return s;
  double n = static_cast<double>(mags.size());
  s.mean = std::accumulate(mags.begin(), mags.end(), 0.0) / n;
  double var = 0.0;
  for (double m : mags)
    var += (m - s.mean) * (m - s.mean);
  s.stddev = std::sqrt(var / n); // population std
  if (s.mean > 0.0)
    s.cv = s.stddev / s.mean;
  return s;
}

} // namespace

MagnitudeStats magnitude_cv(const DiffTensor &raw) {
  MagnitudeStats out;
  std::vector<double> pooled;
  pooled.reserve(raw.sample_count());
  for (std::size_t l = 0; l < raw.layers; ++l) {
    std::vector<double> mags;
    mags.reserve(raw.prompt_pairs * raw.questions);
    for (std::size_t p = 0; p < raw.prompt_pairs; ++p)
      for (std::size_t q = 0; q < raw.questions; ++q) {
        const float *v = raw.at(l, p, q);
        double norm2 = 0.0;
        for (std::size_t i = 0; i < raw.dim; ++i)
          norm2 += static_cast<double>(v[i]) * static_cast<double>(v[i]);
        mags.push_back(std::sqrt(norm2));
      }
    out.per_layer.push_back(scope_stats(mags));
    pooled.insert(pooled.end(), mags.begin(), mags.end());
  }
  out.pooled = scope_stats(pooled);
  return out;
}

namespace {

std::optional<double> pearson_raw(const std::vector<double> &x,
                                  const std::vector<double> &y) {
  double n = static_cast<double>(x.size());
  double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0)
    return std::nullopt;
  return sxy / std::sqrt(sxx * syy);
}

// Average ranks, ties get the mean of the positions they span.
std::vector<double> average_ranks(const std::vector<double> &x) {
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(x.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]])
      ++j;
    double r = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k)
      ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

} // namespace

CorrelationStats correlation_stats(const std::vector<double> &x,
                                   const std::vector<double> &y) {
  if (x.size() != y.size() || x.size() < 3)
    throw InsufficientDataError(
        "correlation_stats requires equal lengths >= 3");
  CorrelationStats c;
  c.pearson = pearson_raw(x, y);
  c.spearman = pearson_raw(average_ranks(x), average_ranks(y));
  return c;
}

std::optional<double> fragmentation_correlation(
    const std::vector<std::optional<double>> &profile_pb,
    const std::vector<std::optional<double>> &profile_ra) {
  if (profile_pb.size() != profile_ra.size())
    throw ValidationError("fragmentation: profiles cover different layer sets");
  std::vector<double> x, y;
  for (std::size_t l = 0; l < profile_pb.size(); ++l)
    if (profile_pb[l] && profile_ra[l]) {
      x.push_back(*profile_pb[l]);
      y.push_back(*profile_ra[l]);
    }
  // Fewer than three common layers: the correlation is meaningless, not an
  // error — callers treat "unknown" like "no fragmentation signal".
  if (x.size() < 3)
    return std::nullopt;
  return pearson_raw(x, y);
}

LayerSet rank_layers(const std::vector<std::optional<double>> &alignment,
                     std::size_t k) {
  if (k == 0)
    throw ValidationError("rank_layers requires k >= 1");
  std::vector<std::size_t> defined;
  for (std::size_t l = 0; l < alignment.size(); ++l)
    if (alignment[l])
      defined.push_back(l);
  std::sort(defined.begin(), defined.end(), [&](std::size_t a, std::size_t b) {
    if (*alignment[a] != *alignment[b])
      return *alignment[a] > *alignment[b];
    return a < b;
  });
  LayerSet s;
  s.provenance = LayerSetProvenance::top_k_alignment;
  if (k >= defined.size()) {
    s.indices = defined;
    s.truncated = k > defined.size();
  } else {
    s.indices.assign(defined.begin(), defined.begin() + static_cast<long>(k));
  }
  s.label = "top_" + std::to_string(k) + "_alignment";
  return s;
}

LayerSet union_top_k(const std::vector<std::optional<double>> &profile_pb,
                     const std::vector<std::optional<double>> &profile_ra,
                     std::size_t k) {
  LayerSet a = rank_layers(profile_pb, k);
  LayerSet b = rank_layers(profile_ra, k);
  LayerSet u;
  u.provenance = LayerSetProvenance::union_top_k;
  u.truncated = a.truncated || b.truncated;
  u.indices = a.indices;
  u.indices.insert(u.indices.end(), b.indices.begin(), b.indices.end());
  std::sort(u.indices.begin(), u.indices.end());
  u.indices.erase(std::unique(u.indices.begin(), u.indices.end()),
                  u.indices.end());
  u.label = "union_top_" + std::to_string(k);
  return u;
}

LayerSet full_layers(std::size_t layer_count) {
  LayerSet s;
  s.provenance = LayerSetProvenance::full;
  s.indices.resize(layer_count);
  std::iota(s.indices.begin(), s.indices.end(), 0);
  s.label = "full";
  return s;
}

GeometryProfile compute_geometry(const DiffTensor &raw, double eps) {
  UnitTensor unit = unit_normalize(raw, eps);
  GeometryProfile g;
  g.alignment = alignment_profile(unit);
  auto d = decompose_alignment(unit);
  g.within_q = d.within_q;
  g.cross_q = d.cross_q;
  g.weight_within = d.weight_within;
  g.weight_cross = d.weight_cross;
  auto gran = granularity_profile(g.alignment, g.within_q);
  g.granularity = gran.per_layer;
  g.concept_granularity = gran.concept_mean;
  g.granularity_undefined_layers = gran.undefined_layers;
  g.n_vectors = raw.prompt_pairs * raw.questions;
  g.dropped_samples = unit.dropped.size();
  return g;
}

} // namespace grace
