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

#include "grace/vectors.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "grace/anova.hpp"
#include "grace/error.hpp"
#include "grace/geometry.hpp"

namespace grace {
namespace {

double norm(const std::vector<double> &v) {
  double s = 0.0;
  for (double x : v)
    s += x * x;
  return std::sqrt(s);
}

void normalize_or_throw(std::vector<double> &v, const char *what) {
  double n = norm(v);
  if (n < 1e-12)
    throw ValidationError(std::string(what) + ": degenerate direction "
                                              "(near-zero mean)");
  for (double &x : v)
    x /= n;
}

void check_layer(const DiffTensor &raw, std::size_t layer) {
  if (layer >= raw.layers)
    throw ValidationError("layer " + std::to_string(layer) +
                          " out of range (L=" + std::to_string(raw.layers) +
                          ")");
}

std::vector<std::size_t> all_prompts(std::size_t p) {
  std::vector<std::size_t> v(p);
  std::iota(v.begin(), v.end(), 0);
  return v;
}

// Mean of raw samples at one layer, restricted to the given prompts and to
// samples whose norm clears eps.
std::vector<double> raw_mean(const DiffTensor &raw, std::size_t layer,
                             const std::vector<std::size_t> &prompts,
                             double eps) {
  std::vector<double> sum(raw.dim, 0.0);
  std::size_t n = 0;
  for (std::size_t p : prompts)
    for (std::size_t q = 0; q < raw.questions; ++q) {
      const float *v = raw.at(layer, p, q);
      double norm2 = 0.0;
      for (std::size_t i = 0; i < raw.dim; ++i)
        norm2 += static_cast<double>(v[i]) * static_cast<double>(v[i]);
      if (std::sqrt(norm2) < eps)
        continue;
      for (std::size_t i = 0; i < raw.dim; ++i)
        sum[i] += static_cast<double>(v[i]);
      ++n;
    }
  if (n == 0)
    throw ValidationError("all samples dropped at layer " +
                          std::to_string(layer));
  for (double &x : sum)
    x /= static_cast<double>(n);
  return sum;
}

// Per-prompt mean of unit vectors (not renormalized).
std::vector<std::vector<double>> prompt_unit_means(const UnitTensor &unit,
                                                   std::size_t layer) {
  std::vector<std::vector<double>> means(unit.prompt_pairs,
                                         std::vector<double>(unit.dim, 0.0));
  for (std::size_t p = 0; p < unit.prompt_pairs; ++p) {
    std::size_t n = 0;
    for (std::size_t q = 0; q < unit.questions; ++q) {
      if (!unit.is_usable(layer, p, q))
        continue;
      const double *v = unit.at(layer, p, q);
      for (std::size_t i = 0; i < unit.dim; ++i)
        means[p][i] += v[i];
      ++n;
    }
    if (n > 0)
      for (double &x : means[p])
        x /= static_cast<double>(n);
  }
  return means;
}

} // namespace

const char *vector_method_name(VectorMethod m) {
  switch (m) {
  case VectorMethod::diffmeans:
    return "diffmeans";
  case VectorMethod::unit_mean:
    return "unit_mean";
  case VectorMethod::cluster:
    return "cluster";
  case VectorMethod::prompt_weighted:
    return "prompt_weighted";
  case VectorMethod::drop_worst_prompt:
    return "drop_worst_prompt";
  case VectorMethod::question_svd:
    return "question_svd";
  }
  return "?";
}

std::optional<VectorMethod> vector_method_from_name(std::string_view name) {
  for (auto m :
       {VectorMethod::diffmeans, VectorMethod::unit_mean, VectorMethod::cluster,
        VectorMethod::prompt_weighted, VectorMethod::drop_worst_prompt,
        VectorMethod::question_svd})
    if (name == vector_method_name(m))
      return m;
  return std::nullopt;
}

SteeringVector diffmeans(const DiffTensor &raw, std::size_t layer, double eps) {
  check_layer(raw, layer);
  SteeringVector v;
  v.method = VectorMethod::diffmeans;
  v.layer = layer;
  v.included_prompts = all_prompts(raw.prompt_pairs);
  v.direction = raw_mean(raw, layer, v.included_prompts, eps);
  v.unit_norm = false;
  return v;
}

SteeringVector unit_mean(const DiffTensor &raw, std::size_t layer, double eps) {
  check_layer(raw, layer);
  UnitTensor unit = unit_normalize(raw, eps);
  std::vector<double> sum(raw.dim, 0.0);
  std::size_t n = 0;
  for (std::size_t p = 0; p < raw.prompt_pairs; ++p)
    for (std::size_t q = 0; q < raw.questions; ++q) {
      if (!unit.is_usable(layer, p, q))
        continue;
      const double *u = unit.at(layer, p, q);
      for (std::size_t i = 0; i < raw.dim; ++i)
        sum[i] += u[i];
      ++n;
    }
  if (n == 0)
    throw ValidationError("all samples dropped at layer " +
                          std::to_string(layer));
  for (double &x : sum)
    x /= static_cast<double>(n);
  normalize_or_throw(sum, "unit_mean");
  SteeringVector v;
  v.method = VectorMethod::unit_mean;
  v.layer = layer;
  v.included_prompts = all_prompts(raw.prompt_pairs);
  v.direction = std::move(sum);
  v.unit_norm = true;
  return v;
}

std::vector<std::size_t> best_cluster_subset(const std::vector<double> &sim,
                                             std::size_t prompt_pairs,
                                             double threshold) {
  if (prompt_pairs > 12)
    throw ValidationError("cluster subset enumeration limited to P <= 12");
  std::vector<std::size_t> best;
  double best_mean = 0.0;
  const std::uint32_t full = 1u << prompt_pairs;
  for (std::uint32_t mask = 0; mask < full; ++mask) {
    std::vector<std::size_t> members;
    for (std::size_t p = 0; p < prompt_pairs; ++p)
      if (mask & (1u << p))
        members.push_back(p);
    if (members.size() < 2)
      continue;
    bool ok = true;
    double mean = 0.0;
    std::size_t pairs = 0;
    for (std::size_t a = 0; a < members.size() && ok; ++a)
      for (std::size_t b = a + 1; b < members.size(); ++b) {
        double s = sim[members[a] * prompt_pairs + members[b]];
        if (s <= threshold) {
          ok = false;
          break;
        }
        mean += s;
        ++pairs;
      }
    if (!ok)
      continue;
    mean /= static_cast<double>(pairs);
    bool better = false;
    if (members.size() > best.size())
      better = true;
    else if (members.size() == best.size()) {
      if (mean > best_mean)
        better = true;
      else if (mean == best_mean && members < best)
        better = true;
    }
    if (better) {
      best = members;
      best_mean = mean;
    }
  }
  return best;
}

SteeringVector cluster_vector(const DiffTensor &raw, std::size_t layer,
                              double threshold, double eps) {
  check_layer(raw, layer);
  UnitTensor unit = unit_normalize(raw, eps);
  auto means = prompt_unit_means(unit, layer);
  const std::size_t P = raw.prompt_pairs;
  // Pairwise cosine of the normalized per-prompt mean directions.
  std::vector<double> sim(P * P, 0.0);
  std::vector<std::vector<double>> dirs = means;
  for (auto &d : dirs) {
    double n = norm(d);
    if (n > 0)
      for (double &x : d)
        x /= n;
  }
  for (std::size_t a = 0; a < P; ++a) {
    sim[a * P + a] = 1.0;
    for (std::size_t b = a + 1; b < P; ++b) {
      double s = 0.0;
      for (std::size_t i = 0; i < raw.dim; ++i)
        s += dirs[a][i] * dirs[b][i];
      sim[a * P + b] = s;
      sim[b * P + a] = s;
    }
  }

  SteeringVector v;
  v.method = VectorMethod::cluster;
  v.layer = layer;
  v.cluster_threshold = threshold;
  v.included_prompts = best_cluster_subset(sim, P, threshold);
  if (v.included_prompts.empty()) {
    v.included_prompts = all_prompts(P);
    v.cluster_fallback = true;
  }
  v.direction = raw_mean(raw, layer, v.included_prompts, eps);
  normalize_or_throw(v.direction, "cluster");
  v.unit_norm = true;
  return v;
}

SteeringVector prompt_weighted(const DiffTensor &raw, std::size_t layer,
                               double eps) {
  check_layer(raw, layer);
  UnitTensor unit = unit_normalize(raw, eps);
  auto c = prompt_interaction_ss(unit, layer);
  auto means = prompt_unit_means(unit, layer);
  const double reg = 1e-9;
  std::vector<double> w(c.size());
  double total = 0.0;
  for (std::size_t p = 0; p < c.size(); ++p) {
    w[p] = 1.0 / (c[p] + reg);
    total += w[p];
  }
  for (double &x : w)
    x /= total;
  std::vector<double> dir(raw.dim, 0.0);
  for (std::size_t p = 0; p < c.size(); ++p)
    for (std::size_t i = 0; i < raw.dim; ++i)
      dir[i] += w[p] * means[p][i];
  normalize_or_throw(dir, "prompt_weighted");
  SteeringVector v;
  v.method = VectorMethod::prompt_weighted;
  v.layer = layer;
  v.included_prompts = all_prompts(raw.prompt_pairs);
  v.prompt_weights = std::move(w);
  v.direction = std::move(dir);
  v.unit_norm = true;
  return v;
}

SteeringVector drop_worst_prompt(const DiffTensor &raw, std::size_t layer,
                                 double eps) {
  check_layer(raw, layer);
  if (raw.prompt_pairs < 3)
    throw ValidationError("drop_worst_prompt requires P >= 3");
  UnitTensor unit = unit_normalize(raw, eps);
  auto c = prompt_interaction_ss(unit, layer);
  std::size_t worst = 0;
  for (std::size_t p = 1; p < c.size(); ++p)
    if (c[p] > c[worst]) // tie keeps the lower index
      worst = p;
  SteeringVector v;
  v.method = VectorMethod::drop_worst_prompt;
  v.layer = layer;
  for (std::size_t p = 0; p < raw.prompt_pairs; ++p)
    if (p != worst)
      v.included_prompts.push_back(p);
  v.direction = raw_mean(raw, layer, v.included_prompts, eps);
  normalize_or_throw(v.direction, "drop_worst_prompt");
  v.unit_norm = true;
  return v;
}

SteeringVector question_svd(const DiffTensor &raw, std::size_t layer,
                            double eps) {
  check_layer(raw, layer);
  if (raw.questions < 2)
    throw ValidationError("question_svd requires Q >= 2");
  UnitTensor unit = unit_normalize(raw, eps);
  const std::size_t D = raw.dim;

  // Question means of unit vectors, then center by their grand mean.
  std::vector<std::vector<double>> rows;
  for (std::size_t q = 0; q < raw.questions; ++q) {
    std::vector<double> m(D, 0.0);
    std::size_t n = 0;
    for (std::size_t p = 0; p < raw.prompt_pairs; ++p) {
      if (!unit.is_usable(layer, p, q))
        continue;
      const double *v = unit.at(layer, p, q);
      for (std::size_t i = 0; i < D; ++i)
        m[i] += v[i];
      ++n;
    }
    if (n == 0)
      continue;
    for (double &x : m)
      x /= static_cast<double>(n);
    rows.push_back(std::move(m));
  }
  if (rows.size() < 2)
    throw ValidationError("question_svd: fewer than 2 usable questions");
  std::vector<double> grand(D, 0.0);
  for (const auto &r : rows)
    for (std::size_t i = 0; i < D; ++i)
      grand[i] += r[i];
  for (double &x : grand)
    x /= static_cast<double>(rows.size());
  for (auto &r : rows)
    for (std::size_t i = 0; i < D; ++i)
      r[i] -= grand[i];

  // Power iteration on M^T M for the top right singular vector. The start
  // vector is the basis axis with the largest column energy, which is
  // invariant under question permutation.
  std::vector<double> colsq(D, 0.0);
  double total = 0.0;
  for (const auto &r : rows)
    for (std::size_t i = 0; i < D; ++i) {
      colsq[i] += r[i] * r[i];
      total += r[i] * r[i];
    }
  if (total == 0.0)
    throw ValidationError("question_svd: centered question means are all zero");
  std::size_t start = static_cast<std::size_t>(
      std::max_element(colsq.begin(), colsq.end()) - colsq.begin());
  std::vector<double> w(D, 0.0), next(D);
  w[start] = 1.0;
  std::vector<double> proj(rows.size());
  for (int iter = 0; iter < 2000; ++iter) {
    for (std::size_t r = 0; r < rows.size(); ++r) {
      double s = 0.0;
      for (std::size_t i = 0; i < D; ++i)
        s += rows[r][i] * w[i];
      proj[r] = s;
    }
    std::fill(next.begin(), next.end(), 0.0);
    for (std::size_t r = 0; r < rows.size(); ++r)
      for (std::size_t i = 0; i < D; ++i)
        next[i] += proj[r] * rows[r][i];
    double n = norm(next);
    if (n == 0.0)
      break; // start vector orthogonal to the row space; keep current w
    double delta = 0.0;
    for (std::size_t i = 0; i < D; ++i) {
      next[i] /= n;
      delta = std::max(delta, std::abs(std::abs(next[i]) - std::abs(w[i])));
    }
    w.swap(next);
    if (delta < 1e-14)
      break;
  }

  // Deterministic sign: nonnegative dot with the diffmeans direction, else
  // nonnegative first nonzero component.
  auto dm = diffmeans(raw, layer, eps);
  double s = 0.0;
  for (std::size_t i = 0; i < D; ++i)
    s += w[i] * dm.direction[i];
  if (s < 0.0) {
    for (double &x : w)
      x = -x;
  } else if (s == 0.0) {
    for (std::size_t i = 0; i < D; ++i)
      if (w[i] != 0.0) {
        if (w[i] < 0.0)
          for (double &x : w)
            x = -x;
        break;
      }
  }

  SteeringVector v;
  v.method = VectorMethod::question_svd;
  v.layer = layer;
  v.included_prompts = all_prompts(raw.prompt_pairs);
  v.direction = std::move(w);
  v.unit_norm = true;
  return v;
}

SteeringVector build_vector(VectorMethod method, const DiffTensor &raw,
                            std::size_t layer, double cluster_threshold,
                            double eps) {
  switch (method) {
  case VectorMethod::diffmeans:
    return diffmeans(raw, layer, eps);
  case VectorMethod::unit_mean:
    return unit_mean(raw, layer, eps);
  case VectorMethod::cluster:
    return cluster_vector(raw, layer, cluster_threshold, eps);
  case VectorMethod::prompt_weighted:
    return prompt_weighted(raw, layer, eps);
  case VectorMethod::drop_worst_prompt:
    return drop_worst_prompt(raw, layer, eps);
  case VectorMethod::question_svd:
    return question_svd(raw, layer, eps);
  }
  throw ValidationError("unknown vector method");
}

std::filesystem::path save_vector(const SteeringVector &vec,
                                  const std::filesystem::path &stem) {
  auto bin_path = stem;
  bin_path += ".bin";
  auto json_path = stem;
  json_path += ".json";

  std::ofstream bin(bin_path, std::ios::binary | std::ios::trunc);
  if (!bin)
    throw PersistenceError("cannot write " + bin_path.string());
  for (double x : vec.direction) {
    float f = static_cast<float>(x);
    bin.write(reinterpret_cast<const char *>(&f), sizeof(f));
  }
  bin.flush();
  if (!bin)
    throw PersistenceError("write failed for " + bin_path.string());

  nlohmann::json j{{"method", vector_method_name(vec.method)},
                   {"layer", vec.layer},
                   {"dim", vec.direction.size()},
                   {"unit_norm", vec.unit_norm},
                   {"included_prompts", vec.included_prompts},
                   {"data_file", bin_path.filename().string()}};
  if (vec.method == VectorMethod::cluster) {
    j["cluster_threshold"] = vec.cluster_threshold;
    j["cluster_fallback"] = vec.cluster_fallback;
  }
  if (!vec.prompt_weights.empty())
    j["prompt_weights"] = vec.prompt_weights;
  std::ofstream js(json_path, std::ios::trunc);
  if (!js)
    throw PersistenceError("cannot write " + json_path.string());
  js << j.dump(2) << "\n";
  return json_path;
}

SteeringVector load_vector(const std::filesystem::path &json_path) {
  std::ifstream js(json_path);
  if (!js)
    throw PersistenceError("cannot open " + json_path.string());
  nlohmann::json j;
  try {
    js >> j;
  } catch (const nlohmann::json::exception &e) {
    throw FormatError("vector sidecar " + json_path.string() +
                      " is not valid JSON: " + e.what());
  }
  SteeringVector v;
  auto m = vector_method_from_name(j.at("method").get<std::string>());
  if (!m)
    throw FormatError("unknown vector method in " + json_path.string());
  v.method = *m;
  v.layer = j.at("layer").get<std::size_t>();
  v.unit_norm = j.at("unit_norm").get<bool>();
  v.included_prompts = j.at("included_prompts").get<std::vector<std::size_t>>();
  v.cluster_threshold = j.value("cluster_threshold", 0.0);
  v.cluster_fallback = j.value("cluster_fallback", false);
  if (j.contains("prompt_weights"))
    v.prompt_weights = j.at("prompt_weights").get<std::vector<double>>();
  std::size_t dim = j.at("dim").get<std::size_t>();

  auto bin_path =
      json_path.parent_path() / j.at("data_file").get<std::string>();
  std::ifstream bin(bin_path, std::ios::binary);
  if (!bin)
    throw PersistenceError("cannot open " + bin_path.string());
  v.direction.resize(dim);
  for (std::size_t i = 0; i < dim; ++i) {
    float f;
    bin.read(reinterpret_cast<char *>(&f), sizeof(f));
    if (!bin)
      throw CorruptionError("truncated vector data in " + bin_path.string());
    v.direction[i] = static_cast<double>(f);
  }
  return v;
}

} // namespace grace
