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

#include <doctest.h>

#include <algorithm>

#include "grace/anova.hpp"
#include "grace/error.hpp"
#include "grace/vectors.hpp"
#include "test_util.hpp"

using namespace grace;
using namespace grace::test;

namespace {

double norm(const std::vector<double> &v) {
  double n = 0.0;
  for (double x : v)
    n += x * x;
  return std::sqrt(n);
}

// Independent enumeration of the cluster rule, written directly from the
// selection criteria: among subsets of size >= 2 whose pairwise similarity
// all exceeds the threshold, prefer larger size, then higher mean intra
// similarity, then the lexicographically smallest index list.
std::vector<std::size_t> reference_cluster(const std::vector<double> &sim,
                                           std::size_t P, double threshold) {
  std::vector<std::size_t> best;
  double best_mean = -2.0;
  for (std::size_t mask = 1; mask < (1u << P); ++mask) {
    std::vector<std::size_t> subset;
    for (std::size_t p = 0; p < P; ++p)
      if (mask & (1u << p))
        subset.push_back(p);
    if (subset.size() < 2)
      continue;
    bool ok = true;
    double acc = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < subset.size() && ok; ++i)
      for (std::size_t j = i + 1; j < subset.size(); ++j) {
        double s = sim[subset[i] * P + subset[j]];
        if (s <= threshold) {
          ok = false;
          break;
        }
        acc += s;
        ++pairs;
      }
    if (!ok)
      continue;
    double mean = acc / static_cast<double>(pairs);
    if (subset.size() > best.size() ||
        (subset.size() == best.size() && mean > best_mean + 1e-15) ||
        (subset.size() == best.size() && std::abs(mean - best_mean) <= 1e-15 &&
         subset < best)) {
      best = subset;
      best_mean = mean;
    }
  }
  return best;
}

} // namespace

TEST_CASE("diffmeans is the plain sample mean with raw magnitude") {
  DiffTensor t = tensor_from_samples(
      2, 2, {{2.0, 0.0}, {4.0, 0.0}, {0.0, 2.0}, {0.0, 6.0}});
  auto v = diffmeans(t, 0);
  REQUIRE(v.direction.size() == 2);
  CHECK(v.direction[0] == doctest::Approx(1.5));
  CHECK(v.direction[1] == doctest::Approx(2.0));
  CHECK_FALSE(v.unit_norm);
  CHECK(v.method == VectorMethod::diffmeans);
  CHECK(v.included_prompts == std::vector<std::size_t>{0, 1});
}

TEST_CASE("unit_mean normalizes samples before averaging") {
  // one long and one short vector along different axes: diffmeans is pulled
  // toward the long one, unit_mean treats them equally
  DiffTensor t = tensor_from_samples(
      2, 2, {{10.0, 0.0}, {10.0, 0.0}, {0.0, 1.0}, {0.0, 1.0}});
  auto v = unit_mean(t, 0);
  CHECK(norm(v.direction) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(v.unit_norm);
  CHECK(v.direction[0] == doctest::Approx(v.direction[1]).epsilon(1e-9));
  auto dm = diffmeans(t, 0);
  CHECK(dm.direction[0] > 4.0 * dm.direction[1]);
}

TEST_CASE("every non-diffmeans construction emits a unit direction") {
  DiffTensor t = random_tensor(2, 5, 8, 12, 5, 2.0);
  for (auto m : {VectorMethod::unit_mean, VectorMethod::cluster,
                 VectorMethod::prompt_weighted, VectorMethod::drop_worst_prompt,
                 VectorMethod::question_svd}) {
    auto v = build_vector(m, t, 1);
    CHECK(v.unit_norm);
    CHECK(norm(v.direction) == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(v.layer == 1);
    CHECK(v.method == m);
  }
}

TEST_CASE("cluster selection matches independent enumeration on random 5x5") {
  Rng rng(404);
  for (int trial = 0; trial < 50; ++trial) {
    std::size_t P = 5;
    std::vector<double> sim(P * P, 1.0);
    for (std::size_t i = 0; i < P; ++i)
      for (std::size_t j = i + 1; j < P; ++j) {
        double s = 2.0 * rng.uniform() - 1.0;
        sim[i * P + j] = sim[j * P + i] = s;
      }
    auto got = best_cluster_subset(sim, P, 0.7);
    auto want = reference_cluster(sim, P, 0.7);
    CHECK(got == want);
  }
}

TEST_CASE("cluster picks the coherent majority and flags no fallback") {
  // prompts 0,1,2 share a direction; 3 points the opposite way
  std::vector<std::vector<double>> samples;
  for (std::size_t p = 0; p < 4; ++p)
    for (std::size_t q = 0; q < 3; ++q) {
      double s = p == 3 ? -1.0 : 1.0;
      samples.push_back({s * 1.0, s * 0.1 * static_cast<double>(p)});
    }
  DiffTensor t = tensor_from_samples(4, 3, samples);
  auto v = cluster_vector(t, 0);
  CHECK(v.included_prompts == std::vector<std::size_t>{0, 1, 2});
  CHECK_FALSE(v.cluster_fallback);
  CHECK(v.cluster_threshold == doctest::Approx(0.7));
  CHECK(v.direction[0] > 0.9);
}

TEST_CASE("cluster falls back to all prompts when nothing coheres") {
  // orthogonal prompt directions: no pair exceeds 0.7
  std::vector<std::vector<double>> samples;
  for (std::size_t p = 0; p < 3; ++p)
    for (std::size_t q = 0; q < 2; ++q) {
      std::vector<double> v(3, 0.0);
      v[p] = 1.0;
      samples.push_back(v);
    }
  DiffTensor t = tensor_from_samples(3, 2, samples);
  auto v = cluster_vector(t, 0);
  CHECK(v.cluster_fallback);
  CHECK(v.included_prompts == std::vector<std::size_t>{0, 1, 2});
}

TEST_CASE("cluster rejects more than 12 prompts") {
  DiffTensor t = random_tensor(1, 13, 2, 3, 1);
  CHECK_THROWS_AS(cluster_vector(t, 0), ValidationError);
}

TEST_CASE("prompt weights are inversely tied to interaction and normalized") {
  DiffTensor t = random_tensor(1, 4, 10, 6, 88);
  auto v = prompt_weighted(t, 0);
  REQUIRE(v.prompt_weights.size() == 4);
  double sum = 0.0;
  for (double w : v.prompt_weights) {
    CHECK(w > 0.0);
    sum += w;
  }
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  auto c = prompt_interaction_ss(unit_normalize(t), 0);
  // ordering: larger interaction -> smaller weight
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j)
      if (c[i] < c[j])
        CHECK(v.prompt_weights[i] > v.prompt_weights[j]);
}

TEST_CASE("drop_worst_prompt removes the argmax interaction prompt") {
  DiffTensor t = random_tensor(1, 5, 10, 6, 21);
  auto c = prompt_interaction_ss(unit_normalize(t), 0);
  std::size_t worst =
      std::max_element(c.begin(), c.end()) - c.begin();
  auto v = drop_worst_prompt(t, 0);
  CHECK(v.included_prompts.size() == 4);
  CHECK(std::find(v.included_prompts.begin(), v.included_prompts.end(),
                  worst) == v.included_prompts.end());
  DiffTensor small = random_tensor(1, 2, 4, 3, 2);
  CHECK_THROWS_AS(drop_worst_prompt(small, 0), ValidationError);
}

TEST_CASE("question_svd recovers a planted line of question variation") {
  // Question directions walk along a planted axis u around a base direction
  // c, with the offsets symmetric about zero: the centered question means
  // vary along u, and the symmetric design keeps the u/c cross-covariance
  // at zero so the top singular direction is u itself.
  std::size_t D = 24, P = 3, Q = 41;
  std::vector<double> c(D, 0.0), u(D, 0.0);
  c[0] = 1.0;
  u[1] = 1.0;
  std::vector<std::vector<double>> samples;
  for (std::size_t p = 0; p < P; ++p)
    for (std::size_t q = 0; q < Q; ++q) {
      double t = 0.5 * (static_cast<double>(q) - 20.0) / 20.0; // [-0.5, 0.5]
      std::vector<double> v(D);
      for (std::size_t i = 0; i < D; ++i)
        v[i] = c[i] + t * u[i];
      samples.push_back(v);
    }
  DiffTensor t = tensor_from_samples(P, Q, samples);
  auto v = question_svd(t, 0);
  CHECK(std::abs(cosine(v.direction, u)) > 0.999);

  // sign convention: when the question offsets are biased positive, the
  // diffmeans direction gains a +u component and fixes the sign toward it
  std::vector<std::vector<double>> biased = samples;
  for (std::size_t p = 0; p < P; ++p)
    for (std::size_t q = 0; q < Q; ++q) {
      double tq = 0.1 + 0.4 * static_cast<double>(q) / 40.0; // all positive
      for (std::size_t i = 0; i < D; ++i)
        biased[p * Q + q][i] = c[i] + tq * u[i];
    }
  DiffTensor tb = tensor_from_samples(P, Q, biased);
  auto vb = question_svd(tb, 0);
  // the asymmetric offsets couple the u and c components a little, so the
  // recovered axis is only approximately u here; this case is about sign
  CHECK(std::abs(cosine(vb.direction, u)) > 0.9);
  auto dm = diffmeans(tb, 0);
  CHECK(cosine(vb.direction, dm.direction) > 0.0);
  CHECK(cosine(vb.direction, u) > 0.0);
}

TEST_CASE("question_svd is deterministic across calls") {
  DiffTensor t = random_tensor(1, 4, 12, 16, 314);
  auto v1 = question_svd(t, 0);
  auto v2 = question_svd(t, 0);
  CHECK(v1.direction == v2.direction);
}

TEST_CASE("constructions are equivariant under rotation") {
  DiffTensor t = random_tensor(1, 5, 10, 8, 60);
  DiffTensor r = rotate_tensor(t, 61);
  for (auto m : {VectorMethod::diffmeans, VectorMethod::unit_mean,
                 VectorMethod::cluster, VectorMethod::prompt_weighted,
                 VectorMethod::drop_worst_prompt}) {
    auto v = build_vector(m, t, 0);
    auto vr = build_vector(m, r, 0);
    auto rotated = rotate_vector(v.direction, 61);
    // f32 storage limits the match to a few ulps of float
    CHECK(cosine(rotated, vr.direction) > 1.0 - 1e-7);
    CHECK(v.included_prompts == vr.included_prompts);
  }
  // svd direction is defined up to sign by the data; compare as lines
  auto s = question_svd(t, 0);
  auto sr = question_svd(r, 0);
  CHECK(std::abs(cosine(rotate_vector(s.direction, 61), sr.direction)) >
        1.0 - 1e-6);
}

TEST_CASE("vector files round-trip") {
  TempDir dir("vec");
  DiffTensor t = random_tensor(2, 4, 6, 10, 71);
  auto v = cluster_vector(t, 1);
  auto json_path = save_vector(v, dir.path() / "steer");
  CHECK(std::filesystem::exists(dir.path() / "steer.bin"));
  auto back = load_vector(json_path);
  CHECK(back.layer == v.layer);
  CHECK(back.method == v.method);
  CHECK(back.unit_norm == v.unit_norm);
  CHECK(back.included_prompts == v.included_prompts);
  CHECK(back.cluster_fallback == v.cluster_fallback);
  REQUIRE(back.direction.size() == v.direction.size());
  for (std::size_t i = 0; i < v.direction.size(); ++i)
    CHECK(static_cast<float>(back.direction[i]) ==
          static_cast<float>(v.direction[i]));
}

TEST_CASE("method names round-trip") {
  for (auto m : {VectorMethod::diffmeans, VectorMethod::unit_mean,
                 VectorMethod::cluster, VectorMethod::prompt_weighted,
                 VectorMethod::drop_worst_prompt, VectorMethod::question_svd})
    CHECK(vector_method_from_name(vector_method_name(m)) == m);
  CHECK_FALSE(vector_method_from_name("nope").has_value());
}
