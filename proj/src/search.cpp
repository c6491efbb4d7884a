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

#include "grace/search.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <numeric>

#include <unistd.h>

#include "grace/error.hpp"

namespace grace {

void SearchSpace::validate() const {
  if (layers.indices.empty())
    throw ValidationError("search space has no layers");
  if (coefficients.empty())
    throw ValidationError("search space has no coefficients");
  for (std::size_t i = 0; i < coefficients.size(); ++i) {
    if (coefficients[i] <= 0.0)
      throw ValidationError("coefficients must be positive");
    if (i > 0 && coefficients[i] <= coefficients[i - 1])
      throw ValidationError("coefficients must be strictly increasing");
  }
}

void SearchConfig::validate() const {
  if (budget < 1)
    throw ValidationError("budget must be >= 1");
  if (n_startup >= budget)
    throw ValidationError("n_startup must be smaller than the budget");
  if (gamma_fraction <= 0.0 || gamma_fraction >= 1.0)
    throw ValidationError("gamma_fraction must lie in (0, 1)");
  if (n_candidates < 1)
    throw ValidationError("n_candidates must be >= 1");
  if (prior_weight <= 0.0)
    throw ValidationError("prior_weight must be positive");
  if (seeds.empty())
    throw ValidationError("at least one seed is required");
}

nlohmann::json SearchConfig::to_json() const {
  return {{"budget", budget},         {"seeds", seeds},
          {"n_startup", n_startup},   {"gamma_fraction", gamma_fraction},
          {"n_candidates", n_candidates}, {"prior_weight", prior_weight}};
}

SearchConfig SearchConfig::from_json(const nlohmann::json &j) {
  SearchConfig c;
  c.budget = j.value("budget", c.budget);
  if (j.contains("seeds"))
    c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  c.n_startup = j.value("n_startup", c.n_startup);
  c.gamma_fraction = j.value("gamma_fraction", c.gamma_fraction);
  c.n_candidates = j.value("n_candidates", c.n_candidates);
  c.prior_weight = j.value("prior_weight", c.prior_weight);
  c.validate();
  return c;
}

std::size_t compute_t95(const std::vector<Trial> &history) {
  if (history.empty())
    throw ValidationError("t95 of an empty history");
  double best = 0.0;
  for (const auto &t : history)
    best = std::max(best, t.utility);
  double threshold = 0.95 * best;
  double running = -1.0;
  for (std::size_t i = 0; i < history.size(); ++i) {
    running = std::max(running, history[i].utility);
    if (running >= threshold)
      return i + 1;
  }
  return history.size();
}

// ---------------------------------------------------------------------------
// Cache

std::string TrialKey::to_string() const {
  char coef[40];
  std::snprintf(coef, sizeof(coef), "%.17g", coefficient);
  return concept_name + "|" + model_name + "|" + vector_id + "|" +
         std::to_string(layer) + "|" + coef + "|" + std::to_string(seed);
}

TrialCache::TrialCache(std::filesystem::path journal_path, bool fsync_each)
    : journal_path_(std::move(journal_path)), fsync_each_(fsync_each) {
  if (std::filesystem::exists(journal_path_)) {
    std::ifstream is(journal_path_, std::ios::binary);
    std::string contents{std::istreambuf_iterator<char>(is),
                         std::istreambuf_iterator<char>()};
    // A crash mid-append leaves a trailing fragment with no newline. Cut it
    // off before reopening for append, so the next record does not fuse
    // with the fragment into one unparseable line.
    auto last_nl = contents.find_last_of('\n');
    std::size_t good = last_nl == std::string::npos ? 0 : last_nl + 1;
    if (good != contents.size())
      std::filesystem::resize_file(journal_path_, good);
    std::istringstream lines(contents.substr(0, good));
    std::string line;
    while (std::getline(lines, line)) {
      if (line.empty())
        continue;
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(line);
      } catch (const nlohmann::json::exception &) {
        // Damaged full line: ignore it but keep reading; later entries are
        // independent records.
        continue;
      }
      TrialKey k{j.at("concept").get<std::string>(),
                 j.at("model").get<std::string>(),
                 j.at("vector_id").get<std::string>(),
                 j.at("layer").get<std::size_t>(),
                 j.at("coefficient").get<double>(),
                 j.at("seed").get<std::uint64_t>()};
      UtilityResult r{j.at("concept_score").get<double>(),
                      j.at("coherence").get<double>(),
                      j.at("utility").get<double>()};
      map_[k.to_string()] = r;
    }
  }
  journal_ = std::fopen(journal_path_.string().c_str(), "a");
  if (!journal_)
    throw PersistenceError("cannot open trial journal " +
                           journal_path_.string());
}

TrialCache::~TrialCache() {
  if (journal_)
    std::fclose(journal_);
}

std::optional<UtilityResult> TrialCache::lookup(const TrialKey &key) const {
  std::lock_guard lock(mu_);
  auto it = map_.find(key.to_string());
  if (it == map_.end())
    return std::nullopt;
  return it->second;
}

void TrialCache::append_journal(const TrialKey &key, const UtilityResult &r) {
  if (!journal_)
    return;
  nlohmann::json j{{"concept", key.concept_name},
                   {"model", key.model_name},
                   {"vector_id", key.vector_id},
                   {"layer", key.layer},
                   {"coefficient", key.coefficient},
                   {"seed", key.seed},
                   {"concept_score", r.concept_score},
                   {"coherence", r.coherence},
                   {"utility", r.utility}};
  std::string line = j.dump() + "\n";
  if (std::fwrite(line.data(), 1, line.size(), journal_) != line.size() ||
      std::fflush(journal_) != 0) {
    std::fprintf(stderr,
                 "warning: trial journal append failed for %s; result kept "
                 "in memory only\n",
                 journal_path_.string().c_str());
    return;
  }
  if (fsync_each_)
    ::fsync(::fileno(journal_));
}

std::pair<UtilityResult, bool> TrialCache::get_or_evaluate(
    const TrialKey &key, const UtilityQuery &query, UtilityOracle &oracle) {
  {
    std::lock_guard lock(mu_);
    auto it = map_.find(key.to_string());
    if (it != map_.end()) {
      ++hits_;
      return {it->second, true};
    }
  }
  UtilityResult r = oracle.evaluate(query);
  std::lock_guard lock(mu_);
  append_journal(key, r);
  map_[key.to_string()] = r;
  ++misses_;
  return {r, false};
}

std::size_t TrialCache::size() const {
  std::lock_guard lock(mu_);
  return map_.size();
}

// ---------------------------------------------------------------------------
// TPE

TpeSampler::TpeSampler(const SearchSpace &space, const SearchConfig &config,
                       std::uint64_t seed)
    : space_(space), config_(config), rng_(mix_seed({seed, 0x7065ULL})) {}

namespace {

std::size_t sample_categorical(Rng &rng, const std::vector<double> &probs) {
  double u = rng.uniform();
  double acc = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (u < acc)
      return i;
  }
  return probs.size() - 1;
}

std::vector<double> smoothed(const std::vector<std::size_t> &counts,
                             double prior_weight) {
  std::vector<double> p(counts.size());
  double total = 0.0;
  double smoothing = prior_weight / static_cast<double>(counts.size());
  for (std::size_t i = 0; i < counts.size(); ++i) {
    p[i] = static_cast<double>(counts[i]) + smoothing;
    total += p[i];
  }
  for (double &x : p)
    x /= total;
  return p;
}

} // namespace

std::optional<TpeSampler::Point>
TpeSampler::suggest(const std::vector<Trial> &history) {
  const auto &layers = space_.layers.indices;
  const auto &coefs = space_.coefficients;
  const std::size_t nl = layers.size(), nc = coefs.size();

  // Map evaluated (layer, coefficient) pairs back to space indices.
  std::vector<std::uint8_t> evaluated(nl * nc, 0);
  auto layer_index = [&](std::size_t layer) -> std::optional<std::size_t> {
    for (std::size_t i = 0; i < nl; ++i)
      if (layers[i] == layer)
        return i;
    return std::nullopt;
  };
  auto coef_index = [&](double c) -> std::optional<std::size_t> {
    for (std::size_t i = 0; i < nc; ++i)
      if (coefs[i] == c)
        return i;
    return std::nullopt;
  };
  std::vector<std::pair<std::size_t, std::size_t>> hist_idx;
  hist_idx.reserve(history.size());
  for (const auto &t : history) {
    auto li = layer_index(t.layer);
    auto ci = coef_index(t.coefficient);
    if (!li || !ci)
      throw ValidationError("trial history contains a point outside the "
                            "search space");
    evaluated[*li * nc + *ci] = 1;
    hist_idx.emplace_back(*li, *ci);
  }

  std::vector<Point> unevaluated;
  for (std::size_t i = 0; i < nl; ++i)
    for (std::size_t j = 0; j < nc; ++j)
      if (!evaluated[i * nc + j])
        unevaluated.push_back({i, j});
  if (unevaluated.empty())
    return std::nullopt;

  if (history.size() < config_.n_startup)
    return unevaluated[rng_.uniform_index(unevaluated.size())];

  // Split into good/bad by utility, ties resolved toward earlier trials.
  std::vector<std::size_t> order(history.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a,
                                                   std::size_t b) {
    return history[a].utility > history[b].utility;
  });
  std::size_t n_good = std::max<std::size_t>(
      1, static_cast<std::size_t>(
             std::ceil(config_.gamma_fraction *
                       static_cast<double>(history.size()))));

  std::vector<std::size_t> good_layer(nl, 0), bad_layer(nl, 0);
  std::vector<std::size_t> good_coef(nc, 0), bad_coef(nc, 0);
  for (std::size_t r = 0; r < order.size(); ++r) {
    auto [li, ci] = hist_idx[order[r]];
    if (r < n_good) {
      ++good_layer[li];
      ++good_coef[ci];
    } else {
      ++bad_layer[li];
      ++bad_coef[ci];
    }
  }
  auto l_layer = smoothed(good_layer, config_.prior_weight);
  auto g_layer = smoothed(bad_layer, config_.prior_weight);
  auto l_coef = smoothed(good_coef, config_.prior_weight);
  auto g_coef = smoothed(bad_coef, config_.prior_weight);

  std::optional<Point> best;
  double best_score = -1.0;
  for (std::size_t k = 0; k < config_.n_candidates; ++k) {
    std::size_t li = sample_categorical(rng_, l_layer);
    std::size_t ci = sample_categorical(rng_, l_coef);
    if (evaluated[li * nc + ci])
      continue; // no-repeat while unevaluated points remain
    double score = (l_layer[li] / g_layer[li]) * (l_coef[ci] / g_coef[ci]);
    if (score > best_score) { // ties keep the first drawn
      best_score = score;
      best = Point{li, ci};
    }
  }
  if (!best)
    return unevaluated[rng_.uniform_index(unevaluated.size())];
  return best;
}

// ---------------------------------------------------------------------------
// Runs

const char *search_mode_name(SearchMode m) {
  switch (m) {
  case SearchMode::tpe:
    return "tpe";
  case SearchMode::random:
    return "random";
  case SearchMode::grid:
    return "grid";
  }
  return "?";
}

namespace {

UtilityQuery make_query(const SearchContext &ctx, std::size_t layer,
                        double coefficient, std::uint64_t seed) {
  UtilityQuery q;
  q.concept_name = ctx.concept_name;
  q.model_name = ctx.model_name;
  q.vector_path = ctx.vectors ? ctx.vectors->vector_path(layer)
                              : std::filesystem::path();
  q.layer = layer;
  q.coefficient = coefficient;
  q.seed = seed;
  return q;
}

Trial evaluate_point(const SearchContext &ctx, std::size_t index,
                     std::size_t layer, double coefficient,
                     std::uint64_t seed) {
  Trial t;
  t.index = index;
  t.layer = layer;
  t.coefficient = coefficient;
  t.seed = seed;
  TrialKey key{ctx.concept_name, ctx.model_name,
               ctx.vectors ? ctx.vectors->id() : "none", layer, coefficient,
               seed};
  UtilityResult r;
  if (ctx.cache) {
    auto [res, hit] = ctx.cache->get_or_evaluate(
        key, make_query(ctx, layer, coefficient, seed), *ctx.oracle);
    r = res;
    t.cache_hit = hit;
  } else {
    r = ctx.oracle->evaluate(make_query(ctx, layer, coefficient, seed));
  }
  t.concept_score = r.concept_score;
  t.coherence = r.coherence;
  t.utility = r.utility;
  return t;
}

void finalize_seed(SeedResult &res) {
  res.best_utility = -1.0;
  for (const auto &t : res.history)
    if (t.utility > res.best_utility) {
      res.best_utility = t.utility;
      res.best_layer = t.layer;
      res.best_coefficient = t.coefficient;
    }
  res.t95 = compute_t95(res.history);
}

SearchAggregate aggregate_seeds(const std::vector<SeedResult> &seeds) {
  SearchAggregate a;
  double n = static_cast<double>(seeds.size());
  for (const auto &s : seeds) {
    a.mean_best_utility += s.best_utility;
    a.mean_t95 += static_cast<double>(s.t95);
  }
  a.mean_best_utility /= n;
  a.mean_t95 /= n;
  for (const auto &s : seeds) {
    a.std_best_utility += (s.best_utility - a.mean_best_utility) *
                          (s.best_utility - a.mean_best_utility);
    a.std_t95 += (static_cast<double>(s.t95) - a.mean_t95) *
                 (static_cast<double>(s.t95) - a.mean_t95);
  }
  a.std_best_utility = std::sqrt(a.std_best_utility / n);
  a.std_t95 = std::sqrt(a.std_t95 / n);
  return a;
}

} // namespace

SeedResult run_seed(SearchMode mode, const SearchContext &ctx,
                    const SearchSpace &space, const SearchConfig &config,
                    std::uint64_t seed) {
  space.validate();
  config.validate();
  if (!ctx.oracle)
    throw ValidationError("no oracle configured");

  SeedResult res;
  res.seed = seed;

  if (mode == SearchMode::grid) {
    std::size_t index = 1;
    for (std::size_t layer : space.layers.indices)
      for (double coef : space.coefficients)
        res.history.push_back(evaluate_point(ctx, index++, layer, coef, seed));
    finalize_seed(res);
    return res;
  }

  TpeSampler sampler(space, config, seed);
  Rng random_rng(mix_seed({seed, 0x726eULL}));
  const auto &layers = space.layers.indices;
  const auto &coefs = space.coefficients;
  std::vector<std::uint8_t> evaluated(layers.size() * coefs.size(), 0);

  for (std::size_t trial = 1; trial <= config.budget; ++trial) {
    std::size_t li = 0, ci = 0;
    if (mode == SearchMode::tpe) {
      auto p = sampler.suggest(res.history);
      if (!p) {
        res.exhausted_space = true;
        break;
      }
      li = p->layer_index;
      ci = p->coefficient_index;
    } else {
      std::vector<std::pair<std::size_t, std::size_t>> open;
      for (std::size_t i = 0; i < layers.size(); ++i)
        for (std::size_t j = 0; j < coefs.size(); ++j)
          if (!evaluated[i * coefs.size() + j])
            open.emplace_back(i, j);
      if (open.empty()) {
        res.exhausted_space = true;
        break;
      }
      auto [i, j] = open[random_rng.uniform_index(open.size())];
      li = i;
      ci = j;
    }
    evaluated[li * coefs.size() + ci] = 1;
    res.history.push_back(
        evaluate_point(ctx, trial, layers[li], coefs[ci], seed));
  }
  if (res.history.empty())
    throw ValidationError("search produced no trials");
  finalize_seed(res);
  return res;
}

SearchResult run_search(SearchMode mode, const SearchContext &ctx,
                        const SearchSpace &space, const SearchConfig &config) {
  SearchResult out;
  for (std::uint64_t seed : config.seeds)
    out.per_seed.push_back(run_seed(mode, ctx, space, config, seed));
  out.aggregate = aggregate_seeds(out.per_seed);
  out.space_provenance = space.layers.label;
  return out;
}

SearchSpace grid_space(std::size_t layer_count, std::size_t stride,
                       const std::vector<double> &coefficients) {
  if (stride < 1)
    throw ValidationError("grid stride must be >= 1");
  SearchSpace s;
  s.layers.provenance = LayerSetProvenance::full;
  s.layers.label = "grid_stride_" + std::to_string(stride);
  for (std::size_t l = 0; l < layer_count; l += stride)
    s.layers.indices.push_back(l);
  s.coefficients = coefficients;
  return s;
}

SearchResult grid_search(const SearchContext &ctx, std::size_t layer_count,
                         std::size_t stride,
                         const std::vector<double> &coefficients,
                         const std::vector<std::uint64_t> &seeds) {
  SearchSpace space = grid_space(layer_count, stride, coefficients);
  SearchConfig config;
  config.budget = space.point_count();
  config.n_startup = 0;
  config.seeds = seeds;

  SearchResult out;
  for (std::uint64_t seed : seeds)
    out.per_seed.push_back(
        run_seed(SearchMode::grid, ctx, space, config, seed));
  out.aggregate = aggregate_seeds(out.per_seed);
  out.space_provenance = space.layers.label;
  return out;
}

} // namespace grace
