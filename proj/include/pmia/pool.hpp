// Global key-prompt pool: top-N selection, batch-level selection union, the
// surrogate key-pull update, and exact content diffing between pool snapshots.
#ifndef PMIA_POOL_HPP
#define PMIA_POOL_HPP

#include <algorithm>
#include <bit>
#include <cstdint>
#include <numeric>
#include <string>
#include <unordered_map>
#include <vector>

#include "pmia/rng.hpp"
#include "pmia/vec.hpp"

#include "json.hpp"

namespace pmia {

struct KeyPromptPair {
  Vec key;
  Vec prompt;
  std::string tag;  // bookkeeping only; selection never reads it
};

struct PromptPool {
  std::vector<KeyPromptPair> entries;
  std::size_t selection_size = 1;  // N

  std::size_t size() const { return entries.size(); }
  std::size_t key_dim() const { return entries.empty() ? 0 : entries[0].key.size(); }
  std::size_t prompt_dim() const { return entries.empty() ? 0 : entries[0].prompt.size(); }
};

enum class SelectionMetric { kCosine, kEuclidean };

inline void validate_pool(const PromptPool& pool) {
  if (pool.entries.empty()) throw std::invalid_argument("pool: empty");
  if (pool.selection_size < 1 || pool.selection_size > pool.size())
    throw std::invalid_argument("pool: selection_size must satisfy 1 <= N <= M");
  for (const auto& e : pool.entries) {
    if (e.key.size() != pool.key_dim() || e.prompt.size() != pool.prompt_dim())
      throw std::invalid_argument("pool: mixed key/prompt dimensions");
    if (!all_finite(e.key) || !all_finite(e.prompt))
      throw std::invalid_argument("pool: non-finite entry");
  }
}

namespace detail {

// Larger affinity == better match under either metric.
inline double affinity(const Vec& query, const Vec& key, SelectionMetric metric) {
  return metric == SelectionMetric::kCosine ? cosine_similarity(query, key)
                                            : -distance(query, key);
}

// Rank `candidates` by affinity to the query, ties broken by lowest index,
// and return the best n of them in that order.
inline std::vector<std::size_t> top_n_of(const PromptPool& pool, const Vec& query,
                                         const std::vector<std::size_t>& candidates,
                                         std::size_t n, SelectionMetric metric) {
  std::vector<std::pair<double, std::size_t>> ranked;
  ranked.reserve(candidates.size());
  for (std::size_t i : candidates)
    ranked.emplace_back(affinity(query, pool.entries[i].key, metric), i);
  std::partial_sort(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(n), ranked.end(),
                    [](const auto& a, const auto& b) {
                      if (a.first != b.first) return a.first > b.first;
                      return a.second < b.second;
                    });
  std::vector<std::size_t> out(n);
  for (std::size_t k = 0; k < n; ++k) out[k] = ranked[k].second;
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace detail

// The N pool indices with the highest similarity to the query (lowest cosine
// distance), ties broken toward the lowest index. Returned sorted ascending.
inline std::vector<std::size_t> select_top_n(const PromptPool& pool, const Vec& query,
                                             SelectionMetric metric = SelectionMetric::kCosine) {
  validate_pool(pool);
  std::vector<std::size_t> all(pool.size());
  std::iota(all.begin(), all.end(), 0);
  return detail::top_n_of(pool, query, all, pool.selection_size, metric);
}

// Union of per-query top-N selections over a batch.
inline std::vector<std::size_t> batch_select(const PromptPool& pool,
                                             const std::vector<Vec>& queries,
                                             SelectionMetric metric = SelectionMetric::kCosine) {
  if (queries.empty()) throw std::invalid_argument("batch_select: empty query list");
  std::vector<char> hit(pool.size(), 0);
  for (const Vec& q : queries)
    for (std::size_t i : select_top_n(pool, q, metric)) hit[i] = 1;
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < hit.size(); ++i)
    if (hit[i]) out.push_back(i);
  return out;
}

// d/dk of the cosine distance 1 - cos(q, k):  -(q_hat - cos(q,k) k_hat) / |k|.
inline Vec cosine_distance_grad_key(const Vec& query, const Vec& key) {
  const double nq = norm(query);
  const double nk = norm(key);
  if (nq <= 0.0 || nk <= 0.0)
    throw std::domain_error("cosine_distance_grad_key: zero-norm input");
  const double kappa = dot(query, key) / (nq * nk);
  Vec g(key.size());
  for (std::size_t i = 0; i < key.size(); ++i)
    g[i] = -(query[i] / nq - kappa * key[i] / nk) / nk;
  return g;
}

// One batched surrogate step: each selected key moves against the summed
// cosine-distance gradient of the queries whose top-N contained it, scaled by
// mu * lambda. Selected prompts get a seeded unit-norm nudge of size mu so a
// snapshot diff can see that they were touched. Everything else is returned
// bit-identical. `per_query` gives each query's selected index set (so callers
// with randomized selection, e.g. dropout, stay consistent).
inline PromptPool key_pull_update(const PromptPool& pool, const std::vector<std::size_t>& selected,
                                  const std::vector<Vec>& queries,
                                  const std::vector<std::vector<std::size_t>>& per_query,
                                  double mu, double lambda, Rng& rng) {
  validate_pool(pool);
  if (mu < 0.0) throw std::invalid_argument("key_pull_update: mu must be >= 0");
  if (lambda < 0.0) throw std::invalid_argument("key_pull_update: lambda must be >= 0");
  if (per_query.size() != queries.size())
    throw std::invalid_argument("key_pull_update: per_query/queries size mismatch");
  for (std::size_t i : selected)
    if (i >= pool.size()) throw std::out_of_range("key_pull_update: selected index out of range");

  PromptPool out = pool;
  if (mu == 0.0 || selected.empty()) return out;

  std::vector<char> chosen(pool.size(), 0);
  for (std::size_t i : selected) chosen[i] = 1;

  // Accumulate the batch gradient, then take a single step.
  std::vector<Vec> grad(pool.size());
  for (std::size_t qi = 0; qi < queries.size(); ++qi) {
    for (std::size_t i : per_query[qi]) {
      if (i >= pool.size()) throw std::out_of_range("key_pull_update: per_query index out of range");
      if (!chosen[i]) continue;
      if (grad[i].empty()) grad[i].assign(pool.key_dim(), 0.0);
      axpy(grad[i], 1.0, cosine_distance_grad_key(queries[qi], pool.entries[i].key));
    }
  }
  for (std::size_t i : selected) {
    if (!grad[i].empty()) axpy(out.entries[i].key, -mu * lambda, grad[i]);
    // Stand-in for the out-of-scope prompt gradient: what matters downstream
    // is only that updated prompts differ from the snapshot.
    Vec eps(pool.prompt_dim());
    for (double& x : eps) x = rng.normal();
    axpy(out.entries[i].prompt, mu / norm(eps), eps);
  }
  return out;
}

// Convenience form matching the selection rule itself: matched queries are
// recomputed from select_top_n on the given pool.
inline PromptPool key_pull_update(const PromptPool& pool, const std::vector<std::size_t>& selected,
                                  const std::vector<Vec>& queries, double mu, double lambda,
                                  Rng& rng, SelectionMetric metric = SelectionMetric::kCosine) {
  std::vector<std::vector<std::size_t>> per_query;
  per_query.reserve(queries.size());
  for (const Vec& q : queries) per_query.push_back(select_top_n(pool, q, metric));
  return key_pull_update(pool, selected, queries, per_query, mu, lambda, rng);
}

namespace detail {

inline void append_bits(std::string& s, const Vec& v) {
  for (double x : v) {
    const std::uint64_t b = std::bit_cast<std::uint64_t>(x);
    s.append(reinterpret_cast<const char*>(&b), sizeof(b));
  }
}

// Bit pattern of key + prompt; tags deliberately excluded.
inline std::string content_fingerprint(const KeyPromptPair& e) {
  std::string s;
  s.reserve((e.key.size() + e.prompt.size()) * sizeof(double));
  append_bits(s, e.key);
  append_bits(s, e.prompt);
  return s;
}

}  // namespace detail

// Entries of `before` with no content-equal (bitwise key+prompt) entry in
// `after`, ignoring order and tags. This is the server's update detector:
// any float drift in an entry means the client touched it.
inline std::vector<KeyPromptPair> content_diff(const PromptPool& before, const PromptPool& after) {
  if (before.size() != after.size())
    throw std::invalid_argument("content_diff: pool sizes differ");
  std::unordered_map<std::string, int> bag;
  for (const auto& e : after.entries) ++bag[detail::content_fingerprint(e)];
  std::vector<KeyPromptPair> missing;
  for (const auto& e : before.entries) {
    auto it = bag.find(detail::content_fingerprint(e));
    if (it == bag.end() || it->second == 0)
      missing.push_back(e);
    else
      --it->second;
  }
  return missing;
}

inline nlohmann::json pool_to_json(const PromptPool& pool) {
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& e : pool.entries)
    entries.push_back({{"key", e.key}, {"prompt", e.prompt}, {"tag", e.tag}});
  return {{"dim_key", pool.key_dim()},
          {"dim_prompt", pool.prompt_dim()},
          {"selection_size", pool.selection_size},
          {"entries", entries}};
}

inline PromptPool pool_from_json(const nlohmann::json& j) {
  PromptPool pool;
  pool.selection_size = j.at("selection_size").get<std::size_t>();
  for (const auto& e : j.at("entries")) {
    KeyPromptPair p;
    p.key = e.at("key").get<Vec>();
    p.prompt = e.at("prompt").get<Vec>();
    p.tag = e.at("tag").get<std::string>();
    pool.entries.push_back(std::move(p));
  }
  const std::size_t dk = j.at("dim_key").get<std::size_t>();
  const std::size_t dp = j.at("dim_prompt").get<std::size_t>();
  if (pool.key_dim() != dk || pool.prompt_dim() != dp)
    throw std::invalid_argument("pool_from_json: declared dims disagree with entries");
  validate_pool(pool);
  return pool;
}

}  // namespace pmia

#endif  // PMIA_POOL_HPP
