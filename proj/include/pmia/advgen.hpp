// Adversarial key construction: the naive copy attack, single keys at a fixed
// cosine similarity to the target query, key sets inside the dominance
// interval [s_max + delta_min, s_max + delta_min + delta_cap], the
// beta-aligned stealth variant, and pool injection by key replacement.
#ifndef PMIA_ADVGEN_HPP
#define PMIA_ADVGEN_HPP

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "pmia/pool.hpp"
#include "pmia/rng.hpp"
#include "pmia/vec.hpp"

namespace pmia {

// Raised when the dominance interval would leave the valid cosine range.
struct infeasible_margin_error : std::domain_error {
  explicit infeasible_margin_error(double s_max_)
      : std::domain_error("adversarial similarity interval exceeds 1 (s_max = " +
                          std::to_string(s_max_) + ")"),
        s_max(s_max_) {}
  double s_max;
};

struct generation_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct AdvConfig {
  std::size_t n_adv = 0;    // 0 = use the pool's selection size
  double delta_min = 0.02;  // dominance margin over the best benign key
  double delta_cap = 0.05;  // diversity width of the similarity interval
  double beta = 0.0;        // benign-alignment mixing weight, in [0, 1)
  std::uint64_t rng_seed = 0;
};

inline void validate_adv_config(const AdvConfig& cfg) {
  if (cfg.delta_min <= 0.0) throw std::invalid_argument("adv config: delta_min must be > 0");
  if (cfg.delta_cap < 0.0) throw std::invalid_argument("adv config: delta_cap must be >= 0");
  if (cfg.beta < 0.0 || cfg.beta >= 1.0)
    throw std::invalid_argument("adv config: beta must lie in [0, 1)");
}

// Builds a key with cosine similarity s to the target query and the target's
// norm. The seed direction is (1 - beta) * random + beta * (a benign key
// direction); beta = 0 is the plain construction. Parallel seed directions are
// resampled up to 16 times before giving up.
inline Vec gen_aligned_key_with_similarity(const Vec& target_query, double s,
                                           const std::vector<Vec>& benign_keys, double beta,
                                           Rng& rng) {
  if (!(s > 0.0 && s < 1.0))
    throw std::domain_error("gen_key_with_similarity: s must lie in (0, 1)");
  if (beta < 0.0 || beta >= 1.0)
    throw std::invalid_argument("gen_key_with_similarity: beta must lie in [0, 1)");
  if (beta > 0.0 && benign_keys.empty())
    throw std::invalid_argument("gen_key_with_similarity: beta > 0 needs benign keys");
  const double target_norm = norm(target_query);
  if (target_norm <= 0.0) throw std::domain_error("gen_key_with_similarity: zero-norm target");
  const Vec q_hat = scaled(target_query, 1.0 / target_norm);

  for (int attempt = 0; attempt < 16; ++attempt) {
    Vec r(target_query.size());
    for (double& x : r) x = rng.normal();
    Vec f = beta > 0.0 ? normalized(r) : r;
    if (beta > 0.0) {
      const Vec& kb = benign_keys[rng.below(benign_keys.size())];
      const Vec b_hat = normalized(kb);
      f = add(scaled(f, 1.0 - beta), scaled(b_hat, beta));
      f = normalized(f);
    }
    Vec o;
    try {
      o = orthogonal_component(f, q_hat);
    } catch (const degenerate_direction_error&) {
      continue;  // resample the seed direction
    }
    const Vec o_hat = normalized(o);
    Vec v = scaled(q_hat, s);
    axpy(v, std::sqrt(1.0 - s * s), o_hat);
    return scaled(v, target_norm);
  }
  throw generation_error("gen_key_with_similarity: orthogonalization kept degenerating");
}

inline Vec gen_key_with_similarity(const Vec& target_query, double s, Rng& rng) {
  return gen_aligned_key_with_similarity(target_query, s, {}, 0.0, rng);
}

inline double max_benign_similarity(const Vec& target_query, const std::vector<Vec>& benign_keys) {
  if (benign_keys.empty())
    throw std::invalid_argument("max_benign_similarity: empty benign key set");
  double s_max = -1.0;
  for (const Vec& kb : benign_keys) s_max = std::max(s_max, cosine_similarity(target_query, kb));
  return s_max;
}

// N keys whose similarities to the target are drawn uniformly from
// [s_max + delta_min, s_max + delta_min + delta_cap]. Errors out rather than
// clamping when the interval leaves [0, 1]: clamping would break the strict
// dominance that makes the attack's true-positive rate exact.
inline std::vector<Vec> gen_adv_key_set(const Vec& target_query,
                                        const std::vector<Vec>& benign_keys, const AdvConfig& cfg,
                                        std::size_t n, Rng& rng) {
  validate_adv_config(cfg);
  if (n == 0) throw std::invalid_argument("gen_adv_key_set: n must be >= 1");
  const double s_max = max_benign_similarity(target_query, benign_keys);
  const double lo = s_max + cfg.delta_min;
  const double hi = lo + cfg.delta_cap;
  if (hi > 1.0) throw infeasible_margin_error(s_max);
  if (lo <= 0.0)
    throw std::domain_error("gen_adv_key_set: similarity interval starts at or below 0");
  std::vector<Vec> keys;
  keys.reserve(n);
  for (std::size_t m = 0; m < n; ++m) {
    const double s = rng.uniform(lo, hi);
    keys.push_back(gen_aligned_key_with_similarity(target_query, s, benign_keys, cfg.beta, rng));
  }
  return keys;
}

// The naive attack: n exact copies of the target query.
inline std::vector<Vec> naive_adv_key_set(const Vec& target_query, std::size_t n) {
  if (norm(target_query) <= 0.0) throw std::domain_error("naive_adv_key_set: zero-norm target");
  return std::vector<Vec>(n, target_query);
}

enum class SlotRule {
  kLowestSimilarity,  // replace the benign keys least similar to the target
  kUniformRandom,
};

// Which pool slots the attack overwrites.
inline std::vector<std::size_t> choose_slots(const PromptPool& pool, const Vec& target_query,
                                             std::size_t n, SlotRule rule, Rng& rng) {
  validate_pool(pool);
  if (n > pool.size()) throw std::out_of_range("choose_slots: n exceeds pool size");
  std::vector<std::size_t> idx(pool.size());
  std::iota(idx.begin(), idx.end(), 0);
  if (rule == SlotRule::kLowestSimilarity) {
    std::vector<double> sim(pool.size());
    for (std::size_t i = 0; i < pool.size(); ++i)
      sim[i] = cosine_similarity(target_query, pool.entries[i].key);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      if (sim[a] != sim[b]) return sim[a] < sim[b];
      return a < b;
    });
  } else {
    for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
  }
  idx.resize(n);
  std::sort(idx.begin(), idx.end());
  return idx;
}

// Key replacement: slot j's key becomes adv_keys[j'], its prompt and tag stay.
// Pool size is unchanged; untouched entries are bit-identical.
inline PromptPool inject(const PromptPool& pool, const std::vector<Vec>& adv_keys,
                         const std::vector<std::size_t>& slots) {
  if (slots.size() != adv_keys.size())
    throw std::out_of_range("inject: slot count does not match key count");
  std::vector<char> seen(pool.size(), 0);
  for (std::size_t s : slots) {
    if (s >= pool.size()) throw std::out_of_range("inject: slot index out of range");
    if (seen[s]) throw std::out_of_range("inject: slot repeated");
    seen[s] = 1;
  }
  PromptPool out = pool;
  for (std::size_t m = 0; m < slots.size(); ++m) {
    if (adv_keys[m].size() != pool.key_dim())
      throw std::invalid_argument("inject: adversarial key dimension mismatch");
    out.entries[slots[m]].key = adv_keys[m];
  }
  return out;
}

}  // namespace pmia

#endif  // PMIA_ADVGEN_HPP
