// Client-side defense transforms (query noise, prompt dropout, index
// shuffling) and the Bernoulli-flip detection evaluation protocol over the
// distributed pool.
#ifndef PMIA_DEFENSES_HPP
#define PMIA_DEFENSES_HPP

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "pmia/advgen.hpp"
#include "pmia/detectors.hpp"
#include "pmia/pool.hpp"
#include "pmia/rng.hpp"
#include "pmia/vec.hpp"
#include "pmia/world.hpp"

namespace pmia {

struct defense_config_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class DefenseKind { kNoise, kDropout, kShuffleIndices };

struct DefenseDescriptor {
  DefenseKind kind = DefenseKind::kNoise;
  double noise_std = 0.0;  // query-space sigma of the additive Gaussian
  double dropout_p = 0.0;  // per-entry masking probability, in [0, 1)
};

inline void validate_defense(const DefenseDescriptor& d) {
  if (d.noise_std < 0.0) throw config_error("defense: noise_std must be >= 0");
  if (d.dropout_p < 0.0 || d.dropout_p >= 1.0)
    throw config_error("defense: dropout_p must lie in [0, 1)");
}

// query + eta with eta ~ N(0, noise_std^2 I), applied in query space.
inline Vec perturb_query(const Vec& query, double noise_std, Rng& rng) {
  if (noise_std < 0.0) throw std::invalid_argument("perturb_query: noise_std must be >= 0");
  if (noise_std == 0.0) return query;
  Vec out = query;
  for (double& x : out) x += noise_std * rng.normal();
  return out;
}

// Top-N selection over a random subset of entries: each entry is masked out
// independently with probability dropout_p, and the mask is resampled (a
// bounded number of times) until at least N entries survive.
inline std::vector<std::size_t> dropout_select(const PromptPool& pool, const Vec& query,
                                               double dropout_p, Rng& rng,
                                               SelectionMetric metric = SelectionMetric::kCosine) {
  validate_pool(pool);
  if (dropout_p < 0.0 || dropout_p >= 1.0)
    throw std::invalid_argument("dropout_select: dropout_p must lie in [0, 1)");
  if (dropout_p == 0.0) return select_top_n(pool, query, metric);
  for (int attempt = 0; attempt < 64; ++attempt) {
    std::vector<std::size_t> survivors;
    for (std::size_t i = 0; i < pool.size(); ++i)
      if (rng.uniform01() >= dropout_p) survivors.push_back(i);
    if (survivors.size() < pool.selection_size) continue;
    return detail::top_n_of(pool, query, survivors, pool.selection_size, metric);
  }
  throw defense_config_error("dropout_select: masks kept leaving fewer than N survivors");
}

// Uniformly permutes the pool entries; contents untouched.
inline PromptPool shuffle_indices(const PromptPool& pool, Rng& rng) {
  PromptPool out = pool;
  for (std::size_t i = out.entries.size(); i > 1; --i)
    std::swap(out.entries[i - 1], out.entries[rng.below(i)]);
  return out;
}

// One aggregated detection run following the flip protocol: per trial a fair
// coin decides whether adversarial keys are injected; the detector scores all
// keys and true/false positives are pooled against the injection ground
// truth. Clean-control trials can only contribute false positives.
inline DetectorReport eval_detection(const World& world, const PromptPool& pool,
                                     bool naive_attack, const AdvConfig& adv_cfg,
                                     std::size_t trials, DetectorMethod method,
                                     DetectorParams params, Rng& rng) {
  if (trials < 1) throw std::invalid_argument("eval_detection: trials must be >= 1");
  validate_pool(pool);
  std::size_t tp = 0, fp = 0, fn = 0;
  bool fallback = false;
  for (std::size_t t = 0; t < trials; ++t) {
    Rng trial_rng = rng.split(t);
    PromptPool observed = pool;
    std::vector<char> truth(pool.size(), 0);
    if (trial_rng.coin()) {
      const std::size_t n_adv = adv_cfg.n_adv == 0 ? pool.selection_size : adv_cfg.n_adv;
      Rng attack_rng = trial_rng.split(1);
      const auto slots = choose_slots(pool, world.target_query, n_adv,
                                      SlotRule::kLowestSimilarity, attack_rng);
      std::vector<Vec> adv_keys;
      if (naive_attack) {
        adv_keys = naive_adv_key_set(world.target_query, n_adv);
      } else {
        std::vector<Vec> benign;
        std::vector<char> is_slot(pool.size(), 0);
        for (std::size_t s : slots) is_slot[s] = 1;
        for (std::size_t i = 0; i < pool.size(); ++i)
          if (!is_slot[i]) benign.push_back(pool.entries[i].key);
        adv_keys = gen_adv_key_set(world.target_query, benign, adv_cfg, n_adv, attack_rng);
      }
      observed = inject(pool, adv_keys, slots);
      for (std::size_t s : slots) truth[s] = 1;
    }
    std::vector<Vec> keys;
    keys.reserve(observed.size());
    for (const auto& e : observed.entries) keys.push_back(e.key);
    DetectorParams trial_params = params;
    trial_params.seed = trial_rng.split(2).next_u64();
    const DetectorReport rep = detect(keys, method, trial_params);
    fallback = fallback || rep.regularized_fallback;
    std::vector<char> is_flagged(observed.size(), 0);
    for (std::size_t i : rep.flagged) is_flagged[i] = 1;
    for (std::size_t i = 0; i < observed.size(); ++i) {
      if (is_flagged[i] && truth[i]) ++tp;
      if (is_flagged[i] && !truth[i]) ++fp;
      if (!is_flagged[i] && truth[i]) ++fn;
    }
  }
  DetectorReport agg;
  agg.trials = trials;
  agg.regularized_fallback = fallback;
  agg.precision = tp + fp > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
  agg.recall = tp + fn > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
  agg.f1 = f1_score(agg.precision, agg.recall);
  agg.params = std::string(detector_name(method)) +
               " contamination=" + std::to_string(params.contamination);
  return agg;
}

}  // namespace pmia

#endif  // PMIA_DEFENSES_HPP
