// The membership-inference security game: per-trial INIT/ATTACK/CLIENT/GUESS
// phases over a synthetic world, Monte Carlo aggregation of TPR / FPR /
// advantage / attack success rate, and deterministic sweeps over config grids.
#ifndef PMIA_GAME_HPP
#define PMIA_GAME_HPP

#include <cstdint>
#include <cstdio>
#include <limits>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "pmia/advgen.hpp"
#include "pmia/defenses.hpp"
#include "pmia/pool.hpp"
#include "pmia/rng.hpp"
#include "pmia/theory.hpp"
#include "pmia/vec.hpp"
#include "pmia/world.hpp"

namespace pmia {

enum class AttackKind { kNaive, kPromptMia };

inline const char* attack_name(AttackKind a) {
  return a == AttackKind::kNaive ? "naive" : "promptmia";
}

inline AttackKind attack_from_name(const std::string& name) {
  if (name == "naive") return AttackKind::kNaive;
  if (name == "promptmia") return AttackKind::kPromptMia;
  throw config_error("unknown attack kind: " + name);
}

enum class PoolInit { kCentroids, kRandom };

struct GameConfig {
  AttackKind attack = AttackKind::kPromptMia;
  AdvConfig adv;
  std::size_t batch_size = 1;
  std::size_t trials = 1000;
  std::size_t target_copies = 1;  // copies of the target query in a b=1 batch
  std::vector<DefenseDescriptor> defenses;
  WorldSpec world;
  PoolInit pool_init = PoolInit::kCentroids;
  std::size_t warmup_rounds = 0;
  std::size_t warmup_batch = 64;
  SelectionMetric metric = SelectionMetric::kCosine;
  SlotRule slot_rule = SlotRule::kLowestSimilarity;
  bool regen_adv_per_trial = true;  // bound checks freeze one adversarial set
  bool record_traces = false;
  bool with_bounds = false;  // attach the closed-form bound to the outcome
  int force_bit = -1;        // -1 stratified coin, else pin b for every trial
  double mu = 0.1;
  double lambda = 0.5;
  std::uint64_t rng_seed = 1;
  std::size_t threads = 1;
};

inline void validate_game_config(const GameConfig& cfg) {
  if (cfg.trials < 1) throw config_error("game: trials must be >= 1");
  if (cfg.batch_size < 1) throw config_error("game: batch_size must be >= 1");
  if (cfg.target_copies < 1 || cfg.target_copies > cfg.batch_size)
    throw config_error("game: target_copies must lie in [1, batch_size]");
  if (cfg.force_bit < -1 || cfg.force_bit > 1) throw config_error("game: force_bit in {-1,0,1}");
  validate_adv_config(cfg.adv);
  std::size_t dropouts = 0;
  for (const auto& d : cfg.defenses) {
    validate_defense(d);
    if (d.kind == DefenseKind::kDropout) ++dropouts;
  }
  if (dropouts > 1) throw config_error("game: at most one dropout defense per stack");
}

struct TrialRecord {
  std::uint8_t b = 0;
  std::uint8_t b_prime = 0;
  std::vector<std::uint32_t> clusters;  // non-member query clusters, if traced
};

struct GameOutcome {
  std::size_t n1 = 0, n0 = 0;  // trial counts per arm
  std::size_t tp = 0, fp = 0;  // b'=1 counts per arm
  double tpr = 0.0, fpr = 0.0, advantage = 0.0, asr = 0.0;
  double tpr_se = 0.0, fpr_se = 0.0;
  bool has_bounds = false;
  double fpr_bound = 0.0, adv_lower_bound = 0.0;
  std::vector<TrialRecord> records;
};

// Frozen ATTACK phase, shared across trials when regen_adv_per_trial is off.
struct AttackPlan {
  std::vector<std::size_t> slots;
  std::vector<Vec> adv_keys;
};

inline AttackPlan plan_attack(const GameConfig& cfg, const World& world, const PromptPool& pool,
                              Rng& rng) {
  const std::size_t n_adv = cfg.adv.n_adv == 0 ? pool.selection_size : cfg.adv.n_adv;
  if (n_adv != pool.selection_size)
    throw config_error("game: adversarial key count must equal the selection size");
  AttackPlan plan;
  plan.slots = choose_slots(pool, world.target_query, n_adv, cfg.slot_rule, rng);
  if (cfg.attack == AttackKind::kNaive) {
    plan.adv_keys = naive_adv_key_set(world.target_query, n_adv);
  } else {
    std::vector<char> is_slot(pool.size(), 0);
    for (std::size_t s : plan.slots) is_slot[s] = 1;
    std::vector<Vec> benign;
    for (std::size_t i = 0; i < pool.size(); ++i)
      if (!is_slot[i]) benign.push_back(pool.entries[i].key);
    plan.adv_keys = gen_adv_key_set(world.target_query, benign, cfg.adv, n_adv, rng);
  }
  return plan;
}

// One game round. ATTACK: craft and inject adversarial keys against the
// target query. CLIENT: draw the batch (with the target present iff b = 1),
// pass it through the defense stack, select and key-pull. GUESS: b' = 1 iff
// every injected entry changed, judged by content matching against the
// post-injection snapshot, so index permutation cannot hide an update.
inline TrialRecord run_trial(const GameConfig& cfg, const World& world, const PromptPool& pool,
                             const AttackPlan* frozen, bool b, Rng& trial_rng) {
  Rng attack_rng = trial_rng.split(0);
  Rng batch_rng = trial_rng.split(1);
  Rng defense_rng = trial_rng.split(2);
  Rng update_rng = trial_rng.split(3);

  const AttackPlan plan = frozen ? *frozen : plan_attack(cfg, world, pool, attack_rng);
  const PromptPool injected = inject(pool, plan.adv_keys, plan.slots);

  TrialRecord rec;
  rec.b = b ? 1 : 0;
  std::vector<Vec> queries;
  queries.reserve(cfg.batch_size);
  if (b)
    for (std::size_t c = 0; c < cfg.target_copies; ++c) queries.push_back(world.target_query);
  while (queries.size() < cfg.batch_size) {
    auto [q, cluster] = sample_nonmember_query(world, batch_rng);
    if (cfg.record_traces) rec.clusters.push_back(static_cast<std::uint32_t>(cluster));
    queries.push_back(std::move(q));
  }

  const DefenseDescriptor* dropout = nullptr;
  for (std::size_t d = 0; d < cfg.defenses.size(); ++d) {
    const auto& desc = cfg.defenses[d];
    if (desc.kind == DefenseKind::kNoise && desc.noise_std > 0.0) {
      Rng noise_rng = defense_rng.split(d);
      for (Vec& q : queries) q = perturb_query(q, desc.noise_std, noise_rng);
    } else if (desc.kind == DefenseKind::kDropout && desc.dropout_p > 0.0) {
      dropout = &desc;
    }
  }

  std::vector<std::vector<std::size_t>> per_query;
  per_query.reserve(queries.size());
  Rng dropout_rng = defense_rng.split(1ull << 32);
  for (const Vec& q : queries)
    per_query.push_back(dropout ? dropout_select(injected, q, dropout->dropout_p, dropout_rng,
                                                 cfg.metric)
                                : select_top_n(injected, q, cfg.metric));
  std::vector<char> hit(injected.size(), 0);
  for (const auto& sel : per_query)
    for (std::size_t i : sel) hit[i] = 1;
  std::vector<std::size_t> selected;
  for (std::size_t i = 0; i < hit.size(); ++i)
    if (hit[i]) selected.push_back(i);

  PromptPool updated =
      key_pull_update(injected, selected, queries, per_query, cfg.mu, cfg.lambda, update_rng);
  for (std::size_t d = 0; d < cfg.defenses.size(); ++d)
    if (cfg.defenses[d].kind == DefenseKind::kShuffleIndices) {
      Rng shuffle_rng = defense_rng.split((2ull << 32) + d);
      updated = shuffle_indices(updated, shuffle_rng);
    }

  const auto missing = content_diff(injected, updated);
  std::size_t adv_updated = 0;
  for (std::size_t s : plan.slots) {
    const std::string fp = detail::content_fingerprint(injected.entries[s]);
    for (const auto& e : missing)
      if (detail::content_fingerprint(e) == fp) {
        ++adv_updated;
        break;
      }
  }
  rec.b_prime = adv_updated == plan.slots.size() ? 1 : 0;
  return rec;
}

namespace detail {

inline void aggregate_outcome(GameOutcome& out) {
  out.tpr = out.n1 > 0 ? static_cast<double>(out.tp) / static_cast<double>(out.n1) : 0.0;
  out.fpr = out.n0 > 0 ? static_cast<double>(out.fp) / static_cast<double>(out.n0) : 0.0;
  out.advantage = out.tpr - out.fpr;
  out.asr = (1.0 + out.advantage) / 2.0;
  out.tpr_se = out.n1 > 0 ? std::sqrt(out.tpr * (1.0 - out.tpr) / static_cast<double>(out.n1)) : 0.0;
  out.fpr_se = out.n0 > 0 ? std::sqrt(out.fpr * (1.0 - out.fpr) / static_cast<double>(out.n0)) : 0.0;
}

}  // namespace detail

// Builds the world and pool once, then runs independent trials with a
// stratified membership bit (exactly ceil(trials/2) member trials, unless
// force_bit pins it). Trials may run on several threads; outcomes merge in
// trial order, so results do not depend on the thread count.
inline GameOutcome run_game(const GameConfig& cfg) {
  validate_game_config(cfg);
  Rng root(cfg.rng_seed);
  Rng world_rng = root.split(1);
  const World world = make_world(cfg.world, world_rng);
  Rng pool_rng = root.split(2);
  PromptPool pool = cfg.pool_init == PoolInit::kCentroids
                        ? centroid_pool(world, cfg.world, pool_rng)
                        : random_pool(world, cfg.world, pool_rng);
  if (cfg.warmup_rounds > 0) {
    Rng warm_rng = root.split(3);
    pool = warmup(world, std::move(pool), cfg.warmup_rounds, cfg.warmup_batch, cfg.mu, cfg.lambda,
                  warm_rng);
  }

  std::optional<AttackPlan> frozen;
  Rng plan_rng = root.split(4);
  if (!cfg.regen_adv_per_trial) frozen = plan_attack(cfg, world, pool, plan_rng);

  GameOutcome out;
  if (cfg.with_bounds) {
    AttackPlan ref = frozen ? *frozen : plan_attack(cfg, world, pool, plan_rng);
    std::vector<char> is_slot(pool.size(), 0);
    for (std::size_t s : ref.slots) is_slot[s] = 1;
    std::vector<Vec> benign;
    for (std::size_t i = 0; i < pool.size(); ++i)
      if (!is_slot[i]) benign.push_back(pool.entries[i].key);
    const BoundReport rep = fpr_bound(ref.adv_keys, benign, world.sigmas);
    out.has_bounds = true;
    out.fpr_bound = rep.fpr_bound;
    out.adv_lower_bound = rep.advantage_lower_bound;
  }

  const std::size_t n1 = cfg.force_bit == -1 ? (cfg.trials + 1) / 2
                         : cfg.force_bit == 1 ? cfg.trials
                                              : 0;
  out.records.resize(cfg.trials);
  const auto worker = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const bool b = i < n1;
      Rng trial_rng = root.split(1000 + i);
      out.records[i] = run_trial(cfg, world, pool, frozen ? &*frozen : nullptr, b, trial_rng);
    }
  };
  const std::size_t n_threads = std::max<std::size_t>(1, cfg.threads);
  if (n_threads == 1 || cfg.trials < 2 * n_threads) {
    worker(0, cfg.trials);
  } else {
    std::vector<std::thread> threads;
    const std::size_t chunk = (cfg.trials + n_threads - 1) / n_threads;
    for (std::size_t t = 0; t < n_threads; ++t) {
      const std::size_t begin = t * chunk;
      const std::size_t end = std::min(cfg.trials, begin + chunk);
      if (begin < end) threads.emplace_back(worker, begin, end);
    }
    for (auto& th : threads) th.join();
  }

  for (const auto& rec : out.records) {
    if (rec.b) {
      ++out.n1;
      out.tp += rec.b_prime;
    } else {
      ++out.n0;
      out.fp += rec.b_prime;
    }
  }
  detail::aggregate_outcome(out);
  return out;
}

struct SweepRow {
  GameConfig cfg;
  GameOutcome outcome;
  bool failed = false;
  std::string error;
};

// One outcome per config, in input order; failures are recorded as failed
// rows and the sweep continues.
inline std::vector<SweepRow> sweep(const std::vector<GameConfig>& grid) {
  if (grid.empty()) throw std::invalid_argument("sweep: empty config grid");
  std::vector<SweepRow> rows;
  rows.reserve(grid.size());
  for (const GameConfig& cfg : grid) {
    SweepRow row;
    row.cfg = cfg;
    try {
      row.outcome = run_game(cfg);
    } catch (const std::exception& e) {
      row.failed = true;
      row.error = e.what();
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

namespace detail {

inline std::string format_double(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", x);
  return buf;
}

}  // namespace detail

// CSV schema for game sweeps; the two bound columns appear only when
// requested.
inline std::string sweep_csv_header(bool with_bounds) {
  std::string h =
      "attack,M,N,batch,delta_min,delta_cap,beta,noise_std,dropout_p,warmup_rounds,seed,"
      "tpr,fpr,advantage,asr,tpr_se,fpr_se";
  if (with_bounds) h += ",fpr_bound,adv_lower_bound";
  return h + "\n";
}

inline std::string sweep_csv_row(const SweepRow& row, bool with_bounds) {
  const GameConfig& c = row.cfg;
  double noise_std = 0.0, dropout_p = 0.0;
  for (const auto& d : c.defenses) {
    if (d.kind == DefenseKind::kNoise) noise_std = d.noise_std;
    if (d.kind == DefenseKind::kDropout) dropout_p = d.dropout_p;
  }
  const auto f = detail::format_double;
  std::string s;
  s += attack_name(c.attack);
  s += "," + std::to_string(c.world.pool_size) + "," + std::to_string(c.world.selection_size);
  s += "," + std::to_string(c.batch_size);
  s += "," + f(c.adv.delta_min) + "," + f(c.adv.delta_cap) + "," + f(c.adv.beta);
  s += "," + f(noise_std) + "," + f(dropout_p);
  s += "," + std::to_string(c.warmup_rounds) + "," + std::to_string(c.rng_seed);
  if (row.failed) {
    for (int i = 0; i < (with_bounds ? 8 : 6); ++i) s += ",nan";
  } else {
    const GameOutcome& o = row.outcome;
    s += "," + f(o.tpr) + "," + f(o.fpr) + "," + f(o.advantage) + "," + f(o.asr);
    s += "," + f(o.tpr_se) + "," + f(o.fpr_se);
    if (with_bounds) s += "," + f(o.fpr_bound) + "," + f(o.adv_lower_bound);
  }
  return s + "\n";
}

}  // namespace pmia

#endif  // PMIA_GAME_HPP
