#include "doctest.h"

#include <cmath>
#include <set>
#include <vector>

#include "pmia/game.hpp"

using namespace pmia;

namespace {

GameConfig small_game() {
  GameConfig cfg;
  cfg.world.pool_size = 10;
  cfg.world.selection_size = 2;
  cfg.world.dim = 16;
  cfg.world.radius = 10.0;
  cfg.world.min_separation = 10.0;
  cfg.world.sigma_lo = cfg.world.sigma_hi = 1.0;
  cfg.trials = 200;
  cfg.batch_size = 4;
  cfg.rng_seed = 77;
  return cfg;
}

}  // namespace

TEST_CASE("member trials always get caught (no defense)") {
  for (auto attack : {AttackKind::kPromptMia, AttackKind::kNaive}) {
    GameConfig cfg = small_game();
    cfg.attack = attack;
    cfg.force_bit = 1;
    cfg.trials = 100;
    for (std::size_t batch : {std::size_t{1}, std::size_t{16}}) {
      cfg.batch_size = batch;
      const GameOutcome out = run_game(cfg);
      CHECK(out.n1 == 100);
      CHECK(out.tp == 100);
      CHECK(out.tpr == 1.0);
    }
  }
}

TEST_CASE("a lone member query selects exactly the injected slots") {
  GameConfig cfg = small_game();
  Rng root(cfg.rng_seed);
  Rng world_rng = root.split(1);
  const World world = make_world(cfg.world, world_rng);
  Rng pool_rng = root.split(2);
  const PromptPool pool = centroid_pool(world, cfg.world, pool_rng);
  Rng plan_rng = root.split(4);
  const AttackPlan plan = plan_attack(cfg, world, pool, plan_rng);
  const PromptPool injected = inject(pool, plan.adv_keys, plan.slots);
  CHECK(select_top_n(injected, world.target_query) == plan.slots);
}

TEST_CASE("outcome identities hold exactly from counts") {
  GameConfig cfg = small_game();
  const GameOutcome out = run_game(cfg);
  CHECK(out.n1 == 100);
  CHECK(out.n0 == 100);
  CHECK(out.tpr == static_cast<double>(out.tp) / static_cast<double>(out.n1));
  CHECK(out.fpr == static_cast<double>(out.fp) / static_cast<double>(out.n0));
  CHECK(out.advantage == out.tpr - out.fpr);
  CHECK(out.asr == (1.0 + out.advantage) / 2.0);
}

TEST_CASE("aggregation of synthetic null records gives zero advantage") {
  // A coin-flip guesser: b' independent of b.
  GameOutcome out;
  Rng rng(5);
  const std::size_t trials = 20000;
  for (std::size_t i = 0; i < trials; ++i) {
    TrialRecord rec;
    rec.b = i < trials / 2 ? 1 : 0;
    rec.b_prime = rng.coin() ? 1 : 0;
    if (rec.b) {
      ++out.n1;
      out.tp += rec.b_prime;
    } else {
      ++out.n0;
      out.fp += rec.b_prime;
    }
  }
  detail::aggregate_outcome(out);
  const double se = std::sqrt(0.5 * 0.5 * 2.0 / (trials / 2.0));
  CHECK(std::abs(out.advantage) <= 3 * se);
  CHECK(out.asr == doctest::Approx(0.5).epsilon(0.05));
}

TEST_CASE("stated tpr/fpr arithmetic examples") {
  GameOutcome out;
  out.n1 = 10;
  out.tp = 10;
  out.n0 = 10;
  out.fp = 2;
  detail::aggregate_outcome(out);
  CHECK(out.tpr == 1.0);
  CHECK(out.fpr == doctest::Approx(0.2));
  CHECK(out.advantage == doctest::Approx(0.8));
  CHECK(out.asr == doctest::Approx(0.9));

  GameOutcome perfect;
  perfect.n1 = 5;
  perfect.tp = 5;
  perfect.n0 = 5;
  perfect.fp = 0;
  detail::aggregate_outcome(perfect);
  CHECK(perfect.advantage == 1.0);
  CHECK(perfect.asr == 1.0);
}

TEST_CASE("games are deterministic and thread-count independent") {
  GameConfig cfg = small_game();
  cfg.trials = 300;
  const GameOutcome a = run_game(cfg);
  const GameOutcome b = run_game(cfg);
  CHECK(a.tp == b.tp);
  CHECK(a.fp == b.fp);

  GameConfig threaded = cfg;
  threaded.threads = 4;
  const GameOutcome c = run_game(threaded);
  CHECK(a.tp == c.tp);
  CHECK(a.fp == c.fp);
  for (std::size_t i = 0; i < a.records.size(); ++i)
    CHECK(a.records[i].b_prime == c.records[i].b_prime);
}

TEST_CASE("stratification splits trials exactly") {
  GameConfig cfg = small_game();
  cfg.trials = 7;
  const GameOutcome out = run_game(cfg);
  CHECK(out.n1 == 4);
  CHECK(out.n0 == 3);
}

TEST_CASE("shuffle defense cannot change outcomes under paired seeds") {
  GameConfig plain = small_game();
  plain.trials = 150;
  GameConfig shuffled = plain;
  DefenseDescriptor d;
  d.kind = DefenseKind::kShuffleIndices;
  shuffled.defenses.push_back(d);
  const GameOutcome a = run_game(plain);
  const GameOutcome b = run_game(shuffled);
  REQUIRE(a.records.size() == b.records.size());
  for (std::size_t i = 0; i < a.records.size(); ++i)
    CHECK(a.records[i].b_prime == b.records[i].b_prime);
  CHECK(a.advantage == b.advantage);
}

TEST_CASE("dropout defense removes guaranteed detection") {
  GameConfig cfg = small_game();
  cfg.force_bit = 1;
  cfg.trials = 2000;
  cfg.batch_size = 1;
  DefenseDescriptor d;
  d.kind = DefenseKind::kDropout;
  d.dropout_p = 0.5;
  cfg.defenses.push_back(d);
  const GameOutcome out = run_game(cfg);
  // TPR should track (1-p)^N = 0.25 for batch 1, N = 2.
  const double expect = 0.25;
  const double se = std::sqrt(expect * (1 - expect) / 2000.0);
  CHECK(std::abs(out.tpr - expect) <= 3 * se);
}

TEST_CASE("config validation rejects malformed games") {
  GameConfig cfg = small_game();
  cfg.trials = 0;
  CHECK_THROWS_AS(run_game(cfg), config_error);
  cfg = small_game();
  cfg.target_copies = 10;
  cfg.batch_size = 4;
  CHECK_THROWS_AS(run_game(cfg), config_error);
  cfg = small_game();
  cfg.adv.n_adv = 3;  // selection size is 2
  CHECK_THROWS_AS(run_game(cfg), config_error);
  cfg = small_game();
  DefenseDescriptor d;
  d.kind = DefenseKind::kDropout;
  d.dropout_p = 0.2;
  cfg.defenses = {d, d};
  CHECK_THROWS_AS(run_game(cfg), config_error);
}

TEST_CASE("sweep keeps input order, reports failures, and repeats identically") {
  GameConfig good = small_game();
  good.trials = 50;
  GameConfig bad = good;
  bad.world.placement = TargetPlacement::kEmbedded;
  bad.world.embed_cos = 0.999;  // infeasible margin: 0.999 + 0.07 > 1
  bad.regen_adv_per_trial = false;
  const auto rows = sweep({good, bad, good});
  REQUIRE(rows.size() == 3);
  CHECK(!rows[0].failed);
  CHECK(rows[1].failed);
  CHECK(!rows[2].failed);
  CHECK(rows[0].outcome.tp == rows[2].outcome.tp);
  CHECK(rows[0].outcome.fp == rows[2].outcome.fp);

  const std::string csv_a = sweep_csv_row(rows[0], false);
  const std::string csv_b = sweep_csv_row(rows[2], false);
  CHECK(csv_a == csv_b);
  CHECK(sweep_csv_row(rows[1], false).find("nan") != std::string::npos);
  CHECK(sweep_csv_header(false).find("tpr") != std::string::npos);
}

TEST_CASE("frozen adversarial plans attach valid bounds") {
  GameConfig cfg = small_game();
  cfg.trials = 100;
  cfg.regen_adv_per_trial = false;
  cfg.with_bounds = true;
  const GameOutcome out = run_game(cfg);
  CHECK(out.has_bounds);
  CHECK(out.fpr_bound >= 0.0);
  CHECK(out.fpr_bound <= 1.0);
  CHECK(out.adv_lower_bound == 1.0 - out.fpr_bound);
}

TEST_CASE("fpr grows with batch size") {
  // Loose clusters so false positives actually occur.
  GameConfig cfg = small_game();
  cfg.world.sigma_lo = cfg.world.sigma_hi = 4.0;
  cfg.trials = 4000;
  cfg.attack = AttackKind::kNaive;
  cfg.force_bit = 0;
  double prev = -1.0;
  for (std::size_t batch : {std::size_t{1}, std::size_t{16}, std::size_t{64}}) {
    cfg.batch_size = batch;
    const GameOutcome out = run_game(cfg);
    CHECK(out.fpr >= prev - 3.0 * (out.fpr_se + 1e-3));
    prev = out.fpr;
  }
}

TEST_CASE("csv gains bound columns when theory is enabled") {
  GameConfig cfg = small_game();
  cfg.trials = 40;
  cfg.regen_adv_per_trial = false;
  cfg.with_bounds = true;
  const auto rows = sweep({cfg});
  const std::string header = sweep_csv_header(true);
  CHECK(header.find("fpr_bound,adv_lower_bound") != std::string::npos);
  const std::string row = sweep_csv_row(rows[0], true);
  CHECK(std::count(row.begin(), row.end(), ',') ==
        std::count(header.begin(), header.end(), ','));
}

TEST_CASE("success rate does not grow with the alignment weight") {
  double prev_asr = 1.1, prev_se = 0.0;
  for (double beta : {0.0, 0.4, 0.8}) {
    GameConfig cfg = small_game();
    cfg.world.sigma_lo = cfg.world.sigma_hi = 2.5;
    cfg.trials = 3000;
    cfg.batch_size = 16;
    cfg.adv.beta = beta;
    const GameOutcome o = run_game(cfg);
    const double se = std::sqrt(o.tpr_se * o.tpr_se + o.fpr_se * o.fpr_se) / 2.0;
    CHECK(o.asr <= prev_asr + 3.0 * std::sqrt(se * se + prev_se * prev_se));
    prev_asr = o.asr;
    prev_se = se;
  }
}
