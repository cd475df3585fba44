// Declarative experiment configs (strict JSON documents) and the drivers
// behind the CLI subcommands: attack-eval, bound-check, detect-eval, ablate.
// Every stochastic quantity traces back to the single top-level seed, so
// reruns are byte-identical.
#ifndef PMIA_EXPERIMENT_HPP
#define PMIA_EXPERIMENT_HPP

#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "pmia/game.hpp"

#include "json.hpp"

namespace pmia {

using json = nlohmann::json;

struct CliOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::size_t> threads;
};

namespace cfg {

// Unknown keys abort before any computation.
inline void require_keys(const json& j, const std::string& path,
                         std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw config_error("config: " + path + " must be an object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, value] : j.items())
    if (!ok.count(key)) throw config_error("config: unknown key '" + path + key + "'");
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw config_error(std::string("config: bad value for '") + key + "'");
  }
}

inline WorldSpec parse_world(const json& j, WorldSpec base, const std::string& path) {
  require_keys(j, path,
               {"pool_size", "selection_size", "dim", "prompt_dim", "radius", "group_size",
                "within_group_cos", "min_separation", "sigma", "sigma_lo", "sigma_hi",
                "loose_clusters", "sigma_loose", "placement", "distinctive_max_cos", "embed_cos"});
  WorldSpec w = base;
  w.pool_size = get_or<std::size_t>(j, "pool_size", w.pool_size);
  w.selection_size = get_or<std::size_t>(j, "selection_size", w.selection_size);
  w.dim = get_or<std::size_t>(j, "dim", w.dim);
  w.prompt_dim = get_or<std::size_t>(j, "prompt_dim", w.prompt_dim);
  w.radius = get_or<double>(j, "radius", w.radius);
  w.group_size = get_or<std::size_t>(j, "group_size", w.group_size);
  w.within_group_cos = get_or<double>(j, "within_group_cos", w.within_group_cos);
  w.min_separation = get_or<double>(j, "min_separation", w.min_separation);
  if (j.contains("sigma")) w.sigma_lo = w.sigma_hi = j.at("sigma").get<double>();
  w.sigma_lo = get_or<double>(j, "sigma_lo", w.sigma_lo);
  w.sigma_hi = get_or<double>(j, "sigma_hi", w.sigma_hi);
  w.loose_clusters = get_or<std::size_t>(j, "loose_clusters", w.loose_clusters);
  w.sigma_loose = get_or<double>(j, "sigma_loose", w.sigma_loose);
  if (j.contains("placement")) {
    const std::string p = j.at("placement").get<std::string>();
    if (p == "distinctive")
      w.placement = TargetPlacement::kDistinctive;
    else if (p == "embedded")
      w.placement = TargetPlacement::kEmbedded;
    else
      throw config_error("config: placement must be 'distinctive' or 'embedded'");
  }
  w.distinctive_max_cos = get_or<double>(j, "distinctive_max_cos", w.distinctive_max_cos);
  w.embed_cos = get_or<double>(j, "embed_cos", w.embed_cos);
  return w;
}

inline std::vector<DefenseDescriptor> parse_defenses(const json& j, const std::string& path) {
  if (!j.is_array()) throw config_error("config: " + path + " must be an array");
  std::vector<DefenseDescriptor> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const json& d = j.at(i);
    require_keys(d, path + "[]:", {"kind", "noise_std", "dropout_p"});
    DefenseDescriptor desc;
    const std::string kind = d.at("kind").get<std::string>();
    if (kind == "noise")
      desc.kind = DefenseKind::kNoise;
    else if (kind == "dropout")
      desc.kind = DefenseKind::kDropout;
    else if (kind == "shuffle_indices")
      desc.kind = DefenseKind::kShuffleIndices;
    else
      throw config_error("config: unknown defense kind '" + kind + "'");
    desc.noise_std = get_or<double>(d, "noise_std", 0.0);
    desc.dropout_p = get_or<double>(d, "dropout_p", 0.0);
    validate_defense(desc);
    out.push_back(desc);
  }
  return out;
}

inline GameConfig parse_game(const json& j, GameConfig base, const std::string& path) {
  require_keys(j, path,
               {"attack", "batch_size", "trials", "target_copies", "mu", "lambda", "pool_init",
                "warmup_rounds", "warmup_batch", "selection_metric", "slot_rule",
                "regen_adv_per_trial", "with_bounds", "record_traces", "adv", "defenses"});
  GameConfig g = base;
  if (j.contains("attack")) g.attack = attack_from_name(j.at("attack").get<std::string>());
  g.batch_size = get_or<std::size_t>(j, "batch_size", g.batch_size);
  g.trials = get_or<std::size_t>(j, "trials", g.trials);
  g.target_copies = get_or<std::size_t>(j, "target_copies", g.target_copies);
  g.mu = get_or<double>(j, "mu", g.mu);
  g.lambda = get_or<double>(j, "lambda", g.lambda);
  if (j.contains("pool_init")) {
    const std::string p = j.at("pool_init").get<std::string>();
    if (p == "centroids")
      g.pool_init = PoolInit::kCentroids;
    else if (p == "random")
      g.pool_init = PoolInit::kRandom;
    else
      throw config_error("config: pool_init must be 'centroids' or 'random'");
  }
  g.warmup_rounds = get_or<std::size_t>(j, "warmup_rounds", g.warmup_rounds);
  g.warmup_batch = get_or<std::size_t>(j, "warmup_batch", g.warmup_batch);
  if (j.contains("selection_metric")) {
    const std::string m = j.at("selection_metric").get<std::string>();
    if (m == "cosine")
      g.metric = SelectionMetric::kCosine;
    else if (m == "euclidean")
      g.metric = SelectionMetric::kEuclidean;
    else
      throw config_error("config: selection_metric must be 'cosine' or 'euclidean'");
  }
  if (j.contains("slot_rule")) {
    const std::string s = j.at("slot_rule").get<std::string>();
    if (s == "lowest_similarity")
      g.slot_rule = SlotRule::kLowestSimilarity;
    else if (s == "uniform_random")
      g.slot_rule = SlotRule::kUniformRandom;
    else
      throw config_error("config: slot_rule must be 'lowest_similarity' or 'uniform_random'");
  }
  g.regen_adv_per_trial = get_or<bool>(j, "regen_adv_per_trial", g.regen_adv_per_trial);
  g.with_bounds = get_or<bool>(j, "with_bounds", g.with_bounds);
  g.record_traces = get_or<bool>(j, "record_traces", g.record_traces);
  if (j.contains("adv")) {
    const json& a = j.at("adv");
    require_keys(a, path + "adv.", {"delta_min", "delta_cap", "beta"});
    g.adv.delta_min = get_or<double>(a, "delta_min", g.adv.delta_min);
    g.adv.delta_cap = get_or<double>(a, "delta_cap", g.adv.delta_cap);
    g.adv.beta = get_or<double>(a, "beta", g.adv.beta);
  }
  if (j.contains("defenses")) g.defenses = parse_defenses(j.at("defenses"), path + "defenses");
  return g;
}

}  // namespace cfg

// Standard experiment baseline: pool of 20 keys, 4 selected,
// delta_min 0.02, delta_cap 0.05, beta 0, lambda 0.5. The default world adds
// the synthetic structure the experiments assume: tight clusters in partner
// groups plus two loose background clusters that generate stray queries.
inline GameConfig default_game_config() {
  GameConfig g;
  g.world.pool_size = 20;
  g.world.selection_size = 4;
  g.world.dim = 64;
  g.world.prompt_dim = 16;
  g.world.radius = 10.0;
  g.world.group_size = 4;
  g.world.within_group_cos = 0.995;
  g.world.min_separation = 3.0;
  g.world.sigma_lo = g.world.sigma_hi = 0.8;
  g.world.loose_clusters = 2;
  g.world.sigma_loose = 3.6;
  g.world.distinctive_max_cos = 0.15;
  g.adv.delta_min = 0.02;
  g.adv.delta_cap = 0.05;
  g.adv.beta = 0.0;
  g.mu = 1.0;
  g.lambda = 0.5;
  g.batch_size = 64;
  g.trials = 10000;
  g.rng_seed = 1;
  return g;
}

namespace detail {

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open output file: " + path);
  out << content;
  if (!out) throw std::runtime_error("write failed: " + path);
}

inline std::string sibling_json_path(const std::string& csv_path) {
  const auto dot = csv_path.rfind('.');
  const std::string stem = dot == std::string::npos ? csv_path : csv_path.substr(0, dot);
  return stem + ".json";
}

}  // namespace detail

// Sweep over attack kinds and batch sizes on one world.
inline int cmd_attack_eval(const json& doc, const CliOverrides& ov) {
  cfg::require_keys(doc, "", {"seed", "out", "threads", "world", "game", "attacks", "batch_sizes"});
  GameConfig base = default_game_config();
  base.rng_seed = ov.seed.value_or(cfg::get_or<std::uint64_t>(doc, "seed", 1));
  base.threads = ov.threads.value_or(cfg::get_or<std::size_t>(doc, "threads", 1));
  if (doc.contains("world")) base.world = cfg::parse_world(doc.at("world"), base.world, "world.");
  if (doc.contains("game")) base = cfg::parse_game(doc.at("game"), base, "game.");
  const auto attacks =
      cfg::get_or<std::vector<std::string>>(doc, "attacks", {"promptmia", "naive"});
  const auto batches =
      cfg::get_or<std::vector<std::size_t>>(doc, "batch_sizes", {1, 4, 16, 64, 256});

  std::vector<GameConfig> grid;
  for (const std::string& a : attacks)
    for (std::size_t b : batches) {
      GameConfig g = base;
      g.attack = attack_from_name(a);
      g.batch_size = b;
      grid.push_back(g);
    }
  const auto rows = sweep(grid);
  std::string out = sweep_csv_header(base.with_bounds);
  for (const auto& row : rows) out += sweep_csv_row(row, base.with_bounds);
  detail::write_file(ov.out.value_or(cfg::get_or<std::string>(doc, "out", "attack_eval.csv")), out);
  return 0;
}

// Closed-form bound vs Monte Carlo on a grid of worlds: per-sample FPR
// against the worst-case cluster bound, advantage against its lower bound.
inline int cmd_bound_check(const json& doc, const CliOverrides& ov) {
  cfg::require_keys(doc, "",
                    {"seed", "out", "threads", "world", "game", "worlds", "trials_per_arm"});
  GameConfig base = default_game_config();
  base.rng_seed = ov.seed.value_or(cfg::get_or<std::uint64_t>(doc, "seed", 1));
  base.threads = ov.threads.value_or(cfg::get_or<std::size_t>(doc, "threads", 1));
  // Bound checks run on plain well-separated worlds unless overridden.
  base.world.pool_size = 12;
  base.world.selection_size = 2;
  base.world.group_size = 1;
  base.world.loose_clusters = 0;
  base.world.min_separation = 8.0;
  base.world.sigma_lo = base.world.sigma_hi = 1.5;
  if (doc.contains("world")) base.world = cfg::parse_world(doc.at("world"), base.world, "world.");
  if (doc.contains("game")) base = cfg::parse_game(doc.at("game"), base, "game.");
  const std::size_t per_arm = cfg::get_or<std::size_t>(doc, "trials_per_arm", 100000);

  std::vector<WorldSpec> worlds;
  if (doc.contains("worlds")) {
    for (const auto& wj : doc.at("worlds"))
      worlds.push_back(cfg::parse_world(wj, base.world, "worlds[]."));
  } else {
    for (double sigma : {1.5, 3.0})
      for (double sep : {8.0, 12.0})
        for (int embedded : {0, 1}) {
          WorldSpec w = base.world;
          w.sigma_lo = w.sigma_hi = sigma;
          w.min_separation = sep;
          w.placement = embedded ? TargetPlacement::kEmbedded : TargetPlacement::kDistinctive;
          worlds.push_back(w);
        }
  }

  std::string csv =
      "world,sigma_lo,sigma_hi,min_separation,placement,fpr_bound,adv_lower_bound,"
      "empirical_fpr,fpr_se,empirical_advantage,adv_se,fpr_pass,adv_pass,identity_ok\n";
  json report = json::array();
  bool all_pass = true;
  for (std::size_t wi = 0; wi < worlds.size(); ++wi) {
    GameConfig g = base;
    g.world = worlds[wi];
    g.batch_size = 1;
    g.trials = 2 * per_arm;
    g.pool_init = PoolInit::kCentroids;
    g.warmup_rounds = 0;
    g.regen_adv_per_trial = false;
    g.with_bounds = true;
    g.defenses.clear();
    // One seed for the whole grid, so rows that differ only in sigma share
    // their centroid geometry and the bound column is comparable across them.
    g.rng_seed = base.rng_seed;
    const GameOutcome o = run_game(g);

    // Rebuild the frozen attack the game used (same streams) so the full
    // report, z-table included, can be emitted alongside the summary.
    Rng root(g.rng_seed);
    Rng world_rng = root.split(1);
    const World world = make_world(g.world, world_rng);
    Rng pool_rng = root.split(2);
    const PromptPool pool = centroid_pool(world, g.world, pool_rng);
    Rng plan_rng = root.split(4);
    const AttackPlan plan = plan_attack(g, world, pool, plan_rng);
    std::vector<char> is_slot(pool.size(), 0);
    for (std::size_t s : plan.slots) is_slot[s] = 1;
    std::vector<Vec> benign;
    for (std::size_t i = 0; i < pool.size(); ++i)
      if (!is_slot[i]) benign.push_back(pool.entries[i].key);
    const BoundReport full = fpr_bound(plan.adv_keys, benign, world.sigmas);
    const double adv_se = std::sqrt(o.tpr_se * o.tpr_se + o.fpr_se * o.fpr_se);
    const bool fpr_pass = o.fpr <= o.fpr_bound + 3.0 * o.fpr_se;
    const bool adv_pass = o.advantage >= o.adv_lower_bound - 3.0 * adv_se;
    const bool identity_ok = o.adv_lower_bound + o.fpr_bound == 1.0;
    all_pass = all_pass && fpr_pass && adv_pass && identity_ok;
    const auto f = detail::format_double;
    csv += std::to_string(wi) + "," + f(g.world.sigma_lo) + "," + f(g.world.sigma_hi) + "," +
           f(g.world.min_separation) + "," +
           (g.world.placement == TargetPlacement::kEmbedded ? "embedded" : "distinctive") + "," +
           f(o.fpr_bound) + "," + f(o.adv_lower_bound) + "," + f(o.fpr) + "," + f(o.fpr_se) + "," +
           f(o.advantage) + "," + f(adv_se) + "," + (fpr_pass ? "pass" : "fail") + "," +
           (adv_pass ? "pass" : "fail") + "," + (identity_ok ? "pass" : "fail") + "\n";
    report.push_back({{"world", wi},
                      {"fpr_bound", o.fpr_bound},
                      {"adv_lower_bound", o.adv_lower_bound},
                      {"empirical_fpr", o.fpr},
                      {"fpr_se", o.fpr_se},
                      {"empirical_tpr", o.tpr},
                      {"empirical_advantage", o.advantage},
                      {"fpr_pass", fpr_pass},
                      {"adv_pass", adv_pass},
                      {"identity_ok", identity_ok},
                      {"bound_report", bound_report_to_json(full)}});
  }
  const std::string out_path =
      ov.out.value_or(cfg::get_or<std::string>(doc, "out", "bound_check.csv"));
  detail::write_file(out_path, csv);
  json envelope;
  envelope["all_pass"] = all_pass;
  envelope["worlds"] = report;
  detail::write_file(detail::sibling_json_path(out_path), envelope.dump(2) + "\n");
  return 0;
}

// Anomaly-detection protocol over the injected pool, one CSV row per method.
inline int cmd_detect_eval(const json& doc, const CliOverrides& ov) {
  cfg::require_keys(doc, "",
                    {"seed", "out", "threads", "world", "game", "methods", "attack",
                     "detect_trials", "contamination"});
  GameConfig base = default_game_config();
  base.rng_seed = ov.seed.value_or(cfg::get_or<std::uint64_t>(doc, "seed", 1));
  if (doc.contains("world")) base.world = cfg::parse_world(doc.at("world"), base.world, "world.");
  if (doc.contains("game")) base = cfg::parse_game(doc.at("game"), base, "game.");
  const auto methods = cfg::get_or<std::vector<std::string>>(
      doc, "methods", {"isolation_forest", "lof", "linear_ocsvm", "robust_envelope"});
  const bool naive = attack_from_name(cfg::get_or<std::string>(doc, "attack", "promptmia")) ==
                     AttackKind::kNaive;
  const std::size_t trials = cfg::get_or<std::size_t>(doc, "detect_trials", 200);
  const double contamination = cfg::get_or<double>(
      doc, "contamination",
      static_cast<double>(base.world.selection_size) / static_cast<double>(base.world.pool_size));

  Rng root(base.rng_seed);
  Rng world_rng = root.split(1);
  const World world = make_world(base.world, world_rng);
  Rng pool_rng = root.split(2);
  const PromptPool pool = centroid_pool(world, base.world, pool_rng);

  std::string csv = "method,contamination,precision,recall,f1,trials,seed\n";
  const auto f = detail::format_double;
  for (const std::string& name : methods) {
    const DetectorMethod method = detector_from_name(name);
    DetectorParams params;
    params.contamination = contamination;
    Rng run_rng = root.split(100 + static_cast<std::uint64_t>(method));
    const DetectorReport rep =
        eval_detection(world, pool, naive, base.adv, trials, method, params, run_rng);
    csv += name + "," + f(contamination) + "," + f(rep.precision) + "," + f(rep.recall) + "," +
           f(rep.f1) + "," + std::to_string(trials) + "," + std::to_string(base.rng_seed) + "\n";
  }
  detail::write_file(ov.out.value_or(cfg::get_or<std::string>(doc, "out", "detect_eval.csv")), csv);
  return 0;
}

// One-factor sweeps over pool size, selection size, the dominance margins,
// beta, and training rounds.
inline int cmd_ablate(const json& doc, const CliOverrides& ov) {
  cfg::require_keys(doc, "",
                    {"seed", "out", "threads", "world", "game", "pool_sizes", "selection_sizes",
                     "delta_mins", "delta_caps", "betas", "warmup_rounds_grid"});
  GameConfig base = default_game_config();
  base.rng_seed = ov.seed.value_or(cfg::get_or<std::uint64_t>(doc, "seed", 1));
  base.threads = ov.threads.value_or(cfg::get_or<std::size_t>(doc, "threads", 1));
  if (doc.contains("world")) base.world = cfg::parse_world(doc.at("world"), base.world, "world.");
  if (doc.contains("game")) base = cfg::parse_game(doc.at("game"), base, "game.");

  const auto pool_sizes = cfg::get_or<std::vector<std::size_t>>(doc, "pool_sizes", {12, 16, 20, 24});
  const auto selection_sizes =
      cfg::get_or<std::vector<std::size_t>>(doc, "selection_sizes", {2, 4, 6});
  const auto delta_mins =
      cfg::get_or<std::vector<double>>(doc, "delta_mins", {0.02, 0.1, 0.2, 0.3});
  const auto delta_caps =
      cfg::get_or<std::vector<double>>(doc, "delta_caps", {0.01, 0.05, 0.1, 0.2});
  const auto betas = cfg::get_or<std::vector<double>>(doc, "betas", {0.0, 0.4, 0.6, 0.8});
  const auto rounds = cfg::get_or<std::vector<std::size_t>>(doc, "warmup_rounds_grid",
                                                            {0, 10, 30, 60});

  std::vector<GameConfig> grid;
  for (std::size_t m : pool_sizes) {
    GameConfig g = base;
    g.world.pool_size = m;
    grid.push_back(g);
  }
  for (std::size_t n : selection_sizes) {
    GameConfig g = base;
    g.world.selection_size = n;
    grid.push_back(g);
  }
  for (double dm : delta_mins) {
    GameConfig g = base;
    g.adv.delta_min = dm;
    grid.push_back(g);
  }
  for (double dc : delta_caps) {
    GameConfig g = base;
    g.adv.delta_cap = dc;
    grid.push_back(g);
  }
  for (double b : betas) {
    GameConfig g = base;
    g.adv.beta = b;
    grid.push_back(g);
  }
  for (std::size_t r : rounds) {
    GameConfig g = base;
    g.pool_init = PoolInit::kRandom;
    g.warmup_rounds = r;
    grid.push_back(g);
  }
  const auto rows = sweep(grid);
  std::string out = sweep_csv_header(base.with_bounds);
  for (const auto& row : rows) out += sweep_csv_row(row, base.with_bounds);
  detail::write_file(ov.out.value_or(cfg::get_or<std::string>(doc, "out", "ablate.csv")), out);
  return 0;
}

inline json load_config(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream in(path);
  if (!in) throw config_error("config file not found: " + path);
  try {
    return json::parse(in, nullptr, /*allow_exceptions=*/true, /*ignore_comments=*/true);
  } catch (const json::exception& e) {
    throw config_error(std::string("config parse error: ") + e.what());
  }
}

// Exit codes: 0 success, 2 config error, 3 runtime error.
inline int run_subcommand(const std::string& name, const json& doc, const CliOverrides& ov) {
  try {
    if (name == "attack-eval") return cmd_attack_eval(doc, ov);
    if (name == "bound-check") return cmd_bound_check(doc, ov);
    if (name == "detect-eval") return cmd_detect_eval(doc, ov);
    if (name == "ablate") return cmd_ablate(doc, ov);
    throw config_error("unknown subcommand: " + name);
  } catch (const config_error& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "runtime error: %s\n", e.what());
    return 3;
  }
}

}  // namespace pmia

#endif  // PMIA_EXPERIMENT_HPP
