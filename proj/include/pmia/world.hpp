// Synthetic client universe: benign-key centroids on a common sphere,
// spherical-Gaussian non-member queries, a distinguished target query, and the
// warm-up dynamics that pull pool keys onto the centroids.
#ifndef PMIA_WORLD_HPP
#define PMIA_WORLD_HPP

#include <algorithm>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "pmia/pool.hpp"
#include "pmia/rng.hpp"
#include "pmia/vec.hpp"

#include "json.hpp"

namespace pmia {

struct construction_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class TargetPlacement { kDistinctive, kEmbedded };

// Generator parameters for make_world. Centroids and the target all live on
// the sphere of the given radius, so cosine and Euclidean nearest-key
// selection agree and the race z-scores are exact rather than approximate.
struct WorldSpec {
  std::size_t pool_size = 20;      // M
  std::size_t selection_size = 4;  // N; cluster count K = M - N
  std::size_t dim = 64;            // D_k
  std::size_t prompt_dim = 16;     // D_p
  double radius = 10.0;            // common norm of centroids and target

  // Centroid layout. With group_size > 1 the K centroids come in groups of
  // that size sharing a random axis; members of a group sit at pairwise cosine
  // within_group_cos, and distinct groups (and lone centroids) are kept at
  // least min_separation apart.
  std::size_t group_size = 1;
  double within_group_cos = 0.95;
  double min_separation = 10.0;

  // Per-cluster query spread. The first loose_clusters clusters get
  // sigma_loose; the rest draw uniformly from [sigma_lo, sigma_hi].
  double sigma_lo = 0.8;
  double sigma_hi = 0.8;
  std::size_t loose_clusters = 0;
  double sigma_loose = 4.0;

  TargetPlacement placement = TargetPlacement::kDistinctive;
  // Distinctive: |cos(target, centroid)| <= distinctive_max_cos for every
  // centroid, and additionally cos <= embed_cos - is implied. Embedded: the
  // target sits at cosine embed_cos from one centroid.
  double distinctive_max_cos = 0.25;
  double embed_cos = 0.85;
};

struct World {
  std::vector<Vec> centroids;  // benign-key cluster centers, one per cluster
  std::vector<double> sigmas;
  std::vector<double> priors;  // sum to 1
  Vec target_query;
  std::size_t dim = 0;
};

inline void validate_world(const World& w) {
  if (w.centroids.empty()) throw std::invalid_argument("world: no centroids");
  if (w.centroids.size() != w.sigmas.size() || w.centroids.size() != w.priors.size())
    throw std::invalid_argument("world: centroid/sigma/prior counts differ");
  double prior_sum = 0.0;
  for (double p : w.priors) {
    if (p < 0.0) throw std::invalid_argument("world: negative prior");
    prior_sum += p;
  }
  if (std::abs(prior_sum - 1.0) > 1e-12)
    throw std::invalid_argument("world: priors must sum to 1");
  for (double s : w.sigmas)
    if (s <= 0.0) throw std::invalid_argument("world: sigmas must be positive");
  for (const Vec& c : w.centroids) {
    if (c.size() != w.dim) throw std::invalid_argument("world: centroid dimension mismatch");
    if (c == w.target_query) throw std::invalid_argument("world: target equals a centroid");
  }
}

namespace detail {

inline Vec random_direction(std::size_t dim, Rng& rng) {
  Vec v(dim);
  for (double& x : v) x = rng.normal();
  return normalized(v);
}

}  // namespace detail

// Places K = M - N centroids with the requested separation / group structure,
// then the target query. Bounded rejection sampling; infeasible requests (too
// many far-apart directions for the dimension) end in construction_error.
inline World make_world(const WorldSpec& spec, Rng& rng) {
  if (spec.pool_size <= spec.selection_size)
    throw std::invalid_argument("make_world: pool_size must exceed selection_size");
  if (spec.dim < 2) throw std::invalid_argument("make_world: dim must be >= 2");
  if (spec.group_size < 1) throw std::invalid_argument("make_world: group_size must be >= 1");
  if (spec.sigma_lo <= 0.0 || spec.sigma_hi < spec.sigma_lo)
    throw std::invalid_argument("make_world: bad sigma range");

  const std::size_t k_clusters = spec.pool_size - spec.selection_size;
  const double rho = spec.radius;
  World w;
  w.dim = spec.dim;

  // Group axes (a lone centroid is a group of one). Members of a group sit at
  // cos(phi) from the axis with orthogonal tangents, giving pairwise cosine
  // cos(phi)^2 = within_group_cos.
  std::vector<Vec> axes;
  const auto far_enough = [&](const Vec& cand) {
    for (const Vec& a : axes)
      if (distance(scaled(cand, rho), scaled(a, rho)) < spec.min_separation) return false;
    return true;
  };
  std::size_t remaining = k_clusters;
  while (remaining > 0) {
    const std::size_t members = std::min(spec.group_size, remaining);
    Vec axis;
    bool placed = false;
    for (int attempt = 0; attempt < 256 && !placed; ++attempt) {
      axis = detail::random_direction(spec.dim, rng);
      placed = far_enough(axis);
    }
    if (!placed)
      throw construction_error("make_world: could not place centroids at the requested separation");
    axes.push_back(axis);

    if (members == 1) {
      w.centroids.push_back(scaled(axis, rho));
    } else {
      const double cphi = std::sqrt(spec.within_group_cos);
      const double sphi = std::sqrt(1.0 - spec.within_group_cos);
      // Mutually orthogonal tangents make every member pair share only the
      // axis component, i.e. pairwise cosine exactly within_group_cos.
      std::vector<Vec> tangents;
      for (std::size_t m = 0; m < members; ++m) {
        Vec tangent;
        for (int attempt = 0;; ++attempt) {
          if (attempt >= 16)
            throw construction_error("make_world: degenerate tangent sampling");
          try {
            tangent = normalized(orthogonal_component(detail::random_direction(spec.dim, rng), axis));
            for (const Vec& prev : tangents) tangent = orthogonal_component(tangent, prev);
            tangent = normalized(tangent);
            break;
          } catch (const degenerate_direction_error&) {
          }
        }
        tangents.push_back(tangent);
        Vec c = scaled(axis, cphi);
        axpy(c, sphi, tangent);
        w.centroids.push_back(scaled(normalized(c), rho));
      }
    }
    remaining -= members;
  }

  w.sigmas.resize(k_clusters);
  for (std::size_t i = 0; i < k_clusters; ++i)
    w.sigmas[i] = i < spec.loose_clusters ? spec.sigma_loose
                                          : rng.uniform(spec.sigma_lo, spec.sigma_hi);
  w.priors.assign(k_clusters, 1.0 / static_cast<double>(k_clusters));

  if (spec.placement == TargetPlacement::kDistinctive) {
    bool placed = false;
    for (int attempt = 0; attempt < 4096 && !placed; ++attempt) {
      Vec t = detail::random_direction(spec.dim, rng);
      bool ok = true;
      for (const Vec& c : w.centroids) {
        if (std::abs(dot(t, c) / rho) > spec.distinctive_max_cos ||
            distance(scaled(t, rho), c) < spec.min_separation) {
          ok = false;
          break;
        }
      }
      if (ok) {
        w.target_query = scaled(t, rho);
        placed = true;
      }
    }
    if (!placed)
      throw construction_error("make_world: no distinctive target direction found");
  } else {
    const std::size_t host = rng.below(k_clusters);
    const Vec host_dir = normalized(w.centroids[host]);
    Vec tangent;
    for (int attempt = 0;; ++attempt) {
      if (attempt >= 16) throw construction_error("make_world: degenerate target tangent");
      try {
        tangent = normalized(orthogonal_component(detail::random_direction(spec.dim, rng), host_dir));
        break;
      } catch (const degenerate_direction_error&) {
      }
    }
    Vec t = scaled(host_dir, spec.embed_cos);
    axpy(t, std::sqrt(1.0 - spec.embed_cos * spec.embed_cos), tangent);
    w.target_query = scaled(normalized(t), rho);
  }

  validate_world(w);
  return w;
}

// Draws (query, cluster index): cluster from the priors, then a spherical
// Gaussian around its centroid.
inline std::pair<Vec, std::size_t> sample_nonmember_query(const World& w, Rng& rng) {
  const double u = rng.uniform01();
  std::size_t cluster = w.centroids.size() - 1;
  double acc = 0.0;
  for (std::size_t i = 0; i < w.priors.size(); ++i) {
    acc += w.priors[i];
    if (u < acc) {
      cluster = i;
      break;
    }
  }
  Vec q = w.centroids[cluster];
  const double sigma = w.sigmas[cluster];
  for (double& x : q) x += sigma * rng.normal();
  return {std::move(q), cluster};
}

namespace detail {

inline Vec seeded_prompt(std::size_t prompt_dim, Rng& rng) {
  Vec p(prompt_dim);
  for (double& x : p) x = rng.normal();
  return p;
}

}  // namespace detail

// Idealized trained pool: one key per centroid, plus N spare entries pointed
// directly away from the target so the default slot rule replaces exactly
// them. After injection the surviving benign keys are the centroids, which is
// the configuration the closed-form bounds describe.
inline PromptPool centroid_pool(const World& w, const WorldSpec& spec, Rng& rng) {
  PromptPool pool;
  pool.selection_size = spec.selection_size;
  const double rho = spec.radius;
  for (std::size_t i = 0; i < w.centroids.size(); ++i) {
    KeyPromptPair e;
    e.key = w.centroids[i];
    e.prompt = detail::seeded_prompt(spec.prompt_dim, rng);
    e.tag = "benign-" + std::to_string(i);
    pool.entries.push_back(std::move(e));
  }
  const Vec anti = scaled(normalized(w.target_query), -1.0);
  for (std::size_t m = 0; m < spec.selection_size; ++m) {
    Vec dir = anti;
    for (int attempt = 0;; ++attempt) {
      if (attempt >= 16) throw construction_error("centroid_pool: spare jitter degenerated");
      try {
        Vec r = detail::random_direction(w.dim, rng);
        Vec t = normalized(orthogonal_component(r, anti));
        dir = add(scaled(anti, std::cos(1e-3)), scaled(t, std::sin(1e-3)));
        break;
      } catch (const degenerate_direction_error&) {
      }
    }
    KeyPromptPair e;
    e.key = scaled(dir, rho);
    e.prompt = detail::seeded_prompt(spec.prompt_dim, rng);
    e.tag = "spare-" + std::to_string(m);
    pool.entries.push_back(std::move(e));
  }
  validate_pool(pool);
  return pool;
}

// Untrained pool: keys at random directions on the world sphere.
inline PromptPool random_pool(const World& w, const WorldSpec& spec, Rng& rng) {
  PromptPool pool;
  pool.selection_size = spec.selection_size;
  for (std::size_t i = 0; i < spec.pool_size; ++i) {
    KeyPromptPair e;
    e.key = scaled(detail::random_direction(w.dim, rng), spec.radius);
    e.prompt = detail::seeded_prompt(spec.prompt_dim, rng);
    e.tag = "init-" + std::to_string(i);
    pool.entries.push_back(std::move(e));
  }
  validate_pool(pool);
  return pool;
}

// Training rounds: sample a batch of non-member queries, select, key-pull.
// Drives the pool keys toward the query-cluster centroids.
inline PromptPool warmup(const World& w, PromptPool pool, std::size_t rounds, std::size_t batch,
                         double mu, double lambda, Rng& rng) {
  if (batch < 1) throw std::invalid_argument("warmup: batch must be >= 1");
  for (std::size_t r = 0; r < rounds; ++r) {
    Rng round_rng = rng.split(r);
    std::vector<Vec> queries;
    queries.reserve(batch);
    for (std::size_t i = 0; i < batch; ++i)
      queries.push_back(sample_nonmember_query(w, round_rng).first);
    const auto selected = batch_select(pool, queries);
    Rng update_rng = round_rng.split(1ull << 32);
    pool = key_pull_update(pool, selected, queries, mu, lambda, update_rng);
  }
  return pool;
}

// Mean over centroids of the distance to the nearest pool key (the training
// dynamics summary statistic).
inline double mean_centroid_to_nearest_key(const World& w, const PromptPool& pool) {
  double total = 0.0;
  for (const Vec& c : w.centroids) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& e : pool.entries) best = std::min(best, distance(c, e.key));
    total += best;
  }
  return total / static_cast<double>(w.centroids.size());
}

// Per-cluster sample standard deviation of fresh queries (single-coordinate,
// pooled over coordinates). The theory paths use the world's true sigmas; this
// estimator exists for pools produced by warmup.
inline std::vector<double> estimate_sigmas(const World& w, std::size_t samples_per_cluster,
                                           Rng& rng) {
  if (samples_per_cluster < 2) throw std::invalid_argument("estimate_sigmas: need >= 2 samples");
  std::vector<double> out(w.centroids.size());
  for (std::size_t i = 0; i < w.centroids.size(); ++i) {
    double ss = 0.0;
    std::size_t n = 0;
    Rng cluster_rng = rng.split(i);
    for (std::size_t s = 0; s < samples_per_cluster; ++s) {
      for (std::size_t d = 0; d < w.dim; ++d) {
        const double dev = w.sigmas[i] * cluster_rng.normal();
        ss += dev * dev;
        ++n;
      }
    }
    out[i] = std::sqrt(ss / static_cast<double>(n));
  }
  return out;
}

inline nlohmann::json world_to_json(const World& w) {
  return {{"dim", w.dim},
          {"centroids", w.centroids},
          {"sigmas", w.sigmas},
          {"priors", w.priors},
          {"target_query", w.target_query}};
}

inline World world_from_json(const nlohmann::json& j) {
  World w;
  w.dim = j.at("dim").get<std::size_t>();
  w.centroids = j.at("centroids").get<std::vector<Vec>>();
  w.sigmas = j.at("sigmas").get<std::vector<double>>();
  w.priors = j.at("priors").get<std::vector<double>>();
  w.target_query = j.at("target_query").get<Vec>();
  validate_world(w);
  return w;
}

}  // namespace pmia

#endif  // PMIA_WORLD_HPP
