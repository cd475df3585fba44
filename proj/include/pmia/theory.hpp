// Closed-form race and flip probabilities for the nearest-centroid Gaussian
// query model: the single-point flip probability, per-cluster flip bounds from
// the race z-scores, the worst-case false-positive-rate bound with its
// induced advantage floor, and the batched N=1 union bound. A small Monte Carlo
// estimator for the same events sits alongside for cross-checking.
#ifndef PMIA_THEORY_HPP
#define PMIA_THEORY_HPP

#include <algorithm>
#include <cstddef>
#include <limits>
#include <vector>

#include "pmia/pool.hpp"
#include "pmia/rng.hpp"
#include "pmia/vec.hpp"

#include "json.hpp"

namespace pmia {

struct degenerate_race_error : std::domain_error {
  using std::domain_error::domain_error;
};

// Probability that a query drawn around k_b (spherical Gaussian, scale sigma)
// lands closer to k_a than to k_b:  Phi(-|k_b - k_a| / (2 sigma)).
inline double single_point_flip_prob(const Vec& k_b, const Vec& k_a, double sigma) {
  if (sigma <= 0.0) throw std::domain_error("single_point_flip_prob: sigma must be > 0");
  return std_normal_cdf(-distance(k_b, k_a) / (2.0 * sigma));
}

// Race z-score for cluster i: (k_a - k_bl)^T k_bi / (sigma_i |k_a - k_bl|).
inline double z_score(const Vec& k_a, const Vec& k_bl, const Vec& k_bi, double sigma_i) {
  if (sigma_i <= 0.0) throw std::domain_error("z_score: sigma must be > 0");
  const Vec diff = sub(k_a, k_bl);
  const double d = norm(diff);
  if (d <= 0.0) throw degenerate_race_error("z_score: adversarial and benign keys coincide");
  return dot(diff, k_bi) / (sigma_i * d);
}

// Upper bound on the probability that a cluster-i query ranks every
// adversarial key above every benign key: the weakest single race wins.
inline double cluster_flip_bound(const std::vector<Vec>& adv_keys,
                                 const std::vector<Vec>& benign_keys, std::size_t cluster,
                                 double sigma_i) {
  if (adv_keys.empty() || benign_keys.empty())
    throw std::invalid_argument("cluster_flip_bound: empty key set");
  if (cluster >= benign_keys.size())
    throw std::out_of_range("cluster_flip_bound: cluster index out of range");
  const Vec& k_bi = benign_keys[cluster];
  double best = 1.0;
  for (const Vec& ka : adv_keys)
    for (const Vec& kb : benign_keys)
      best = std::min(best, std_normal_cdf(z_score(ka, kb, k_bi, sigma_i)));
  return best;
}

struct BoundReport {
  std::vector<double> per_cluster;   // cluster flip bounds
  double fpr_bound = 0.0;            // max over clusters
  double advantage_lower_bound = 1;  // 1 - fpr_bound
  // z_table[(i * n_adv + j) * n_benign + l] = z for cluster i, adversarial
  // key j racing benign key l.
  std::vector<double> z_table;
  std::size_t n_clusters = 0, n_adv = 0, n_benign = 0;

  double z(std::size_t i, std::size_t j, std::size_t l) const {
    return z_table[(i * n_adv + j) * n_benign + l];
  }
};

// Worst-case per-sample false-positive bound over all clusters, plus the
// induced advantage lower bound (true positives are exact by construction).
inline BoundReport fpr_bound(const std::vector<Vec>& adv_keys,
                             const std::vector<Vec>& benign_keys,
                             const std::vector<double>& sigmas) {
  if (sigmas.size() != benign_keys.size())
    throw std::invalid_argument("fpr_bound: one sigma per benign key required");
  BoundReport rep;
  rep.n_clusters = benign_keys.size();
  rep.n_adv = adv_keys.size();
  rep.n_benign = benign_keys.size();
  rep.z_table.resize(rep.n_clusters * rep.n_adv * rep.n_benign);
  for (std::size_t i = 0; i < rep.n_clusters; ++i) {
    for (std::size_t j = 0; j < rep.n_adv; ++j)
      for (std::size_t l = 0; l < rep.n_benign; ++l)
        rep.z_table[(i * rep.n_adv + j) * rep.n_benign + l] =
            z_score(adv_keys[j], benign_keys[l], benign_keys[i], sigmas[i]);
    rep.per_cluster.push_back(cluster_flip_bound(adv_keys, benign_keys, i, sigmas[i]));
  }
  rep.fpr_bound = *std::max_element(rep.per_cluster.begin(), rep.per_cluster.end());
  rep.advantage_lower_bound = 1.0 - rep.fpr_bound;
  return rep;
}

struct BatchedFprBound {
  double raw = 0.0;    // the union-bound sum itself
  double value = 0.0;  // clamped to [0, 1]
};

// Batched union bound for a single adversarial key (selection size 1):
// sum_i b_i Phi(-D_min(i) / (2 sigma_i)), with D_min taken over the supplied
// samples of the generation shell. Expected (fractional) counts are fine,
// since the bound is linear in them.
inline BatchedFprBound batched_fpr_bound_n1(const std::vector<Vec>& adv_shell_samples,
                                            const std::vector<Vec>& benign_keys,
                                            const std::vector<double>& sigmas,
                                            const std::vector<double>& batch_counts) {
  if (adv_shell_samples.empty())
    throw std::invalid_argument("batched_fpr_bound_n1: need at least one shell sample");
  if (benign_keys.size() != sigmas.size() || benign_keys.size() != batch_counts.size())
    throw std::invalid_argument("batched_fpr_bound_n1: per-cluster inputs disagree");
  BatchedFprBound out;
  for (std::size_t i = 0; i < benign_keys.size(); ++i) {
    if (batch_counts[i] < 0.0)
      throw std::invalid_argument("batched_fpr_bound_n1: negative batch count");
    if (batch_counts[i] == 0.0) continue;
    double d_min = std::numeric_limits<double>::infinity();
    for (const Vec& c : adv_shell_samples) d_min = std::min(d_min, distance(benign_keys[i], c));
    out.raw += batch_counts[i] * std_normal_cdf(-d_min / (2.0 * sigmas[i]));
  }
  out.value = std::clamp(out.raw, 0.0, 1.0);
  return out;
}

// Monte Carlo frequency of the full flip event for queries from one cluster:
// every adversarial key outranks every benign key under the given metric.
// Used to validate the closed forms above against the geometry they model.
inline double mc_cluster_flip_rate(const std::vector<Vec>& adv_keys,
                                   const std::vector<Vec>& benign_keys, const Vec& centroid,
                                   double sigma, std::size_t samples, Rng& rng,
                                   SelectionMetric metric = SelectionMetric::kCosine) {
  if (samples == 0) throw std::invalid_argument("mc_cluster_flip_rate: samples must be >= 1");
  std::size_t flips = 0;
  Vec q(centroid.size());
  for (std::size_t s = 0; s < samples; ++s) {
    for (std::size_t d = 0; d < q.size(); ++d) q[d] = centroid[d] + sigma * rng.normal();
    double worst_adv, best_benign;
    if (metric == SelectionMetric::kCosine) {
      const double nq = norm(q);
      if (nq == 0.0) continue;
      worst_adv = std::numeric_limits<double>::infinity();
      for (const Vec& ka : adv_keys)
        worst_adv = std::min(worst_adv, dot(q, ka) / (nq * norm(ka)));
      best_benign = -std::numeric_limits<double>::infinity();
      for (const Vec& kb : benign_keys)
        best_benign = std::max(best_benign, dot(q, kb) / (nq * norm(kb)));
    } else {
      worst_adv = std::numeric_limits<double>::infinity();
      for (const Vec& ka : adv_keys) worst_adv = std::min(worst_adv, -distance(q, ka));
      best_benign = -std::numeric_limits<double>::infinity();
      for (const Vec& kb : benign_keys) best_benign = std::max(best_benign, -distance(q, kb));
    }
    if (worst_adv > best_benign) ++flips;
  }
  return static_cast<double>(flips) / static_cast<double>(samples);
}

inline nlohmann::json bound_report_to_json(const BoundReport& rep) {
  return {{"per_cluster", rep.per_cluster},
          {"fpr_bound", rep.fpr_bound},
          {"advantage_lower_bound", rep.advantage_lower_bound},
          {"n_clusters", rep.n_clusters},
          {"n_adv", rep.n_adv},
          {"n_benign", rep.n_benign},
          {"z_table", rep.z_table}};
}

}  // namespace pmia

#endif  // PMIA_THEORY_HPP
