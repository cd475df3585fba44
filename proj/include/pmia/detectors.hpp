// Anomaly detectors over pool keys: isolation forest, local outlier factor,
// a linear (SGD) one-class SVM, and a shrinkage-covariance Mahalanobis
// envelope. All score "higher = more anomalous" and flag deterministically
// under a fixed seed.
#ifndef PMIA_DETECTORS_HPP
#define PMIA_DETECTORS_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "pmia/rng.hpp"
#include "pmia/vec.hpp"

namespace pmia {

struct config_error : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

enum class DetectorMethod { kIsolationForest, kLof, kLinearOcsvm, kRobustEnvelope };

inline const char* detector_name(DetectorMethod m) {
  switch (m) {
    case DetectorMethod::kIsolationForest: return "isolation_forest";
    case DetectorMethod::kLof: return "lof";
    case DetectorMethod::kLinearOcsvm: return "linear_ocsvm";
    case DetectorMethod::kRobustEnvelope: return "robust_envelope";
  }
  throw config_error("unknown detector method");
}

inline DetectorMethod detector_from_name(const std::string& name) {
  if (name == "isolation_forest") return DetectorMethod::kIsolationForest;
  if (name == "lof") return DetectorMethod::kLof;
  if (name == "linear_ocsvm") return DetectorMethod::kLinearOcsvm;
  if (name == "robust_envelope") return DetectorMethod::kRobustEnvelope;
  throw config_error("unknown detector method: " + name);
}

struct DetectorParams {
  double contamination = 0.2;  // expected anomaly fraction; defaults to N/M upstream
  std::uint64_t seed = 0;
  std::size_t forest_trees = 100;
  std::size_t forest_subsample = 256;
  std::size_t lof_neighbors = 5;
  std::size_t ocsvm_epochs = 200;
  double ocsvm_lr = 0.05;
};

struct DetectorReport {
  std::vector<double> scores;        // higher = more anomalous
  std::vector<std::size_t> flagged;  // indices over the scored keys
  double precision = 0.0, recall = 0.0, f1 = 0.0;
  bool regularized_fallback = false;  // envelope had to escalate shrinkage
  std::string params;
  std::size_t trials = 0;
};

namespace detail {

// Flag the keys strictly above the score of the runner-up to the top
// floor(contamination * n) scores. Strictness means fully tied score sets
// (e.g. identical keys) flag nothing instead of an arbitrary subset.
inline std::vector<std::size_t> flag_top_fraction(const std::vector<double>& scores,
                                                  double contamination) {
  const std::size_t n = scores.size();
  std::size_t n_flag = static_cast<std::size_t>(contamination * static_cast<double>(n) + 1e-9);
  n_flag = std::min(n_flag, n - 1);
  std::vector<std::size_t> out;
  if (n_flag == 0) return out;
  std::vector<double> sorted = scores;
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  const double threshold = sorted[n_flag];
  for (std::size_t i = 0; i < n; ++i)
    if (scores[i] > threshold) out.push_back(i);
  return out;
}

// Average unsuccessful-search path length of a binary search tree of size n.
inline double average_path_length(std::size_t n) {
  if (n <= 1) return 0.0;
  const double h = std::log(static_cast<double>(n - 1)) + 0.5772156649015329;
  return 2.0 * h - 2.0 * static_cast<double>(n - 1) / static_cast<double>(n);
}

struct IsoNode {
  int split_dim = -1;
  double split_value = 0.0;
  int left = -1, right = -1;
  std::size_t size = 0;  // leaf population
};

inline int build_iso_tree(std::vector<IsoNode>& nodes, const std::vector<Vec>& data,
                          std::vector<std::size_t> idx, std::size_t depth, std::size_t max_depth,
                          Rng& rng) {
  const int node_id = static_cast<int>(nodes.size());
  nodes.emplace_back();
  if (idx.size() <= 1 || depth >= max_depth) {
    nodes[node_id].size = idx.size();
    return node_id;
  }
  const std::size_t dim = data[0].size();
  // Dimensions where the subsample actually varies.
  std::vector<std::size_t> usable;
  for (std::size_t d = 0; d < dim; ++d) {
    double lo = data[idx[0]][d], hi = lo;
    for (std::size_t i : idx) {
      lo = std::min(lo, data[i][d]);
      hi = std::max(hi, data[i][d]);
    }
    if (hi > lo) usable.push_back(d);
  }
  if (usable.empty()) {
    nodes[node_id].size = idx.size();
    return node_id;
  }
  const std::size_t d = usable[rng.below(usable.size())];
  double lo = data[idx[0]][d], hi = lo;
  for (std::size_t i : idx) {
    lo = std::min(lo, data[i][d]);
    hi = std::max(hi, data[i][d]);
  }
  const double cut = rng.uniform(lo, hi);
  std::vector<std::size_t> left, right;
  for (std::size_t i : idx) (data[i][d] < cut ? left : right).push_back(i);
  if (left.empty() || right.empty()) {
    nodes[node_id].size = idx.size();
    return node_id;
  }
  nodes[node_id].split_dim = static_cast<int>(d);
  nodes[node_id].split_value = cut;
  nodes[node_id].left = build_iso_tree(nodes, data, std::move(left), depth + 1, max_depth, rng);
  nodes[node_id].right = build_iso_tree(nodes, data, std::move(right), depth + 1, max_depth, rng);
  return node_id;
}

inline double iso_path_length(const std::vector<IsoNode>& nodes, const Vec& x) {
  int cur = 0;
  double depth = 0.0;
  while (nodes[cur].split_dim >= 0) {
    cur = x[static_cast<std::size_t>(nodes[cur].split_dim)] < nodes[cur].split_value
              ? nodes[cur].left
              : nodes[cur].right;
    depth += 1.0;
  }
  return depth + average_path_length(nodes[cur].size);
}

inline std::vector<double> isolation_forest_scores(const std::vector<Vec>& keys,
                                                   const DetectorParams& p, Rng& rng) {
  const std::size_t n = keys.size();
  const std::size_t subsample = std::min(p.forest_subsample, n);
  const std::size_t max_depth =
      static_cast<std::size_t>(std::ceil(std::log2(std::max<std::size_t>(subsample, 2))));
  std::vector<double> mean_path(n, 0.0);
  for (std::size_t t = 0; t < p.forest_trees; ++t) {
    Rng tree_rng = rng.split(t);
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    for (std::size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[tree_rng.below(i)]);
    idx.resize(subsample);
    std::vector<IsoNode> nodes;
    build_iso_tree(nodes, keys, idx, 0, max_depth, tree_rng);
    for (std::size_t i = 0; i < n; ++i) mean_path[i] += iso_path_length(nodes, keys[i]);
  }
  const double c = std::max(average_path_length(subsample), 1e-12);
  std::vector<double> scores(n);
  for (std::size_t i = 0; i < n; ++i)
    scores[i] = std::pow(2.0, -mean_path[i] / (static_cast<double>(p.forest_trees) * c));
  return scores;
}

inline std::vector<double> lof_scores(const std::vector<Vec>& keys, const DetectorParams& p) {
  const std::size_t n = keys.size();
  const std::size_t k = std::min<std::size_t>(p.lof_neighbors, n - 1);
  std::vector<std::vector<double>> dist(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) dist[i][j] = dist[j][i] = distance(keys[i], keys[j]);

  std::vector<std::vector<std::size_t>> neighbors(n);
  std::vector<double> k_dist(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<std::size_t> order;
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) order.push_back(j);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      if (dist[i][a] != dist[i][b]) return dist[i][a] < dist[i][b];
      return a < b;
    });
    order.resize(k);
    neighbors[i] = order;
    k_dist[i] = dist[i][order.back()];
  }
  std::vector<double> lrd(n);
  for (std::size_t i = 0; i < n; ++i) {
    double reach = 0.0;
    for (std::size_t j : neighbors[i]) reach += std::max(k_dist[j], dist[i][j]);
    lrd[i] = static_cast<double>(k) / std::max(reach, 1e-12);
  }
  std::vector<double> scores(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j : neighbors[i]) s += lrd[j] / lrd[i];
    scores[i] = s / static_cast<double>(k);
  }
  return scores;
}

// Linear one-class SVM trained by Pegasos-style SGD on the hinge objective
// 1/2 |w|^2 - rho + (1/(nu n)) sum max(0, rho - w.x). Inputs are rescaled to
// unit max norm and the second-half iterates are averaged, which keeps the
// solver stable on deterministic replays. Score = -(w.x - rho).
inline std::vector<double> linear_ocsvm_scores(const std::vector<Vec>& keys,
                                               const DetectorParams& p, Rng& rng) {
  const std::size_t n = keys.size();
  const std::size_t dim = keys[0].size();
  const double nu = std::clamp(p.contamination, 0.01, 0.99);
  double max_norm = 0.0;
  for (const Vec& k : keys) max_norm = std::max(max_norm, norm(k));
  std::vector<Vec> x = keys;
  if (max_norm > 0.0)
    for (Vec& v : x) v = scaled(v, 1.0 / max_norm);

  Vec w(dim, 0.0), w_avg(dim, 0.0);
  double rho = 0.0, rho_avg = 0.0;
  std::size_t avg_count = 0;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  const std::size_t total_steps = p.ocsvm_epochs * n;
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < p.ocsvm_epochs; ++epoch) {
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    for (std::size_t i : order) {
      const double lr = 1.0 / (10.0 + static_cast<double>(step++));
      const bool violates = dot(w, x[i]) < rho;
      for (std::size_t d = 0; d < dim; ++d) w[d] *= 1.0 - lr;
      if (violates) {
        axpy(w, lr / nu, x[i]);
        rho -= lr * (1.0 / nu - 1.0);
      } else {
        rho += lr;
      }
      if (step * 2 >= total_steps) {
        axpy(w_avg, 1.0, w);
        rho_avg += rho;
        ++avg_count;
      }
    }
  }
  const double inv = 1.0 / static_cast<double>(std::max<std::size_t>(avg_count, 1));
  std::vector<double> scores(n);
  for (std::size_t i = 0; i < n; ++i) scores[i] = -(dot(w_avg, x[i]) * inv - rho_avg * inv);
  return scores;
}

struct EnvelopeFit {
  Vec mean;
  std::vector<std::vector<double>> chol;  // lower Cholesky of the shrunk covariance
  bool fallback = false;
};

// Shrinkage-regularized covariance of a subset of the keys. Escalates the
// shrinkage until the Cholesky factorization succeeds; escalation beyond the
// base level is reported via the fallback flag.
inline EnvelopeFit fit_envelope(const std::vector<Vec>& keys,
                                const std::vector<std::size_t>& subset) {
  const std::size_t dim = keys[0].size();
  const double m = static_cast<double>(subset.size());
  EnvelopeFit fit;
  fit.mean.assign(dim, 0.0);
  for (std::size_t i : subset) axpy(fit.mean, 1.0 / m, keys[i]);
  std::vector<std::vector<double>> cov(dim, std::vector<double>(dim, 0.0));
  double trace = 0.0;
  for (std::size_t i : subset) {
    const Vec d = sub(keys[i], fit.mean);
    for (std::size_t a = 0; a < dim; ++a)
      for (std::size_t b = a; b < dim; ++b) cov[a][b] += d[a] * d[b] / m;
  }
  for (std::size_t a = 0; a < dim; ++a) trace += cov[a][a];
  const double avg_var = std::max(trace / static_cast<double>(dim), 1e-12);

  // Plain sample covariance first; a singular fit falls back to shrinkage
  // toward avg_var * I and raises the report flag.
  double alpha = 0.0;
  for (int attempt = 0;; ++attempt) {
    if (attempt > 0) {
      fit.fallback = true;
      alpha = alpha == 0.0 ? 0.1 : std::min(1.0, alpha * 4.0);
    }
    std::vector<std::vector<double>> s(dim, std::vector<double>(dim, 0.0));
    for (std::size_t a = 0; a < dim; ++a) {
      for (std::size_t b = a; b < dim; ++b) s[a][b] = s[b][a] = (1.0 - alpha) * cov[a][b];
      s[a][a] += alpha * avg_var;
    }
    fit.chol.assign(dim, std::vector<double>(dim, 0.0));
    bool ok = true;
    for (std::size_t a = 0; a < dim && ok; ++a) {
      for (std::size_t b = 0; b <= a; ++b) {
        double sum = s[a][b];
        for (std::size_t c = 0; c < b; ++c) sum -= fit.chol[a][c] * fit.chol[b][c];
        if (a == b) {
          if (sum <= 1e-14 * avg_var) {
            ok = false;
            break;
          }
          fit.chol[a][a] = std::sqrt(sum);
        } else {
          fit.chol[a][b] = sum / fit.chol[b][b];
        }
      }
    }
    if (ok) return fit;
    if (attempt > 8) throw std::runtime_error("robust_envelope: covariance not regularizable");
  }
}

inline double mahalanobis_sq(const EnvelopeFit& fit, const Vec& x) {
  const std::size_t dim = x.size();
  Vec d = sub(x, fit.mean);
  Vec y(dim);  // solve L y = d; score = |y|^2
  for (std::size_t a = 0; a < dim; ++a) {
    double sum = d[a];
    for (std::size_t c = 0; c < a; ++c) sum -= fit.chol[a][c] * y[c];
    y[a] = sum / fit.chol[a][a];
  }
  return dot(y, y);
}

// Robust envelope: shrinkage covariance with iterative trimming in place of a
// full minimum-covariance-determinant search (which is ill-posed for a pool
// of ~20 keys in high dimension). Each round refits on the h lowest-distance
// keys, so a clump of injected keys cannot mask itself by inflating the
// covariance along its own direction.
inline std::vector<double> robust_envelope_scores(const std::vector<Vec>& keys,
                                                  double contamination,
                                                  bool* regularized_fallback) {
  const std::size_t n = keys.size();
  const std::size_t trim = std::min(
      n / 2, static_cast<std::size_t>(contamination * static_cast<double>(n) + 1e-9));
  const std::size_t h = n - trim;
  // Seed the trim from the coordinate-wise median: a clump of injected keys
  // can mask a mean/covariance fit, but not the majority median.
  std::vector<std::size_t> subset(n);
  std::iota(subset.begin(), subset.end(), 0);
  if (h < n) {
    const std::size_t dim = keys[0].size();
    Vec median(dim);
    std::vector<double> column(n);
    for (std::size_t d = 0; d < dim; ++d) {
      for (std::size_t i = 0; i < n; ++i) column[i] = keys[i][d];
      std::nth_element(column.begin(), column.begin() + static_cast<std::ptrdiff_t>(n / 2),
                       column.end());
      median[d] = column[n / 2];
    }
    std::sort(subset.begin(), subset.end(), [&](std::size_t a, std::size_t b) {
      const double da = distance(keys[a], median), db = distance(keys[b], median);
      if (da != db) return da < db;
      return a < b;
    });
    subset.resize(h);
    std::sort(subset.begin(), subset.end());
  }
  bool fallback = false;
  std::vector<double> scores(n, 0.0);
  for (int iter = 0; iter < 4; ++iter) {
    const EnvelopeFit fit = fit_envelope(keys, subset);
    fallback = fallback || fit.fallback;
    for (std::size_t i = 0; i < n; ++i) scores[i] = mahalanobis_sq(fit, keys[i]);
    if (h == n) break;
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      if (scores[a] != scores[b]) return scores[a] < scores[b];
      return a < b;
    });
    order.resize(h);
    std::sort(order.begin(), order.end());
    if (order == subset) break;
    subset = std::move(order);
  }
  if (regularized_fallback) *regularized_fallback = fallback;
  return scores;
}

}  // namespace detail

inline double f1_score(double precision, double recall) {
  return precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
}

// Scores every key, flags the top contamination fraction (strict ties never
// flagged), and fills the precision/recall fields only if ground-truth labels
// are supplied.
inline DetectorReport detect(const std::vector<Vec>& pool_keys, DetectorMethod method,
                             const DetectorParams& params,
                             const std::vector<char>* truth_injected = nullptr) {
  if (pool_keys.size() < 2) throw std::invalid_argument("detect: need at least 2 keys");
  if (params.contamination < 0.0 || params.contamination >= 1.0)
    throw config_error("detect: contamination must lie in [0, 1)");
  DetectorReport rep;
  Rng rng(params.seed);
  switch (method) {
    case DetectorMethod::kIsolationForest:
      rep.scores = detail::isolation_forest_scores(pool_keys, params, rng);
      break;
    case DetectorMethod::kLof:
      rep.scores = detail::lof_scores(pool_keys, params);
      break;
    case DetectorMethod::kLinearOcsvm:
      rep.scores = detail::linear_ocsvm_scores(pool_keys, params, rng);
      break;
    case DetectorMethod::kRobustEnvelope:
      rep.scores = detail::robust_envelope_scores(pool_keys, params.contamination,
                                                  &rep.regularized_fallback);
      break;
  }
  rep.flagged = detail::flag_top_fraction(rep.scores, params.contamination);
  rep.params = std::string(detector_name(method)) + " contamination=" +
               std::to_string(params.contamination);
  if (truth_injected) {
    if (truth_injected->size() != pool_keys.size())
      throw std::invalid_argument("detect: truth label size mismatch");
    std::size_t tp = 0, fp = 0, fn = 0;
    std::vector<char> is_flagged(pool_keys.size(), 0);
    for (std::size_t i : rep.flagged) is_flagged[i] = 1;
    for (std::size_t i = 0; i < pool_keys.size(); ++i) {
      if (is_flagged[i] && (*truth_injected)[i]) ++tp;
      if (is_flagged[i] && !(*truth_injected)[i]) ++fp;
      if (!is_flagged[i] && (*truth_injected)[i]) ++fn;
    }
    rep.precision = tp + fp > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    rep.recall = tp + fn > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    rep.f1 = f1_score(rep.precision, rep.recall);
  }
  return rep;
}

}  // namespace pmia

#endif  // PMIA_DETECTORS_HPP
