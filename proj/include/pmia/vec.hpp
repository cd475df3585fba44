// Dense vector arithmetic, cosine geometry, orthogonal decomposition and the
// standard normal CDF. Everything else in the library sits on top of these.
#ifndef PMIA_VEC_HPP
#define PMIA_VEC_HPP

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace pmia {

using Vec = std::vector<double>;

// Thrown when an orthogonalization collapses (input parallel to the axis).
struct degenerate_direction_error : std::domain_error {
  using std::domain_error::domain_error;
};

inline double dot(const Vec& a, const Vec& b) {
  if (a.size() != b.size())
    throw std::invalid_argument("dot: dimension mismatch " + std::to_string(a.size()) + " vs " +
                                std::to_string(b.size()));
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm(const Vec& a) { return std::sqrt(dot(a, a)); }

inline double distance(const Vec& a, const Vec& b) {
  if (a.size() != b.size()) throw std::invalid_argument("distance: dimension mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return std::sqrt(s);
}

inline bool all_finite(const Vec& a) {
  for (double x : a)
    if (!std::isfinite(x)) return false;
  return true;
}

inline Vec scaled(const Vec& a, double c) {
  Vec r(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] * c;
  return r;
}

inline Vec add(const Vec& a, const Vec& b) {
  if (a.size() != b.size()) throw std::invalid_argument("add: dimension mismatch");
  Vec r(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] + b[i];
  return r;
}

inline Vec sub(const Vec& a, const Vec& b) {
  if (a.size() != b.size()) throw std::invalid_argument("sub: dimension mismatch");
  Vec r(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] - b[i];
  return r;
}

// r += c * x
inline void axpy(Vec& r, double c, const Vec& x) {
  if (r.size() != x.size()) throw std::invalid_argument("axpy: dimension mismatch");
  for (std::size_t i = 0; i < r.size(); ++i) r[i] += c * x[i];
}

inline Vec normalized(const Vec& a) {
  const double n = norm(a);
  if (n <= 0.0) throw std::domain_error("normalized: zero-norm vector");
  return scaled(a, 1.0 / n);
}

inline double cosine_similarity(const Vec& a, const Vec& b) {
  const double na = norm(a);
  const double nb = norm(b);
  if (na <= 0.0) throw std::domain_error("cosine_similarity: first argument has zero norm");
  if (nb <= 0.0) throw std::domain_error("cosine_similarity: second argument has zero norm");
  return dot(a, b) / (na * nb);
}

inline double cosine_distance(const Vec& a, const Vec& b) { return 1.0 - cosine_similarity(a, b); }

// Component of r orthogonal to the unit vector unit_q: r - <r, q> q.
// The caller is expected to resample r when the result degenerates.
inline Vec orthogonal_component(const Vec& r, const Vec& unit_q) {
  const double nq = norm(unit_q);
  if (std::abs(nq - 1.0) > 1e-9)
    throw std::invalid_argument("orthogonal_component: axis is not unit length");
  Vec o = r;
  axpy(o, -dot(r, unit_q), unit_q);
  if (norm(o) < 1e-12)
    throw degenerate_direction_error("orthogonal_component: input parallel to axis");
  return o;
}

// Standard normal CDF via erfc; absolute error below 1e-7 over the real line
// (glibc erfc is accurate to a few ulp, far inside that budget).
inline double std_normal_cdf(double z) { return 0.5 * std::erfc(-z * 0.7071067811865475244); }

}  // namespace pmia

#endif  // PMIA_VEC_HPP
