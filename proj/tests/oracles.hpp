// Independent reference computations used by the unit and acceptance tests.
// None of these call into the library's solvers.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <vector>

namespace oracle {

inline std::vector<double> softmax_ld(const std::vector<double>& x, long double tau = 1.0L) {
  long double m = x[0];
  for (double v : x) m = std::max<long double>(m, v);
  std::vector<long double> e(x.size());
  long double s = 0.0L;
  for (std::size_t i = 0; i < x.size(); ++i) {
    e[i] = std::exp((static_cast<long double>(x[i]) - m) / tau);
    s += e[i];
  }
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = static_cast<double>(e[i] / s);
  return out;
}

// Euclidean projection onto the simplex by trying every support set.
inline std::vector<double> sparsemax_bruteforce(const std::vector<double>& x) {
  const std::size_t k = x.size();
  for (std::uint32_t mask = 1; mask < (1u << k); ++mask) {
    long double sum = 0.0L;
    std::size_t n = 0;
    for (std::size_t i = 0; i < k; ++i) {
      if (mask & (1u << i)) {
        sum += x[i];
        ++n;
      }
    }
    const long double tau = (sum - 1.0L) / static_cast<long double>(n);
    bool ok = true;
    for (std::size_t i = 0; i < k && ok; ++i) {
      const bool in = mask & (1u << i);
      if (in && !(x[i] - tau >= 0.0L)) ok = false;
      if (!in && !(x[i] - tau <= 0.0L)) ok = false;
    }
    if (!ok) continue;
    std::vector<double> p(k, 0.0);
    for (std::size_t i = 0; i < k; ++i) {
      if (mask & (1u << i)) p[i] = static_cast<double>(x[i] - tau);
    }
    return p;
  }
  return {};
}

struct EntmaxSolution {
  long double tau = 0.0L;
  std::vector<double> p;
};

// 1.5-entmax by support enumeration: on support S the threshold solves
// sum_{i in S} (x_i/2 - tau)^2 = 1 exactly (smaller root of a quadratic).
inline EntmaxSolution entmax15_bruteforce(const std::vector<double>& x) {
  const std::size_t k = x.size();
  for (std::uint32_t mask = 1; mask < (1u << k); ++mask) {
    long double sa = 0.0L, saa = 0.0L;
    std::size_t n = 0;
    for (std::size_t i = 0; i < k; ++i) {
      if (mask & (1u << i)) {
        const long double a = x[i] / 2.0L;
        sa += a;
        saa += a * a;
        ++n;
      }
    }
    const long double nn = static_cast<long double>(n);
    const long double disc = sa * sa - nn * (saa - 1.0L);
    if (disc < 0.0L) continue;
    const long double tau = (sa - std::sqrt(disc)) / nn;
    bool ok = true;
    for (std::size_t i = 0; i < k && ok; ++i) {
      const long double a = x[i] / 2.0L;
      const bool in = mask & (1u << i);
      if (in && !(a >= tau)) ok = false;
      if (!in && !(a <= tau)) ok = false;
    }
    if (!ok) continue;
    EntmaxSolution s{tau, std::vector<double>(k, 0.0)};
    for (std::size_t i = 0; i < k; ++i) {
      if (mask & (1u << i)) {
        const long double r = x[i] / 2.0L - tau;
        s.p[i] = static_cast<double>(r * r);
      }
    }
    return s;
  }
  return {};
}

// Gradient of x -> <v, f(x)> by central differences.
inline std::vector<double> fd_vjp(const std::function<std::vector<double>(const std::vector<double>&)>& f,
                                  const std::vector<double>& x, const std::vector<double>& v, double h) {
  std::vector<double> g(x.size());
  auto dot = [&](const std::vector<double>& p) {
    long double s = 0.0L;
    for (std::size_t i = 0; i < p.size(); ++i) s += static_cast<long double>(v[i]) * p[i];
    return s;
  };
  for (std::size_t i = 0; i < x.size(); ++i) {
    auto up = x, down = x;
    up[i] += h;
    down[i] -= h;
    g[i] = static_cast<double>((dot(f(up)) - dot(f(down))) / (2.0L * h));
  }
  return g;
}

using VecL = std::vector<long double>;

// MultiMax forward from the closed form, all in extended precision.
template <class Params>
VecL multimax_ld(const VecL& x, const Params& p) {
  VecL s(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    long double y = x[i];
    for (std::size_t n = 0; n < p.orders.size(); ++n) {
      const auto& o = p.orders[n];
      const long double lo = std::max(static_cast<long double>(o.b) - x[i], 0.0L);
      const long double hi = std::max(x[i] - static_cast<long double>(o.d), 0.0L);
      const long double lo_n = n == 0 ? lo : lo * lo, hi_n = n == 0 ? hi : hi * hi;
      y += (1.0L - o.tb) * lo_n + (static_cast<long double>(o.td) - 1.0L) * hi_n;
    }
    s[i] = y;
  }
  const long double m = *std::max_element(s.begin(), s.end());
  long double z = 0.0L;
  for (auto& e : s) z += (e = std::exp(e - m));
  for (auto& e : s) e /= z;
  return s;
}

// Central differences with the function and the step in long double, so
// roundoff stays far below the h^2 truncation term at h=1e-5.
inline std::vector<double> fd_vjp_ld(const std::function<VecL(const VecL&)>& f, const std::vector<double>& x,
                                     const std::vector<double>& v, long double h) {
  std::vector<double> g(x.size());
  auto dot = [&](const VecL& p) {
    long double s = 0.0L;
    for (std::size_t i = 0; i < p.size(); ++i) s += static_cast<long double>(v[i]) * p[i];
    return s;
  };
  const VecL base(x.begin(), x.end());
  for (std::size_t i = 0; i < x.size(); ++i) {
    auto up = base, down = base;
    up[i] += h;
    down[i] -= h;
    g[i] = static_cast<double>((dot(f(up)) - dot(f(down))) / (2.0L * h));
  }
  return g;
}

// max_i |a_i - b_i| / max(max|a|, max|b|, floor)
inline double relative_error(const std::vector<double>& a, const std::vector<double>& b, double floor = 1e-8) {
  double diff = 0.0, scale = floor;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff = std::max(diff, std::abs(a[i] - b[i]));
    scale = std::max({scale, std::abs(a[i]), std::abs(b[i])});
  }
  return diff / scale;
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

inline std::vector<double> normal(std::mt19937_64& g, std::size_t k, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  std::vector<double> v(k);
  for (auto& x : v) x = n(g);
  return v;
}

}  // namespace oracle
