// Random (function, x, cotangent) triples for gradient checks, redrawn until
// every input sits at least kKinkMargin away from a non-differentiable point.
#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <variant>
#include <vector>

#include "multimax/multimax.hpp"
#include "oracles.hpp"

namespace gradcase {

inline constexpr double kKinkMargin = 1e-4;

struct Case {
  multimax::ReweightSpec family;
  std::vector<double> x;
  std::vector<double> v;
};

inline multimax::ModulatorParams random_params(std::mt19937_64& g) {
  std::uniform_real_distribution<double> temp(-1.0, 3.0), brk(-2.0, 2.0);
  multimax::ModulatorParams p;
  p.orders.resize(1 + g() % 2);
  for (auto& o : p.orders) o = {temp(g), temp(g), brk(g), brk(g)};
  return p;
}

inline double kink_distance(const multimax::ReweightSpec& f, const std::vector<double>& x) {
  using namespace multimax;
  double dist = INFINITY;
  auto near = [&](double a, double b) { dist = std::min(dist, std::abs(a - b)); };
  if (const auto* mm = std::get_if<spec::MultiMax>(&f)) {
    for (double xi : x) {
      for (const auto& o : mm->params.orders) {
        near(xi, o.b);
        near(xi, o.d);
      }
    }
  } else if (std::holds_alternative<spec::SparseMax>(f)) {
    const double tau = sparsemax_threshold(x);
    for (double xi : x) near(xi, tau);
  } else if (std::holds_alternative<spec::EntMax15>(f)) {
    const double tau = entmax15_threshold(x);
    for (double xi : x) near(xi / 2.0, tau);
  } else if (std::holds_alternative<spec::EvSoftMax>(f)) {
    double mean = 0.0;
    for (double xi : x) mean += xi;
    mean /= static_cast<double>(x.size());
    for (double xi : x) near(xi, mean);
  }
  return dist;
}

// `family` selects the function; MultiMax parameters and the SoftMax
// temperature are redrawn per case.
inline Case draw(std::mt19937_64& g, const multimax::ReweightSpec& family) {
  using namespace multimax;
  std::uniform_int_distribution<std::size_t> size(2, 12);
  for (;;) {
    Case c{family, {}, {}};
    if (std::holds_alternative<spec::MultiMax>(family)) c.family = spec::MultiMax{random_params(g)};
    if (std::holds_alternative<spec::SoftMax>(family)) {
      c.family = spec::SoftMax{Temperature(std::exp(std::uniform_real_distribution<double>(-1.0, 1.0)(g)))};
    }
    const std::size_t k = size(g);
    c.x = oracle::normal(g, k, 1.5);
    c.v = oracle::normal(g, k, 1.0);
    if (kink_distance(c.family, c.x) >= kKinkMargin) return c;
  }
}

// Below this gradient scale relative error means nothing: FD roundoff on
// logits up to ~40 is ~1e-14 even in long double.
inline constexpr double kScaleFloor = 1e-6;

// Central-difference VJP reference. Exponential families go through the
// long double closed forms; the piecewise ones through the library forward.
inline std::vector<double> fd_reference(const Case& c, double h) {
  using namespace multimax;
  if (const auto* mm = std::get_if<spec::MultiMax>(&c.family)) {
    const auto f = [&](const oracle::VecL& z) { return oracle::multimax_ld(z, mm->params); };
    return oracle::fd_vjp_ld(f, c.x, c.v, h);
  }
  if (const auto* sm = std::get_if<spec::SoftMax>(&c.family)) {
    const long double tau = sm->temperature.tau();
    const auto f = [&](const oracle::VecL& z) {
      oracle::VecL e(z.size());
      const long double m = *std::max_element(z.begin(), z.end());
      long double s = 0.0L;
      for (std::size_t i = 0; i < z.size(); ++i) s += (e[i] = std::exp((z[i] - m) / tau));
      for (auto& v : e) v /= s;
      return e;
    };
    return oracle::fd_vjp_ld(f, c.x, c.v, h);
  }
  const auto f = [&](const std::vector<double>& z) { return reweight(c.family, Scores(z)).vector(); };
  return oracle::fd_vjp(f, c.x, c.v, h);
}

}  // namespace gradcase
