// The MultiMax modulator: a learnable piecewise-polynomial pre-transform
//
//   sigma(x) = x + sum_n (1 - tb_n) * max(b_n - x, 0)^n + (td_n - 1) * max(x - d_n, 0)^n
//
// For order 1 this is the three-branch map
//   tb * x + (1 - tb) * b   for x < b
//   x                       for b <= x <= d
//   td * x + (1 - td) * d   for x > d
// which is continuous at both breakpoints. At an exact breakpoint the
// derivative returned is the middle-branch slope 1.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "multimax/error.hpp"
#include "multimax/types.hpp"

namespace multimax {

namespace detail {

template <class Real>
Real clamp_below_at_zero(const Real& v) {
  using std::max;
  return max(v, Real(0.0));
}

template <class Real>
Real integer_power(const Real& v, std::size_t n) {
  return n == 1 ? v : v * v;
}

}  // namespace detail

/// Contribution of polynomial order `n` (1-based) to sigma(x) - x.
template <class Real>
Real modulator_term(const Real& x, const ModulatorOrder& o, std::size_t n) {
  const double below_coeff = 1.0 - o.tb;
  const double above_coeff = o.td - 1.0;
  const Real below = detail::clamp_below_at_zero(Real(o.b) - x);
  const Real above = detail::clamp_below_at_zero(x - Real(o.d));
  return below_coeff * detail::integer_power(below, n) +
         above_coeff * detail::integer_power(above, n);
}

/// sigma(x) for one scalar. `Real` is double in normal use; the op counter
/// instantiates it with a tracing type.
template <class Real>
Real modulate_value(const Real& x, const ModulatorParams& p) {
  Real acc = modulator_term(x, p.orders[0], 1);
  for (std::size_t n = 2; n <= p.orders.size(); ++n) {
    acc = acc + modulator_term(x, p.orders[n - 1], n);
  }
  return x + acc;
}

inline double modulator_slope(double x, const ModulatorParams& p) {
  double slope = 1.0;
  for (std::size_t n = 1; n <= p.orders.size(); ++n) {
    const auto& o = p.orders[n - 1];
    const double nn = static_cast<double>(n);
    if (x < o.b) {
      slope -= (1.0 - o.tb) * nn * std::pow(o.b - x, nn - 1.0);
    }
    if (x > o.d) {
      slope += (o.td - 1.0) * nn * std::pow(x - o.d, nn - 1.0);
    }
  }
  return slope;
}

/// Adds weight * d sigma(x) / d theta into `grad`, which must have the same
/// order count as `p`.
inline void accumulate_modulator_param_grad(double x, double weight, const ModulatorParams& p,
                                            ModulatorParams& grad) {
  for (std::size_t n = 1; n <= p.orders.size(); ++n) {
    const auto& o = p.orders[n - 1];
    auto& g = grad.orders[n - 1];
    const double nn = static_cast<double>(n);
    if (x < o.b) {
      const double gap = o.b - x;
      g.tb -= weight * std::pow(gap, nn);
      g.b += weight * nn * (1.0 - o.tb) * std::pow(gap, nn - 1.0);
    }
    if (x > o.d) {
      const double gap = x - o.d;
      g.td += weight * std::pow(gap, nn);
      g.d -= weight * nn * (o.td - 1.0) * std::pow(gap, nn - 1.0);
    }
  }
}

/// Zero-valued gradient holder shaped like `p`.
inline ModulatorParams zero_like(const ModulatorParams& p) {
  return ModulatorParams{std::vector<ModulatorOrder>(p.orders.size(), ModulatorOrder{0, 0, 0, 0})};
}

/// Elementwise sigma(x).
inline Scores modulate(const Scores& x, const ModulatorParams& p) {
  p.validate();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = modulate_value(x[i], p);
    if (!std::isfinite(out[i])) {
      throw NumericalFailure("modulated score " + std::to_string(i) + " overflowed");
    }
  }
  return Scores(std::move(out));
}

/// Elementwise d sigma / dx, with slope 1 at exact breakpoints.
inline std::vector<double> modulator_derivative(const Scores& x, const ModulatorParams& p) {
  p.validate();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = modulator_slope(x[i], p);
  return out;
}

// ---------------------------------------------------------------------------
// Operation counting

/// Per-category tally of scalar operations.
struct OpTally {
  std::size_t subtractions = 0;
  std::size_t maxes = 0;
  std::size_t multiplications = 0;  // scaling by a temperature coefficient
  std::size_t additions = 0;
  std::size_t squarings = 0;        // value * value for order-2 terms

  std::size_t total() const noexcept {
    return subtractions + maxes + multiplications + additions + squarings;
  }
  friend bool operator==(const OpTally&, const OpTally&) = default;
};

/// Scalar that records every arithmetic operation applied to it.
class TracedScalar {
 public:
  TracedScalar(double v) : value_(v) {}  // NOLINT: implicit so constants mix in
  TracedScalar(double v, OpTally* tally) : value_(v), tally_(tally) {}

  double value() const noexcept { return value_; }

  friend TracedScalar operator-(const TracedScalar& a, const TracedScalar& b) {
    auto* t = pick(a, b);
    if (t) ++t->subtractions;
    return {a.value_ - b.value_, t};
  }
  friend TracedScalar operator+(const TracedScalar& a, const TracedScalar& b) {
    auto* t = pick(a, b);
    if (t) ++t->additions;
    return {a.value_ + b.value_, t};
  }
  friend TracedScalar operator*(double c, const TracedScalar& a) {
    if (a.tally_) ++a.tally_->multiplications;
    return {c * a.value_, a.tally_};
  }
  friend TracedScalar operator*(const TracedScalar& a, const TracedScalar& b) {
    auto* t = pick(a, b);
    if (t) ++t->squarings;
    return {a.value_ * b.value_, t};
  }
  friend TracedScalar max(const TracedScalar& a, const TracedScalar& b) {
    auto* t = pick(a, b);
    if (t) ++t->maxes;
    return {a.value_ > b.value_ ? a.value_ : b.value_, t};
  }

 private:
  static OpTally* pick(const TracedScalar& a, const TracedScalar& b) {
    return a.tally_ ? a.tally_ : b.tally_;
  }

  double value_;
  OpTally* tally_ = nullptr;
};

/// Operations performed by one order's term of the modulator.
inline OpTally count_order_term_ops(std::size_t n) {
  OpTally tally;
  const TracedScalar x(0.25, &tally);
  (void)modulator_term(x, ModulatorOrder{}, n);
  return tally;
}

/// Operations performed by a full modulator evaluation of the given order.
inline OpTally count_modulator_ops(std::size_t order) {
  if (order < 1 || order > ModulatorParams::kMaxOrder) {
    throw InvalidInput("unsupported modulator order " + std::to_string(order));
  }
  OpTally tally;
  const TracedScalar x(0.25, &tally);
  (void)modulate_value(x, ModulatorParams::identity(order));
  return tally;
}

/// Per-scalar FLOPs of the modulator under the usual accounting: each order
/// costs two breakpoint subtractions, two max, two temperature
/// multiplications and one addition joining its two terms (7), plus one
/// residual addition. Squarings and the addition accumulating across orders
/// are not charged by this convention; count_modulator_ops reports them.
inline int flop_count(int order) {
  if (order < 1 || order > static_cast<int>(ModulatorParams::kMaxOrder)) {
    throw InvalidInput("unsupported modulator order " + std::to_string(order));
  }
  return 7 * order + 1;
}

}  // namespace multimax
