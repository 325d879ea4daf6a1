// Value types for score vectors, simplex outputs and modulator parameters.
#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "multimax/error.hpp"

namespace multimax {

/// Tolerance on |sum(p) - 1| accepted by Simplex.
inline constexpr double kSimplexSumTolerance = 1e-12;

/// A finite logit vector with at least two entries.
class Scores {
 public:
  explicit Scores(std::vector<double> entries) : entries_(std::move(entries)) {
    if (entries_.size() < 2) {
      throw InvalidInput("scores need at least 2 entries, got " + std::to_string(entries_.size()));
    }
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      if (!std::isfinite(entries_[i])) {
        throw InvalidInput("score entry " + std::to_string(i) + " is not finite");
      }
    }
  }
  Scores(std::initializer_list<double> entries) : Scores(std::vector<double>(entries)) {}

  std::size_t size() const noexcept { return entries_.size(); }
  double operator[](std::size_t i) const noexcept { return entries_[i]; }
  std::span<const double> values() const noexcept { return entries_; }
  const std::vector<double>& vector() const noexcept { return entries_; }
  auto begin() const noexcept { return entries_.begin(); }
  auto end() const noexcept { return entries_.end(); }

 private:
  std::vector<double> entries_;
};

/// Temperature divisor: softmax uses exp(x / tau). The inverse t = 1 / tau is
/// the multiplier form.
class Temperature {
 public:
  explicit Temperature(double tau = 1.0) : tau_(tau) {
    if (!(tau > 0.0) || !std::isfinite(tau)) {
      throw InvalidTemperature("tau must be finite and > 0, got " + std::to_string(tau));
    }
  }
  static Temperature from_inverse(double t) { return Temperature(1.0 / t); }

  double tau() const noexcept { return tau_; }
  double inverse() const noexcept { return 1.0 / tau_; }

 private:
  double tau_;
};

/// Nonnegative vector summing to one.
class Simplex {
 public:
  explicit Simplex(std::vector<double> probs) : probs_(std::move(probs)) {
    double sum = 0.0;
    for (std::size_t i = 0; i < probs_.size(); ++i) {
      if (!(probs_[i] >= 0.0) || !std::isfinite(probs_[i])) {
        throw NumericalFailure("simplex entry " + std::to_string(i) + " is negative or not finite");
      }
      sum += probs_[i];
    }
    if (std::abs(sum - 1.0) > kSimplexSumTolerance) {
      throw NumericalFailure("simplex entries sum to " + std::to_string(sum));
    }
  }

  std::size_t size() const noexcept { return probs_.size(); }
  double operator[](std::size_t i) const noexcept { return probs_[i]; }
  std::span<const double> values() const noexcept { return probs_; }
  const std::vector<double>& vector() const noexcept { return probs_; }
  auto begin() const noexcept { return probs_.begin(); }
  auto end() const noexcept { return probs_.end(); }

 private:
  std::vector<double> probs_;
};

/// Breakpoints and temperature factors of one polynomial order of the
/// modulator. Entries below `b` are rescaled by `tb`, entries above `d` by `td`.
struct ModulatorOrder {
  double tb = 1.0;
  double td = 1.0;
  double b = 0.0;
  double d = 0.0;

  friend bool operator==(const ModulatorOrder&, const ModulatorOrder&) = default;
};

/// Parameters of the MultiMax modulator; `orders[n - 1]` holds order n.
/// Values are unconstrained apart from finiteness: learned tables contain
/// negative temperature factors and b > d.
struct ModulatorParams {
  std::vector<ModulatorOrder> orders;

  static constexpr std::size_t kMaxOrder = 2;

  /// Parameters with every temperature factor at 1, which make the modulator
  /// the identity map.
  static ModulatorParams identity(std::size_t order = 2) {
    return ModulatorParams{std::vector<ModulatorOrder>(order)};
  }

  /// First-order parameters that only rescale entries below `b`.
  static ModulatorParams small_entries_only(double tb, double b) {
    return ModulatorParams{{ModulatorOrder{tb, 1.0, b, 0.0}}};
  }

  std::size_t order() const noexcept { return orders.size(); }

  void validate() const {
    if (orders.empty() || orders.size() > kMaxOrder) {
      throw InvalidInput("modulator order must be 1 or 2, got " + std::to_string(orders.size()));
    }
    for (const auto& o : orders) {
      if (!std::isfinite(o.tb) || !std::isfinite(o.td) || !std::isfinite(o.b) ||
          !std::isfinite(o.d)) {
        throw InvalidInput("modulator parameters must be finite");
      }
    }
  }

  friend bool operator==(const ModulatorParams&, const ModulatorParams&) = default;
};

namespace spec {
struct SoftMax {
  Temperature temperature{1.0};
};
struct MultiMax {
  ModulatorParams params = ModulatorParams::identity();
};
struct SparseMax {};
struct EntMax15 {};
struct EvSoftMax {};
}  // namespace spec

/// Tagged choice of reweighting function.
using ReweightSpec =
    std::variant<spec::SoftMax, spec::MultiMax, spec::SparseMax, spec::EntMax15, spec::EvSoftMax>;

inline std::string name_of(const ReweightSpec& s) {
  struct {
    std::string operator()(const spec::SoftMax&) const { return "softmax"; }
    std::string operator()(const spec::MultiMax&) const { return "multimax"; }
    std::string operator()(const spec::SparseMax&) const { return "sparsemax"; }
    std::string operator()(const spec::EntMax15&) const { return "entmax15"; }
    std::string operator()(const spec::EvSoftMax&) const { return "ev_softmax"; }
  } visitor;
  return std::visit(visitor, s);
}

}  // namespace multimax
