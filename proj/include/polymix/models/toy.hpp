#pragma once

// Small test chains with closed-form behaviour.

#include <cstdint>
#include <vector>

#include "polymix/engine.hpp"
#include "polymix/rng.hpp"

namespace polymix::models {

/// Frozen rates: the state only counts how often each clock has rung.
class ConstantRatesModel {
 public:
  using State = std::vector<std::uint64_t>;

  explicit ConstantRatesModel(std::vector<double> rates) : rates_(std::move(rates)) {}

  void rates(const State&, engine::EventRates& out) const {
    for (double r : rates_) out.push(r);
  }
  void apply(State& s, std::size_t clock, RngStream&) const {
    if (s.size() < rates_.size()) s.resize(rates_.size(), 0);
    ++s[clock];
  }
  State initial() const { return State(rates_.size(), 0); }

 private:
  std::vector<double> rates_;
};

/// Two-state switch. Clock 0 (rate `leave`) fires only while inside, clock 1
/// (rate `enter`) only while outside. `label` is carried along untouched.
struct TelegraphState {
  bool inside = true;
  double label = 0.0;
  friend bool operator==(const TelegraphState&, const TelegraphState&) = default;
};

struct InsideSet {
  bool contains(const TelegraphState& s) const { return s.inside; }
};

class TelegraphModel {
 public:
  using State = TelegraphState;

  TelegraphModel(double leave, double enter) : leave_(leave), enter_(enter) {}

  void rates(const State& s, engine::EventRates& out) const {
    out.push(s.inside ? leave_ : 0.0);
    out.push(s.inside ? 0.0 : enter_);
  }
  void apply(State& s, std::size_t, RngStream&) const { s.inside = !s.inside; }

  double leave_rate() const { return leave_; }
  double enter_rate() const { return enter_; }

 private:
  double leave_;
  double enter_;
};

}  // namespace polymix::models
