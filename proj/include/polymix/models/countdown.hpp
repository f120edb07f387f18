#pragma once

// Countdown oracle: a jump process whose return time to level 0 has a known
// power-law tail. At level 0 an excursion length V with
// P[V > s] = min(1, C s^-beta) is drawn; the chain moves to level ceil(V) and
// then steps down one level per holding period. The first period is shortened
// so that the excursion lasts exactly V * holding; every later period lasts
// exactly `holding`.

#include <cstdint>
#include <string>
#include <string_view>

#include "polymix/engine.hpp"
#include "polymix/rng.hpp"

namespace polymix::models {

struct CountdownParams {
  double C = 4.0;
  double beta = 2.0;
  double holding = 1.0;

  void validate() const;
};

struct CountdownState {
  std::int64_t level = 0;
  double hold = 1.0;  // remaining duration of the current level

  friend bool operator==(const CountdownState&, const CountdownState&) = default;
};

/// Levels 0..max_level.
struct CountdownRefSet {
  std::int64_t max_level = 0;
  bool contains(const CountdownState& s) const { return s.level <= max_level; }
};

/// Excursion length in units of `holding`.
double countdown_excursion(const CountdownParams& p, RngStream& rng);

/// Discrete step: at level 0 jump to ceil(V); elsewhere decrement.
std::int64_t countdown_step(std::int64_t level, const CountdownParams& p, RngStream& rng);

/// P[Y > n] for the integer jump target Y = ceil(V); equals min(1, C n^-beta).
double countdown_level_tail(const CountdownParams& p, double n);

/// Exact survival of the return time started from the state right after
/// leaving level 0: P[tau > t] = min(1, C (t / holding)^-beta).
double countdown_return_tail(const CountdownParams& p, double t);

class CountdownModel {
 public:
  using State = CountdownState;

  explicit CountdownModel(CountdownParams params);

  void rates(const State& s, engine::EventRates& out) const { out.push(1.0 / s.hold); }
  double holding_time(const State& s, double, RngStream&) const { return s.hold; }
  void apply(State& s, std::size_t clock, RngStream& rng) const;

  /// Level `level` with a full holding period.
  State at_level(std::int64_t level) const { return {level, params_.holding}; }
  /// State right after leaving level 0.
  State atom_exit(RngStream& rng) const;

  const CountdownParams& params() const { return params_; }

 private:
  CountdownParams params_;
};

std::string encode_countdown(const CountdownState& s);
CountdownState decode_countdown(std::string_view line);

}  // namespace polymix::models
