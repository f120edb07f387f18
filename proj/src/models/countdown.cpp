#include "polymix/models/countdown.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "polymix/format.hpp"

namespace polymix::models {

void CountdownParams::validate() const {
  if (!(C > 0.0)) throw std::invalid_argument("CountdownParams: C must be > 0");
  if (!(beta > 1.0)) throw std::invalid_argument("CountdownParams: beta must be > 1");
  if (!(holding > 0.0)) throw std::invalid_argument("CountdownParams: holding must be > 0");
}

double countdown_excursion(const CountdownParams& p, RngStream& rng) {
  return std::pow(p.C / rng.uniform_open(), 1.0 / p.beta);
}

std::int64_t countdown_step(std::int64_t level, const CountdownParams& p, RngStream& rng) {
  if (level < 0) throw std::invalid_argument("countdown_step: level must be >= 0");
  if (level > 0) return level - 1;
  return std::max<std::int64_t>(1, static_cast<std::int64_t>(std::ceil(countdown_excursion(p, rng))));
}

double countdown_level_tail(const CountdownParams& p, double n) {
  if (n <= 0.0) return 1.0;
  return std::min(1.0, p.C * std::pow(n, -p.beta));
}

double countdown_return_tail(const CountdownParams& p, double t) {
  if (t <= 0.0) return 1.0;
  return std::min(1.0, p.C * std::pow(t / p.holding, -p.beta));
}

CountdownModel::CountdownModel(CountdownParams params) : params_(params) { params_.validate(); }

void CountdownModel::apply(State& s, std::size_t, RngStream& rng) const {
  if (s.level > 0) {
    --s.level;
    s.hold = params_.holding;
    return;
  }
  const double v = countdown_excursion(params_, rng);
  s.level = std::max<std::int64_t>(1, static_cast<std::int64_t>(std::ceil(v)));
  s.hold = params_.holding * (v - static_cast<double>(s.level - 1));
  if (!(s.hold > 0.0)) s.hold = params_.holding;
}

CountdownState CountdownModel::atom_exit(RngStream& rng) const {
  State s = at_level(0);
  apply(s, 0, rng);
  return s;
}

std::string encode_countdown(const CountdownState& s) {
  return std::to_string(s.level) + "," + format_shortest(s.hold);
}

CountdownState decode_countdown(std::string_view line) {
  const auto fields = split(line, ',');
  if (fields.size() != 2) throw std::invalid_argument("decode_countdown: expected 'level,hold'");
  CountdownState s;
  const double level = parse_double(fields[0]);
  s.level = static_cast<std::int64_t>(level);
  s.hold = parse_double(fields[1]);
  if (static_cast<double>(s.level) != level || s.level < 0 || !(s.hold > 0.0)) {
    throw std::invalid_argument("decode_countdown: invalid state");
  }
  return s;
}

}  // namespace polymix::models
