#pragma once

// Uniform per-model hooks used by the generic scan / stationary / cli layers:
// naming, state text encoding, sweep coordinates, ordering keys and named
// observables.

#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "polymix/models/countdown.hpp"
#include "polymix/models/rhm.hpp"
#include "polymix/models/see.hpp"
#include "polymix/models/toy.hpp"

namespace polymix::models {

template <class State>
struct Observable {
  std::string name;
  std::function<double(const State&)> fn;
  double operator()(const State& s) const { return fn(s); }
};

template <class Model>
struct ModelTraits;

/// Coordinates are named `<letter><site>` with 1-based sites, e.g. "e2".
struct Coordinate {
  char kind = 'e';
  std::size_t site = 0;  // 0-based
};
Coordinate parse_coordinate(std::string_view name, std::string_view allowed_kinds,
                            std::size_t n_sites);

template <>
struct ModelTraits<SeeModel> {
  static constexpr std::string_view name = "see";
  static std::string encode(const SeeState& s) { return encode_see(s); }
  static SeeState decode(std::string_view line) { return decode_see(line); }
  static std::vector<double> key(const SeeState& s) { return s.energies; }
  static void set_coordinate(SeeState& s, std::string_view coord, double value);
  /// energy:<i>, total_energy, constant:<c>
  static Observable<SeeState> observable(std::string_view spec);
};

template <>
struct ModelTraits<RhmModel> {
  static constexpr std::string_view name = "rhm";
  static std::string encode(const RhmState& s) { return encode_rhm(s); }
  static RhmState decode(std::string_view line) { return decode_rhm(line); }
  /// Per site: (k, s, sorted particle energies...).
  static std::vector<double> key(const RhmState& s);
  /// s<i>: stored energy; x<i>: every particle energy at the site; k<i>:
  /// particle count (new particles copy the site's last particle energy, or 1).
  static void set_coordinate(RhmState& s, std::string_view coord, double value);
  /// site_energy:<i>, stored:<i>, count:<i>, total_energy, constant:<c>
  static Observable<RhmState> observable(std::string_view spec);
};

template <>
struct ModelTraits<CountdownModel> {
  static constexpr std::string_view name = "countdown";
  static std::string encode(const CountdownState& s) { return encode_countdown(s); }
  static CountdownState decode(std::string_view line) { return decode_countdown(line); }
  static std::vector<double> key(const CountdownState& s) {
    return {static_cast<double>(s.level), s.hold};
  }
  /// level: moves to the level with its hold unchanged.
  static void set_coordinate(CountdownState& s, std::string_view coord, double value);
  /// at_atom, level_le:<L>, level, constant:<c>
  static Observable<CountdownState> observable(std::string_view spec);
};

template <>
struct ModelTraits<TelegraphModel> {
  static constexpr std::string_view name = "telegraph";
  static std::string encode(const TelegraphState& s);
  static TelegraphState decode(std::string_view line);
  static std::vector<double> key(const TelegraphState& s) {
    return {s.inside ? 1.0 : 0.0, s.label};
  }
  /// label: the passive coordinate.
  static void set_coordinate(TelegraphState& s, std::string_view coord, double value);
  static Observable<TelegraphState> observable(std::string_view spec);
};

}  // namespace polymix::models
