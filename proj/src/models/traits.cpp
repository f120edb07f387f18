#include "polymix/models/traits.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "polymix/format.hpp"

namespace polymix::models {

namespace {

[[noreturn]] void unknown_observable(std::string_view model, std::string_view spec) {
  throw std::invalid_argument(std::string(model) + ": unknown observable '" + std::string(spec) + "'");
}

// "name:arg" -> (name, arg); arg empty when absent.
std::pair<std::string_view, std::string_view> split_spec(std::string_view spec) {
  const auto colon = spec.find(':');
  if (colon == std::string_view::npos) return {spec, {}};
  return {spec.substr(0, colon), spec.substr(colon + 1)};
}

std::size_t parse_site(std::string_view arg, std::size_t n_sites, std::string_view spec) {
  const double v = parse_double(arg);
  if (v < 1.0 || v != std::floor(v) || (n_sites > 0 && v > static_cast<double>(n_sites))) {
    throw std::invalid_argument("site index out of range in '" + std::string(spec) + "'");
  }
  return static_cast<std::size_t>(v) - 1;
}

template <class State>
Observable<State> constant_observable(std::string_view spec, std::string_view arg) {
  const double c = parse_double(arg);
  return {std::string(spec), [c](const State&) { return c; }};
}

}  // namespace

Coordinate parse_coordinate(std::string_view name, std::string_view allowed_kinds,
                            std::size_t n_sites) {
  if (name.size() < 2 || allowed_kinds.find(name[0]) == std::string_view::npos) {
    throw std::invalid_argument("unknown coordinate '" + std::string(name) + "'");
  }
  return {name[0], parse_site(name.substr(1), n_sites, name)};
}

// --- SEE ---------------------------------------------------------------------

void ModelTraits<SeeModel>::set_coordinate(SeeState& s, std::string_view coord, double value) {
  const auto c = parse_coordinate(coord, "e", s.energies.size());
  if (!(value > 0.0)) throw std::invalid_argument("SEE energies must be > 0");
  s.energies[c.site] = value;
}

Observable<SeeState> ModelTraits<SeeModel>::observable(std::string_view spec) {
  const auto [head, arg] = split_spec(spec);
  if (head == "energy") {
    const std::size_t i = parse_site(arg, 0, spec);
    return {std::string(spec), [i](const SeeState& s) { return s.energies.at(i); }};
  }
  if (head == "total_energy") {
    return {std::string(spec), [](const SeeState& s) {
              double e = 0.0;
              for (double x : s.energies) e += x;
              return e;
            }};
  }
  if (head == "constant") return constant_observable<SeeState>(spec, arg);
  unknown_observable(name, spec);
}

// --- RHM ---------------------------------------------------------------------

std::vector<double> ModelTraits<RhmModel>::key(const RhmState& s) {
  std::vector<double> k;
  for (const auto& site : s.sites) {
    k.push_back(static_cast<double>(site.particles.size()));
    k.push_back(site.stored);
    auto xs = site.particles;
    std::sort(xs.begin(), xs.end());
    k.insert(k.end(), xs.begin(), xs.end());
  }
  return k;
}

void ModelTraits<RhmModel>::set_coordinate(RhmState& s, std::string_view coord, double value) {
  const auto c = parse_coordinate(coord, "skx", s.sites.size());
  auto& site = s.sites[c.site];
  switch (c.kind) {
    case 's':
      if (!(value >= 0.0)) throw std::invalid_argument("RHM stored energy must be >= 0");
      site.stored = value;
      break;
    case 'x':
      if (!(value > 0.0)) throw std::invalid_argument("RHM particle energies must be > 0");
      for (auto& x : site.particles) x = value;
      break;
    case 'k': {
      if (value < 0.0 || value != std::floor(value)) {
        throw std::invalid_argument("RHM particle count must be a nonnegative integer");
      }
      const double fill = site.particles.empty() ? 1.0 : site.particles.back();
      site.particles.resize(static_cast<std::size_t>(value), fill);
      break;
    }
  }
}

Observable<RhmState> ModelTraits<RhmModel>::observable(std::string_view spec) {
  const auto [head, arg] = split_spec(spec);
  if (head == "site_energy" || head == "stored" || head == "count") {
    const std::size_t i = parse_site(arg, 0, spec);
    if (head == "stored") return {std::string(spec), [i](const RhmState& s) { return s.sites.at(i).stored; }};
    if (head == "count") {
      return {std::string(spec),
              [i](const RhmState& s) { return static_cast<double>(s.sites.at(i).particles.size()); }};
    }
    return {std::string(spec), [i](const RhmState& s) {
              const auto& site = s.sites.at(i);
              double e = site.stored;
              for (double x : site.particles) e += x;
              return e;
            }};
  }
  if (head == "total_energy") return {std::string(spec), [](const RhmState& s) { return s.total_energy(); }};
  if (head == "constant") return constant_observable<RhmState>(spec, arg);
  unknown_observable(name, spec);
}

// --- countdown ---------------------------------------------------------------

void ModelTraits<CountdownModel>::set_coordinate(CountdownState& s, std::string_view coord,
                                                 double value) {
  if (coord != "level") throw std::invalid_argument("countdown: unknown coordinate '" + std::string(coord) + "'");
  if (value < 0.0 || value != std::floor(value)) {
    throw std::invalid_argument("countdown: level must be a nonnegative integer");
  }
  s.level = static_cast<std::int64_t>(value);
}

Observable<CountdownState> ModelTraits<CountdownModel>::observable(std::string_view spec) {
  const auto [head, arg] = split_spec(spec);
  if (head == "at_atom") {
    return {std::string(spec), [](const CountdownState& s) { return s.level == 0 ? 1.0 : 0.0; }};
  }
  if (head == "level_le") {
    const double cap = parse_double(arg);
    return {std::string(spec),
            [cap](const CountdownState& s) { return static_cast<double>(s.level) <= cap ? 1.0 : 0.0; }};
  }
  if (head == "level") {
    return {std::string(spec), [](const CountdownState& s) { return static_cast<double>(s.level); }};
  }
  if (head == "constant") return constant_observable<CountdownState>(spec, arg);
  unknown_observable(name, spec);
}

// --- telegraph ---------------------------------------------------------------

std::string ModelTraits<TelegraphModel>::encode(const TelegraphState& s) {
  return std::string(s.inside ? "1" : "0") + "," + format_shortest(s.label);
}

TelegraphState ModelTraits<TelegraphModel>::decode(std::string_view line) {
  const auto f = split(line, ',');
  if (f.size() != 2) throw std::invalid_argument("telegraph: expected 'inside,label'");
  return {parse_double(f[0]) != 0.0, parse_double(f[1])};
}

void ModelTraits<TelegraphModel>::set_coordinate(TelegraphState& s, std::string_view coord,
                                                 double value) {
  if (coord != "label") throw std::invalid_argument("telegraph: unknown coordinate '" + std::string(coord) + "'");
  s.label = value;
}

Observable<TelegraphState> ModelTraits<TelegraphModel>::observable(std::string_view spec) {
  const auto [head, arg] = split_spec(spec);
  if (head == "inside") {
    return {std::string(spec), [](const TelegraphState& s) { return s.inside ? 1.0 : 0.0; }};
  }
  if (head == "constant") return constant_observable<TelegraphState>(spec, arg);
  unknown_observable(name, spec);
}

}  // namespace polymix::models
