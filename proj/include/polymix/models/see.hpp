#pragma once

// Stochastic energy exchange chain: N sites with energies e_i > 0, one
// exponential clock per adjacency plus one per bath. Clock 0 couples the left
// bath to site 1, clock i (1 <= i < N) couples sites i and i+1, and clock N
// couples site N to the right bath.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "polymix/engine.hpp"
#include "polymix/rng.hpp"

namespace polymix::models {

struct SeeParams {
  int n_sites = 3;
  double T_L = 1.0;
  double T_R = 2.0;

  void validate() const;
};

struct SeeState {
  std::vector<double> energies;

  bool valid() const;
  friend bool operator==(const SeeState&, const SeeState&) = default;
};

/// Closed box [lo, hi]^N on the site energies.
struct SeeBox {
  double lo = 0.1;
  double hi = 100.0;

  bool contains(const SeeState& s) const {
    for (double e : s.energies) {
      if (e < lo || e > hi) return false;
    }
    return true;
  }
};

/// Deterministic part of an exchange, given the split fraction p in (0,1) and
/// the bath draw rho (ignored for interior clocks).
void see_exchange(SeeState& s, std::size_t clock, double p, double rho_L, double rho_R);

class SeeModel {
 public:
  using State = SeeState;

  explicit SeeModel(SeeParams params);

  void rates(const State& s, engine::EventRates& out) const {
    const auto& e = s.energies;
    const std::size_t n = e.size();
    out.push(std::sqrt(std::min(params_.T_L, e[0])));
    for (std::size_t i = 0; i + 1 < n; ++i) out.push(std::sqrt(std::min(e[i], e[i + 1])));
    out.push(std::sqrt(std::min(params_.T_R, e[n - 1])));
  }

  void apply(State& s, std::size_t clock, RngStream& rng) const;

  const SeeParams& params() const { return params_; }
  std::size_t n_clocks() const { return static_cast<std::size_t>(params_.n_sites) + 1; }

 private:
  SeeParams params_;
};

engine::EventRates see_rates(const SeeState& s, const SeeParams& params);

/// Independent Exponential(mean (T_L+T_R)/2) energies.
SeeState see_initial_draw(const SeeParams& params, RngStream& rng);

/// Comma-separated energies, shortest round-trip form.
std::string encode_see(const SeeState& s);
SeeState decode_see(std::string_view line);

}  // namespace polymix::models
