#pragma once

// Random halves model: each site i carries a stored energy s_i >= 0 and an
// unordered collection of particles with energies x > 0. Every particle rings
// at rate (1+m) S sqrt(x); a ring is a jump to a neighbour with probability
// 1/(1+m) and a mix with the stored energy otherwise. The baths inject
// particles at constant rates rho_L (into site 1) and rho_R (into site N).
//
// Clock layout for a state with K particles: 0..K-1 are the particles in
// site-major storage order, K is the left injection, K+1 the right injection.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "polymix/engine.hpp"
#include "polymix/rng.hpp"

namespace polymix::models {

struct RhmParams {
  int n_sites = 3;
  double T_L = 1.0;
  double T_R = 2.0;
  double rho_L = 1.0;
  double rho_R = 1.0;
  double m = 1.0;
  double S = 1.0;

  void validate() const;
};

struct RhmSite {
  double stored = 0.0;
  std::vector<double> particles;

  friend bool operator==(const RhmSite&, const RhmSite&) = default;
};

struct RhmState {
  std::vector<RhmSite> sites;

  std::size_t particle_count() const;
  double total_energy() const;
  bool valid() const;
  friend bool operator==(const RhmState&, const RhmState&) = default;
};

/// Closed bounds on particle count, stored energy and particle energy, applied
/// site by site.
struct RhmBox {
  std::size_t k_max = 40;
  double s_lo = 0.0;
  double s_hi = 100.0;
  double x_lo = 0.1;
  double x_hi = 100.0;

  bool contains(const RhmState& s) const {
    for (const auto& site : s.sites) {
      if (site.particles.size() > k_max) return false;
      if (site.stored < s_lo || site.stored > s_hi) return false;
      for (double x : site.particles) {
        if (x < x_lo || x > x_hi) return false;
      }
    }
    return true;
  }
};

/// Mix particle j of `site` with the stored energy: (s', x') = (x u^2, s + x(1-u^2)).
void rhm_mix(RhmSite& site, std::size_t j, double u);
/// Move particle j of site i one step left or right; it leaves the chain when
/// the destination is a bath.
void rhm_jump(RhmState& s, std::size_t site, std::size_t j, bool to_left);

/// Draw from the density 2/(sqrt(pi) T^{3/2}) sqrt(x) exp(-x/T), i.e. Gamma(3/2, T).
double sample_injection_energy(double T, RngStream& rng);

class RhmModel {
 public:
  using State = RhmState;

  explicit RhmModel(RhmParams params);

  void rates(const State& s, engine::EventRates& out) const {
    const double scale = (1.0 + params_.m) * params_.S;
    for (const auto& site : s.sites) {
      for (double x : site.particles) out.push(scale * std::sqrt(x));
    }
    out.push(params_.rho_L);
    out.push(params_.rho_R);
  }

  void apply(State& s, std::size_t clock, RngStream& rng) const;

  const RhmParams& params() const { return params_; }

 private:
  RhmParams params_;
};

engine::EventRates rhm_rates(const RhmState& s, const RhmParams& params);

/// s_i ~ Uniform(0, 100), k_i ~ Poisson((rho_L+rho_R)/2), x ~ Exponential(mean (T_L+T_R)/2).
RhmState rhm_initial_draw(const RhmParams& params, RngStream& rng);

/// One site per `|`-separated field: `i: s; x1,x2,...` (1-based site index,
/// empty particle list allowed).
std::string encode_rhm(const RhmState& s);
RhmState decode_rhm(std::string_view line);

}  // namespace polymix::models
