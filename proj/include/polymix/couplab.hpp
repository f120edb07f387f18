#pragma once

// Finite-chain laboratory: minorization, Nummelin splitting, split-chain
// coupling against exact total variation, kernel dominance, and coupling of
// two delayed renewal processes.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "polymix/rng.hpp"
#include "polymix/tails.hpp"

namespace polymix::couplab {

using Vector = std::vector<double>;
using Matrix = std::vector<Vector>;

inline constexpr double kRowTolerance = 1e-12;

struct DiscreteChain {
  std::vector<std::string> states;
  Matrix kernel;                   // row-major, row-stochastic
  std::vector<std::size_t> refset;  // indices into states, sorted, unique
  double eta = 0.0;
  Vector theta;

  std::size_t size() const { return states.size(); }
  bool in_refset(std::size_t i) const;
  /// Throws std::invalid_argument naming the first violation: shape, row sums,
  /// eta range, theta normalization, or kernel(x,y) < eta theta(y) on x in refset.
  void validate() const;
};

/// Component-wise row minimum over the refset: nu(y) = min_x P(x,y),
/// eta = sum nu, theta = nu / eta. Throws when eta = 0.
std::pair<double, Vector> default_minorization(const Matrix& kernel,
                                               const std::vector<std::size_t>& refset);

/// Assemble and validate; the minorization is computed when `eta` is absent.
DiscreteChain make_chain(std::vector<std::string> states, Matrix kernel,
                         std::vector<std::size_t> refset, std::optional<double> eta = std::nullopt,
                         std::optional<Vector> theta = std::nullopt);

/// Build from JSON text: {"states": [...], "kernel": [[...]], "refset": [names],
/// optional "eta", "theta"}.
DiscreteChain chain_from_json(const std::string& text);
std::string chain_to_json(const DiscreteChain& chain);

/// Extended space: index i < n is X (x in refset meaning its c0 copy), index
/// n + j is the c1 copy of refset[j].
struct SplitChainSpec {
  std::size_t n_base = 0;
  std::vector<std::size_t> refset;
  double eta = 0.0;
  Matrix kernel;  // (n + |c|) x (n + |c|)

  std::size_t size() const { return n_base + refset.size(); }
  bool is_atom(std::size_t extended) const { return extended >= n_base; }
  /// Extended index of the c1 copy of base state x (refset member).
  std::size_t atom_index(std::size_t x) const;
  /// mu* on the extended space.
  Vector split_measure(const Vector& mu) const;
  /// Marginal on X: mu(y) = mu*(y0) + mu*(y1).
  Vector project(const Vector& mu_star) const;
};

/// Kernel per the three cases: outside c, (P(x,.))*; on c0,
/// [(P(x,.))* - eta theta*] / (1 - eta); on c1, theta*. With eta = 1 the c0
/// rows carry no mass and are set to theta* to stay stochastic.
SplitChainSpec split_chain(const DiscreteChain& chain);

/// P(x,.) recovered from the split kernel: project(delta_x* P~).
Matrix project_kernel(const SplitChainSpec& split);

/// ||mu P^n - nu P^n||_TV (half L1) for n = 0..n_max.
Vector exact_tv_curve(const DiscreteChain& chain, const Vector& mu, const Vector& nu,
                      std::uint64_t n_max);

/// Distribution from an index with mass 1.
Vector point_mass(std::size_t n, std::size_t i);

struct CouplingResult {
  std::uint64_t n_max = 0;
  std::uint64_t n_samples = 0;
  std::vector<std::uint64_t> t_hist;  // t_hist[t] = #{T = t}, t <= n_max
  std::uint64_t censored = 0;         // T > n_max
  tails::SurvivalCurve survival;      // P[T > n], n = 0..n_max
};

/// Two independent split chains from mu* and nu* until both sit in c1; from
/// there one common theta* draw merges them, so T = 1 + (first n with both
/// in c1) and T >= 1. Sample i on RngStream(seed, i).
CouplingResult simulate_split_coupling(const DiscreteChain& chain, const Vector& mu,
                                       const Vector& nu, std::uint64_t n_max,
                                       std::uint64_t n_samples, std::uint64_t seed,
                                       unsigned workers, double z = 1.96);

struct CouplingCheck {
  Vector tv_exact;
  CouplingResult coupling;
  std::vector<std::uint64_t> violations;  // n where TV > 2 (p~ + halfwidth)
  bool ok() const { return violations.empty(); }
};

CouplingCheck coupling_inequality_check(const DiscreteChain& chain, const Vector& mu,
                                        const Vector& nu, std::uint64_t n_max,
                                        std::uint64_t n_samples, std::uint64_t seed,
                                        unsigned workers);

/// `n,tv_exact,p_T_gt_n,halfwidth`.
std::string coupling_csv(const CouplingCheck& check);

struct Dominance {
  std::size_t x_star = 0;
  double delta = 0.0;
};

/// delta(x*) = min over x in c and y of P(x*,y)/P(x,y), where P(x,y) = 0
/// imposes no constraint and P(x*,y) = 0 < P(x,y) gives 0. Returns the best
/// x* (first on ties) when its delta is positive.
std::optional<Dominance> dominate_check(const DiscreteChain& chain);

/// Random chain on n states whose refset rows share a component eta theta.
DiscreteChain random_minorized_chain(std::size_t n, RngStream& rng);

// --- renewal coupling ------------------------------------------------------

/// Law on {0, 1, 2, ...}: a pmf indexed by value, or a tail n -> P[Z > n].
struct IntegerLaw {
  Vector pmf;
  std::function<double(std::uint64_t)> tail;

  static IntegerLaw point(std::uint64_t v);
  static IntegerLaw from_pmf(Vector pmf);
  static IntegerLaw from_tail(std::function<double(std::uint64_t)> tail);
  /// Z = min{n >= 0 : P[Z > n] < u}.
  std::uint64_t sample(RngStream& rng) const;
  double tail_at(std::uint64_t n) const;
};

struct RenewalSpec {
  IntegerLaw y;        // inter-renewal law, Y >= 1
  IntegerLaw delay;    // Y0
  IntegerLaw delay_p;  // Y0'
  /// Throws unless the pmf sums to 1, P[Y = 0] = 0 and the support of Y has
  /// gcd 1 (checked on n <= 10^4 for tail-specified laws).
  void validate() const;
};

/// First common epoch of S_n = Y0 + Y1 + ... and S'_n = Y0' + Y1' + ...
std::uint64_t coupling_time_sample(const RenewalSpec& spec, RngStream& rng);

}  // namespace polymix::couplab
