#pragma once

// Gamma over the reference set: one-dimensional sweeps with monotonicity
// verdicts, lattice scans with a candidate maximizer, and a larger
// confirmation run at the candidate.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "polymix/format.hpp"
#include "polymix/models/traits.hpp"
#include "polymix/rng.hpp"
#include "polymix/tail_run.hpp"
#include "polymix/tails.hpp"

namespace polymix::scan {

template <class State>
struct ScanPoint {
  State state;
  std::string encoding;
  bool estimated = false;  // false when no reliable grid point exists
  tails::GammaEstimate gamma;

  double ci_low() const { return gamma.value - 1.96 * gamma.std_dev; }
  double ci_high() const { return gamma.value + 1.96 * gamma.std_dev; }
};

enum class Trend { Increasing, Decreasing, Flat, NonMonotone };

inline const char* trend_name(Trend t) {
  switch (t) {
    case Trend::Increasing: return "increasing";
    case Trend::Decreasing: return "decreasing";
    case Trend::Flat: return "flat";
    case Trend::NonMonotone: return "non-monotone";
  }
  return "?";
}

struct MonotoneVerdict {
  Trend trend = Trend::NonMonotone;
  std::size_t overlap_inversions = 0;   // steps against the trend with overlapping CIs
  std::size_t disjoint_inversions = 0;  // steps against the trend with disjoint CIs
};

/// gamma as a function of the swept value, in the order given.
template <class State>
struct SweepResult {
  std::string coordinate;
  std::vector<double> values;
  std::vector<ScanPoint<State>> points;
  MonotoneVerdict verdict;
};

/// Trend of point estimates along the sweep. Flat when every CI overlaps
/// every other; otherwise the sign of last - first decides the direction, and
/// the sequence counts as monotone with at most one inversion whose CIs
/// overlap and none whose CIs are disjoint.
template <class State>
MonotoneVerdict monotone_verdict(const std::vector<ScanPoint<State>>& pts) {
  MonotoneVerdict v;
  if (pts.empty()) return v;
  double max_low = -INFINITY, min_high = INFINITY;
  for (const auto& p : pts) {
    max_low = std::max(max_low, p.ci_low());
    min_high = std::min(min_high, p.ci_high());
  }
  if (max_low <= min_high) {
    v.trend = Trend::Flat;
    return v;
  }
  const bool up = pts.back().gamma.value >= pts.front().gamma.value;
  for (std::size_t k = 1; k < pts.size(); ++k) {
    const auto& a = pts[k - 1];
    const auto& b = pts[k];
    const bool against = up ? b.gamma.value < a.gamma.value : b.gamma.value > a.gamma.value;
    if (!against) continue;
    const bool overlap = a.ci_low() <= b.ci_high() && b.ci_low() <= a.ci_high();
    ++(overlap ? v.overlap_inversions : v.disjoint_inversions);
  }
  const bool monotone = v.disjoint_inversions == 0 && v.overlap_inversions <= 1;
  v.trend = monotone ? (up ? Trend::Increasing : Trend::Decreasing) : Trend::NonMonotone;
  return v;
}

/// Tail run plus gamma at one initial state.
template <engine::JumpModel M, engine::RefSetFor<typename M::State> R>
ScanPoint<typename M::State> estimate_point(const M& model, const R& refset,
                                            const typename M::State& state,
                                            const tails::TailConfig& cfg, std::uint64_t seed,
                                            unsigned workers) {
  ScanPoint<typename M::State> p{state, std::string(models::ModelTraits<M>::encode(state)), false, {}};
  const auto tally = tails::run_passage_tally(model, refset, tails::fixed_state(state), cfg, seed, workers);
  try {
    p.gamma = tails::gamma_from_tally(tally, cfg.beta, cfg.h, cfg.gamma_options());
    p.estimated = true;
  } catch (const std::invalid_argument&) {
  }
  return p;
}

/// Point j runs on derive_seed(seed, "sweep", j).
template <engine::JumpModel M, engine::RefSetFor<typename M::State> R>
SweepResult<typename M::State> sweep_1d(const M& model, const R& refset,
                                        const typename M::State& base, const std::string& coordinate,
                                        const std::vector<double>& values,
                                        const tails::TailConfig& cfg, std::uint64_t seed,
                                        unsigned workers) {
  using Traits = models::ModelTraits<M>;
  if (values.empty()) throw std::invalid_argument("sweep_1d: no values");
  std::vector<typename M::State> states;
  for (double v : values) {
    auto s = base;
    Traits::set_coordinate(s, coordinate, v);
    if (!refset.contains(s)) {
      throw std::invalid_argument("sweep_1d: state " + Traits::encode(s) + " lies outside the reference set");
    }
    states.push_back(std::move(s));
  }
  SweepResult<typename M::State> out{coordinate, values, {}, {}};
  for (std::size_t j = 0; j < states.size(); ++j) {
    out.points.push_back(estimate_point(model, refset, states[j], cfg, derive_seed(seed, "sweep", j), workers));
  }
  out.verdict = monotone_verdict(out.points);
  return out;
}

/// n geometrically spaced values from lo to hi inclusive (n = 1 gives lo).
inline std::vector<double> geometric_values(double lo, double hi, std::size_t n) {
  if (!(lo > 0.0) || !(hi >= lo) || n < 1) throw std::invalid_argument("geometric_values: need 0 < lo <= hi, n >= 1");
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) {
    v[i] = n == 1 ? lo : lo * std::pow(hi / lo, static_cast<double>(i) / static_cast<double>(n - 1));
  }
  if (n > 1) v.back() = hi;
  return v;
}

struct LatticeAxis {
  std::string coordinate;
  std::vector<double> values;
};

template <class State>
struct Lattice {
  std::vector<State> states;
  std::vector<std::vector<std::size_t>> index;  // per state, value index on each axis
};

/// Cartesian product of the axes applied to `base`, first axis slowest.
/// States whose ordering keys coincide (e.g. permuted RHM particles) appear
/// once.
template <class Model>
Lattice<typename Model::State> build_lattice(const typename Model::State& base,
                                             const std::vector<LatticeAxis>& axes) {
  using Traits = models::ModelTraits<Model>;
  Lattice<typename Model::State> out;
  std::vector<std::vector<double>> seen;
  std::vector<std::size_t> idx(axes.size(), 0);
  for (const auto& a : axes) {
    if (a.values.empty()) throw std::invalid_argument("lattice axis '" + a.coordinate + "' has no values");
  }
  for (;;) {
    auto s = base;
    for (std::size_t d = 0; d < axes.size(); ++d) Traits::set_coordinate(s, axes[d].coordinate, axes[d].values[idx[d]]);
    auto key = Traits::key(s);
    if (std::find(seen.begin(), seen.end(), key) == seen.end()) {
      seen.push_back(std::move(key));
      out.states.push_back(std::move(s));
      out.index.push_back(idx);
    }
    std::size_t d = axes.size();
    if (d == 0) return out;
    while (true) {
      --d;
      if (++idx[d] < axes[d].values.size()) break;
      idx[d] = 0;
      if (d == 0) return out;
    }
  }
}

template <class State>
struct ScanReport {
  std::vector<ScanPoint<State>> points;
  std::vector<SweepResult<State>> sweeps;
  std::size_t candidate_index = 0;
  bool separated = false;  // candidate CI disjoint from every other CI
  bool confirmed = false;
  std::optional<double> updated_beta;

  const ScanPoint<State>& candidate() const { return points.at(candidate_index); }
};

/// Index of the largest gamma; ties go to the lexicographically smallest key.
template <class Model>
std::size_t argmax_point(const std::vector<ScanPoint<typename Model::State>>& pts) {
  using Traits = models::ModelTraits<Model>;
  if (pts.empty()) throw std::invalid_argument("argmax_point: no points");
  std::size_t best = 0;
  for (std::size_t k = 1; k < pts.size(); ++k) {
    const double a = pts[k].gamma.value, b = pts[best].gamma.value;
    if (a > b || (a == b && Traits::key(pts[k].state) < Traits::key(pts[best].state))) best = k;
  }
  return best;
}

template <class State>
bool is_separated(const std::vector<ScanPoint<State>>& pts, std::size_t best) {
  for (std::size_t k = 0; k < pts.size(); ++k) {
    if (k != best && pts[k].ci_high() >= pts[best].ci_low()) return false;
  }
  return true;
}

/// Point j runs on derive_seed(seed, "grid", j).
template <engine::JumpModel M, engine::RefSetFor<typename M::State> R>
ScanReport<typename M::State> grid_scan(const M& model, const R& refset,
                                        const std::vector<typename M::State>& lattice,
                                        const tails::TailConfig& cfg, std::uint64_t seed,
                                        unsigned workers) {
  using Traits = models::ModelTraits<M>;
  if (lattice.empty()) throw std::invalid_argument("grid_scan: empty lattice");
  for (const auto& s : lattice) {
    if (!refset.contains(s)) {
      throw std::invalid_argument("grid_scan: lattice point " + Traits::encode(s) + " lies outside the reference set");
    }
  }
  ScanReport<typename M::State> rep;
  for (std::size_t j = 0; j < lattice.size(); ++j) {
    rep.points.push_back(estimate_point(model, refset, lattice[j], cfg, derive_seed(seed, "grid", j), workers));
  }
  rep.candidate_index = argmax_point<M>(rep.points);
  rep.separated = is_separated(rep.points, rep.candidate_index);
  return rep;
}

/// For each axis, the scanned points on the lattice line through the
/// candidate along that axis, with their monotonicity verdict.
template <class State>
std::vector<SweepResult<State>> axis_sweeps(const ScanReport<State>& rep, const Lattice<State>& lattice,
                                            const std::vector<LatticeAxis>& axes) {
  std::vector<SweepResult<State>> out;
  const auto& best = lattice.index.at(rep.candidate_index);
  for (std::size_t d = 0; d < axes.size(); ++d) {
    SweepResult<State> sw;
    sw.coordinate = axes[d].coordinate;
    for (std::size_t v = 0; v < axes[d].values.size(); ++v) {
      for (std::size_t k = 0; k < lattice.index.size(); ++k) {
        const auto& ix = lattice.index[k];
        bool on_line = ix[d] == v;
        for (std::size_t e = 0; e < axes.size() && on_line; ++e) on_line = e == d || ix[e] == best[e];
        if (on_line) {
          sw.values.push_back(axes[d].values[v]);
          sw.points.push_back(rep.points[k]);
          break;
        }
      }
    }
    sw.verdict = monotone_verdict(sw.points);
    out.push_back(std::move(sw));
  }
  return out;
}

enum class Verdict { Confirmed, BetaUpdated, Unstable };

inline const char* verdict_name(Verdict v) {
  switch (v) {
    case Verdict::Confirmed: return "confirmed";
    case Verdict::BetaUpdated: return "beta-updated";
    case Verdict::Unstable: return "unstable";
  }
  return "?";
}

struct Confirmation {
  Verdict verdict = Verdict::Unstable;
  tails::GammaEstimate gamma;
  std::optional<tails::BatchedFit> fit;
  std::optional<double> updated_beta;  // set when the refit moves beta by > 2 stderr
  tails::TailAnalysis analysis;
};

/// Refit beta on the candidate's tally; when it moved by more than two
/// standard errors, gamma is recomputed with the refitted exponent.
inline Confirmation confirm_from_tally(const tails::PassageTally& tally, const tails::TailConfig& cfg) {
  Confirmation c;
  c.analysis = tails::analyse_tally(tally, cfg);
  c.fit = c.analysis.fit;
  double beta = cfg.beta;
  if (c.fit && std::abs(c.fit->fit.beta - cfg.beta) > 2.0 * c.fit->combined_std_err()) {
    c.updated_beta = c.fit->fit.beta;
    beta = c.fit->fit.beta;
  }
  std::optional<tails::GammaEstimate> g;
  try {
    g = tails::gamma_from_tally(tally, beta, cfg.h, cfg.gamma_options());
  } catch (const std::invalid_argument&) {
  }
  if (!g || !g->stabilized) {
    c.verdict = Verdict::Unstable;
    if (g) c.gamma = *g;
    return c;
  }
  c.gamma = *g;
  c.verdict = c.updated_beta ? Verdict::BetaUpdated : Verdict::Confirmed;
  return c;
}

/// Large-budget rerun at the candidate on derive_seed(seed, "confirm").
template <engine::JumpModel M, engine::RefSetFor<typename M::State> R>
Confirmation confirm_maximizer(const M& model, const R& refset, const typename M::State& candidate,
                               const tails::TailConfig& cfg, std::uint64_t seed, unsigned workers) {
  if (!refset.contains(candidate)) {
    throw std::invalid_argument("confirm_maximizer: candidate lies outside the reference set");
  }
  const auto tally = tails::run_passage_tally(model, refset, tails::fixed_state(candidate), cfg,
                                              derive_seed(seed, "confirm"), workers);
  return confirm_from_tally(tally, cfg);
}

template <class State>
void attach_confirmation(ScanReport<State>& rep, const Confirmation& c) {
  rep.confirmed = c.verdict == Verdict::Confirmed;
  rep.updated_beta = c.updated_beta;
}

// --- CSV -------------------------------------------------------------------

inline std::string csv_quote(const std::string& s) {
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

/// `state_encoding,gamma,gamma_sd,argmax_t,stabilized`; unestimated points
/// carry empty numeric fields.
template <class State>
std::string points_csv(const std::vector<ScanPoint<State>>& pts) {
  std::ostringstream os;
  os << "state_encoding,gamma,gamma_sd,argmax_t,stabilized\n";
  for (const auto& p : pts) {
    os << csv_quote(p.encoding) << ',';
    if (p.estimated) {
      os << format_double(p.gamma.value) << ',' << format_double(p.gamma.std_dev) << ','
         << format_double(p.gamma.argmax_time) << ',' << (p.gamma.stabilized ? "true" : "false");
    } else {
      os << ",,,false";
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace polymix::scan
