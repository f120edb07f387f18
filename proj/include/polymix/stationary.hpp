#pragma once

// Numerical invariant measure by burn-in, time series of observable means,
// and correlation decay estimated by paired sampling from an ensemble.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "polymix/engine.hpp"
#include "polymix/farm.hpp"
#include "polymix/format.hpp"
#include "polymix/models/traits.hpp"
#include "polymix/rng.hpp"

namespace polymix::stationary {

template <class State>
struct Ensemble {
  std::string model;        // model id, e.g. "see"
  std::string params_json;  // model parameters as a single-line JSON object
  double burn_time = 0.0;
  std::uint64_t master_seed = 0;
  std::vector<State> states;

  std::size_t size() const { return states.size(); }
};

struct ObservableSeries {
  std::string name;
  std::vector<double> times;
  std::vector<double> means;
  std::vector<double> stderrs;  // 1.96 sd / sqrt(M)

  std::size_t size() const { return times.size(); }
  void check() const {
    if (means.size() != times.size() || stderrs.size() != times.size()) {
      throw std::logic_error("ObservableSeries: length mismatch");
    }
    for (double s : stderrs) {
      if (!(s >= 0.0)) throw std::logic_error("ObservableSeries: negative stderr");
    }
  }
};

/// Running mean / second central moment, mergeable in a fixed order.
struct Welford {
  std::uint64_t n = 0;
  double mean = 0.0;
  double m2 = 0.0;

  void add(double x) {
    ++n;
    const double d = x - mean;
    mean += d / static_cast<double>(n);
    m2 += d * (x - mean);
  }
  void merge(const Welford& o) {
    if (o.n == 0) return;
    if (n == 0) {
      *this = o;
      return;
    }
    const double na = static_cast<double>(n), nb = static_cast<double>(o.n);
    const double d = o.mean - mean;
    const double tot = na + nb;
    mean += d * nb / tot;
    m2 += o.m2 + d * d * na * nb / tot;
    n += o.n;
  }
  double variance() const { return n > 1 ? std::max(0.0, m2 / static_cast<double>(n - 1)) : 0.0; }
};

/// Running co-moment of a pair.
struct CoMoment {
  std::uint64_t n = 0;
  double mean_a = 0.0;
  double mean_b = 0.0;
  double c = 0.0;  // sum (a - mean_a)(b - mean_b)

  void add(double a, double b) {
    ++n;
    const double da = a - mean_a;
    mean_a += da / static_cast<double>(n);
    mean_b += (b - mean_b) / static_cast<double>(n);
    c += da * (b - mean_b);
  }
  void merge(const CoMoment& o) {
    if (o.n == 0) return;
    if (n == 0) {
      *this = o;
      return;
    }
    const double na = static_cast<double>(n), nb = static_cast<double>(o.n);
    const double tot = na + nb;
    const double da = o.mean_a - mean_a, db = o.mean_b - mean_b;
    c += o.c + da * db * na * nb / tot;
    mean_a += da * nb / tot;
    mean_b += db * nb / tot;
    n += o.n;
  }
  double covariance() const { return n > 1 ? c / static_cast<double>(n - 1) : 0.0; }
};

namespace detail {

inline void check_times(const std::vector<double>& times) {
  if (times.empty()) throw std::invalid_argument("time grid must be nonempty");
  double prev = 0.0;
  for (std::size_t k = 0; k < times.size(); ++k) {
    if (!(times[k] >= 0.0) || (k > 0 && !(times[k] > prev))) {
      throw std::invalid_argument("time grid must be nonnegative and strictly increasing");
    }
    prev = times[k];
  }
}

}  // namespace detail

/// State i: RngStream(seed, i) draws the initial state, then evolves it for
/// burn_time.
template <engine::JumpModel M, class Sampler>
Ensemble<typename M::State> burn_in(const M& model, const Sampler& sampler, double burn_time,
                                    std::uint64_t ensemble_size, std::uint64_t seed,
                                    unsigned workers) {
  using State = typename M::State;
  if (!(burn_time > 0.0)) throw std::invalid_argument("burn_in: burn_time must be > 0");
  if (ensemble_size < 1) throw std::invalid_argument("burn_in: ensemble_size must be >= 1");
  const auto plan = farm::ChunkPlan::for_items(ensemble_size, 64);
  auto parts = farm::run_chunks(
      plan, workers, std::vector<State>{},
      [&](std::uint64_t begin, std::uint64_t end, std::vector<State>& out) {
        out.reserve(end - begin);
        for (std::uint64_t i = begin; i < end; ++i) {
          RngStream rng(seed, i);
          engine::Path<M> path(model, sampler(i, rng), rng);
          path.advance_to(burn_time);
          out.push_back(path.state());
        }
      });
  Ensemble<State> ens;
  ens.model = std::string(models::ModelTraits<M>::name);
  ens.burn_time = burn_time;
  ens.master_seed = seed;
  ens.states.reserve(ensemble_size);
  for (auto& p : parts) {
    for (auto& s : p) ens.states.push_back(std::move(s));
  }
  return ens;
}

/// Mean of the observable at each grid time over M independent trajectories.
template <engine::JumpModel M, class Sampler>
ObservableSeries stabilization_series(const M& model, const Sampler& sampler,
                                      const models::Observable<typename M::State>& obs,
                                      const std::vector<double>& times, std::uint64_t n_traj,
                                      std::uint64_t seed, unsigned workers) {
  if (n_traj < 2) throw std::invalid_argument("stabilization_series: M must be >= 2");
  detail::check_times(times);
  const auto plan = farm::ChunkPlan::for_items(n_traj, 64);
  const auto acc = farm::run_reduce(
      plan, workers, std::vector<Welford>(times.size()),
      [&](std::uint64_t begin, std::uint64_t end, std::vector<Welford>& w) {
        for (std::uint64_t i = begin; i < end; ++i) {
          RngStream rng(seed, i);
          engine::Path<M> path(model, sampler(i, rng), rng);
          for (std::size_t k = 0; k < times.size(); ++k) {
            path.advance_to(times[k]);
            w[k].add(obs(path.state()));
          }
        }
      },
      [](std::vector<Welford>& total, const std::vector<Welford>& part) {
        for (std::size_t k = 0; k < total.size(); ++k) total[k].merge(part[k]);
      });
  ObservableSeries out;
  out.name = obs.name;
  out.times = times;
  const double root_m = std::sqrt(static_cast<double>(n_traj));
  for (const auto& w : acc) {
    out.means.push_back(w.mean);
    out.stderrs.push_back(1.96 * std::sqrt(w.variance()) / root_m);
  }
  return out;
}

/// Flat when the last two means differ by less than 2 combined stderrs.
inline bool is_flat(const ObservableSeries& s) {
  if (s.size() < 2) return false;
  const std::size_t a = s.size() - 2, b = s.size() - 1;
  const double combined = std::hypot(s.stderrs[a], s.stderrs[b]);
  return std::abs(s.means[b] - s.means[a]) <= 2.0 * combined;
}

inline constexpr std::size_t kCorrelationBatches = 20;
inline constexpr double kCorrelationHorizon = 50.0;

/// C(t) = |Cov(xi(X_0), eta(X_t))| with X_0 drawn uniformly (with
/// replacement) from the ensemble. stderr = 1.96 sd(batch covariances)/sqrt(B)
/// over 20 contiguous batches.
template <engine::JumpModel M>
ObservableSeries correlation_decay(const M& model, const Ensemble<typename M::State>& ensemble,
                                   const models::Observable<typename M::State>& xi,
                                   const models::Observable<typename M::State>& eta,
                                   const std::vector<double>& times, std::uint64_t n_pairs,
                                   std::uint64_t seed, unsigned workers) {
  if (ensemble.states.empty()) throw std::invalid_argument("correlation_decay: empty ensemble");
  if (n_pairs < kCorrelationBatches * 2) {
    throw std::invalid_argument("correlation_decay: M must be >= 40");
  }
  detail::check_times(times);
  const std::uint64_t n_states = ensemble.states.size();
  farm::ChunkPlan plan{n_pairs, kCorrelationBatches};
  const auto batches = farm::run_chunks(
      plan, workers, std::vector<CoMoment>(times.size()),
      [&](std::uint64_t begin, std::uint64_t end, std::vector<CoMoment>& cm) {
        for (std::uint64_t i = begin; i < end; ++i) {
          RngStream rng(seed, i);
          const auto pick = static_cast<std::uint64_t>(rng.uniform_open() * static_cast<double>(n_states));
          const auto& x0 = ensemble.states[std::min(pick, n_states - 1)];
          const double a = xi(x0);
          engine::Path<M> path(model, x0, rng);
          for (std::size_t k = 0; k < times.size(); ++k) {
            path.advance_to(times[k]);
            cm[k].add(a, eta(path.state()));
          }
        }
      });
  ObservableSeries out;
  out.name = "corr(" + xi.name + "," + eta.name + ")";
  out.times = times;
  for (std::size_t k = 0; k < times.size(); ++k) {
    CoMoment total;
    Welford spread;
    for (const auto& b : batches) {
      total.merge(b[k]);
      spread.add(b[k].covariance());
    }
    out.means.push_back(std::abs(total.covariance()));
    out.stderrs.push_back(1.96 * std::sqrt(spread.variance() / static_cast<double>(kCorrelationBatches)));
  }
  return out;
}

/// Direct sample covariance of (xi, eta) over the ensemble states.
template <class State>
double ensemble_covariance(const Ensemble<State>& ens, const models::Observable<State>& xi,
                           const models::Observable<State>& eta) {
  CoMoment cm;
  for (const auto& s : ens.states) cm.add(xi(s), eta(s));
  return cm.covariance();
}

struct InvarianceReport {
  double mean_before = 0.0;
  double mean_after = 0.0;
  double combined_stderr = 0.0;
  bool stationary() const { return std::abs(mean_after - mean_before) <= 2.0 * combined_stderr; }
};

/// Evolve every ensemble state by dt (state i on RngStream(seed, i)) and
/// compare observable means before and after.
template <engine::JumpModel M>
InvarianceReport invariance_check(const M& model, const Ensemble<typename M::State>& ens,
                                  const models::Observable<typename M::State>& obs, double dt,
                                  std::uint64_t seed, unsigned workers) {
  if (!(dt > 0.0)) throw std::invalid_argument("invariance_check: dt must be > 0");
  Welford before;
  for (const auto& s : ens.states) before.add(obs(s));
  const auto plan = farm::ChunkPlan::for_items(ens.states.size(), 64);
  const Welford after = farm::run_reduce(
      plan, workers, Welford{},
      [&](std::uint64_t begin, std::uint64_t end, Welford& w) {
        for (std::uint64_t i = begin; i < end; ++i) {
          RngStream rng(seed, i);
          engine::Path<M> path(model, ens.states[i], rng);
          path.advance_to(dt);
          w.add(obs(path.state()));
        }
      },
      [](Welford& total, const Welford& part) { total.merge(part); });
  const double n = static_cast<double>(ens.states.size());
  InvarianceReport r;
  r.mean_before = before.mean;
  r.mean_after = after.mean;
  r.combined_stderr = 1.96 * std::sqrt((before.variance() + after.variance()) / n);
  return r;
}

/// Tail-run sampler drawing initial states uniformly with replacement.
template <class State>
auto resample_from(const Ensemble<State>& ens) {
  if (ens.states.empty()) throw std::invalid_argument("resample_from: empty ensemble");
  return [&ens](std::uint64_t, RngStream& rng) {
    const auto n = static_cast<std::uint64_t>(ens.states.size());
    const auto pick = static_cast<std::uint64_t>(rng.uniform_open() * static_cast<double>(n));
    return ens.states[std::min(pick, n - 1)];
  };
}

// --- files -----------------------------------------------------------------

inline constexpr const char* kEnsembleMagic = "# polymix-ensemble v1";

template <class Model>
void write_ensemble(std::ostream& os, const Ensemble<typename Model::State>& ens) {
  os << kEnsembleMagic << '\n'
     << "# model: " << ens.model << '\n'
     << "# params: " << ens.params_json << '\n'
     << "# burn_time: " << format_double(ens.burn_time) << '\n'
     << "# seed: " << ens.master_seed << '\n'
     << "# count: " << ens.states.size() << '\n';
  for (const auto& s : ens.states) os << models::ModelTraits<Model>::encode(s) << '\n';
}

template <class Model>
Ensemble<typename Model::State> read_ensemble(std::istream& is) {
  Ensemble<typename Model::State> ens;
  std::string line;
  if (!std::getline(is, line) || line != kEnsembleMagic) {
    throw std::runtime_error("ensemble file: missing or unsupported header");
  }
  std::uint64_t count = 0;
  auto field = [&](const char* key) {
    const std::string prefix = std::string("# ") + key + ": ";
    if (!std::getline(is, line) || line.rfind(prefix, 0) != 0) {
      throw std::runtime_error(std::string("ensemble file: expected '") + key + "' header");
    }
    return line.substr(prefix.size());
  };
  ens.model = field("model");
  if (ens.model != models::ModelTraits<Model>::name) {
    throw std::runtime_error("ensemble file: model '" + ens.model + "' does not match");
  }
  ens.params_json = field("params");
  ens.burn_time = parse_double(field("burn_time"));
  ens.master_seed = std::stoull(field("seed"));
  count = std::stoull(field("count"));
  ens.states.reserve(count);
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    ens.states.push_back(models::ModelTraits<Model>::decode(line));
  }
  if (ens.states.size() != count) throw std::runtime_error("ensemble file: state count mismatch");
  return ens;
}

/// `t,mean,stderr` with 17 significant digits.
inline std::string series_csv(const ObservableSeries& s) {
  std::ostringstream os;
  os << "t,mean,stderr\n";
  for (std::size_t k = 0; k < s.size(); ++k) {
    os << format_double(s.times[k]) << ',' << format_double(s.means[k]) << ','
       << format_double(s.stderrs[k]) << '\n';
  }
  return os.str();
}

}  // namespace polymix::stationary
