#pragma once

// Farmed first-passage experiments: sample i always uses RngStream(seed, i),
// first drawing its initial state and then its path, so a run is a pure
// function of (model, refset, sampler, config, seed).

#include <cstdint>
#include <optional>
#include <stdexcept>

#include "polymix/engine.hpp"
#include "polymix/farm.hpp"
#include "polymix/tails.hpp"

namespace polymix::tails {

struct TailConfig {
  double h = 0.1;
  double t_max = 1000.0;
  int per_decade = 40;
  std::uint64_t samples = 100000;
  std::uint64_t m_min = 100;
  double z = 1.96;
  std::size_t batches = 10;
  double beta = 2.0;  // exponent used for gamma
  double fit_t_min = 0.0;     // optional lower cutoff of the fit window
  double fit_decades = 1.0;   // fit window width below the last reliable time

  void validate() const {
    if (!(h > 0.0)) throw std::invalid_argument("TailConfig: h must be > 0");
    if (!(t_max > h)) throw std::invalid_argument("TailConfig: t_max must be > h");
    if (!(fit_decades > 0.0)) throw std::invalid_argument("TailConfig: fit_decades must be > 0");
    if (per_decade < 1) throw std::invalid_argument("TailConfig: per_decade must be >= 1");
    if (samples < 1) throw std::invalid_argument("TailConfig: samples must be >= 1");
    if (!(z >= 0.0)) throw std::invalid_argument("TailConfig: z must be >= 0");
  }
  std::vector<double> grid() const { return log_grid(h, t_max, per_decade); }
  GammaOptions gamma_options() const { return {m_min, z, batches, 0.05}; }
};

template <engine::JumpModel M, engine::RefSetFor<typename M::State> R, class Sampler>
PassageTally run_passage_tally(const M& model, const R& refset, const Sampler& sampler,
                               const TailConfig& cfg, std::uint64_t seed, unsigned workers) {
  cfg.validate();
  const PassageTally empty(cfg.grid(), cfg.samples);
  const auto plan = farm::ChunkPlan::for_items(cfg.samples, 64);
  return farm::run_reduce(
      plan, workers, empty,
      [&](std::uint64_t begin, std::uint64_t end, PassageTally& acc) {
        for (std::uint64_t i = begin; i < end; ++i) {
          RngStream rng(seed, i);
          auto state = sampler(i, rng);
          acc.add(i, engine::first_passage(std::move(state), model, refset, cfg.h, cfg.t_max, rng));
        }
      },
      [](PassageTally& total, const PassageTally& part) { total.merge(part); });
}

/// Fixed initial state for every sample.
template <class State>
auto fixed_state(State s) {
  return [s = std::move(s)](std::uint64_t, RngStream&) { return s; };
}

struct TailAnalysis {
  SurvivalCurve curve;
  IndexRange reliable;
  IndexRange window;
  std::optional<BatchedFit> fit;  // absent when fewer than 3 points qualify
  std::optional<GammaEstimate> gamma;
};

inline TailAnalysis analyse_tally(const PassageTally& tally, const TailConfig& cfg) {
  TailAnalysis a;
  a.curve = tally.curve(cfg.z);
  a.reliable = reliable_range(a.curve, cfg.m_min);
  a.window = tail_window(a.curve, cfg.m_min, cfg.fit_decades, cfg.fit_t_min);
  if (a.window.size() >= 3) a.fit = fit_slope_batched(tally, a.window, cfg.gamma_options());
  try {
    a.gamma = gamma_from_tally(tally, cfg.beta, cfg.h, cfg.gamma_options());
  } catch (const std::invalid_argument&) {
  }
  return a;
}

/// Histogram of false-return counts over `samples` independent paths.
template <engine::JumpModel M, engine::RefSetFor<typename M::State> R, class Sampler>
engine::FalseReturnHistogram run_false_returns(const M& model, const R& refset,
                                               const Sampler& sampler, double h, double t_max,
                                               std::uint64_t samples, std::uint64_t seed,
                                               unsigned workers) {
  const auto plan = farm::ChunkPlan::for_items(samples, 64);
  return farm::run_reduce(
      plan, workers, engine::FalseReturnHistogram{},
      [&](std::uint64_t begin, std::uint64_t end, engine::FalseReturnHistogram& acc) {
        for (std::uint64_t i = begin; i < end; ++i) {
          RngStream rng(seed, i);
          auto state = sampler(i, rng);
          acc.add(engine::false_returns_once(std::move(state), model, refset, h, t_max, rng));
        }
      },
      [](engine::FalseReturnHistogram& total, const engine::FalseReturnHistogram& part) {
        total.merge(part);
      });
}

}  // namespace polymix::tails
