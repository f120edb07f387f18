#pragma once

// Exact event-driven simulation of continuous-time jump processes driven by
// competing exponential clocks, plus first-passage timing on top of it.

#include <cmath>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "polymix/rng.hpp"

namespace polymix::engine {

/// Raised when a state has no active clock (total rate zero).
class AbsorbingState : public std::runtime_error {
 public:
  AbsorbingState() : std::runtime_error("absorbing state: total event rate is zero") {}
};

/// Per-clock intensities of the current state. `total` is maintained as the
/// running sum of `rates`.
struct EventRates {
  std::vector<double> rates;
  double total = 0.0;

  void clear() {
    rates.clear();
    total = 0.0;
  }
  void push(double r) {
    rates.push_back(r);
    total += r;
  }
  std::size_t size() const { return rates.size(); }

  /// Index i such that the cumulative rate first exceeds u * total.
  /// Requires u in (0,1) and total > 0.
  std::size_t select(double u) const;

  /// Throws std::invalid_argument if a rate is negative / non-finite or `total`
  /// drifts from the sum by more than 1e-12 relative.
  void validate() const;
};

struct Event {
  double dt = 0.0;
  std::size_t clock = 0;
};

enum class PassageKind { Hit, Censored };

struct PassageOutcome {
  PassageKind kind = PassageKind::Censored;
  double time = 0.0;

  static PassageOutcome hit(double t) { return {PassageKind::Hit, t}; }
  static PassageOutcome censored(double horizon) { return {PassageKind::Censored, horizon}; }
  bool is_hit() const { return kind == PassageKind::Hit; }
  friend bool operator==(const PassageOutcome&, const PassageOutcome&) = default;
};

/// A model exposes its clock intensities and the effect of a ring.
template <class M>
concept JumpModel = requires(const M& m, typename M::State& s, const typename M::State& cs,
                             EventRates& r, RngStream& g, std::size_t k) {
  typename M::State;
  m.rates(cs, r);
  m.apply(s, k, g);
};

/// Membership test of a reference set against a model state.
template <class R, class S>
concept RefSetFor = requires(const R& r, const S& s) {
  { r.contains(s) } -> std::convertible_to<bool>;
};

/// Rate-filled buffer plus a holding-time draw. Models may override the
/// holding law by providing `holding_time(state, total, rng)`; the default is
/// Exponential(total). Returns nullopt for an absorbing state.
template <JumpModel M>
std::optional<Event> draw_event(const M& model, const typename M::State& state, EventRates& buf,
                                RngStream& rng) {
  buf.clear();
  model.rates(state, buf);
  if (!(buf.total > 0.0)) return std::nullopt;
  Event ev;
  if constexpr (requires { model.holding_time(state, buf.total, rng); }) {
    ev.dt = model.holding_time(state, buf.total, rng);
  } else {
    ev.dt = rng.exponential_mean(1.0 / buf.total);
  }
  ev.clock = buf.size() == 1 ? 0 : buf.select(rng.uniform_open());
  return ev;
}

/// One competing-exponentials step. Throws AbsorbingState when total rate is 0.
template <JumpModel M>
Event next_event(const typename M::State& state, const M& model, RngStream& rng) {
  EventRates buf;
  auto ev = draw_event(model, state, buf, rng);
  if (!ev) throw AbsorbingState{};
  return *ev;
}

using JumpLog = std::vector<std::pair<double, std::size_t>>;

/// Cursor over one right-continuous sample path. The next jump is drawn once
/// and kept pending, so advancing in several stages consumes the stream exactly
/// as a single advance would.
template <JumpModel M>
class Path {
 public:
  using State = typename M::State;

  Path(const M& model, State initial, RngStream& rng)
      : model_(&model), rng_(&rng), state_(std::move(initial)) {
    schedule();
  }

  const State& state() const { return state_; }
  State& mutable_state() { return state_; }
  double time() const { return now_; }
  bool absorbed() const { return !pending_; }
  /// Absolute time of the pending jump; +inf when absorbed.
  double next_jump_time() const { return pending_ ? jump_at_ : INFINITY; }

  /// Apply every jump with jump time <= t, then set the clock to t.
  void advance_to(double t, JumpLog* log = nullptr) {
    while (pending_ && jump_at_ <= t) {
      if (log) log->emplace_back(jump_at_, pending_clock_);
      fire();
    }
    if (t > now_) now_ = t;
  }

  /// Apply the pending jump unconditionally. Requires !absorbed().
  void jump(JumpLog* log = nullptr) {
    if (log) log->emplace_back(jump_at_, pending_clock_);
    fire();
  }

 private:
  void schedule() {
    auto ev = draw_event(*model_, state_, buf_, *rng_);
    pending_ = ev.has_value();
    if (pending_) {
      jump_at_ = now_ + ev->dt;
      pending_clock_ = ev->clock;
    }
  }
  void fire() {
    now_ = jump_at_;
    model_->apply(state_, pending_clock_, *rng_);
    schedule();
  }

  const M* model_;
  RngStream* rng_;
  State state_;
  EventRates buf_;
  double now_ = 0.0;
  double jump_at_ = 0.0;
  std::size_t pending_clock_ = 0;
  bool pending_ = false;
};

template <class State>
struct EvolveResult {
  State state;
  JumpLog log;
  bool absorbed = false;
};

/// Path value at t_end together with every jump at or before t_end. An
/// absorbing state is frozen and flagged rather than raised.
template <JumpModel M>
EvolveResult<typename M::State> evolve_until(typename M::State state, const M& model, double t_end,
                                             RngStream& rng) {
  if (!(t_end > 0.0)) throw std::invalid_argument("evolve_until: t_end must be > 0");
  Path<M> path(model, std::move(state), rng);
  EvolveResult<typename M::State> out{};
  path.advance_to(t_end, &out.log);
  out.absorbed = path.absorbed();
  out.state = path.state();
  return out;
}

/// States at times h, 2h, ..., n_steps*h of one path.
template <JumpModel M>
std::vector<typename M::State> sample_chain(typename M::State state, const M& model, double h,
                                            std::int64_t n_steps, RngStream& rng) {
  if (!(h > 0.0)) throw std::invalid_argument("sample_chain: h must be > 0");
  if (n_steps < 1) throw std::invalid_argument("sample_chain: n_steps must be >= 1");
  Path<M> path(model, std::move(state), rng);
  std::vector<typename M::State> out;
  out.reserve(static_cast<std::size_t>(n_steps));
  for (std::int64_t k = 1; k <= n_steps; ++k) {
    path.advance_to(static_cast<double>(k) * h);
    out.push_back(path.state());
  }
  return out;
}

/// tau(h) = inf{t >= h : X_t in refset}, censored at t_max. Membership is
/// checked at time h and at every later jump (the path is piecewise constant).
template <JumpModel M, RefSetFor<typename M::State> R>
PassageOutcome first_passage(typename M::State state, const M& model, const R& refset, double h,
                             double t_max, RngStream& rng) {
  if (!(h > 0.0)) throw std::invalid_argument("first_passage: h must be > 0");
  if (!(t_max > h)) throw std::invalid_argument("first_passage: t_max must be > h");
  Path<M> path(model, std::move(state), rng);
  path.advance_to(h);
  if (refset.contains(path.state())) return PassageOutcome::hit(h);
  for (;;) {
    if (path.next_jump_time() > t_max) return PassageOutcome::censored(t_max);
    path.jump();
    if (refset.contains(path.state())) return PassageOutcome::hit(path.time());
  }
}

struct FalseReturnSample {
  std::uint64_t false_returns = 0;
  bool censored = false;
};

/// Counts entries into refset at a jump that have been undone by the next
/// multiple of h, before the sampled chain X_{nh} (n >= 1) first lies in
/// refset. Censored when no true return occurs by t_max.
template <JumpModel M, RefSetFor<typename M::State> R>
FalseReturnSample false_returns_once(typename M::State state, const M& model, const R& refset,
                                     double h, double t_max, RngStream& rng) {
  if (!(h > 0.0) || !(t_max > h)) throw std::invalid_argument("false_returns: need 0 < h < t_max");
  Path<M> path(model, std::move(state), rng);
  FalseReturnSample out;
  std::int64_t grid = 1;
  path.advance_to(h);
  if (refset.contains(path.state())) return out;
  for (;;) {
    if (path.next_jump_time() > t_max) {
      out.censored = true;
      return out;
    }
    path.jump();
    if (!refset.contains(path.state())) continue;
    // Touched refset at a jump; inspect the next grid time at or after it.
    auto next_grid = static_cast<std::int64_t>(std::floor(path.time() / h));
    if (static_cast<double>(next_grid) * h < path.time()) ++next_grid;
    if (next_grid <= grid) next_grid = grid + 1;
    grid = next_grid;
    const double grid_time = static_cast<double>(grid) * h;
    if (grid_time > t_max) {
      out.censored = true;
      return out;
    }
    path.advance_to(grid_time);
    if (refset.contains(path.state())) return out;
    ++out.false_returns;
  }
}

struct FalseReturnHistogram {
  std::vector<std::uint64_t> counts;  // counts[n] = #samples with N = n
  std::uint64_t censored = 0;
  std::uint64_t total = 0;

  void add(const FalseReturnSample& s);
  void merge(const FalseReturnHistogram& other);
  /// Empirical P[N > n] over uncensored-and-censored samples (censored counted
  /// as exceeding every n).
  double tail(std::uint64_t n) const;
};

}  // namespace polymix::engine
