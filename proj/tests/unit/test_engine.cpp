#include <cmath>
#include <vector>

#include "doctest.h"
#include "polymix/engine.hpp"
#include "polymix/models/countdown.hpp"
#include "polymix/models/see.hpp"
#include "polymix/models/toy.hpp"
#include "polymix/tail_run.hpp"
#include "stats.hpp"

using namespace polymix;
using engine::EventRates;
using models::ConstantRatesModel;
using models::TelegraphModel;
using models::TelegraphState;

namespace {

struct NeverSet {
  template <class S>
  bool contains(const S&) const { return false; }
};

models::SeeState see3(double a, double b, double c) { return {{a, b, c}}; }

}  // namespace

TEST_CASE("next_event: clock selection frequencies follow rates (chi-square)") {
  const ConstantRatesModel m({1.0, 3.0});
  RngStream rng(101, 0);
  std::vector<std::uint64_t> counts(2, 0);
  for (int i = 0; i < 100000; ++i) ++counts[engine::next_event(m.initial(), m, rng).clock];
  CHECK(testsupport::chi2_pvalue(counts, {0.25, 0.75}) > 0.01);
  CHECK(std::abs(static_cast<double>(counts[1]) / 1e5 - 0.75) < 3.0 * std::sqrt(0.75 * 0.25 / 1e5));
}

TEST_CASE("next_event: holding time mean and KS against Exponential(total)") {
  const ConstantRatesModel m({1.0, 3.0});
  RngStream rng(102, 0);
  std::vector<double> dts;
  for (int i = 0; i < 100000; ++i) dts.push_back(engine::next_event(m.initial(), m, rng).dt);
  const double mean = testsupport::mean(dts);
  CHECK(std::abs(mean - 0.25) < 3.0 * 0.25 / std::sqrt(1e5));
  CHECK(testsupport::ks_pvalue(dts, [](double x) { return 1.0 - std::exp(-4.0 * x); }) > 0.01);
}

TEST_CASE("next_event: zero total rate raises AbsorbingState") {
  const ConstantRatesModel m({0.0, 0.0});
  RngStream rng(1, 0);
  CHECK_THROWS_AS(engine::next_event(m.initial(), m, rng), engine::AbsorbingState);
}

TEST_CASE("next_event agrees in law with the argmin of independent clocks") {
  const std::vector<double> r{0.5, 1.0, 2.5};
  const ConstantRatesModel m(r);
  RngStream a(103, 0), b(104, 0);
  std::vector<double> dt_engine, dt_argmin;
  std::vector<std::uint64_t> c_engine(3, 0), c_argmin(3, 0);
  for (int i = 0; i < 100000; ++i) {
    const auto ev = engine::next_event(m.initial(), m, a);
    dt_engine.push_back(ev.dt);
    ++c_engine[ev.clock];
    double best = INFINITY;
    std::size_t arg = 0;
    for (std::size_t k = 0; k < r.size(); ++k) {
      const double t = b.exponential_mean(1.0 / r[k]);
      if (t < best) {
        best = t;
        arg = k;
      }
    }
    dt_argmin.push_back(best);
    ++c_argmin[arg];
  }
  const std::vector<double> probs{0.125, 0.25, 0.625};
  CHECK(testsupport::chi2_pvalue(c_engine, probs) > 0.01);
  CHECK(testsupport::chi2_pvalue(c_argmin, probs) > 0.01);
  CHECK(testsupport::ks2_pvalue(dt_engine, dt_argmin) > 0.01);
  CHECK(testsupport::ks_pvalue(dt_engine, [](double x) { return 1.0 - std::exp(-4.0 * x); }) > 0.01);
}

TEST_CASE("EventRates validation") {
  EventRates r;
  r.push(1.0);
  r.push(2.0);
  CHECK_NOTHROW(r.validate());
  CHECK(r.total == doctest::Approx(3.0));
  r.total = 3.1;
  CHECK_THROWS_AS(r.validate(), std::invalid_argument);
  EventRates neg;
  neg.push(-1.0);
  CHECK_THROWS_AS(neg.validate(), std::invalid_argument);
}

TEST_CASE("evolve_until before the first event returns the initial state") {
  const models::SeeModel m({3, 1.0, 2.0});
  const auto s0 = see3(1.0, 2.0, 3.0);
  RngStream probe(5, 0);
  engine::Path<models::SeeModel> p(m, s0, probe);
  const double first = p.next_jump_time();
  RngStream rng(5, 0);
  const auto out = engine::evolve_until(s0, m, 0.5 * first, rng);
  CHECK(out.state == s0);
  CHECK(out.log.empty());
  CHECK_FALSE(out.absorbed);
}

TEST_CASE("evolve_until: jump log is reproducible and increasing") {
  const TelegraphModel m(1.0, 2.0);
  RngStream a(77, 3), b(77, 3);
  const auto r1 = engine::evolve_until(TelegraphState{}, m, 50.0, a);
  const auto r2 = engine::evolve_until(TelegraphState{}, m, 50.0, b);
  REQUIRE(r1.log.size() > 10);
  CHECK(r1.log == r2.log);
  CHECK(r1.state == r2.state);
  for (std::size_t i = 1; i < r1.log.size(); ++i) CHECK(r1.log[i].first > r1.log[i - 1].first);
  CHECK(r1.log.back().first <= 50.0);
  CHECK(r1.state.inside == (r1.log.size() % 2 == 0));
}

TEST_CASE("evolve_until freezes an absorbing state") {
  const ConstantRatesModel m({0.0});
  RngStream rng(1, 0);
  const auto out = engine::evolve_until(m.initial(), m, 3.0, rng);
  CHECK(out.absorbed);
  CHECK(out.log.empty());
}

TEST_CASE("sample_chain: one step equals evolve_until(h)") {
  const models::SeeModel m({3, 1.0, 2.0});
  RngStream a(8, 1), b(8, 1);
  const auto chain = engine::sample_chain(see3(1, 1, 1), m, 0.7, 1, a);
  const auto ev = engine::evolve_until(see3(1, 1, 1), m, 0.7, b);
  REQUIRE(chain.size() == 1);
  CHECK(chain[0] == ev.state);
}

TEST_CASE("sample_chain: absorbing start gives a constant sequence") {
  const ConstantRatesModel m({0.0, 0.0});
  RngStream rng(1, 0);
  const auto chain = engine::sample_chain(m.initial(), m, 0.1, 20, rng);
  for (const auto& s : chain) CHECK(s == m.initial());
}

TEST_CASE("sample_chain matches evolve_until at every grid time on a shared stream") {
  const models::SeeModel m({3, 1.0, 2.0});
  const double h = 0.1;
  RngStream a(9, 4);
  const auto chain = engine::sample_chain(see3(0.5, 1.0, 2.0), m, h, 100, a);
  RngStream full(9, 4);
  const auto whole = engine::evolve_until(see3(0.5, 1.0, 2.0), m, 100 * h, full);
  CHECK(chain.back() == whole.state);
  for (int k : {1, 7, 33, 100}) {
    RngStream b(9, 4);
    const auto ev = engine::evolve_until(see3(0.5, 1.0, 2.0), m, k * h, b);
    CHECK(chain[static_cast<std::size_t>(k - 1)] == ev.state);
    std::size_t jumps = 0;
    for (const auto& j : whole.log) jumps += j.first <= k * h;
    CHECK(jumps == ev.log.size());
  }
}

TEST_CASE("first_passage: start in the set with no ring on [0,h] hits at h") {
  const TelegraphModel m(1e-12, 1.0);
  RngStream rng(1, 0);
  const auto o = engine::first_passage(TelegraphState{true, 0.0}, m, models::InsideSet{}, 0.1, 10.0, rng);
  CHECK(o == engine::PassageOutcome::hit(0.1));
}

TEST_CASE("first_passage: countdown from level L returns at exactly L holding periods") {
  for (double holding : {1.0, 0.25}) {
    const models::CountdownModel m({4.0, 2.0, holding});
    for (std::int64_t level : {1, 3, 17}) {
      RngStream rng(3, static_cast<std::uint64_t>(level));
      const auto o = engine::first_passage(m.at_level(level), m, models::CountdownRefSet{0}, 0.01, 1e4, rng);
      CHECK(o.is_hit());
      CHECK(o.time == doctest::Approx(static_cast<double>(level) * holding).epsilon(1e-12));
    }
  }
}

TEST_CASE("first_passage: censored exactly at the horizon") {
  const TelegraphModel m(1.0, 1e-12);
  RngStream rng(1, 0);
  const double h = 0.1, t_max = 0.1 + 1e-9;
  const auto o = engine::first_passage(TelegraphState{false, 0.0}, m, models::InsideSet{}, h, t_max, rng);
  CHECK(o.kind == engine::PassageKind::Censored);
  CHECK(o.time == t_max);
}

TEST_CASE("first_passage: absorbing outside the set is censored") {
  const TelegraphModel m(1.0, 0.0);
  RngStream rng(1, 0);
  const auto o = engine::first_passage(TelegraphState{false, 0.0}, m, models::InsideSet{}, 0.1, 5.0, rng);
  CHECK(o == engine::PassageOutcome::censored(5.0));
}

TEST_CASE("first_passage: hit times are at least h") {
  const models::SeeModel m({3, 1.0, 2.0});
  const models::SeeBox box{0.1, 100.0};
  for (std::uint64_t i = 0; i < 2000; ++i) {
    RngStream rng(11, i);
    auto s = models::see_initial_draw(m.params(), rng);
    const auto o = engine::first_passage(s, m, box, 0.1, 100.0, rng);
    if (o.is_hit()) CHECK(o.time >= 0.1);
  }
}

TEST_CASE("first_passage is monotone in h on a shared stream") {
  const models::SeeModel m({3, 1.0, 2.0});
  const models::SeeBox box{0.5, 3.0};
  for (std::uint64_t i = 0; i < 2000; ++i) {
    RngStream a(12, i), b(12, i);
    auto s = see3(0.05 + 0.001 * static_cast<double>(i), 4.0, 1.0);
    const auto lo = engine::first_passage(s, m, box, 0.05, 50.0, a);
    const auto hi = engine::first_passage(s, m, box, 0.1, 50.0, b);
    CHECK(lo.time <= hi.time);
  }
}

TEST_CASE("first_passage argument checks") {
  const TelegraphModel m(1.0, 1.0);
  RngStream rng(1, 0);
  CHECK_THROWS_AS(engine::first_passage(TelegraphState{}, m, models::InsideSet{}, 0.0, 1.0, rng),
                  std::invalid_argument);
  CHECK_THROWS_AS(engine::first_passage(TelegraphState{}, m, models::InsideSet{}, 1.0, 1.0, rng),
                  std::invalid_argument);
}

TEST_CASE("tally results do not depend on the worker count") {
  const models::SeeModel m({3, 1.0, 2.0});
  tails::TailConfig cfg;
  cfg.samples = 20000;
  cfg.t_max = 100.0;
  auto sampler = [&](std::uint64_t, RngStream& rng) { return models::see_initial_draw(m.params(), rng); };
  const auto t1 = tails::run_passage_tally(m, models::SeeBox{}, sampler, cfg, 5, 1);
  const auto t8 = tails::run_passage_tally(m, models::SeeBox{}, sampler, cfg, 5, 8);
  const auto c1 = t1.curve(1.96), c8 = t8.curve(1.96);
  CHECK(c1.counts == c8.counts);
  CHECK(t1.censored() == t8.censored());
  CHECK(tails::survival_csv(c1) == tails::survival_csv(c8));
}

TEST_CASE("false returns: a state that stays in the set has N = 0") {
  const TelegraphModel m(1e-12, 1.0);
  RngStream rng(1, 0);
  const auto s = engine::false_returns_once(TelegraphState{true, 0.0}, m, models::InsideSet{}, 0.1, 100.0, rng);
  CHECK(s.false_returns == 0);
  CHECK_FALSE(s.censored);
}

TEST_CASE("false returns stay below the (1 - e^{-rh})^n envelope") {
  const double r = 2.0, h = 0.5;
  const TelegraphModel m(r, r);
  const auto hist = tails::run_false_returns(
      m, models::InsideSet{}, [](std::uint64_t, RngStream&) { return TelegraphState{false, 0.0}; }, h, 1e4,
      100000, 21, 4);
  const double gamma = std::exp(-r * h);
  CHECK(hist.total == 100000);
  bool any_positive = false;
  for (std::uint64_t n = 0; n < 30; ++n) {
    const double p = hist.tail(n);
    any_positive |= p > 0.0;
    const auto ci = tails::agresti_coull(static_cast<std::uint64_t>(std::llround(p * 1e5)), 100000, 2.576);
    CHECK(ci.p_tilde - ci.halfwidth <= std::pow(1.0 - gamma, static_cast<double>(n)));
  }
  CHECK(any_positive);
}

TEST_CASE("false returns on the SEE chain at the set boundary are geometrically dominated") {
  const models::SeeModel m({3, 1.0, 2.0});
  const models::SeeBox box{0.1, 100.0};
  const auto hist = tails::run_false_returns(
      m, box, [](std::uint64_t, RngStream&) { return models::SeeState{{0.09, 1.0, 1.0}}; }, 0.1, 1000.0, 20000,
      22, 4);
  CHECK(hist.total == 20000);
  CHECK(hist.censored < 200);
  // Total rate on the set is at most sqrt(T_L) + 2 sqrt(100) + sqrt(T_R).
  const double gamma = std::exp(-(1.0 + 20.0 + std::sqrt(2.0)) * 0.1);
  for (std::uint64_t n = 0; n < hist.counts.size() + 2; ++n) {
    const double p = hist.tail(n);
    const auto ci = tails::agresti_coull(static_cast<std::uint64_t>(std::llround(p * 20000)), 20000, 2.576);
    CHECK(ci.p_tilde - ci.halfwidth <= std::pow(1.0 - gamma, static_cast<double>(n)));
  }
}

TEST_CASE("default_workers honours POLYMIX_WORKERS") {
  setenv("POLYMIX_WORKERS", "3", 1);
  CHECK(farm::default_workers() == 3);
  setenv("POLYMIX_WORKERS", "zero", 1);
  CHECK(farm::default_workers() >= 1);
  unsetenv("POLYMIX_WORKERS");
}

TEST_CASE("farm chunks partition the items and rethrow worker failures") {
  const auto plan = farm::ChunkPlan::for_items(1000, 64);
  std::uint64_t covered = 0;
  for (std::uint64_t c = 0; c < plan.n_chunks; ++c) {
    CHECK(plan.begin(c) <= plan.end(c));
    covered += plan.end(c) - plan.begin(c);
  }
  CHECK(covered == 1000);
  CHECK_THROWS_AS(farm::run_chunks(plan, 4, 0,
                                   [](std::uint64_t b, std::uint64_t, int&) {
                                     if (b > 500) throw std::runtime_error("boom");
                                   }),
                  std::runtime_error);
}
