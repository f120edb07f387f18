#include "polymix/engine.hpp"

#include <cstdlib>
#include <string>

#include "polymix/farm.hpp"

namespace polymix::engine {

std::size_t EventRates::select(double u) const {
  const double target = u * total;
  double acc = 0.0;
  const std::size_t n = rates.size();
  for (std::size_t i = 0; i < n; ++i) {
    acc += rates[i];
    if (target < acc) return i;
  }
  // Round-off can leave target marginally above the final partial sum; fall
  // back to the last clock with positive rate.
  for (std::size_t i = n; i-- > 0;) {
    if (rates[i] > 0.0) return i;
  }
  return n - 1;
}

void EventRates::validate() const {
  double sum = 0.0;
  for (std::size_t i = 0; i < rates.size(); ++i) {
    if (!(rates[i] >= 0.0) || !std::isfinite(rates[i])) {
      throw std::invalid_argument("EventRates: rate " + std::to_string(i) +
                                  " is negative or not finite");
    }
    sum += rates[i];
  }
  if (std::abs(sum - total) > 1e-12 * std::max(1.0, std::abs(sum))) {
    throw std::invalid_argument("EventRates: total does not match the sum of rates");
  }
}

void FalseReturnHistogram::add(const FalseReturnSample& s) {
  ++total;
  if (s.censored) {
    ++censored;
    return;
  }
  if (counts.size() <= s.false_returns) counts.resize(s.false_returns + 1, 0);
  ++counts[s.false_returns];
}

void FalseReturnHistogram::merge(const FalseReturnHistogram& other) {
  if (counts.size() < other.counts.size()) counts.resize(other.counts.size(), 0);
  for (std::size_t i = 0; i < other.counts.size(); ++i) counts[i] += other.counts[i];
  censored += other.censored;
  total += other.total;
}

double FalseReturnHistogram::tail(std::uint64_t n) const {
  if (total == 0) return 0.0;
  std::uint64_t above = censored;
  for (std::size_t i = static_cast<std::size_t>(n) + 1; i < counts.size(); ++i) above += counts[i];
  return static_cast<double>(above) / static_cast<double>(total);
}

}  // namespace polymix::engine

namespace polymix::farm {

unsigned default_workers() {
  if (const char* env = std::getenv("POLYMIX_WORKERS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<unsigned>(v);
  }
  const unsigned hc = std::thread::hardware_concurrency();
  return hc == 0 ? 1u : hc;
}

}  // namespace polymix::farm
