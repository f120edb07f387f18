#include "polymix/couplab.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

#include "polymix/farm.hpp"
#include "polymix/format.hpp"

namespace polymix::couplab {

namespace {

std::string state_pair(const DiscreteChain& c, std::size_t x, std::size_t y) {
  return "(" + c.states[x] + ", " + c.states[y] + ")";
}

double row_sum(const Vector& row) {
  double s = 0.0;
  for (double v : row) s += v;
  return s;
}

// Smallest index k with u < cumulative[k].
std::size_t draw_index(const Vector& cumulative, double u) {
  const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
  if (it == cumulative.end()) {
    // Rounding left the total below u; take the last index with mass.
    for (std::size_t k = cumulative.size(); k > 0; --k) {
      if (k == 1 || cumulative[k - 1] > cumulative[k - 2]) return k - 1;
    }
    return 0;
  }
  return static_cast<std::size_t>(it - cumulative.begin());
}

Vector cumulate(const Vector& p) {
  Vector c(p.size());
  std::partial_sum(p.begin(), p.end(), c.begin());
  return c;
}

Vector step(const Matrix& k, const Vector& mu) {
  Vector out(k.empty() ? 0 : k[0].size(), 0.0);
  for (std::size_t x = 0; x < mu.size(); ++x) {
    if (mu[x] == 0.0) continue;
    for (std::size_t y = 0; y < out.size(); ++y) out[y] += mu[x] * k[x][y];
  }
  return out;
}

}  // namespace

bool DiscreteChain::in_refset(std::size_t i) const {
  return std::binary_search(refset.begin(), refset.end(), i);
}

void DiscreteChain::validate() const {
  const std::size_t n = states.size();
  if (n == 0) throw std::invalid_argument("chain: no states");
  if (kernel.size() != n) throw std::invalid_argument("chain: kernel must have one row per state");
  for (std::size_t x = 0; x < n; ++x) {
    if (kernel[x].size() != n) throw std::invalid_argument("chain: kernel row " + states[x] + " has wrong length");
    for (std::size_t y = 0; y < n; ++y) {
      if (!(kernel[x][y] >= 0.0)) throw std::invalid_argument("chain: negative entry at " + state_pair(*this, x, y));
    }
    if (std::abs(row_sum(kernel[x]) - 1.0) > kRowTolerance) {
      throw std::invalid_argument("chain: row " + states[x] + " does not sum to 1");
    }
  }
  if (refset.empty()) throw std::invalid_argument("chain: refset is empty");
  for (std::size_t k = 0; k < refset.size(); ++k) {
    if (refset[k] >= n) throw std::invalid_argument("chain: refset index out of range");
    if (k > 0 && refset[k] <= refset[k - 1]) throw std::invalid_argument("chain: refset must be sorted and unique");
  }
  if (!(eta > 0.0 && eta <= 1.0)) throw std::invalid_argument("chain: eta must lie in (0, 1]");
  if (theta.size() != n) throw std::invalid_argument("chain: theta has wrong length");
  for (double t : theta) {
    if (!(t >= 0.0)) throw std::invalid_argument("chain: theta must be nonnegative");
  }
  if (std::abs(row_sum(theta) - 1.0) > kRowTolerance) throw std::invalid_argument("chain: theta does not sum to 1");
  for (std::size_t x : refset) {
    for (std::size_t y = 0; y < n; ++y) {
      if (kernel[x][y] < eta * theta[y] - kRowTolerance) {
        throw std::invalid_argument("chain: minorization violated at " + state_pair(*this, x, y));
      }
    }
  }
}

std::pair<double, Vector> default_minorization(const Matrix& kernel,
                                               const std::vector<std::size_t>& refset) {
  if (kernel.empty() || refset.empty()) throw std::invalid_argument("minorization: empty kernel or refset");
  Vector nu = kernel.at(refset[0]);
  for (std::size_t x : refset) {
    for (std::size_t y = 0; y < nu.size(); ++y) nu[y] = std::min(nu[y], kernel.at(x).at(y));
  }
  const double eta = std::min(1.0, row_sum(nu));
  if (!(eta > 0.0)) throw std::invalid_argument("minorization: refset rows share no common mass (eta = 0)");
  Vector theta(nu.size());
  const double total = row_sum(nu);
  for (std::size_t y = 0; y < nu.size(); ++y) theta[y] = nu[y] / total;
  return {eta, theta};
}

DiscreteChain make_chain(std::vector<std::string> states, Matrix kernel,
                         std::vector<std::size_t> refset, std::optional<double> eta,
                         std::optional<Vector> theta) {
  std::sort(refset.begin(), refset.end());
  refset.erase(std::unique(refset.begin(), refset.end()), refset.end());
  DiscreteChain c{std::move(states), std::move(kernel), std::move(refset), 0.0, {}};
  if (eta.has_value() != theta.has_value()) {
    throw std::invalid_argument("chain: eta and theta must be given together");
  }
  if (eta) {
    c.eta = *eta;
    c.theta = std::move(*theta);
  } else {
    if (c.kernel.size() != c.states.size()) throw std::invalid_argument("chain: kernel must have one row per state");
    for (std::size_t x : c.refset) {
      if (x >= c.kernel.size()) throw std::invalid_argument("chain: refset index out of range");
    }
    std::tie(c.eta, c.theta) = default_minorization(c.kernel, c.refset);
  }
  c.validate();
  return c;
}

DiscreteChain chain_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::invalid_argument(std::string("chain: invalid JSON: ") + e.what());
  }
  if (!j.is_object()) throw std::invalid_argument("chain: expected a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (key != "states" && key != "kernel" && key != "refset" && key != "eta" && key != "theta") {
      throw std::invalid_argument("chain: unknown key '" + key + "'");
    }
  }
  if (!j.contains("states") || !j.contains("kernel") || !j.contains("refset")) {
    throw std::invalid_argument("chain: 'states', 'kernel' and 'refset' are required");
  }
  try {
    auto states = j["states"].get<std::vector<std::string>>();
    auto kernel = j["kernel"].get<Matrix>();
    std::vector<std::size_t> refset;
    for (const auto& name : j["refset"].get<std::vector<std::string>>()) {
      const auto it = std::find(states.begin(), states.end(), name);
      if (it == states.end()) throw std::invalid_argument("chain: refset names unknown state '" + name + "'");
      refset.push_back(static_cast<std::size_t>(it - states.begin()));
    }
    std::optional<double> eta;
    std::optional<Vector> theta;
    if (j.contains("eta")) eta = j["eta"].get<double>();
    if (j.contains("theta")) theta = j["theta"].get<Vector>();
    return make_chain(std::move(states), std::move(kernel), std::move(refset), eta, theta);
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("chain: ") + e.what());
  }
}

std::string chain_to_json(const DiscreteChain& c) {
  nlohmann::json j;
  j["states"] = c.states;
  j["kernel"] = c.kernel;
  std::vector<std::string> names;
  for (std::size_t x : c.refset) names.push_back(c.states[x]);
  j["refset"] = names;
  j["eta"] = c.eta;
  j["theta"] = c.theta;
  return j.dump(2);
}

std::size_t SplitChainSpec::atom_index(std::size_t x) const {
  const auto it = std::lower_bound(refset.begin(), refset.end(), x);
  if (it == refset.end() || *it != x) throw std::invalid_argument("split chain: state is not in the refset");
  return n_base + static_cast<std::size_t>(it - refset.begin());
}

Vector SplitChainSpec::split_measure(const Vector& mu) const {
  if (mu.size() != n_base) throw std::invalid_argument("split_measure: wrong length");
  Vector out(size(), 0.0);
  for (std::size_t y = 0; y < n_base; ++y) out[y] = mu[y];
  for (std::size_t j = 0; j < refset.size(); ++j) {
    const std::size_t y = refset[j];
    out[y] = (1.0 - eta) * mu[y];
    out[n_base + j] = eta * mu[y];
  }
  return out;
}

Vector SplitChainSpec::project(const Vector& mu_star) const {
  if (mu_star.size() != size()) throw std::invalid_argument("project: wrong length");
  Vector out(mu_star.begin(), mu_star.begin() + static_cast<std::ptrdiff_t>(n_base));
  for (std::size_t j = 0; j < refset.size(); ++j) out[refset[j]] += mu_star[n_base + j];
  return out;
}

SplitChainSpec split_chain(const DiscreteChain& chain) {
  chain.validate();
  SplitChainSpec s;
  s.n_base = chain.size();
  s.refset = chain.refset;
  s.eta = chain.eta;
  const Vector theta_star = s.split_measure(chain.theta);
  s.kernel.resize(s.n_base + s.refset.size());
  for (std::size_t x = 0; x < s.n_base; ++x) {
    Vector row = s.split_measure(chain.kernel[x]);
    if (chain.in_refset(x)) {
      if (chain.eta >= 1.0) {
        row = theta_star;
      } else {
        for (std::size_t y = 0; y < row.size(); ++y) {
          row[y] = std::max(0.0, (row[y] - chain.eta * theta_star[y]) / (1.0 - chain.eta));
        }
      }
    }
    s.kernel[x] = std::move(row);
  }
  for (std::size_t j = 0; j < s.refset.size(); ++j) s.kernel[s.n_base + j] = theta_star;
  return s;
}

Matrix project_kernel(const SplitChainSpec& split) {
  Matrix out(split.n_base);
  for (std::size_t x = 0; x < split.n_base; ++x) {
    const Vector start = split.split_measure(point_mass(split.n_base, x));
    out[x] = split.project(step(split.kernel, start));
  }
  return out;
}

Vector point_mass(std::size_t n, std::size_t i) {
  if (i >= n) throw std::out_of_range("point_mass: index out of range");
  Vector v(n, 0.0);
  v[i] = 1.0;
  return v;
}

Vector exact_tv_curve(const DiscreteChain& chain, const Vector& mu, const Vector& nu,
                      std::uint64_t n_max) {
  if (mu.size() != chain.size() || nu.size() != chain.size()) {
    throw std::invalid_argument("exact_tv_curve: measure length mismatch");
  }
  Vector a = mu, b = nu, out;
  out.reserve(n_max + 1);
  for (std::uint64_t n = 0;; ++n) {
    double l1 = 0.0;
    for (std::size_t y = 0; y < a.size(); ++y) l1 += std::abs(a[y] - b[y]);
    out.push_back(0.5 * l1);
    if (n == n_max) break;
    a = step(chain.kernel, a);
    b = step(chain.kernel, b);
  }
  return out;
}

CouplingResult simulate_split_coupling(const DiscreteChain& chain, const Vector& mu,
                                       const Vector& nu, std::uint64_t n_max,
                                       std::uint64_t n_samples, std::uint64_t seed,
                                       unsigned workers, double z) {
  if (n_samples < 1) throw std::invalid_argument("coupling: n_samples must be >= 1");
  const SplitChainSpec split = split_chain(chain);
  std::vector<Vector> rows;
  rows.reserve(split.size());
  for (const auto& r : split.kernel) rows.push_back(cumulate(r));
  const Vector mu_c = cumulate(split.split_measure(mu));
  const Vector nu_c = cumulate(split.split_measure(nu));

  struct Acc {
    std::vector<std::uint64_t> hist;
    std::uint64_t censored = 0;
  };
  const auto plan = farm::ChunkPlan::for_items(n_samples, 64);
  const Acc total = farm::run_reduce(
      plan, workers, Acc{std::vector<std::uint64_t>(n_max + 1, 0), 0},
      [&](std::uint64_t begin, std::uint64_t end, Acc& acc) {
        for (std::uint64_t i = begin; i < end; ++i) {
          RngStream rng(seed, i);
          std::size_t a = draw_index(mu_c, rng.uniform_open());
          std::size_t b = draw_index(nu_c, rng.uniform_open());
          // Both in c1 at t: the step to t + 1 draws one common state from theta*.
          std::uint64_t t = 0;
          while (!(split.is_atom(a) && split.is_atom(b)) && t < n_max) {
            a = draw_index(rows[a], rng.uniform_open());
            b = draw_index(rows[b], rng.uniform_open());
            ++t;
          }
          if (split.is_atom(a) && split.is_atom(b) && t + 1 <= n_max) {
            ++acc.hist[t + 1];
          } else {
            ++acc.censored;
          }
        }
      },
      [](Acc& tot, const Acc& part) {
        for (std::size_t k = 0; k < tot.hist.size(); ++k) tot.hist[k] += part.hist[k];
        tot.censored += part.censored;
      });

  CouplingResult r;
  r.n_max = n_max;
  r.n_samples = n_samples;
  r.t_hist = total.hist;
  r.censored = total.censored;
  std::vector<double> grid(n_max + 1);
  std::vector<std::uint64_t> counts(n_max + 1);
  std::uint64_t above = n_samples;
  for (std::uint64_t n = 0; n <= n_max; ++n) {
    above -= r.t_hist[n];
    grid[n] = static_cast<double>(n);
    counts[n] = above;
  }
  r.survival = tails::curve_from_counts(std::move(grid), std::move(counts), n_samples, z);
  return r;
}

CouplingCheck coupling_inequality_check(const DiscreteChain& chain, const Vector& mu,
                                        const Vector& nu, std::uint64_t n_max,
                                        std::uint64_t n_samples, std::uint64_t seed,
                                        unsigned workers) {
  CouplingCheck c;
  c.tv_exact = exact_tv_curve(chain, mu, nu, n_max);
  c.coupling = simulate_split_coupling(chain, mu, nu, n_max, n_samples, seed, workers);
  const auto& s = c.coupling.survival;
  for (std::uint64_t n = 0; n <= n_max; ++n) {
    const double upper = std::min(1.0, s.p_tilde[n] + s.halfwidth[n]);
    if (c.tv_exact[n] > 2.0 * upper) c.violations.push_back(n);
  }
  return c;
}

std::string coupling_csv(const CouplingCheck& c) {
  std::ostringstream os;
  os << "n,tv_exact,p_T_gt_n,halfwidth\n";
  const auto& s = c.coupling.survival;
  for (std::size_t n = 0; n < c.tv_exact.size(); ++n) {
    os << n << ',' << format_double(c.tv_exact[n]) << ',' << format_double(s.p_tilde[n]) << ','
       << format_double(s.halfwidth[n]) << '\n';
  }
  return os.str();
}

std::optional<Dominance> dominate_check(const DiscreteChain& chain) {
  std::optional<Dominance> best;
  for (std::size_t xs : chain.refset) {
    double delta = INFINITY;
    for (std::size_t x : chain.refset) {
      for (std::size_t y = 0; y < chain.size(); ++y) {
        const double den = chain.kernel[x][y];
        if (den == 0.0) continue;
        delta = std::min(delta, chain.kernel[xs][y] / den);
      }
    }
    if (delta > 0.0 && (!best || delta > best->delta)) best = Dominance{xs, delta};
  }
  return best;
}

DiscreteChain random_minorized_chain(std::size_t n, RngStream& rng) {
  if (n < 1) throw std::invalid_argument("random_minorized_chain: n must be >= 1");
  auto random_prob = [&](std::size_t len) {
    Vector p(len);
    for (double& v : p) v = rng.exponential_mean(1.0);
    const double s = row_sum(p);
    for (double& v : p) v /= s;
    return p;
  };
  std::vector<std::size_t> refset;
  for (std::size_t i = 0; i < n; ++i) {
    if (rng.uniform_open() < 0.5) refset.push_back(i);
  }
  if (refset.empty()) refset.push_back(static_cast<std::size_t>(rng.uniform_open() * static_cast<double>(n)) % n);
  const double eta = 0.1 + 0.8 * rng.uniform_open();
  const Vector theta = random_prob(n);
  Matrix k(n);
  for (std::size_t x = 0; x < n; ++x) {
    k[x] = random_prob(n);
    if (std::binary_search(refset.begin(), refset.end(), x)) {
      for (std::size_t y = 0; y < n; ++y) k[x][y] = eta * theta[y] + (1.0 - eta) * k[x][y];
    }
    // Renormalize so the row sum is 1 to rounding.
    const double s = row_sum(k[x]);
    for (double& v : k[x]) v /= s;
  }
  std::vector<std::string> names(n);
  for (std::size_t i = 0; i < n; ++i) names[i] = "s" + std::to_string(i);
  return make_chain(std::move(names), std::move(k), std::move(refset));
}

// --- renewal ---------------------------------------------------------------

IntegerLaw IntegerLaw::point(std::uint64_t v) {
  Vector p(v + 1, 0.0);
  p[v] = 1.0;
  return from_pmf(std::move(p));
}

IntegerLaw IntegerLaw::from_pmf(Vector pmf) {
  IntegerLaw l;
  l.pmf = std::move(pmf);
  return l;
}

IntegerLaw IntegerLaw::from_tail(std::function<double(std::uint64_t)> tail) {
  IntegerLaw l;
  l.tail = std::move(tail);
  return l;
}

double IntegerLaw::tail_at(std::uint64_t n) const {
  if (tail) return tail(n);
  double s = 0.0;
  for (std::size_t k = n + 1; k < pmf.size(); ++k) s += pmf[k];
  return s;
}

std::uint64_t IntegerLaw::sample(RngStream& rng) const {
  const double u = rng.uniform_open();
  if (!tail) {
    double c = 0.0;
    for (std::size_t k = 0; k < pmf.size(); ++k) {
      c += pmf[k];
      if (u < c) return k;
    }
    for (std::size_t k = pmf.size(); k > 0; --k) {
      if (pmf[k - 1] > 0.0) return k - 1;
    }
    return 0;
  }
  // Smallest n with tail(n) < u: exponential search, then bisection.
  if (tail(0) < u) return 0;
  std::uint64_t lo = 0, hi = 1;
  while (!(tail(hi) < u)) {
    lo = hi;
    if (hi > (std::uint64_t{1} << 62)) throw std::runtime_error("IntegerLaw: tail does not vanish");
    hi *= 2;
  }
  while (hi - lo > 1) {
    const std::uint64_t mid = lo + (hi - lo) / 2;
    (tail(mid) < u ? hi : lo) = mid;
  }
  return hi;
}

void RenewalSpec::validate() const {
  auto check_law = [](const IntegerLaw& l, const char* name) {
    if (l.tail) return;
    double s = 0.0;
    for (double p : l.pmf) {
      if (!(p >= 0.0)) throw std::invalid_argument(std::string("renewal: negative mass in ") + name);
      s += p;
    }
    if (std::abs(s - 1.0) > kRowTolerance) throw std::invalid_argument(std::string("renewal: ") + name + " does not sum to 1");
  };
  check_law(y, "Y");
  check_law(delay, "Y0");
  check_law(delay_p, "Y0'");
  if (y.tail_at(0) < 1.0 - kRowTolerance) throw std::invalid_argument("renewal: P[Y = 0] must be 0");
  std::uint64_t g = 0;
  const std::uint64_t limit = y.tail ? 10000 : y.pmf.size();
  double prev = y.tail_at(0);
  for (std::uint64_t n = 1; n < limit + (y.tail ? 1 : 0); ++n) {
    const double cur = y.tail_at(n);
    if (prev - cur > 0.0) g = std::gcd(g, n);
    prev = cur;
    if (g == 1) break;
  }
  if (g != 1) throw std::invalid_argument("renewal: Y is periodic (gcd of support is " + std::to_string(g) + ")");
}

std::uint64_t coupling_time_sample(const RenewalSpec& spec, RngStream& rng) {
  std::uint64_t a = spec.delay.sample(rng);
  std::uint64_t b = spec.delay_p.sample(rng);
  while (a != b) {
    if (a < b) {
      a += spec.y.sample(rng);
    } else {
      b += spec.y.sample(rng);
    }
  }
  return a;
}

}  // namespace polymix::couplab
