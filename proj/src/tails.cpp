#include "polymix/tails.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "polymix/format.hpp"

namespace polymix::tails {

Interval agresti_coull(std::uint64_t m, std::uint64_t n, double z) {
  if (n < 1) throw std::domain_error("agresti_coull: n must be >= 1");
  if (m > n) throw std::domain_error("agresti_coull: m must not exceed n");
  if (!(z >= 0.0)) throw std::domain_error("agresti_coull: z must be >= 0");
  const double z2 = z * z;
  const double n_adj = static_cast<double>(n) + z2;
  const double p = (static_cast<double>(m) + 0.5 * z2) / n_adj;
  return {p, z * std::sqrt(p * (1.0 - p) / n_adj)};
}

std::vector<double> log_grid(double t_min, double t_max, int per_decade) {
  if (!(t_min > 0.0) || !(t_max >= t_min)) {
    throw std::invalid_argument("log_grid: need 0 < t_min <= t_max");
  }
  if (per_decade < 1) throw std::invalid_argument("log_grid: per_decade must be >= 1");
  std::vector<double> grid;
  for (int k = 0;; ++k) {
    const double t = t_min * std::pow(10.0, static_cast<double>(k) / per_decade);
    if (t > t_max * (1.0 + 1e-12)) break;
    grid.push_back(std::min(t, t_max));
  }
  if (grid.back() < t_max * (1.0 - 1e-12)) grid.push_back(t_max);
  return grid;
}

void SurvivalCurve::check() const {
  const std::size_t k = grid.size();
  if (counts.size() != k || p_tilde.size() != k || halfwidth.size() != k) {
    throw std::invalid_argument("SurvivalCurve: column lengths differ");
  }
  for (std::size_t i = 0; i < k; ++i) {
    if (i > 0 && !(grid[i] > grid[i - 1])) throw std::invalid_argument("SurvivalCurve: grid not increasing");
    if (counts[i] > n_total) throw std::invalid_argument("SurvivalCurve: m_k exceeds n");
    if (i > 0 && counts[i] > counts[i - 1]) throw std::invalid_argument("SurvivalCurve: m_k increasing");
  }
}

SurvivalCurve curve_from_counts(std::vector<double> grid, std::vector<std::uint64_t> counts,
                                std::uint64_t n_total, double z) {
  if (n_total == 0) throw std::invalid_argument("survival curve: empty sample");
  SurvivalCurve c;
  c.grid = std::move(grid);
  c.counts = std::move(counts);
  c.n_total = n_total;
  c.z = z;
  c.p_tilde.reserve(c.grid.size());
  c.halfwidth.reserve(c.grid.size());
  for (auto m : c.counts) {
    const auto ci = agresti_coull(m, n_total, z);
    c.p_tilde.push_back(ci.p_tilde);
    c.halfwidth.push_back(ci.halfwidth);
  }
  c.check();
  return c;
}

namespace {

void check_grid(const std::vector<double>& grid) {
  if (grid.empty()) throw std::invalid_argument("survival grid is empty");
  for (std::size_t i = 1; i < grid.size(); ++i) {
    if (!(grid[i] > grid[i - 1])) throw std::invalid_argument("survival grid must be increasing");
  }
}

// Number of grid points strictly below tau; censored outcomes exceed all.
std::size_t bin_of(const std::vector<double>& grid, const engine::PassageOutcome& o) {
  if (!o.is_hit()) return grid.size();
  return static_cast<std::size_t>(std::lower_bound(grid.begin(), grid.end(), o.time) - grid.begin());
}

}  // namespace

SurvivalCurve estimate_survival(std::span<const engine::PassageOutcome> outcomes,
                                const std::vector<double>& grid, double z) {
  if (outcomes.empty()) throw std::invalid_argument("estimate_survival: no outcomes");
  check_grid(grid);
  std::vector<std::uint64_t> hist(grid.size() + 1, 0);
  for (const auto& o : outcomes) {
    if (!o.is_hit() && grid.back() > o.time) {
      throw std::invalid_argument("estimate_survival: grid extends past a censoring horizon");
    }
    ++hist[bin_of(grid, o)];
  }
  std::vector<std::uint64_t> counts(grid.size(), 0);
  std::uint64_t above = hist.back();
  for (std::size_t k = grid.size(); k-- > 0;) {
    counts[k] = above;
    above += hist[k];
  }
  return curve_from_counts(grid, std::move(counts), outcomes.size(), z);
}

IndexRange reliable_range(const SurvivalCurve& curve, std::uint64_t m_min) {
  std::size_t end = 0;
  while (end < curve.size() && curve.counts[end] >= m_min) ++end;
  return {0, end};
}

IndexRange restrict_from(const SurvivalCurve& curve, IndexRange range, double t_lo) {
  while (range.begin < range.end && curve.grid[range.begin] < t_lo) ++range.begin;
  return range;
}

IndexRange tail_window(const SurvivalCurve& curve, std::uint64_t m_min, double decades, double t_lo) {
  const auto rel = reliable_range(curve, m_min);
  if (rel.empty()) return rel;
  const double t_last = curve.grid[rel.end - 1];
  return restrict_from(curve, rel, std::max(t_lo, t_last * std::pow(10.0, -decades) * (1.0 - 1e-12)));
}

TailFit fit_slope(const SurvivalCurve& curve, IndexRange range) {
  if (range.end > curve.size()) throw std::out_of_range("fit_slope: range exceeds curve");
  if (range.size() < 3) throw std::invalid_argument("fit_slope: need at least 3 points");
  bool weighted = true;
  for (std::size_t k = range.begin; k < range.end; ++k) {
    if (!(curve.p_tilde[k] > 0.0)) throw std::invalid_argument("fit_slope: p_tilde must be > 0");
    if (!(curve.halfwidth[k] > 0.0)) weighted = false;
  }
  double sw = 0.0, sx = 0.0, sy = 0.0;
  std::vector<double> x, y, w;
  for (std::size_t k = range.begin; k < range.end; ++k) {
    const double wk = weighted ? std::pow(curve.halfwidth[k] / curve.p_tilde[k], -2.0) : 1.0;
    x.push_back(std::log(curve.grid[k]));
    y.push_back(std::log(curve.p_tilde[k]));
    w.push_back(wk);
    sw += wk;
    sx += wk * x.back();
    sy += wk * y.back();
  }
  const double xbar = sx / sw;
  const double ybar = sy / sw;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += w[i] * (x[i] - xbar) * (x[i] - xbar);
    sxy += w[i] * (x[i] - xbar) * (y[i] - ybar);
  }
  if (!(sxx > 0.0)) throw std::invalid_argument("fit_slope: degenerate design (all t equal)");
  const double slope = sxy / sxx;
  const double intercept = ybar - slope * xbar;
  double rss = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = y[i] - (intercept + slope * x[i]);
    rss += w[i] * r * r;
  }
  const double dof = static_cast<double>(x.size()) - 2.0;
  TailFit fit;
  fit.beta = -slope;
  fit.std_err = std::sqrt(rss / dof / sxx);
  fit.intercept = intercept;
  fit.fit_range = range;
  return fit;
}

GammaEstimate gamma_estimate(const SurvivalCurve& curve, double beta, double h,
                             std::uint64_t m_min) {
  const auto range = reliable_range(curve, m_min);
  GammaEstimate g;
  bool any = false;
  for (std::size_t k = range.begin; k < range.end; ++k) {
    const double t = curve.grid[k];
    if (t < h) continue;
    const double v = curve.p_tilde[k] * std::pow(t, beta);
    if (!any || v > g.value) {
      g.value = v;
      g.argmax_time = t;
      g.argmax_index = k;
      any = true;
    }
  }
  if (!any) throw std::invalid_argument("gamma_estimate: no reliable grid point with t >= h");
  return g;
}

PassageTally::PassageTally(std::vector<double> grid, std::uint64_t n_samples, std::size_t n_blocks)
    : grid_(std::move(grid)), n_samples_(n_samples) {
  check_grid(grid_);
  if (n_samples == 0) throw std::invalid_argument("PassageTally: n_samples must be >= 1");
  const auto blocks = std::max<std::uint64_t>(1, std::min<std::uint64_t>(n_blocks, n_samples));
  hist_.assign(blocks, std::vector<std::uint64_t>(grid_.size() + 1, 0));
}

std::size_t PassageTally::block_of(std::uint64_t i) const {
  // Inverse of the contiguous split begin(b) = b * n / B.
  const std::uint64_t nb = hist_.size();
  std::uint64_t b = (i * nb) / n_samples_;
  while (b + 1 < nb && (b + 1) * n_samples_ / nb <= i) ++b;
  while (b > 0 && b * n_samples_ / nb > i) --b;
  return static_cast<std::size_t>(b);
}

void PassageTally::add(std::uint64_t sample_index, const engine::PassageOutcome& o) {
  if (!o.is_hit() && grid_.back() > o.time) {
    throw std::invalid_argument("PassageTally: grid extends past the censoring horizon");
  }
  ++hist_[block_of(sample_index)][bin_of(grid_, o)];
}

void PassageTally::merge(const PassageTally& other) {
  if (other.hist_.size() != hist_.size() || other.grid_ != grid_) {
    throw std::invalid_argument("PassageTally::merge: incompatible tallies");
  }
  for (std::size_t b = 0; b < hist_.size(); ++b) {
    for (std::size_t j = 0; j < hist_[b].size(); ++j) hist_[b][j] += other.hist_[b][j];
  }
}

std::uint64_t PassageTally::recorded() const {
  std::uint64_t n = 0;
  for (const auto& h : hist_) {
    for (auto c : h) n += c;
  }
  return n;
}

std::uint64_t PassageTally::censored() const {
  std::uint64_t n = 0;
  for (const auto& h : hist_) n += h.back();
  return n;
}

SurvivalCurve PassageTally::curve(double z, std::size_t b0, std::size_t b1) const {
  if (b1 > hist_.size() || b0 >= b1) throw std::out_of_range("PassageTally::curve: bad block range");
  std::vector<std::uint64_t> hist(grid_.size() + 1, 0);
  for (std::size_t b = b0; b < b1; ++b) {
    for (std::size_t j = 0; j < hist.size(); ++j) hist[j] += hist_[b][j];
  }
  std::uint64_t n = 0;
  for (auto c : hist) n += c;
  std::vector<std::uint64_t> counts(grid_.size(), 0);
  std::uint64_t above = hist.back();
  for (std::size_t k = grid_.size(); k-- > 0;) {
    counts[k] = above;
    above += hist[k];
  }
  return curve_from_counts(grid_, std::move(counts), n, z);
}

namespace {

double mean_sem(const std::vector<double>& v, double* sem) {
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  const double n = static_cast<double>(v.size());
  *sem = v.size() > 1 ? std::sqrt(ss / (n - 1.0) / n) : 0.0;
  return mean;
}

}  // namespace

GammaEstimate gamma_from_tally(const PassageTally& tally, double beta, double h,
                               const GammaOptions& opts) {
  const SurvivalCurve full = tally.curve(opts.z);
  GammaEstimate g = gamma_estimate(full, beta, h, opts.m_min);
  const std::size_t nb = tally.n_blocks();

  if (nb >= 4) {
    for (std::size_t b1 : {nb / 4, nb / 2, nb}) {
      try {
        g.prefix_values.push_back(gamma_estimate(tally.curve(opts.z, 0, b1), beta, h, opts.m_min).value);
      } catch (const std::invalid_argument&) {
        g.prefix_values.push_back(std::numeric_limits<double>::quiet_NaN());
      }
    }
    const auto& p = g.prefix_values;
    auto close = [&](double a, double b) {
      return std::isfinite(a) && std::isfinite(b) && std::abs(b - a) < opts.stabilization_tol * std::abs(b);
    };
    g.stabilized = close(p[0], p[1]) && close(p[1], p[2]);
  }

  const std::size_t batches = std::min(opts.batches, nb);
  std::vector<double> values;
  for (std::size_t i = 0; i < batches && batches >= 2; ++i) {
    const std::size_t b0 = i * nb / batches;
    const std::size_t b1 = (i + 1) * nb / batches;
    try {
      values.push_back(gamma_estimate(tally.curve(opts.z, b0, b1), beta, h, opts.m_min).value);
    } catch (const std::invalid_argument&) {
    }
  }
  g.batches_used = values.size();
  if (values.size() >= 2) {
    mean_sem(values, &g.std_dev);
  } else {
    // Too few batches reach m_min: binomial sd at the argmax instead.
    const std::size_t k = g.argmax_index;
    const double p = full.p_tilde[k];
    const double n_eff = static_cast<double>(full.n_total) + opts.z * opts.z;
    g.std_dev = std::sqrt(p * (1.0 - p) / n_eff) * std::pow(full.grid[k], beta);
  }
  return g;
}

double BatchedFit::combined_std_err() const { return std::max(fit.std_err, batch_std_err); }

BatchedFit fit_slope_batched(const PassageTally& tally, IndexRange window, const GammaOptions& opts) {
  const auto curve = tally.curve(opts.z);
  BatchedFit out;
  out.fit = fit_slope(curve, window);

  const std::size_t nb = tally.n_blocks();
  const std::size_t batches = std::min(opts.batches, nb);
  std::vector<double> slopes;
  for (std::size_t i = 0; i < batches && batches >= 2; ++i) {
    const auto bc = tally.curve(opts.z, i * nb / batches, (i + 1) * nb / batches);
    // Points reliable in the batch, inside the full-sample window.
    IndexRange r = reliable_range(bc, opts.m_min / batches);
    r.begin = window.begin;
    r.end = std::min(r.end, window.end);
    if (r.size() < 3) continue;
    slopes.push_back(fit_slope(bc, r).beta);
  }
  if (slopes.size() >= 2) mean_sem(slopes, &out.batch_std_err);
  return out;
}

MomentSeries truncated_moment(const TailFunction& tail, double order, std::uint64_t n_max,
                              double tol) {
  if (n_max < 100) throw std::invalid_argument("truncated_moment: n_max must be >= 100");
  MomentSeries s;
  s.order = order;
  double sum = 0.0;
  double comp = 0.0;  // Kahan compensation
  double prev_tail = tail(0.0);
  std::uint64_t next_checkpoint = 10;
  for (std::uint64_t n = 1; n <= n_max; ++n) {
    const double cur_tail = tail(static_cast<double>(n));
    const double term = std::pow(static_cast<double>(n), order) * (prev_tail - cur_tail);
    prev_tail = cur_tail;
    const double y = term - comp;
    const double t = sum + y;
    comp = (t - sum) - y;
    sum = t;
    if (n == next_checkpoint || n == n_max) {
      s.checkpoints.push_back(n);
      s.partial_sums.push_back(sum);
      next_checkpoint *= 10;
    }
    if (n == n_max) s.last_term = term;
  }
  const std::size_t k = s.partial_sums.size();
  if (k >= 3) {
    const double d_last = s.partial_sums[k - 1] - s.partial_sums[k - 2];
    const double d_prev = s.partial_sums[k - 2] - s.partial_sums[k - 3];
    s.decade_ratio = d_prev > 0.0 ? d_last / d_prev : 0.0;
  }
  s.converged = s.last_term < tol && s.decade_ratio < 0.9;
  return s;
}

MomentTailReport moment_tail_check(const TailFunction& tail, double beta, double epsilon,
                                   std::uint64_t n_max, double tol) {
  if (!(epsilon > 0.0)) throw std::invalid_argument("moment_tail_check: epsilon must be > 0");
  MomentTailReport r;
  r.beta = beta;
  r.epsilon = epsilon;
  r.below = truncated_moment(tail, beta - epsilon, n_max, tol);
  r.at = truncated_moment(tail, beta, n_max, tol);
  const auto n = static_cast<double>(n_max);
  r.tail_product = std::pow(n, beta) * tail(n);
  return r;
}

TailFunction tail_from_curve(const SurvivalCurve& curve) {
  return [grid = curve.grid, counts = curve.counts, n = curve.n_total](double t) {
    const auto it = std::upper_bound(grid.begin(), grid.end(), t);
    if (it == grid.begin()) return 1.0;
    const auto k = static_cast<std::size_t>(it - grid.begin()) - 1;
    return static_cast<double>(counts[k]) / static_cast<double>(n);
  };
}

std::string survival_csv(const SurvivalCurve& curve) {
  std::string out = "t,m,n,p_tilde,halfwidth\n";
  for (std::size_t k = 0; k < curve.size(); ++k) {
    out += format_double(curve.grid[k]);
    out += ',';
    out += std::to_string(curve.counts[k]);
    out += ',';
    out += std::to_string(curve.n_total);
    out += ',';
    out += format_double(curve.p_tilde[k]);
    out += ',';
    out += format_double(curve.halfwidth[k]);
    out += '\n';
  }
  return out;
}

}  // namespace polymix::tails
