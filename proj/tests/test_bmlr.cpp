#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <vector>

#include "exnet/bmlr.hpp"
#include "support.hpp"

using namespace exnet;
using namespace exnet::bmlr;
using testing_support::make_dataset;

namespace {

// Independent long-double evaluation of the model density.
long double ref_log_normal(long double x, long double m, long double v) {
  const long double pi = 3.141592653589793238462643383279502884L;
  return -0.5L * std::log(2.0L * pi * v) - (x - m) * (x - m) / (2.0L * v);
}

long double ref_log_posterior(const ModelParams& p, const SubjectAreaDataset& d) {
  const auto refs = d.references();
  long double lp = 0.0L;
  for (std::size_t e = 0; e < d.edges.size(); ++e) {
    const auto& edge = d.edges[e];
    const long double n = static_cast<long double>(edge.n_papers);
    const long double y = static_cast<long double>(edge.n_top);
    const long double prob = 1.0L / (1.0L + std::exp(-static_cast<long double>(p.u[e])));
    lp += std::lgamma(n + 1) - std::lgamma(y + 1) - std::lgamma(n - y + 1) + y * std::log(prob) +
          (n - y) * std::log1p(-prob);
    const auto j = static_cast<std::size_t>(std::find(refs.begin(), refs.end(), edge.ref_id) - refs.begin());
    lp += ref_log_normal(p.u[e], p.tau[j], p.sigma2_u);
  }
  for (double t : p.tau) lp += ref_log_normal(t, p.beta0, p.sigma2_tau);
  lp += ref_log_normal(p.beta0, 0.0L, 1000.0L);
  lp += std::log(2.0L) + ref_log_normal(p.sigma2_u, 0.0L, 1000.0L);
  lp += std::log(2.0L) + ref_log_normal(p.sigma2_tau, 0.0L, 1000.0L);
  return lp;
}

Chain constant_chain(const SubjectAreaDataset& d, std::size_t draws, double u_value, double tau_value = 0.0) {
  Chain c;
  c.seed = 99;
  c.ref_ids = d.references();
  for (const auto& e : d.edges) {
    c.edge_keys.emplace_back(e.ref_id, e.net_id);
    c.edge_n.push_back(e.n_papers);
  }
  c.beta0.assign(draws, tau_value);
  c.sigma2_u.assign(draws, 0.1);
  c.sigma2_tau.assign(draws, 0.1);
  c.tau.assign(draws * c.ref_ids.size(), tau_value);
  c.u.assign(draws * d.edges.size(), u_value);
  return c;
}

// Exhaustive shortest-window search; leftmost on ties.
Interval brute_hpd(const std::vector<double>& sorted, double level) {
  const auto n = sorted.size();
  const auto k = static_cast<std::size_t>(std::ceil(level * static_cast<double>(n) - 1e-9));
  Interval best{sorted.front(), sorted.back()};
  double width = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j) {
      if (j - i + 1 < k) continue;
      const double w = sorted[j] - sorted[i];
      if (w < width) {
        width = w;
        best = {sorted[i], sorted[j]};
      }
      break;  // longer windows from i are never shorter
    }
  return best;
}

}  // namespace

TEST_CASE("logistic helpers") {
  CHECK(inv_logit(0.0) == 0.5);
  CHECK(inv_logit(-1.27) == doctest::Approx(1.0 / (1.0 + std::exp(1.27))).epsilon(1e-15));
  CHECK(std::abs(inv_logit(-1.27) - 0.219257) < 1e-6);
  CHECK(logit(inv_logit(0.3)) == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(std::isfinite(log1p_exp(1000.0)));
  CHECK(log1p_exp(1000.0) == doctest::Approx(1000.0));
  CHECK(log1p_exp(-1000.0) >= 0.0);
  CHECK(inv_logit(-800.0) >= 0.0);
  CHECK(inv_logit(800.0) <= 1.0);
}

TEST_CASE("empty dataset leaves only the prior terms") {
  SubjectAreaDataset empty;
  ModelParams p;
  p.beta0 = 0.7;
  p.sigma2_u = 2.0;
  p.sigma2_tau = 0.5;
  const double expected = log_normal_pdf(0.7, 0.0, 1000.0) + log_half_normal_pdf(2.0, 1000.0) +
                          log_half_normal_pdf(0.5, 1000.0);
  CHECK(log_posterior(p, empty) == doctest::Approx(expected).epsilon(1e-14));
  CHECK(static_cast<double>(ref_log_posterior(p, empty)) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("single-edge posterior by hand") {
  const auto d = make_dataset({{"R", "N", 10, 5}});
  ModelParams p{0.0, 1.0, 1.0, {0.0}, {0.0}};
  const double pi = 3.14159265358979323846;
  const double z = -0.5 * std::log(2.0 * pi);
  const double hn = std::log(2.0) - 0.5 * std::log(2.0 * pi * 1000.0) - 1.0 / 2000.0;
  const double expected = std::log(252.0) + 10.0 * std::log(0.5) + z + z + (-0.5 * std::log(2.0 * pi * 1000.0)) + 2.0 * hn;
  CHECK(log_posterior(p, d) == doctest::Approx(expected).epsilon(1e-13));
}

TEST_CASE("log posterior agrees with an independent long-double evaluation") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> un(-2.0, 2.0);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<CollabEdge> edges;
    const int refs = 1 + static_cast<int>(rng() % 4);
    for (int r = 0; r < refs; ++r) {
      const int nets = 1 + static_cast<int>(rng() % 4);
      for (int k = 0; k < nets; ++k) {
        const auto n = static_cast<std::int64_t>(1 + rng() % 120);
        edges.push_back({"R" + std::to_string(r), "N" + std::to_string(k), n, static_cast<std::int64_t>(rng() % (n + 1))});
      }
    }
    const auto d = make_dataset(edges);
    ModelParams p;
    p.beta0 = un(rng);
    p.sigma2_u = 0.05 + std::abs(un(rng));
    p.sigma2_tau = 0.05 + std::abs(un(rng));
    for (int r = 0; r < refs; ++r) p.tau.push_back(un(rng));
    for (std::size_t e = 0; e < d.edges.size(); ++e) p.u.push_back(un(rng));
    const double got = log_posterior(p, d);
    const double want = static_cast<double>(ref_log_posterior(p, d));
    CHECK(std::abs(got - want) <= 1e-9 * std::max(1.0, std::abs(want)));
  }
}

TEST_CASE("likelihood depends on u alone") {
  const auto d = make_dataset({{"A", "X", 20, 4}, {"A", "Y", 15, 9}, {"B", "X", 30, 3}});
  ModelParams p{-1.0, 0.3, 0.4, {-0.5, 0.2}, {-1.2, 0.4, -2.0}};
  const double ll = log_likelihood(p, d);
  const double lp = log_posterior(p, d);
  p.beta0 += 0.9;
  for (auto& t : p.tau) t += 0.9;
  CHECK(log_likelihood(p, d) == ll);
  CHECK(log_posterior(p, d) != lp);
}

TEST_CASE("log posterior rejects bad variances and dimensions") {
  const auto d = make_dataset({{"A", "X", 20, 4}});
  ModelParams p{0.0, 0.0, 1.0, {0.0}, {0.0}};
  CHECK_THROWS_AS(log_posterior(p, d), std::domain_error);
  p.sigma2_u = 1.0;
  p.sigma2_tau = -1.0;
  CHECK_THROWS_AS(log_posterior(p, d), std::domain_error);
  p.sigma2_tau = 1.0;
  p.u.push_back(0.0);
  CHECK_THROWS_AS(log_posterior(p, d), std::invalid_argument);
}

TEST_CASE("Goldstein intervals") {
  auto g = goldstein_interval(0.0, 1.0);
  CHECK(g.lower == -1.39);
  CHECK(g.upper == 1.39);
  g = goldstein_interval(-1.27, 0.06);
  CHECK(std::abs(g.lower - (-1.3534)) <= 1e-12);
  CHECK(std::abs(g.upper - (-1.1866)) <= 1e-12);
  g = goldstein_interval(0.4, 0.0);
  CHECK(g.lower == 0.4);
  CHECK(g.upper == 0.4);
  CHECK(intervals_overlap({0, 1}, {1, 2}));
  CHECK_FALSE(intervals_overlap({0, 1}, {1.5, 2}));
}

TEST_CASE("ICC") {
  CHECK(std::abs(icc(0.14, 0.32) - 0.46 / 3.75) <= 1e-12);
  CHECK(icc(0.0, 0.0) == 0.0);
  CHECK(icc(1.645, 1.645) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK_THROWS_AS(icc(-0.1, 0.2), std::domain_error);
  double prev = -1.0;
  for (double s = 0.0; s < 50.0; s += 0.5) {
    const double v = icc(s, 0.3);
    CHECK(v > prev);
    CHECK(v < 1.0);
    CHECK(icc(0.3, s) == doctest::Approx(v));
    prev = v;
  }
}

TEST_CASE("HPD: uniform grid, constants, skewed samples") {
  std::vector<double> grid(100);
  std::iota(grid.begin(), grid.end(), 1.0);
  auto h = hpd_interval(grid, 0.95);
  CHECK(h.lower == 1.0);
  CHECK(h.upper == 95.0);

  const std::vector<double> flat(150, 2.5);
  h = hpd_interval(flat);
  CHECK(h.lower == 2.5);
  CHECK(h.upper == 2.5);

  std::mt19937_64 rng(8);
  std::exponential_distribution<double> ex(1.0);
  std::vector<double> skew(4000);
  for (auto& v : skew) v = ex(rng);
  std::sort(skew.begin(), skew.end());
  h = hpd_interval(skew);
  const double tail_lo = skew[static_cast<std::size_t>(0.025 * 4000)];
  const double tail_hi = skew[static_cast<std::size_t>(0.975 * 4000) - 1];
  CHECK(h.upper - h.lower < tail_hi - tail_lo);

  CHECK_THROWS(hpd_interval(grid, 0.0));
  CHECK_THROWS(hpd_interval(grid, 1.0));
}

TEST_CASE("HPD matches exhaustive window search") {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t n = 100 + rng() % 900;
    std::vector<double> s(n);
    std::gamma_distribution<double> g(1.5, 1.0);
    for (auto& v : s) v = std::round(g(rng) * 20.0) / 20.0;  // coarse values force ties
    std::sort(s.begin(), s.end());
    const double level = trial % 2 ? 0.95 : 0.8;
    const auto got = hpd_interval(s, level);
    const auto want = brute_hpd(s, level);
    CHECK(got.lower == want.lower);
    CHECK(got.upper == want.upper);
    const auto inside = std::count_if(s.begin(), s.end(), [&](double v) { return v >= got.lower && v <= got.upper; });
    CHECK(static_cast<double>(inside) >= std::ceil(level * static_cast<double>(n) - 1e-9));
  }
}

TEST_CASE("summaries of constant and symmetric samples") {
  const std::vector<double> c(200, -0.75);
  auto s = summarize(c);
  CHECK(s.mean == -0.75);
  CHECK(s.sd == 0.0);
  CHECK(s.hpd.lower == -0.75);
  CHECK(s.hpd.upper == -0.75);

  std::mt19937_64 rng(4);
  std::normal_distribution<double> nd(1.0, 2.0);
  std::vector<double> x(20000);
  for (auto& v : x) v = nd(rng);
  s = summarize(x);
  auto sorted = x;
  std::sort(sorted.begin(), sorted.end());
  CHECK(s.hpd.lower == doctest::Approx(sorted[500]).epsilon(0.05));
  CHECK(s.hpd.upper == doctest::Approx(sorted[19499]).epsilon(0.05));
  CHECK(s.goldstein.lower == doctest::Approx(s.mean - 1.39 * s.sd));
  CHECK(s.goldstein.upper == doctest::Approx(s.mean + 1.39 * s.sd));
}

TEST_CASE("unknown selector is an error") {
  const auto d = make_dataset({{"A", "X", 20, 4}});
  const auto c = constant_chain(d, 200, 0.0);
  CHECK_THROWS_AS(summarize(c, "gamma"), std::invalid_argument);
  CHECK_THROWS_AS(summarize(c, "tau[Z]"), std::invalid_argument);
  CHECK(summarize(c, "tau[A]").mean == 0.0);
  CHECK(summarize(c, "u[A,X]").mean == 0.0);
}

TEST_CASE("DIC of a constant chain and of a two-draw chain") {
  const auto d = make_dataset({{"A", "X", 10, 3}});
  auto c = constant_chain(d, 5, -0.5);
  auto r = dic(c, d);
  CHECK(r.p_d == doctest::Approx(0.0).epsilon(1e-12));
  const double dev = -2.0 * log_binomial_pmf(3, 10, -0.5);
  CHECK(r.dic == doctest::Approx(dev).epsilon(1e-12));

  c = constant_chain(d, 2, 0.0);
  c.u = {-1.0, 0.4};
  r = dic(c, d);
  auto bin = [](double x) {
    const double p = 1.0 / (1.0 + std::exp(-x));
    return -2.0 * (std::log(120.0) + 3.0 * std::log(p) + 7.0 * std::log(1.0 - p));
  };
  const double dbar = 0.5 * (bin(-1.0) + bin(0.4));
  const double dhat = bin(-0.3);
  CHECK(r.mean_deviance == doctest::Approx(dbar).epsilon(1e-12));
  CHECK(r.deviance_at_mean == doctest::Approx(dhat).epsilon(1e-12));
  CHECK(r.dic == doctest::Approx(2.0 * dbar - dhat).epsilon(1e-12));
  CHECK(r.negative_p_d == (dbar < dhat));
}

TEST_CASE("reference rates") {
  const auto d = make_dataset({{"A", "X", 20, 4}, {"B", "X", 20, 6}});
  auto c = constant_chain(d, 300, 0.0, -1.27);
  auto r = predict_ref_rate(c, "A");
  CHECK(r.mean == doctest::Approx(1.0 / (1.0 + std::exp(1.27))).epsilon(1e-14));
  CHECK(std::abs(r.mean - 0.22) < 5e-3);
  c = constant_chain(d, 300, 0.0, 0.0);
  CHECK(predict_ref_rate(c, "B").mean == 0.5);
  CHECK_THROWS(predict_ref_rate(c, "Q"));

  std::mt19937_64 rng(6);
  std::normal_distribution<double> nd(-2.0, 0.5);
  for (auto& t : c.tau) t = nd(rng);
  const auto per_draw = predict_ref_rate(c, std::size_t{0});
  const auto of_mean = predict_ref_rate(c, std::size_t{0}, RateMode::logistic_of_mean);
  const auto taus = c.tau_trace(0);
  double m = 0.0, lm = 0.0;
  for (double t : taus) {
    m += inv_logit(t);
    lm += t;
  }
  m /= static_cast<double>(taus.size());
  lm /= static_cast<double>(taus.size());
  CHECK(per_draw.mean == doctest::Approx(m).epsilon(1e-12));
  CHECK(of_mean.mean == doctest::Approx(inv_logit(lm)).epsilon(1e-12));
  CHECK(per_draw.mean > of_mean.mean);  // logistic is convex below zero
  CHECK(per_draw.hpd.lower >= 0.0);
  CHECK(per_draw.hpd.upper <= 1.0);
}

TEST_CASE("edge rates are posterior predictive") {
  const auto d = make_dataset({{"A", "X", 25, 4}, {"A", "Y", 40, 10}});
  auto zero = constant_chain(d, 500, -1e3);
  auto r = predict_edge_rate(zero, "A", "X");
  CHECK(r.mean == 0.0);
  CHECK(r.hpd.upper == 0.0);

  const double c = 0.3;
  auto chain = constant_chain(d, 4000, logit(c));
  r = predict_edge_rate(chain, "A", "Y");
  CHECK(std::abs(r.mean - c) <= 3.0 * std::sqrt(c * (1 - c) / (40.0 * 4000.0)));
  CHECK(r.goldstein.lower >= 0.0);
  CHECK(predict_edge_rate(chain, std::size_t{1}).mean == r.mean);
  CHECK_THROWS(predict_edge_rate(chain, "A", "Z"));

  const double overall = overall_rate(chain, d);
  const double weighted = (25.0 * predict_edge_rate(chain, std::size_t{0}).mean + 40.0 * r.mean) / 65.0;
  CHECK(overall == doctest::Approx(weighted).epsilon(1e-12));
  CHECK(std::abs(overall - c) <= 3.0 * std::sqrt(c * (1 - c) / (65.0 * 4000.0)));
}

TEST_CASE("diagnostics") {
  std::mt19937_64 rng(12);
  std::normal_distribution<double> nd(0.0, 1.0);
  std::vector<double> white(4500);
  for (auto& v : white) v = nd(rng);
  auto d = diagnostics(white);
  REQUIRE(d.autocorrelation.size() == kMaxAutocorrelationLag + 1);
  CHECK(d.autocorrelation[0] == 1.0);
  CHECK(std::abs(d.autocorrelation[1]) < 3.0 / std::sqrt(4500.0));
  CHECK(d.effective_sample_size <= 4500.0);
  CHECK(d.effective_sample_size > 3000.0);
  CHECK(d.trace_means.size() == kTraceSegments);
  CHECK(d.density.x.size() == kDensityGridPoints);
  double area = 0.0;
  for (std::size_t k = 1; k < d.density.x.size(); ++k)
    area += 0.5 * (d.density.density[k] + d.density.density[k - 1]) * (d.density.x[k] - d.density.x[k - 1]);
  CHECK(area == doctest::Approx(1.0).epsilon(0.02));

  std::vector<double> alt(1000);
  for (std::size_t k = 0; k < alt.size(); ++k) alt[k] = k % 2 ? -1.0 : 1.0;
  CHECK(diagnostics(alt).autocorrelation[1] < -0.99);

  std::vector<double> ar(20000);
  double x = 0.0;
  for (auto& v : ar) v = x = 0.9 * x + nd(rng);
  const double ess = effective_sample_size(ar);
  const double expected = 20000.0 * 0.1 / 1.9;
  CHECK(ess > expected / 1.5);
  CHECK(ess < expected * 1.5);

  const std::vector<double> flat(300, 1.0);
  d = diagnostics(flat);
  CHECK(d.zero_variance);
  CHECK(std::isnan(d.autocorrelation[1]));
  CHECK(d.effective_sample_size == 0.0);
}

TEST_CASE("potential scale reduction") {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> nd(0.0, 1.0);
  std::vector<std::vector<double>> same(3, std::vector<double>(2000));
  for (auto& ch : same)
    for (auto& v : ch) v = nd(rng);
  CHECK(potential_scale_reduction(same) < 1.01);
  same[2] = std::vector<double>(2000, 5.0);
  for (auto& v : same[2]) v += nd(rng);
  CHECK(potential_scale_reduction(same) > 1.5);
}
