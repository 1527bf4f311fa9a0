#include <algorithm>
#include <cmath>
#include <future>
#include <limits>
#include <numbers>
#include <numeric>
#include <set>
#include <stdexcept>

#include "exnet/bmlr.hpp"
#include "exnet/rng.hpp"

namespace exnet::bmlr {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct Moments {
  double mean = 0.0;
  double sd = 0.0;
};

// Welford; exact for constant input.
Moments moments(std::span<const double> x) {
  double mean = 0.0, m2 = 0.0;
  std::size_t k = 0;
  for (double v : x) {
    ++k;
    const double d = v - mean;
    mean += d / static_cast<double>(k);
    m2 += d * (v - mean);
  }
  const double var = k > 1 ? m2 / static_cast<double>(k - 1) : 0.0;
  return {mean, std::sqrt(std::max(var, 0.0))};
}

PosteriorSummary clamp_unit(PosteriorSummary s) {
  auto c = [](double v) { return std::clamp(v, 0.0, 1.0); };
  s.hpd = {c(s.hpd.lower), c(s.hpd.upper)};
  s.goldstein = {c(s.goldstein.lower), c(s.goldstein.upper)};
  return s;
}

// yhat / n for every retained draw of one edge.
std::vector<double> predictive_rates(const Chain& chain, std::size_t e) {
  if (e >= chain.n_edges()) throw std::invalid_argument("unknown edge index");
  if (chain.u.size() != chain.draws() * chain.n_edges())
    throw std::invalid_argument("chain holds no edge effects");
  auto rng = make_rng(derive_seed(chain.seed, 0x7072656469637400ULL), e);
  const std::int64_t n = chain.edge_n[e];
  std::vector<double> out(chain.draws());
  for (std::size_t s = 0; s < chain.draws(); ++s) {
    const double p = inv_logit(chain.u[s * chain.n_edges() + e]);
    std::binomial_distribution<std::int64_t> draw(n, p);
    out[s] = static_cast<double>(draw(rng)) / static_cast<double>(n);
  }
  return out;
}

}  // namespace

Interval hpd_interval(std::span<const double> sorted, double level) {
  if (!(level > 0.0 && level < 1.0)) throw std::invalid_argument("hpd_interval: level must lie in (0, 1)");
  const std::size_t n = sorted.size();
  if (n == 0) throw std::invalid_argument("hpd_interval: no samples");
  auto m = static_cast<std::size_t>(std::ceil(level * static_cast<double>(n) - 1e-9));
  m = std::clamp<std::size_t>(m, 1, n);
  std::size_t best = 0;
  double best_width = sorted[m - 1] - sorted[0];
  for (std::size_t i = 1; i + m <= n; ++i) {
    const double w = sorted[i + m - 1] - sorted[i];
    if (w < best_width) {
      best_width = w;
      best = i;
    }
  }
  return {sorted[best], sorted[best + m - 1]};
}

Interval goldstein_interval(double mean, double sd) {
  return {mean - kGoldsteinMultiplier * sd, mean + kGoldsteinMultiplier * sd};
}

bool intervals_overlap(const Interval& a, const Interval& b) {
  return a.lower <= b.upper && b.lower <= a.upper;
}

PosteriorSummary summarize(std::span<const double> draws) {
  if (draws.empty()) throw std::invalid_argument("summarize: no draws");
  const auto mo = moments(draws);
  std::vector<double> sorted(draws.begin(), draws.end());
  std::sort(sorted.begin(), sorted.end());
  PosteriorSummary s;
  s.mean = mo.mean;
  s.sd = mo.sd;
  s.hpd = hpd_interval(sorted);
  s.goldstein = goldstein_interval(mo.mean, mo.sd);
  return s;
}

PosteriorSummary summarize(const Chain& chain, std::string_view selector) {
  return summarize(chain.trace(selector));
}

double icc(double sigma2_u, double sigma2_tau) {
  if (sigma2_u < 0.0 || sigma2_tau < 0.0) throw std::domain_error("icc: variances must be non-negative");
  const double between = sigma2_u + sigma2_tau;
  return between / (kLogisticErrorVariance + between);
}

double deviance(std::span<const double> edge_logits, const SubjectAreaDataset& data) {
  if (edge_logits.size() != data.edges.size()) throw std::invalid_argument("deviance: dimension mismatch");
  double ll = 0.0;
  for (std::size_t e = 0; e < data.edges.size(); ++e)
    ll += log_binomial_pmf(data.edges[e].n_top, data.edges[e].n_papers, edge_logits[e]);
  return -2.0 * ll;
}

DicResult dic(const Chain& chain, const SubjectAreaDataset& data) {
  const std::size_t E = data.edges.size();
  const std::size_t S = chain.draws();
  if (S == 0) throw std::invalid_argument("dic: empty chain");
  if (chain.n_edges() != E) throw std::invalid_argument("dic: chain does not match dataset");

  double sum_dev = 0.0;
  std::vector<double> logits(E);
  std::vector<double> mean_logits(E, 0.0);
  for (std::size_t s = 0; s < S; ++s) {
    if (chain.kind == ModelKind::full) {
      for (std::size_t e = 0; e < E; ++e) logits[e] = chain.u[s * E + e];
    } else {
      std::fill(logits.begin(), logits.end(), chain.beta0[s]);
    }
    sum_dev += deviance(logits, data);
    for (std::size_t e = 0; e < E; ++e) mean_logits[e] += logits[e];
  }
  for (auto& v : mean_logits) v /= static_cast<double>(S);

  DicResult r;
  r.mean_deviance = sum_dev / static_cast<double>(S);
  r.deviance_at_mean = deviance(mean_logits, data);
  r.p_d = r.mean_deviance - r.deviance_at_mean;
  r.dic = r.mean_deviance + r.p_d;
  r.negative_p_d = r.p_d < 0.0;
  return r;
}

PosteriorSummary predict_ref_rate(const Chain& chain, std::size_t ref_index, RateMode mode) {
  const auto taus = chain.tau_trace(ref_index);
  if (mode == RateMode::per_draw) {
    std::vector<double> rates(taus.size());
    std::transform(taus.begin(), taus.end(), rates.begin(), inv_logit);
    return clamp_unit(summarize(rates));
  }
  // Point transform of the logit-scale summary; sd by the delta method.
  const auto t = summarize(taus);
  PosteriorSummary s;
  s.mean = inv_logit(t.mean);
  s.sd = s.mean * (1.0 - s.mean) * t.sd;
  s.hpd = {inv_logit(t.hpd.lower), inv_logit(t.hpd.upper)};
  s.goldstein = {inv_logit(t.goldstein.lower), inv_logit(t.goldstein.upper)};
  return s;
}

PosteriorSummary predict_ref_rate(const Chain& chain, const InstId& ref, RateMode mode) {
  return predict_ref_rate(chain, chain.ref_index(ref), mode);
}

PosteriorSummary predict_edge_rate(const Chain& chain, std::size_t edge_index) {
  return clamp_unit(summarize(predictive_rates(chain, edge_index)));
}

PosteriorSummary predict_edge_rate(const Chain& chain, const InstId& ref, const InstId& net) {
  return predict_edge_rate(chain, chain.edge_index(ref, net));
}

double overall_rate(const Chain& chain, const SubjectAreaDataset& data) {
  if (data.edges.empty()) throw std::invalid_argument("overall_rate: empty dataset");
  if (chain.n_edges() != data.edges.size()) throw std::invalid_argument("overall_rate: chain does not match dataset");
  double predicted = 0.0, total = 0.0;
  for (std::size_t e = 0; e < data.edges.size(); ++e) {
    const auto rates = predictive_rates(chain, e);
    const double n = static_cast<double>(data.edges[e].n_papers);
    predicted += n * moments(rates).mean;
    total += n;
  }
  return predicted / total;
}

// ---------------------------------------------------------------------------

std::vector<double> autocorrelation(std::span<const double> draws, std::size_t max_lag) {
  const std::size_t n = draws.size();
  std::vector<double> acf(max_lag + 1, kNaN);
  if (n == 0) return acf;
  const double mean = moments(draws).mean;
  double c0 = 0.0;
  for (double v : draws) c0 += (v - mean) * (v - mean);
  acf[0] = 1.0;
  if (!(c0 > 0.0)) return acf;
  for (std::size_t k = 1; k <= max_lag && k < n; ++k) {
    double c = 0.0;
    for (std::size_t t = 0; t + k < n; ++t) c += (draws[t] - mean) * (draws[t + k] - mean);
    acf[k] = c / c0;
  }
  return acf;
}

double effective_sample_size(std::span<const double> draws) {
  const std::size_t n = draws.size();
  if (n < 4) return static_cast<double>(n);
  const double mean = moments(draws).mean;
  double c0 = 0.0;
  for (double v : draws) c0 += (v - mean) * (v - mean);
  if (!(c0 > 0.0)) return 0.0;
  auto rho = [&](std::size_t k) {
    double c = 0.0;
    for (std::size_t t = 0; t + k < n; ++t) c += (draws[t] - mean) * (draws[t + k] - mean);
    return c / c0;
  };
  // Geyer's initial positive sequence: sum adjacent-lag pairs while positive.
  double tau = -1.0;
  for (std::size_t m = 0; 2 * m + 1 < n; ++m) {
    const double gamma = (m == 0 ? 1.0 : rho(2 * m)) + rho(2 * m + 1);
    if (gamma <= 0.0) break;
    tau += 2.0 * gamma;
  }
  const double ess = static_cast<double>(n) / std::max(tau, 1e-12);
  return std::min(ess, static_cast<double>(n));
}

DiagnosticsReport diagnostics(std::span<const double> draws) {
  DiagnosticsReport r;
  const std::size_t n = draws.size();
  r.autocorrelation = autocorrelation(draws, kMaxAutocorrelationLag);
  const auto mo = moments(draws);
  r.zero_variance = !(mo.sd > 0.0);
  r.effective_sample_size = effective_sample_size(draws);

  r.trace_means.resize(kTraceSegments, kNaN);
  for (std::size_t k = 0; k < kTraceSegments; ++k) {
    const std::size_t lo = k * n / kTraceSegments;
    const std::size_t hi = (k + 1) * n / kTraceSegments;
    if (hi > lo) r.trace_means[k] = moments(draws.subspan(lo, hi - lo)).mean;
  }

  if (r.zero_variance || n < 2) return r;
  std::vector<double> sorted(draws.begin(), draws.end());
  std::sort(sorted.begin(), sorted.end());
  auto quantile = [&](double q) {
    const double pos = q * static_cast<double>(n - 1);
    const auto i = static_cast<std::size_t>(pos);
    const double f = pos - static_cast<double>(i);
    return i + 1 < n ? sorted[i] * (1.0 - f) + sorted[i + 1] * f : sorted[i];
  };
  const double iqr = quantile(0.75) - quantile(0.25);
  double spread = std::min(mo.sd, iqr / 1.34);
  if (!(spread > 0.0)) spread = mo.sd;
  const double h = 0.9 * spread * std::pow(static_cast<double>(n), -0.2);
  const double lo = sorted.front() - 3.0 * h;
  const double hi = sorted.back() + 3.0 * h;
  r.density.x.resize(kDensityGridPoints);
  r.density.density.resize(kDensityGridPoints);
  const double norm = 1.0 / (static_cast<double>(n) * h * std::sqrt(2.0 * std::numbers::pi));
  for (std::size_t g = 0; g < kDensityGridPoints; ++g) {
    const double x = lo + (hi - lo) * static_cast<double>(g) / static_cast<double>(kDensityGridPoints - 1);
    double acc = 0.0;
    for (double v : sorted) {
      const double z = (x - v) / h;
      acc += std::exp(-0.5 * z * z);
    }
    r.density.x[g] = x;
    r.density.density[g] = acc * norm;
  }
  return r;
}

DiagnosticsReport diagnostics(const Chain& chain, std::string_view selector) {
  return diagnostics(chain.trace(selector));
}

double potential_scale_reduction(const std::vector<std::vector<double>>& chains) {
  const std::size_t m = chains.size();
  if (m < 2) throw std::invalid_argument("potential_scale_reduction: need at least two chains");
  const std::size_t n = chains.front().size();
  if (n < 2) throw std::invalid_argument("potential_scale_reduction: chains too short");
  for (const auto& c : chains)
    if (c.size() != n) throw std::invalid_argument("potential_scale_reduction: chains differ in length");
  std::vector<double> means(m);
  double w = 0.0;
  for (std::size_t k = 0; k < m; ++k) {
    const auto mo = moments(chains[k]);
    means[k] = mo.mean;
    w += mo.sd * mo.sd;
  }
  w /= static_cast<double>(m);
  const auto between = moments(means);
  const double b = static_cast<double>(n) * between.sd * between.sd;
  const double var_plus = (static_cast<double>(n) - 1.0) / static_cast<double>(n) * w + b / static_cast<double>(n);
  return w > 0.0 ? std::sqrt(var_plus / w) : 1.0;
}

// ---------------------------------------------------------------------------

namespace {

SubsetFit summarize_subset(const Chain& chain, const SubjectAreaDataset& data) {
  SubsetFit sub;
  sub.n_refs = chain.n_refs();
  sub.n_edges = chain.n_edges();
  sub.seed = chain.seed;
  sub.beta0 = summarize(chain.beta0);
  sub.sigma2_u = summarize(chain.sigma2_u);
  sub.sigma2_tau = summarize(chain.sigma2_tau);
  const auto icc_draws = chain.trace("icc");
  sub.icc = summarize(icc_draws);
  sub.icc_headline = icc(sub.sigma2_u.mean, sub.sigma2_tau.mean);
  sub.dic = dic(chain, data);
  sub.acceptance = chain.acceptance;
  for (const char* name : {"beta0", "sigma2_u", "sigma2_tau", "icc"}) {
    auto t = chain.trace(name);
    sub.diagnostics[name] = diagnostics(t);
    sub.traces[name] = std::move(t);
  }
  return sub;
}

void copy_headline(FitResult& r, const SubsetFit& s) {
  r.beta0 = s.beta0;
  r.sigma2_u = s.sigma2_u;
  r.sigma2_tau = s.sigma2_tau;
  r.icc = s.icc;
  r.icc_headline = s.icc_headline;
  r.dic = s.dic;
}

void finish_rates(FitResult& r) {
  double predicted = 0.0, total = 0.0;
  for (const auto& e : r.edges) {
    predicted += static_cast<double>(e.n_papers) * e.rate.mean;
    total += static_cast<double>(e.n_papers);
  }
  r.overall_rate = total > 0.0 ? predicted / total : 0.0;
}

}  // namespace

FitResult fit(const SubjectAreaDataset& data, const ChainConfig& cfg) {
  if (cfg.model != ModelKind::full) throw std::invalid_argument("fit: requires the full three-level model");
  const Chain chain = mh_sample(data, cfg);

  FitResult r;
  r.subject = data.subject;
  r.config = cfg;
  r.retained = chain.draws();
  r.subsets.push_back(summarize_subset(chain, data));
  copy_headline(r, r.subsets.front());

  for (std::size_t j = 0; j < chain.n_refs(); ++j) {
    ReferenceRate rr;
    rr.id = chain.ref_ids[j];
    rr.rate = predict_ref_rate(chain, j, RateMode::per_draw);
    rr.rate_of_mean = predict_ref_rate(chain, j, RateMode::logistic_of_mean).mean;
    r.references.push_back(std::move(rr));
  }
  for (std::size_t e = 0; e < chain.n_edges(); ++e) {
    const auto& edge = data.edges[e];
    r.edges.push_back({edge.ref_id, edge.net_id, edge.n_papers, edge.n_top, predict_edge_rate(chain, e)});
  }
  finish_rates(r);

  r.warnings = chain.warnings;
  if (r.dic.negative_p_d) r.warnings.push_back("negative p_D: posterior may be far from normal");
  return r;
}

std::vector<std::vector<std::size_t>> partition_references(const SubjectAreaDataset& data, std::size_t max_edges,
                                                           std::uint64_t seed, std::vector<std::string>* warnings) {
  if (max_edges == 0) throw std::invalid_argument("partition_references: max_edges must be positive");
  const auto md = ModelData::from(data);
  std::vector<std::size_t> order(md.n_refs());
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto rng = make_rng(seed, 0x73706c6974ULL);
  std::shuffle(order.begin(), order.end(), rng);

  std::vector<std::vector<std::size_t>> bins;
  std::vector<std::size_t> load;
  for (auto j : order) {
    const std::size_t m = md.ref_edges[j].size();
    if (m > max_edges) {
      if (warnings)
        warnings->push_back("reference '" + md.ref_ids[j] + "' has " + std::to_string(m) +
                            " edges, more than max_edges; fitted as its own subset");
      bins.push_back({j});
      load.push_back(m);
      continue;
    }
    std::size_t b = 0;
    while (b < bins.size() && (load[b] > max_edges || load[b] + m > max_edges)) ++b;
    if (b == bins.size()) {
      bins.emplace_back();
      load.push_back(0);
    }
    bins[b].push_back(j);
    load[b] += m;
  }
  for (auto& bin : bins) std::sort(bin.begin(), bin.end());
  return bins;
}

SubjectAreaDataset subset_dataset(const SubjectAreaDataset& data, std::span<const std::size_t> refs) {
  const auto all_refs = data.references();
  std::set<InstId> keep;
  for (auto j : refs) keep.insert(all_refs.at(j));
  SubjectAreaDataset out;
  out.subject = data.subject;
  out.thresholds_applied = data.thresholds_applied;
  std::set<InstId> ids;
  for (const auto& e : data.edges) {
    if (!keep.contains(e.ref_id)) continue;
    out.edges.push_back(e);
    ids.insert(e.ref_id);
    ids.insert(e.net_id);
  }
  for (const auto& inst : data.institutions)
    if (ids.contains(inst.id)) out.institutions.push_back(inst);
  return out;
}

FitResult split_fit(const SubjectAreaDataset& data, std::size_t max_edges, const ChainConfig& cfg) {
  if (max_edges == 0 || data.edges.size() <= max_edges) {
    auto r = fit(data, cfg);
    r.max_edges = max_edges;
    return r;
  }

  std::vector<std::string> warnings;
  const auto parts = partition_references(data, max_edges, cfg.seed, &warnings);
  std::vector<SubjectAreaDataset> subsets;
  for (const auto& p : parts) subsets.push_back(subset_dataset(data, p));

  std::vector<std::future<FitResult>> pending;
  for (std::size_t k = 0; k < subsets.size(); ++k) {
    ChainConfig c = cfg;
    c.seed = derive_seed(cfg.seed, k + 1);
    pending.push_back(std::async(std::launch::async, [&subsets, k, c] { return fit(subsets[k], c); }));
  }

  FitResult r;
  r.subject = data.subject;
  r.config = cfg;
  r.max_edges = max_edges;
  r.pooled_heuristic = true;
  r.warnings = warnings;
  r.retained = cfg.retained_count();
  for (std::size_t k = 0; k < pending.size(); ++k) {
    FitResult part = pending[k].get();
    for (auto& ref : part.references) r.references.push_back(std::move(ref));
    for (auto& e : part.edges) r.edges.push_back(std::move(e));
    for (auto& w : part.warnings) r.warnings.push_back("subset " + std::to_string(k) + ": " + w);
    r.subsets.push_back(std::move(part.subsets.front()));
  }
  std::sort(r.references.begin(), r.references.end(),
            [](const ReferenceRate& a, const ReferenceRate& b) { return a.id < b.id; });
  std::sort(r.edges.begin(), r.edges.end(), [](const EdgeRate& a, const EdgeRate& b) {
    return std::tie(a.ref_id, a.net_id) < std::tie(b.ref_id, b.net_id);
  });
  finish_rates(r);

  // Edge-count weighted means of the subset summaries.
  double total = 0.0;
  for (const auto& s : r.subsets) total += static_cast<double>(s.n_edges);
  auto pool = [&](auto member) {
    PosteriorSummary p{};
    for (const auto& s : r.subsets) {
      const double w = static_cast<double>(s.n_edges) / total;
      const PosteriorSummary& x = s.*member;
      p.mean += w * x.mean;
      p.sd += w * x.sd;
      p.hpd.lower += w * x.hpd.lower;
      p.hpd.upper += w * x.hpd.upper;
    }
    p.goldstein = goldstein_interval(p.mean, p.sd);
    return p;
  };
  r.beta0 = pool(&SubsetFit::beta0);
  r.sigma2_u = pool(&SubsetFit::sigma2_u);
  r.sigma2_tau = pool(&SubsetFit::sigma2_tau);
  r.icc = pool(&SubsetFit::icc);
  r.icc_headline = 0.0;
  r.dic = {};
  for (const auto& s : r.subsets) {
    const double w = static_cast<double>(s.n_edges) / total;
    r.icc_headline += w * s.icc_headline;
    r.dic.dic += w * s.dic.dic;
    r.dic.p_d += w * s.dic.p_d;
    r.dic.mean_deviance += w * s.dic.mean_deviance;
    r.dic.deviance_at_mean += w * s.dic.deviance_at_mean;
  }
  r.dic.negative_p_d = r.dic.p_d < 0.0;
  return r;
}

}  // namespace exnet::bmlr
