#include "exnet/bmlr.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <future>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <tuple>

#include "exnet/rng.hpp"

namespace exnet::bmlr {

double inv_logit(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double logit(double p) { return std::log(p) - std::log1p(-p); }

double log1p_exp(double x) {
  if (x > 0.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

double log_binomial_pmf(std::int64_t y, std::int64_t n, double logit_p) {
  const double yd = static_cast<double>(y);
  const double nd = static_cast<double>(n);
  const double log_choose = std::lgamma(nd + 1.0) - std::lgamma(yd + 1.0) - std::lgamma(nd - yd + 1.0);
  // log p = -log1p_exp(-x), log(1 - p) = -log1p_exp(x)
  return log_choose - yd * log1p_exp(-logit_p) - (nd - yd) * log1p_exp(logit_p);
}

double log_normal_pdf(double x, double mean, double variance) {
  if (!(variance > 0.0)) throw std::domain_error("normal variance must be positive");
  const double d = x - mean;
  return -0.5 * std::log(2.0 * std::numbers::pi * variance) - d * d / (2.0 * variance);
}

double log_half_normal_pdf(double x, double variance) {
  if (!(variance > 0.0)) throw std::domain_error("half-normal variance must be positive");
  if (x < 0.0) return -std::numeric_limits<double>::infinity();
  return std::log(2.0) + log_normal_pdf(x, 0.0, variance);
}

ModelData ModelData::from(const SubjectAreaDataset& data) {
  ModelData md;
  md.ref_ids = data.references();
  md.ref_edges.resize(md.ref_ids.size());
  md.n.reserve(data.edges.size());
  for (std::size_t e = 0; e < data.edges.size(); ++e) {
    const auto& edge = data.edges[e];
    if (e > 0 && !(std::tie(data.edges[e - 1].ref_id, data.edges[e - 1].net_id) < std::tie(edge.ref_id, edge.net_id)))
      throw std::invalid_argument("dataset edges must be sorted by (ref_id, net_id) without duplicates");
    const auto it = std::lower_bound(md.ref_ids.begin(), md.ref_ids.end(), edge.ref_id);
    const auto j = static_cast<std::size_t>(it - md.ref_ids.begin());
    md.edge_keys.emplace_back(edge.ref_id, edge.net_id);
    md.n.push_back(edge.n_papers);
    md.y.push_back(edge.n_top);
    md.edge_ref.push_back(j);
    md.ref_edges[j].push_back(e);
  }
  return md;
}

double log_likelihood(const ModelParams& params, const SubjectAreaDataset& data) {
  if (params.u.size() != data.edges.size())
    throw std::invalid_argument("log_likelihood: |u| must equal the number of edges");
  double ll = 0.0;
  for (std::size_t e = 0; e < data.edges.size(); ++e)
    ll += log_binomial_pmf(data.edges[e].n_top, data.edges[e].n_papers, params.u[e]);
  return ll;
}

double log_posterior(const ModelParams& params, const SubjectAreaDataset& data, const Priors& priors) {
  if (!(params.sigma2_u > 0.0) || !(params.sigma2_tau > 0.0))
    throw std::domain_error("log_posterior: variance components must be positive");
  const auto md = ModelData::from(data);
  if (params.tau.size() != md.n_refs())
    throw std::invalid_argument("log_posterior: |tau| must equal the number of references");
  double lp = log_likelihood(params, data);
  for (std::size_t e = 0; e < md.n_edges(); ++e)
    lp += log_normal_pdf(params.u[e], params.tau[md.edge_ref[e]], params.sigma2_u);
  for (double t : params.tau) lp += log_normal_pdf(t, params.beta0, params.sigma2_tau);
  lp += log_normal_pdf(params.beta0, 0.0, priors.beta0_variance);
  lp += log_half_normal_pdf(params.sigma2_u, priors.sigma2_variance);
  lp += log_half_normal_pdf(params.sigma2_tau, priors.sigma2_variance);
  return lp;
}

// ---------------------------------------------------------------------------

std::size_t ChainConfig::retained_count() const {
  if (iterations <= burn_in || thinning <= 0) return 0;
  return static_cast<std::size_t>((iterations - burn_in) / thinning);
}

void ChainConfig::validate() const {
  if (iterations <= 0) throw std::invalid_argument("iterations must be positive");
  if (burn_in < 0) throw std::invalid_argument("burn_in must be non-negative");
  if (burn_in >= iterations) throw std::invalid_argument("burn_in must be smaller than iterations");
  if (thinning <= 0) throw std::invalid_argument("thinning must be positive");
  auto positive = [](const std::optional<double>& s, const char* name) {
    if (s && !(*s > 0.0)) throw std::invalid_argument(std::string("proposal scale for ") + name + " must be positive");
  };
  positive(proposal_scales.beta0, "beta0");
  positive(proposal_scales.tau, "tau");
  positive(proposal_scales.u, "u");
  positive(proposal_scales.log_sigma2_u, "sigma2_u");
  positive(proposal_scales.log_sigma2_tau, "sigma2_tau");
  if (!(priors.beta0_variance > 0.0) || !(priors.sigma2_variance > 0.0))
    throw std::invalid_argument("prior variances must be positive");
}

std::size_t Chain::ref_index(const InstId& ref) const {
  const auto it = std::lower_bound(ref_ids.begin(), ref_ids.end(), ref);
  if (it == ref_ids.end() || *it != ref) throw std::invalid_argument("unknown reference '" + ref + "'");
  return static_cast<std::size_t>(it - ref_ids.begin());
}

std::size_t Chain::edge_index(const InstId& ref, const InstId& net) const {
  const std::pair<InstId, InstId> key{ref, net};
  const auto it = std::lower_bound(edge_keys.begin(), edge_keys.end(), key);
  if (it == edge_keys.end() || *it != key)
    throw std::invalid_argument("unknown edge '" + ref + "' -> '" + net + "'");
  return static_cast<std::size_t>(it - edge_keys.begin());
}

std::vector<double> Chain::tau_trace(std::size_t ref) const {
  if (ref >= n_refs() || tau.size() != draws() * n_refs()) throw std::out_of_range("tau_trace: no such reference");
  std::vector<double> out(draws());
  for (std::size_t s = 0; s < draws(); ++s) out[s] = tau[s * n_refs() + ref];
  return out;
}

std::vector<double> Chain::u_trace(std::size_t edge) const {
  if (edge >= n_edges() || u.size() != draws() * n_edges()) throw std::out_of_range("u_trace: no such edge");
  std::vector<double> out(draws());
  for (std::size_t s = 0; s < draws(); ++s) out[s] = u[s * n_edges() + edge];
  return out;
}

std::vector<double> Chain::trace(std::string_view selector) const {
  if (selector == "beta0") return beta0;
  const bool has_variances = sigma2_u.size() == draws() && sigma2_tau.size() == draws();
  if (selector == "sigma2_u" && has_variances) return sigma2_u;
  if (selector == "sigma2_tau" && has_variances) return sigma2_tau;
  if (selector == "icc" && has_variances) {
    std::vector<double> out(draws());
    for (std::size_t s = 0; s < draws(); ++s) out[s] = icc(sigma2_u[s], sigma2_tau[s]);
    return out;
  }
  if (selector.size() > 5 && selector.substr(0, 4) == "tau[" && selector.back() == ']')
    return tau_trace(ref_index(std::string(selector.substr(4, selector.size() - 5))));
  if (selector.size() > 3 && selector.substr(0, 2) == "u[" && selector.back() == ']') {
    const auto body = selector.substr(2, selector.size() - 3);
    const auto comma = body.find(',');
    if (comma != std::string_view::npos)
      return u_trace(edge_index(std::string(body.substr(0, comma)), std::string(body.substr(comma + 1))));
  }
  throw std::invalid_argument("unknown parameter '" + std::string(selector) + "'");
}

// ---------------------------------------------------------------------------

namespace {

constexpr int kAdaptBatch = 50;
constexpr double kTargetAcceptance = 0.35;
constexpr double kMinAcceptance = 0.15;
constexpr double kMaxAcceptance = 0.70;

// Random-walk scale for one scalar component with burn-in adaptation.
struct Scale {
  double value = 1.0;
  int batch_accepted = 0;
  long accepted = 0;
  long proposed = 0;

  void record(bool accept, bool sampling) {
    if (accept) ++batch_accepted;
    if (sampling) {
      ++proposed;
      if (accept) ++accepted;
    }
  }
  void adapt(int batch_index) {
    const double rate = static_cast<double>(batch_accepted) / kAdaptBatch;
    value *= std::exp(1.5 * (rate - kTargetAcceptance) / std::sqrt(batch_index + 1.0));
    batch_accepted = 0;
  }
  double rate() const { return proposed == 0 ? 0.0 : static_cast<double>(accepted) / proposed; }
};

class Sampler {
 public:
  Sampler(const ModelData& md, const ChainConfig& cfg) : md_(md), cfg_(cfg), rng_(make_rng(cfg.seed, 1)) {}

  bool accept(double log_ratio) {
    if (log_ratio >= 0.0) return true;
    return std::log(unif_(rng_)) < log_ratio;
  }
  double normal() { return normal_(rng_); }

 protected:
  const ModelData& md_;
  const ChainConfig& cfg_;
  Rng rng_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> unif_{0.0, 1.0};
};

class FullSampler : Sampler {
 public:
  using Sampler::Sampler;

  Chain run() {
    initialise();
    Chain chain;
    chain.kind = ModelKind::full;
    chain.seed = cfg_.seed;
    chain.ref_ids = md_.ref_ids;
    chain.edge_keys = md_.edge_keys;
    chain.edge_n = md_.n;
    const std::size_t keep = cfg_.retained_count();
    chain.beta0.reserve(keep);
    chain.sigma2_u.reserve(keep);
    chain.sigma2_tau.reserve(keep);
    chain.tau.reserve(keep * md_.n_refs());
    chain.u.reserve(keep * md_.n_edges());

    int batch = 0;
    for (int it = 0; it < cfg_.iterations; ++it) {
      const bool sampling = it >= cfg_.burn_in;
      sweep(sampling);
      if (!sampling && cfg_.adapt && (it + 1) % kAdaptBatch == 0) adapt(batch++);
      if (sampling && (it - cfg_.burn_in + 1) % cfg_.thinning == 0) {
        chain.beta0.push_back(beta0_);
        chain.sigma2_u.push_back(s2u_);
        chain.sigma2_tau.push_back(s2t_);
        chain.tau.insert(chain.tau.end(), tau_.begin(), tau_.end());
        chain.u.insert(chain.u.end(), u_.begin(), u_.end());
      }
    }
    report(chain);
    return chain;
  }

 private:
  void initialise() {
    const std::size_t E = md_.n_edges();
    const std::size_t R = md_.n_refs();
    u_.resize(E);
    tau_.assign(R, 0.0);
    for (std::size_t e = 0; e < E; ++e)
      u_[e] = logit((md_.y[e] + 0.5) / (md_.n[e] + 1.0));
    for (std::size_t j = 0; j < R; ++j) {
      double s = 0.0;
      for (auto e : md_.ref_edges[j]) s += u_[e];
      tau_[j] = s / static_cast<double>(md_.ref_edges[j].size());
    }
    double st = 0.0;
    for (double t : tau_) st += t;
    beta0_ = st / static_cast<double>(R);
    double ssu = 0.0;
    for (std::size_t e = 0; e < E; ++e) ssu += (u_[e] - tau_[md_.edge_ref[e]]) * (u_[e] - tau_[md_.edge_ref[e]]);
    double sst = 0.0;
    for (double t : tau_) sst += (t - beta0_) * (t - beta0_);
    s2u_ = std::max(ssu / static_cast<double>(E), 0.01);
    s2t_ = std::max(R > 1 ? sst / static_cast<double>(R - 1) : 0.1, 0.01);

    const auto& ps = cfg_.proposal_scales;
    u_scale_.resize(E);
    for (std::size_t e = 0; e < E; ++e) {
      const double p = (md_.y[e] + 0.5) / (md_.n[e] + 1.0);
      const double info = static_cast<double>(md_.n[e]) * p * (1.0 - p) + 1.0 / s2u_;
      u_scale_[e].value = ps.u.value_or(2.4 / std::sqrt(info));
    }
    tau_scale_.resize(R);
    for (std::size_t j = 0; j < R; ++j) {
      const double info = static_cast<double>(md_.ref_edges[j].size()) / s2u_ + 1.0 / s2t_;
      tau_scale_[j].value = ps.tau.value_or(2.4 / std::sqrt(info));
    }
    beta0_scale_.value = ps.beta0.value_or(2.4 * std::sqrt(s2t_ / static_cast<double>(R)));
    s2u_scale_.value = ps.log_sigma2_u.value_or(2.4 * std::sqrt(2.0 / static_cast<double>(E)));
    s2t_scale_.value = ps.log_sigma2_tau.value_or(2.4 * std::sqrt(2.0 / static_cast<double>(R)));
    ref_sum_.assign(R, 0.0);
  }

  // Log density of a variance component on the log scale, given the sum of
  // squares of its `count` centred effects.
  double log_variance_target(double log_s2, double sum_sq, std::size_t count) const {
    const double s2 = std::exp(log_s2);
    return -0.5 * static_cast<double>(count) * log_s2 - sum_sq / (2.0 * s2) -
           s2 * s2 / (2.0 * cfg_.priors.sigma2_variance) + log_s2;
  }

  void sweep(bool sampling) {
    const std::size_t E = md_.n_edges();
    const std::size_t R = md_.n_refs();

    for (std::size_t e = 0; e < E; ++e) {
      const double cur = u_[e];
      const double prop = cur + u_scale_[e].value * normal();
      const double t = tau_[md_.edge_ref[e]];
      const double n = static_cast<double>(md_.n[e]);
      const double y = static_cast<double>(md_.y[e]);
      const double lr = y * (prop - cur) - n * (log1p_exp(prop) - log1p_exp(cur)) -
                        ((prop - t) * (prop - t) - (cur - t) * (cur - t)) / (2.0 * s2u_);
      const bool ok = accept(lr);
      if (ok) u_[e] = prop;
      u_scale_[e].record(ok, sampling);
    }

    for (std::size_t j = 0; j < R; ++j) {
      double s = 0.0;
      for (auto e : md_.ref_edges[j]) s += u_[e];
      ref_sum_[j] = s;
    }
    for (std::size_t j = 0; j < R; ++j) {
      const double cur = tau_[j];
      const double prop = cur + tau_scale_[j].value * normal();
      const double m = static_cast<double>(md_.ref_edges[j].size());
      // sum (u - prop)^2 - sum (u - cur)^2 = (prop - cur)(m (prop + cur) - 2 sum u)
      const double d_edges = (prop - cur) * (m * (prop + cur) - 2.0 * ref_sum_[j]);
      const double d_ref = (prop - beta0_) * (prop - beta0_) - (cur - beta0_) * (cur - beta0_);
      const bool ok = accept(-d_edges / (2.0 * s2u_) - d_ref / (2.0 * s2t_));
      if (ok) tau_[j] = prop;
      tau_scale_[j].record(ok, sampling);
    }

    {
      double st = 0.0;
      for (double t : tau_) st += t;
      const double cur = beta0_;
      const double prop = cur + beta0_scale_.value * normal();
      const double d = (prop - cur) * (static_cast<double>(R) * (prop + cur) - 2.0 * st);
      const double lr = -d / (2.0 * s2t_) - (prop * prop - cur * cur) / (2.0 * cfg_.priors.beta0_variance);
      const bool ok = accept(lr);
      if (ok) beta0_ = prop;
      beta0_scale_.record(ok, sampling);
    }

    {
      double ss = 0.0;
      for (std::size_t e = 0; e < E; ++e) {
        const double d = u_[e] - tau_[md_.edge_ref[e]];
        ss += d * d;
      }
      const double cur = std::log(s2u_);
      const double prop = cur + s2u_scale_.value * normal();
      const bool ok = accept(log_variance_target(prop, ss, E) - log_variance_target(cur, ss, E));
      if (ok) s2u_ = std::exp(prop);
      s2u_scale_.record(ok, sampling);
    }

    {
      double ss = 0.0;
      for (double t : tau_) ss += (t - beta0_) * (t - beta0_);
      const double cur = std::log(s2t_);
      const double prop = cur + s2t_scale_.value * normal();
      const bool ok = accept(log_variance_target(prop, ss, R) - log_variance_target(cur, ss, R));
      if (ok) s2t_ = std::exp(prop);
      s2t_scale_.record(ok, sampling);
    }
  }

  void adapt(int batch) {
    for (auto& s : u_scale_) s.adapt(batch);
    for (auto& s : tau_scale_) s.adapt(batch);
    beta0_scale_.adapt(batch);
    s2u_scale_.adapt(batch);
    s2t_scale_.adapt(batch);
  }

  static double mean_rate(const std::vector<Scale>& scales) {
    double s = 0.0;
    for (const auto& sc : scales) s += sc.rate();
    return scales.empty() ? 0.0 : s / static_cast<double>(scales.size());
  }

  void report(Chain& chain) const {
    chain.acceptance = {beta0_scale_.rate(), mean_rate(tau_scale_), mean_rate(u_scale_), s2u_scale_.rate(),
                        s2t_scale_.rate()};
    auto check = [&](const char* name, double rate) {
      if (rate < kMinAcceptance || rate > kMaxAcceptance) {
        char buf[160];
        std::snprintf(buf, sizeof buf, "acceptance rate of %s is %.3f, outside [%.2f, %.2f] after adaptation",
                      name, rate, kMinAcceptance, kMaxAcceptance);
        chain.warnings.emplace_back(buf);
      }
    };
    check("beta0", chain.acceptance.beta0);
    check("tau", chain.acceptance.tau);
    check("u", chain.acceptance.u);
    check("sigma2_u", chain.acceptance.sigma2_u);
    check("sigma2_tau", chain.acceptance.sigma2_tau);
  }

  std::vector<double> u_, tau_, ref_sum_;
  double beta0_ = 0.0, s2u_ = 1.0, s2t_ = 1.0;
  std::vector<Scale> u_scale_, tau_scale_;
  Scale beta0_scale_, s2u_scale_, s2t_scale_;
};

class InterceptSampler : Sampler {
 public:
  using Sampler::Sampler;

  Chain run() {
    double sy = 0.0, sn = 0.0;
    for (std::size_t e = 0; e < md_.n_edges(); ++e) {
      sy += static_cast<double>(md_.y[e]);
      sn += static_cast<double>(md_.n[e]);
    }
    const double p = (sy + 0.5) / (sn + 1.0);
    double beta = logit(p);
    Scale scale;
    scale.value = cfg_.proposal_scales.beta0.value_or(2.4 / std::sqrt(sn * p * (1.0 - p)));
    auto log_target = [&](double b) {
      return sy * b - sn * log1p_exp(b) - b * b / (2.0 * cfg_.priors.beta0_variance);
    };

    Chain chain;
    chain.kind = ModelKind::intercept_only;
    chain.seed = cfg_.seed;
    chain.ref_ids = md_.ref_ids;
    chain.edge_keys = md_.edge_keys;
    chain.edge_n = md_.n;
    chain.beta0.reserve(cfg_.retained_count());
    int batch = 0;
    double current = log_target(beta);
    for (int it = 0; it < cfg_.iterations; ++it) {
      const bool sampling = it >= cfg_.burn_in;
      const double prop = beta + scale.value * normal();
      const double lp = log_target(prop);
      const bool ok = accept(lp - current);
      if (ok) {
        beta = prop;
        current = lp;
      }
      scale.record(ok, sampling);
      if (!sampling && cfg_.adapt && (it + 1) % kAdaptBatch == 0) scale.adapt(batch++);
      if (sampling && (it - cfg_.burn_in + 1) % cfg_.thinning == 0) chain.beta0.push_back(beta);
    }
    chain.acceptance.beta0 = scale.rate();
    if (scale.rate() < kMinAcceptance || scale.rate() > kMaxAcceptance)
      chain.warnings.push_back("acceptance rate of beta0 outside the target band after adaptation");
    return chain;
  }
};

}  // namespace

Chain mh_sample(const SubjectAreaDataset& data, const ChainConfig& cfg) {
  cfg.validate();
  if (data.edges.empty()) throw std::invalid_argument("mh_sample: dataset has no edges");
  const auto md = ModelData::from(data);
  if (cfg.model == ModelKind::intercept_only) return InterceptSampler(md, cfg).run();
  return FullSampler(md, cfg).run();
}

std::vector<Chain> mh_sample_chains(const SubjectAreaDataset& data, const ChainConfig& cfg,
                                    std::size_t n_chains) {
  std::vector<std::future<Chain>> pending;
  for (std::size_t k = 0; k < n_chains; ++k) {
    ChainConfig c = cfg;
    if (k > 0) c.seed = derive_seed(cfg.seed, k);
    pending.push_back(std::async(std::launch::async, [&data, c] { return mh_sample(data, c); }));
  }
  std::vector<Chain> chains;
  for (auto& f : pending) chains.push_back(f.get());
  return chains;
}

}  // namespace exnet::bmlr
