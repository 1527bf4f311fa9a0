#pragma once

// Three-level binomial-logistic model with hierarchical centering:
//
//   y_ji  ~ Binomial(n_ji, logistic(u_ji))
//   u_ji  ~ N(tau_j, sigma2_u)
//   tau_j ~ N(beta0, sigma2_tau)
//   beta0 ~ N(0, 1000),  sigma2_u, sigma2_tau ~ N+(0, 1000)
//
// fitted by componentwise random-walk Metropolis-Hastings.

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "exnet/corpus.hpp"

namespace exnet::bmlr {

/// Latent level-1 variance of the logistic distribution (pi^2 / 3), as used
/// in the intra-class correlation.
inline constexpr double kLogisticErrorVariance = 3.29;
/// Half-width multiplier of Goldstein-adjusted intervals.
inline constexpr double kGoldsteinMultiplier = 1.39;

struct Priors {
  double beta0_variance = 1000.0;
  double sigma2_variance = 1000.0;  // half-normal on the variances themselves
};

struct ModelParams {
  double beta0 = 0.0;
  double sigma2_u = 1.0;
  double sigma2_tau = 1.0;
  std::vector<double> tau;  // one per reference, in dataset reference order
  std::vector<double> u;    // one per edge, in dataset edge order
};

/// Integer view of a dataset used by the sampler.
struct ModelData {
  std::vector<InstId> ref_ids;
  std::vector<std::pair<InstId, InstId>> edge_keys;
  std::vector<std::int64_t> n;
  std::vector<std::int64_t> y;
  std::vector<std::size_t> edge_ref;                // reference index of each edge
  std::vector<std::vector<std::size_t>> ref_edges;  // edges of each reference

  static ModelData from(const SubjectAreaDataset& data);
  std::size_t n_refs() const { return ref_ids.size(); }
  std::size_t n_edges() const { return n.size(); }
};

double inv_logit(double x);
double logit(double p);
/// log(1 + exp(x)) without overflow.
double log1p_exp(double x);

double log_binomial_pmf(std::int64_t y, std::int64_t n, double logit_p);
double log_normal_pdf(double x, double mean, double variance);
double log_half_normal_pdf(double x, double variance);

/// Level-1 binomial log-likelihood; depends on `params.u` only.
double log_likelihood(const ModelParams& params, const SubjectAreaDataset& data);

/// Full log posterior density including all normalising constants of the
/// likelihood and priors. Throws std::domain_error for non-positive variances
/// and std::invalid_argument on dimension mismatch.
double log_posterior(const ModelParams& params, const SubjectAreaDataset& data,
                     const Priors& priors = {});

// ---------------------------------------------------------------------------
// Sampling

enum class ModelKind { full, intercept_only };

/// Initial random-walk scales per block; unset entries are derived from the
/// data. Variance blocks are proposed on the log scale.
struct ProposalScales {
  std::optional<double> beta0;
  std::optional<double> tau;
  std::optional<double> u;
  std::optional<double> log_sigma2_u;
  std::optional<double> log_sigma2_tau;
};

struct ChainConfig {
  int iterations = 10000;
  int burn_in = 1000;
  int thinning = 2;
  std::uint64_t seed = 1;
  ProposalScales proposal_scales;
  bool adapt = true;  // adapt scales during burn-in only
  ModelKind model = ModelKind::full;
  Priors priors;

  std::size_t retained_count() const;
  /// Throws std::invalid_argument when the settings are inconsistent.
  void validate() const;
};

/// Mean post-burn-in acceptance rate of each block.
struct AcceptanceRates {
  double beta0 = 0.0;
  double tau = 0.0;
  double u = 0.0;
  double sigma2_u = 0.0;
  double sigma2_tau = 0.0;
};

/// Retained draws. `tau` and `u` are stored draw-major.
struct Chain {
  ModelKind kind = ModelKind::full;
  std::uint64_t seed = 0;
  std::vector<InstId> ref_ids;
  std::vector<std::pair<InstId, InstId>> edge_keys;
  std::vector<std::int64_t> edge_n;

  std::vector<double> beta0;
  std::vector<double> sigma2_u;
  std::vector<double> sigma2_tau;
  std::vector<double> tau;
  std::vector<double> u;

  AcceptanceRates acceptance;
  std::vector<std::string> warnings;

  std::size_t draws() const { return beta0.size(); }
  std::size_t n_refs() const { return ref_ids.size(); }
  std::size_t n_edges() const { return edge_keys.size(); }

  std::size_t ref_index(const InstId& ref) const;
  std::size_t edge_index(const InstId& ref, const InstId& net) const;

  std::vector<double> tau_trace(std::size_t ref) const;
  std::vector<double> u_trace(std::size_t edge) const;

  /// Draws of a named parameter: "beta0", "sigma2_u", "sigma2_tau", "icc",
  /// "tau[<ref id>]", "u[<ref id>,<net id>]". Throws std::invalid_argument
  /// for unknown names.
  std::vector<double> trace(std::string_view selector) const;
};

Chain mh_sample(const SubjectAreaDataset& data, const ChainConfig& cfg);

/// Independent chains differing only by seed, run concurrently.
std::vector<Chain> mh_sample_chains(const SubjectAreaDataset& data, const ChainConfig& cfg,
                                    std::size_t n_chains);

// ---------------------------------------------------------------------------
// Posterior summaries

struct Interval {
  double lower = 0.0;
  double upper = 0.0;
};

struct PosteriorSummary {
  double mean = 0.0;
  double sd = 0.0;
  Interval hpd;
  Interval goldstein;
};

/// Shortest window holding ceil(level * N) order statistics of `sorted`;
/// ties go to the leftmost window.
Interval hpd_interval(std::span<const double> sorted, double level = 0.95);

Interval goldstein_interval(double mean, double sd);
bool intervals_overlap(const Interval& a, const Interval& b);

PosteriorSummary summarize(std::span<const double> draws);
PosteriorSummary summarize(const Chain& chain, std::string_view selector);

double icc(double sigma2_u, double sigma2_tau);

struct DicResult {
  double dic = 0.0;
  double p_d = 0.0;
  double mean_deviance = 0.0;
  double deviance_at_mean = 0.0;
  bool negative_p_d = false;
};

/// Binomial deviance -2 log p(y | u) for a vector of edge logits.
double deviance(std::span<const double> edge_logits, const SubjectAreaDataset& data);

/// Conditional DIC: deviance from the level-1 likelihood given u (or the
/// shared intercept for the intercept-only model).
DicResult dic(const Chain& chain, const SubjectAreaDataset& data);

enum class RateMode {
  per_draw,         // summarize logistic(tau) draw by draw
  logistic_of_mean  // logistic of the posterior mean (point value only)
};

PosteriorSummary predict_ref_rate(const Chain& chain, const InstId& ref,
                                  RateMode mode = RateMode::per_draw);
PosteriorSummary predict_ref_rate(const Chain& chain, std::size_t ref_index,
                                  RateMode mode = RateMode::per_draw);

/// Posterior-predictive rate of one edge: yhat ~ Binomial(n, logistic(u)) per
/// draw, summarised as yhat / n. Each edge uses its own seeded stream.
PosteriorSummary predict_edge_rate(const Chain& chain, const InstId& ref, const InstId& net);
PosteriorSummary predict_edge_rate(const Chain& chain, std::size_t edge_index);

/// Sum of posterior-predictive means of yhat over sum of n.
double overall_rate(const Chain& chain, const SubjectAreaDataset& data);

// ---------------------------------------------------------------------------
// Diagnostics

struct DensityGrid {
  std::vector<double> x;
  std::vector<double> density;
};

struct DiagnosticsReport {
  std::vector<double> autocorrelation;  // lags 0..50; NaN when variance is zero
  double effective_sample_size = 0.0;
  std::vector<double> trace_means;  // 10 equal segments
  DensityGrid density;              // 512-point Gaussian KDE
  bool zero_variance = false;
};

inline constexpr std::size_t kMaxAutocorrelationLag = 50;
inline constexpr std::size_t kTraceSegments = 10;
inline constexpr std::size_t kDensityGridPoints = 512;

std::vector<double> autocorrelation(std::span<const double> draws, std::size_t max_lag);
double effective_sample_size(std::span<const double> draws);
DiagnosticsReport diagnostics(std::span<const double> draws);
DiagnosticsReport diagnostics(const Chain& chain, std::string_view selector);

/// Gelman-Rubin potential scale reduction over equal-length chains.
double potential_scale_reduction(const std::vector<std::vector<double>>& chains);

// ---------------------------------------------------------------------------
// Fit results

struct ReferenceRate {
  InstId id;
  PosteriorSummary rate;  // probability scale, intervals clamped to [0, 1]
  double rate_of_mean = 0.0;
};

struct EdgeRate {
  InstId ref_id;
  InstId net_id;
  std::int64_t n_papers = 0;
  std::int64_t n_top = 0;
  PosteriorSummary rate;
};

struct SubsetFit {
  std::size_t n_refs = 0;
  std::size_t n_edges = 0;
  std::uint64_t seed = 0;
  PosteriorSummary beta0;
  PosteriorSummary sigma2_u;
  PosteriorSummary sigma2_tau;
  PosteriorSummary icc;
  double icc_headline = 0.0;  // icc of the posterior means
  DicResult dic;
  AcceptanceRates acceptance;
  std::map<std::string, DiagnosticsReport> diagnostics;
  std::map<std::string, std::vector<double>> traces;
};

struct FitResult {
  std::string subject;
  ChainConfig config;
  std::size_t max_edges = 0;  // 0: never split
  std::size_t retained = 0;

  PosteriorSummary beta0;
  PosteriorSummary sigma2_u;
  PosteriorSummary sigma2_tau;
  PosteriorSummary icc;
  double icc_headline = 0.0;
  DicResult dic;
  double overall_rate = 0.0;
  bool pooled_heuristic = false;  // true when summaries combine several subsets

  std::vector<ReferenceRate> references;
  std::vector<EdgeRate> edges;
  std::vector<SubsetFit> subsets;
  std::vector<std::string> warnings;
};

FitResult fit(const SubjectAreaDataset& data, const ChainConfig& cfg);

/// Partition of reference indices into subsets of at most `max_edges` edges.
std::vector<std::vector<std::size_t>> partition_references(const SubjectAreaDataset& data,
                                                           std::size_t max_edges,
                                                           std::uint64_t seed,
                                                           std::vector<std::string>* warnings = nullptr);

/// Restricts a dataset to the given references (indices into references()).
SubjectAreaDataset subset_dataset(const SubjectAreaDataset& data, std::span<const std::size_t> refs);

FitResult split_fit(const SubjectAreaDataset& data, std::size_t max_edges, const ChainConfig& cfg);

nlohmann::ordered_json to_json(const PosteriorSummary& s);
nlohmann::ordered_json to_json(const DiagnosticsReport& d);
nlohmann::ordered_json to_json(const FitResult& fit);
FitResult fit_from_json(const nlohmann::json& doc);

}  // namespace exnet::bmlr
