#include <cmath>
#include <limits>

#include "exnet/bmlr.hpp"

namespace exnet::bmlr {

namespace {

using ojson = nlohmann::ordered_json;

ojson number(double v) {
  if (!std::isfinite(v)) return nullptr;
  return v;
}

double read_number(const nlohmann::json& j) {
  return j.is_number() ? j.get<double>() : std::numeric_limits<double>::quiet_NaN();
}

ojson numbers(const std::vector<double>& v) {
  auto a = ojson::array();
  for (double x : v) a.push_back(number(x));
  return a;
}

std::vector<double> read_numbers(const nlohmann::json& j) {
  std::vector<double> v;
  for (const auto& x : j) v.push_back(read_number(x));
  return v;
}

PosteriorSummary summary_from_json(const nlohmann::json& j) {
  PosteriorSummary s;
  s.mean = read_number(j.at("mean"));
  s.sd = read_number(j.at("sd"));
  s.hpd = {read_number(j.at("hpd").at(0)), read_number(j.at("hpd").at(1))};
  s.goldstein = {read_number(j.at("goldstein").at(0)), read_number(j.at("goldstein").at(1))};
  return s;
}

DiagnosticsReport diagnostics_from_json(const nlohmann::json& j) {
  DiagnosticsReport d;
  d.autocorrelation = read_numbers(j.at("autocorrelation"));
  d.effective_sample_size = read_number(j.at("effective_sample_size"));
  d.trace_means = read_numbers(j.at("trace_means"));
  d.density.x = read_numbers(j.at("density").at("x"));
  d.density.density = read_numbers(j.at("density").at("density"));
  d.zero_variance = j.value("zero_variance", false);
  return d;
}

ojson acceptance_json(const AcceptanceRates& a) {
  return {{"beta0", a.beta0}, {"tau", a.tau}, {"u", a.u}, {"sigma2_u", a.sigma2_u}, {"sigma2_tau", a.sigma2_tau}};
}

ojson dic_fields(ojson j, const DicResult& d) {
  j["dic"] = number(d.dic);
  j["p_d"] = number(d.p_d);
  j["mean_deviance"] = number(d.mean_deviance);
  j["deviance_at_mean"] = number(d.deviance_at_mean);
  j["negative_p_d"] = d.negative_p_d;
  return j;
}

DicResult dic_from_json(const nlohmann::json& j) {
  DicResult d;
  d.dic = read_number(j.at("dic"));
  d.p_d = read_number(j.at("p_d"));
  d.mean_deviance = read_number(j.at("mean_deviance"));
  d.deviance_at_mean = read_number(j.at("deviance_at_mean"));
  d.negative_p_d = j.value("negative_p_d", false);
  return d;
}

}  // namespace

ojson to_json(const PosteriorSummary& s) {
  ojson j;
  j["mean"] = number(s.mean);
  j["sd"] = number(s.sd);
  j["hpd"] = {number(s.hpd.lower), number(s.hpd.upper)};
  j["goldstein"] = {number(s.goldstein.lower), number(s.goldstein.upper)};
  return j;
}

ojson to_json(const DiagnosticsReport& d) {
  ojson j;
  j["autocorrelation"] = numbers(d.autocorrelation);
  j["effective_sample_size"] = number(d.effective_sample_size);
  j["trace_means"] = numbers(d.trace_means);
  j["density"] = {{"x", numbers(d.density.x)}, {"density", numbers(d.density.density)}};
  j["zero_variance"] = d.zero_variance;
  return j;
}

ojson to_json(const FitResult& fit) {
  ojson j;
  j["schema_version"] = 1;
  j["subject"] = fit.subject;
  j["config"] = {{"iterations", fit.config.iterations},
                 {"burn_in", fit.config.burn_in},
                 {"thin", fit.config.thinning},
                 {"seed", fit.config.seed},
                 {"adapt", fit.config.adapt},
                 {"max_edges", fit.max_edges}};
  j["retained"] = fit.retained;
  j["beta0"] = to_json(fit.beta0);
  j["sigma2_u"] = to_json(fit.sigma2_u);
  j["sigma2_tau"] = to_json(fit.sigma2_tau);
  j["icc"] = to_json(fit.icc);
  j["icc_headline"] = number(fit.icc_headline);
  j = dic_fields(std::move(j), fit.dic);
  j["overall_rate"] = number(fit.overall_rate);
  j["pooled_heuristic"] = fit.pooled_heuristic;

  auto refs = ojson::array();
  for (const auto& r : fit.references)
    refs.push_back({{"id", r.id}, {"rate", to_json(r.rate)}, {"rate_of_mean", number(r.rate_of_mean)}});
  j["references"] = std::move(refs);

  auto edges = ojson::array();
  for (const auto& e : fit.edges)
    edges.push_back({{"ref", e.ref_id}, {"net", e.net_id}, {"n_papers", e.n_papers}, {"n_top", e.n_top},
                     {"rate", to_json(e.rate)}});
  j["edges"] = std::move(edges);

  if (fit.subsets.size() == 1) {
    ojson diag;
    for (const auto& [name, d] : fit.subsets.front().diagnostics) diag[name] = to_json(d);
    j["diagnostics"] = std::move(diag);
  }

  auto subsets = ojson::array();
  for (const auto& s : fit.subsets) {
    ojson sj;
    sj["n_refs"] = s.n_refs;
    sj["n_edges"] = s.n_edges;
    sj["seed"] = s.seed;
    sj["beta0"] = to_json(s.beta0);
    sj["sigma2_u"] = to_json(s.sigma2_u);
    sj["sigma2_tau"] = to_json(s.sigma2_tau);
    sj["icc"] = to_json(s.icc);
    sj["icc_headline"] = number(s.icc_headline);
    sj = dic_fields(std::move(sj), s.dic);
    sj["acceptance"] = acceptance_json(s.acceptance);
    ojson diag, traces;
    for (const auto& [name, d] : s.diagnostics) diag[name] = to_json(d);
    for (const auto& [name, t] : s.traces) traces[name] = numbers(t);
    sj["diagnostics"] = std::move(diag);
    sj["traces"] = std::move(traces);
    subsets.push_back(std::move(sj));
  }
  j["subsets"] = std::move(subsets);
  j["warnings"] = fit.warnings;
  return j;
}

FitResult fit_from_json(const nlohmann::json& doc) {
  FitResult f;
  f.subject = doc.at("subject").get<std::string>();
  const auto& c = doc.at("config");
  f.config.iterations = c.at("iterations").get<int>();
  f.config.burn_in = c.at("burn_in").get<int>();
  f.config.thinning = c.at("thin").get<int>();
  f.config.seed = c.at("seed").get<std::uint64_t>();
  f.config.adapt = c.value("adapt", true);
  f.max_edges = c.value("max_edges", std::size_t{0});
  f.retained = doc.at("retained").get<std::size_t>();
  f.beta0 = summary_from_json(doc.at("beta0"));
  f.sigma2_u = summary_from_json(doc.at("sigma2_u"));
  f.sigma2_tau = summary_from_json(doc.at("sigma2_tau"));
  f.icc = summary_from_json(doc.at("icc"));
  f.icc_headline = read_number(doc.at("icc_headline"));
  f.dic = dic_from_json(doc);
  f.overall_rate = read_number(doc.at("overall_rate"));
  f.pooled_heuristic = doc.value("pooled_heuristic", false);
  for (const auto& r : doc.at("references"))
    f.references.push_back(
        {r.at("id").get<std::string>(), summary_from_json(r.at("rate")), read_number(r.at("rate_of_mean"))});
  for (const auto& e : doc.at("edges"))
    f.edges.push_back({e.at("ref").get<std::string>(), e.at("net").get<std::string>(),
                       e.at("n_papers").get<std::int64_t>(), e.at("n_top").get<std::int64_t>(),
                       summary_from_json(e.at("rate"))});
  for (const auto& sj : doc.at("subsets")) {
    SubsetFit s;
    s.n_refs = sj.at("n_refs").get<std::size_t>();
    s.n_edges = sj.at("n_edges").get<std::size_t>();
    s.seed = sj.at("seed").get<std::uint64_t>();
    s.beta0 = summary_from_json(sj.at("beta0"));
    s.sigma2_u = summary_from_json(sj.at("sigma2_u"));
    s.sigma2_tau = summary_from_json(sj.at("sigma2_tau"));
    s.icc = summary_from_json(sj.at("icc"));
    s.icc_headline = read_number(sj.at("icc_headline"));
    s.dic = dic_from_json(sj);
    const auto& a = sj.at("acceptance");
    s.acceptance = {read_number(a.at("beta0")), read_number(a.at("tau")), read_number(a.at("u")),
                    read_number(a.at("sigma2_u")), read_number(a.at("sigma2_tau"))};
    for (const auto& [name, d] : sj.at("diagnostics").items()) s.diagnostics[name] = diagnostics_from_json(d);
    for (const auto& [name, t] : sj.at("traces").items()) s.traces[name] = read_numbers(t);
    f.subsets.push_back(std::move(s));
  }
  f.warnings = doc.value("warnings", std::vector<std::string>{});
  return f;
}

}  // namespace exnet::bmlr
