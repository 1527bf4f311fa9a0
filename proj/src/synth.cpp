#include "exnet/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <ostream>
#include <random>
#include <stdexcept>
#include <tuple>

#include "exnet/bmlr.hpp"
#include "exnet/layout.hpp"
#include "exnet/rng.hpp"

namespace exnet::synth {

namespace {

constexpr std::array kCountries = {"USA", "GBR", "DEU", "FRA", "JPN", "CHN", "ITA", "CAN",
                                   "ESP", "NLD", "AUS", "SWE", "CHE", "KOR", "BRA", "IND"};

constexpr const char* kBackground = "BG0000";

// Net partners stay below the reference threshold so the paper-level route
// cannot promote them.
constexpr std::int64_t kNetCapacity = 499;

std::string numbered(const char* prefix, std::size_t k, int width) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s%0*zu", prefix, width, k);
  return buf;
}

Institution make_institution(const InstId& id, Rng& rng, bool with_location) {
  Institution inst;
  inst.id = id;
  inst.name = "Institution " + id;
  const auto* code = kCountries[std::uniform_int_distribution<std::size_t>(0, kCountries.size() - 1)(rng)];
  inst.country = code;
  std::normal_distribution<double> spread(0.0, 3.0);
  const double dlat = spread(rng);
  const double dlon = spread(rng);
  if (with_location) {
    const auto c = layout::country_centroid(code).value_or(GeoPoint{0.0, 0.0});
    double lon = c.lon + dlon;
    if (lon > 180.0) lon -= 360.0;
    if (lon <= -180.0) lon += 360.0;
    inst.location = GeoPoint{std::clamp(c.lat + dlat, -89.0, 89.0), lon};
  }
  return inst;
}

}  // namespace

void SyntheticSpec::validate() const {
  if (subject.empty()) throw std::invalid_argument("synthetic subject must be non-empty");
  if (n_refs == 0) throw std::invalid_argument("n_refs must be positive");
  if (!(mean_nets_per_ref >= 1.0)) throw std::invalid_argument("mean_nets_per_ref must be at least 1");
  if (n_min < 1 || n_max < n_min) throw std::invalid_argument("n range must satisfy 1 <= n_min <= n_max");
  if (n_max > kNetCapacity) throw std::invalid_argument("n_max must stay below 500");
  if (!std::isfinite(beta0)) throw std::invalid_argument("beta0 must be finite");
  if (!(sigma2_u >= 0.0) || !(sigma2_tau >= 0.0)) throw std::invalid_argument("variances must be non-negative");
}

SyntheticData generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  SyntheticData out;
  out.spec = spec;
  auto& data = out.dataset;
  data.subject = spec.subject;
  data.thresholds_applied = Thresholds{};
  data.thresholds_applied.min_joint = std::min<std::int64_t>(data.thresholds_applied.min_joint, spec.n_min);
  data.thresholds_applied.min_refs = std::min(data.thresholds_applied.min_refs, spec.n_refs);

  auto rng_count = make_rng(spec.seed, 1);
  auto rng_pick = make_rng(spec.seed, 2);
  auto rng_tau = make_rng(spec.seed, 3);
  auto rng_u = make_rng(spec.seed, 4);
  auto rng_y = make_rng(spec.seed, 5);
  auto rng_inst = make_rng(spec.seed, 6);
  auto rng_solo = make_rng(spec.seed, 7);

  const std::size_t pool_size = static_cast<std::size_t>(
      std::max(std::ceil(2.0 * spec.mean_nets_per_ref), std::ceil(spec.n_refs * spec.mean_nets_per_ref / 2.5)));
  std::vector<InstId> pool;
  std::vector<std::int64_t> load;
  for (std::size_t k = 0; k < pool_size; ++k) {
    pool.push_back(numbered("N", k + 1, 5));
    load.push_back(0);
  }

  std::poisson_distribution<int> extra(std::max(spec.mean_nets_per_ref - 1.0, 1e-12));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double log_lo = std::log(static_cast<double>(spec.n_min));
  const double log_hi = std::log(static_cast<double>(spec.n_max) + 1.0);
  const double sd_tau = std::sqrt(spec.sigma2_tau);
  const double sd_u = std::sqrt(spec.sigma2_u);

  std::map<InstId, std::int64_t> joint_of_ref;
  for (std::size_t j = 0; j < spec.n_refs; ++j) {
    const InstId ref = numbered("R", j + 1, 4);
    const double tau = spec.beta0 + sd_tau * std::normal_distribution<double>(0.0, 1.0)(rng_tau);
    out.tau.push_back(tau);
    const auto k = static_cast<std::size_t>(1 + extra(rng_count));
    std::vector<std::size_t> chosen;
    for (std::size_t e = 0; e < k; ++e) {
      auto n = static_cast<std::int64_t>(std::floor(std::exp(log_lo + (log_hi - log_lo) * unit(rng_count))));
      n = std::clamp(n, spec.n_min, spec.n_max);
      std::vector<std::size_t> open;
      for (std::size_t p = 0; p < pool.size(); ++p)
        if (load[p] + n <= kNetCapacity && std::find(chosen.begin(), chosen.end(), p) == chosen.end())
          open.push_back(p);
      std::size_t pick;
      if (open.empty()) {
        pool.push_back(numbered("N", pool.size() + 1, 5));
        load.push_back(0);
        pick = pool.size() - 1;
      } else {
        pick = open[std::uniform_int_distribution<std::size_t>(0, open.size() - 1)(rng_pick)];
      }
      chosen.push_back(pick);
      load[pick] += n;
      const double u = tau + sd_u * std::normal_distribution<double>(0.0, 1.0)(rng_u);
      const auto y = std::binomial_distribution<std::int64_t>(n, bmlr::inv_logit(u))(rng_y);
      data.edges.push_back({ref, pool[pick], n, y});
      out.u.push_back(u);
      joint_of_ref[ref] += n;
    }
  }

  // Edge order must be (ref, net); keep u aligned.
  std::vector<std::size_t> order(data.edges.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return std::tie(data.edges[a].ref_id, data.edges[a].net_id) < std::tie(data.edges[b].ref_id, data.edges[b].net_id);
  });
  std::vector<CollabEdge> edges;
  std::vector<double> u;
  for (auto k : order) {
    edges.push_back(data.edges[k]);
    u.push_back(out.u[k]);
  }
  data.edges = std::move(edges);
  out.u = std::move(u);

  std::set<InstId> used_nets;
  for (const auto& e : data.edges) used_nets.insert(e.net_id);

  for (const auto& [ref, joint] : joint_of_ref) {
    const auto solo = std::max<std::int64_t>(0, 500 - joint) +
                      std::uniform_int_distribution<std::int64_t>(0, 100)(rng_solo);
    out.solo_papers[ref] = solo;
    CatalogEntry entry{make_institution(ref, rng_inst, true), {}};
    entry.total_papers_by_subject[spec.subject] = joint + solo;
    out.catalog[ref] = entry;
  }
  std::size_t net_index = 0;
  for (std::size_t p = 0; p < pool.size(); ++p) {
    if (!used_nets.count(pool[p])) continue;
    // Every twentieth partner lacks coordinates.
    CatalogEntry entry{make_institution(pool[p], rng_inst, net_index++ % 20 != 19), {}};
    entry.total_papers_by_subject[spec.subject] = load[p];
    out.catalog[pool[p]] = entry;
  }

  for (const auto& [id, entry] : out.catalog) {
    Institution inst = entry.institution;
    inst.is_reference = joint_of_ref.count(id) > 0;
    data.institutions.push_back(std::move(inst));
  }
  return out;
}

std::vector<PaperRecord> synthesize_papers(const SyntheticData& data) {
  const auto& spec = data.spec;
  auto rng = make_rng(spec.seed, 8);
  std::uniform_int_distribution<std::int64_t> high(100, 1000);
  std::uniform_int_distribution<std::int64_t> low(0, 49);
  std::uniform_real_distribution<double> prestige(0.0, 10.0);

  std::int64_t flagged = 0, unflagged = 0, solo = 0;
  for (const auto& e : data.dataset.edges) {
    flagged += e.n_top;
    unflagged += e.n_papers - e.n_top;
  }
  for (const auto& [id, k] : data.solo_papers) solo += k;
  // Total N = 10 * F' with F' flagged, so the top decile is exactly F'.
  std::int64_t flagged_total = std::max<std::int64_t>(flagged, (unflagged + solo + 8) / 9);
  flagged_total = std::max<std::int64_t>(flagged_total, 1);
  const std::int64_t background_flagged = flagged_total - flagged;
  const std::int64_t background_unflagged = 9 * flagged_total - unflagged - solo;

  std::vector<PaperRecord> papers;
  std::size_t next = 1;
  auto add = [&](std::vector<InstId> insts, bool top) {
    char prest[32];
    std::snprintf(prest, sizeof prest, "%.3f", prestige(rng));
    PaperRecord p;
    p.paper_id = numbered("P", next++, 8);
    p.subject = spec.subject;
    p.year = 2010;
    p.citations = top ? high(rng) : low(rng);
    p.journal_prestige = std::strtod(prest, nullptr);
    p.institutions = std::move(insts);
    papers.push_back(std::move(p));
  };
  for (const auto& e : data.dataset.edges) {
    for (std::int64_t k = 0; k < e.n_papers; ++k) add({e.ref_id, e.net_id}, k < e.n_top);
  }
  for (const auto& [id, k] : data.solo_papers)
    for (std::int64_t i = 0; i < k; ++i) add({id}, false);
  for (std::int64_t i = 0; i < background_flagged; ++i) add({kBackground}, true);
  for (std::int64_t i = 0; i < background_unflagged; ++i) add({kBackground}, false);
  return papers;
}

std::vector<EdgeRow> edge_rows(const SyntheticData& data) {
  std::vector<EdgeRow> rows;
  for (const auto& e : data.dataset.edges) rows.push_back({data.spec.subject, e});
  return rows;
}

nlohmann::ordered_json truth_json(const SyntheticData& data) {
  const auto& s = data.spec;
  nlohmann::ordered_json j;
  j["subject"] = s.subject;
  j["spec"] = {{"n_refs", s.n_refs},     {"mean_nets_per_ref", s.mean_nets_per_ref},
               {"n_min", s.n_min},       {"n_max", s.n_max},
               {"beta0", s.beta0},       {"sigma2_u", s.sigma2_u},
               {"sigma2_tau", s.sigma2_tau}, {"seed", s.seed}};
  const auto refs = data.dataset.references();
  nlohmann::ordered_json tau;
  for (std::size_t k = 0; k < refs.size(); ++k) tau[refs[k]] = data.tau[k];
  j["tau"] = std::move(tau);
  auto u = nlohmann::ordered_json::array();
  for (std::size_t k = 0; k < data.dataset.edges.size(); ++k) {
    const auto& e = data.dataset.edges[k];
    u.push_back({{"ref", e.ref_id}, {"net", e.net_id}, {"u", data.u[k]}});
  }
  j["u"] = std::move(u);
  return j;
}

void write_edges_csv(std::ostream& out, const std::vector<EdgeRow>& rows) {
  out << "subject,ref_id,net_id,n_papers,n_top\n";
  for (const auto& r : rows)
    out << r.subject << ',' << r.edge.ref_id << ',' << r.edge.net_id << ',' << r.edge.n_papers << ','
        << r.edge.n_top << '\n';
}

void write_papers_csv(std::ostream& out, const std::vector<PaperRecord>& papers) {
  out << "paper_id,subject,year,citations,journal_prestige,institutions\n";
  char prest[32];
  for (const auto& p : papers) {
    std::snprintf(prest, sizeof prest, "%.3f", p.journal_prestige);
    out << p.paper_id << ',' << p.subject << ',' << p.year << ',' << p.citations << ',' << prest << ',';
    for (std::size_t k = 0; k < p.institutions.size(); ++k) out << (k ? ";" : "") << p.institutions[k];
    out << '\n';
  }
}

void write_synthetic(const SyntheticData& data, const std::filesystem::path& dir, bool with_papers) {
  std::filesystem::create_directories(dir);
  auto open = [&](const char* name) {
    std::ofstream f(dir / name, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + (dir / name).string());
    return f;
  };
  {
    auto f = open("edges.csv");
    write_edges_csv(f, edge_rows(data));
  }
  {
    auto f = open("institutions.json");
    f << catalog_to_json(data.catalog).dump(2) << '\n';
  }
  {
    auto f = open("truth.json");
    f << truth_json(data).dump(2) << '\n';
  }
  if (with_papers) {
    auto f = open("papers.csv");
    write_papers_csv(f, synthesize_papers(data));
  }
}

SyntheticSpec spec_from_settings(const std::map<std::string, std::string>& settings) {
  SyntheticSpec s;
  for (const auto& [key, value] : settings) {
    try {
      if (key == "subject") s.subject = value;
      else if (key == "n_refs") s.n_refs = std::stoul(value);
      else if (key == "mean_nets_per_ref") s.mean_nets_per_ref = std::stod(value);
      else if (key == "n_min") s.n_min = std::stoll(value);
      else if (key == "n_max") s.n_max = std::stoll(value);
      else if (key == "beta0") s.beta0 = std::stod(value);
      else if (key == "sigma2_u") s.sigma2_u = std::stod(value);
      else if (key == "sigma2_tau") s.sigma2_tau = std::stod(value);
      else if (key == "seed") s.seed = std::stoull(value);
      else throw std::invalid_argument("unknown synthetic setting '" + key + "'");
    } catch (const std::logic_error& e) {
      if (std::string(e.what()).starts_with("unknown")) throw;
      throw std::invalid_argument("bad value for '" + key + "': " + value);
    }
  }
  s.validate();
  return s;
}

}  // namespace exnet::synth
