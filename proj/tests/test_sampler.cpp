#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "exnet/bmlr.hpp"
#include "exnet/synth.hpp"
#include "support.hpp"

using namespace exnet;
using namespace exnet::bmlr;
using testing_support::make_dataset;

namespace {

SubjectAreaDataset small_dataset() {
  return make_dataset({{"A", "X", 40, 8}, {"A", "Y", 25, 4}, {"A", "Z", 60, 15}, {"B", "X", 30, 9},
                       {"B", "W", 80, 20}, {"C", "Y", 50, 6}, {"C", "V", 15, 3}});
}

ChainConfig short_config(std::uint64_t seed = 1) {
  ChainConfig c;
  c.iterations = 3000;
  c.burn_in = 500;
  c.seed = seed;
  return c;
}

}  // namespace

TEST_CASE("retained draws and config validation") {
  ChainConfig c;
  CHECK(c.retained_count() == 4500);
  c.thinning = 3;
  CHECK(c.retained_count() == 3000);
  ChainConfig bad;
  bad.burn_in = bad.iterations;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = {};
  bad.thinning = 0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = {};
  bad.proposal_scales.u = -1.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  CHECK_THROWS_AS(mh_sample(SubjectAreaDataset{}, ChainConfig{}), std::invalid_argument);
}

TEST_CASE("chains are deterministic per seed") {
  const auto d = small_dataset();
  const auto a = mh_sample(d, short_config(5));
  const auto b = mh_sample(d, short_config(5));
  const auto c = mh_sample(d, short_config(6));
  CHECK(a.draws() == short_config().retained_count());
  CHECK(a.beta0 == b.beta0);
  CHECK(a.u == b.u);
  CHECK(a.tau == b.tau);
  CHECK(a.beta0 != c.beta0);
  CHECK(a.u.size() == a.draws() * d.edges.size());
  CHECK(a.tau.size() == a.draws() * 3);
  for (double v : a.sigma2_u) CHECK(v > 0.0);
  for (double v : a.sigma2_tau) CHECK(v > 0.0);
}

TEST_CASE("synthetic parameters are recovered") {
  synth::SyntheticSpec spec;
  spec.seed = 17;
  const auto truth = synth::generate_synthetic(spec);
  ChainConfig cfg;
  cfg.iterations = 4000;
  cfg.seed = 3;
  const auto f = fit(truth.dataset, cfg);
  CHECK(std::abs(f.beta0.mean - spec.beta0) <= 3.0 * f.beta0.sd);
  CHECK(std::abs(f.sigma2_tau.mean - spec.sigma2_tau) <= 3.0 * f.sigma2_tau.sd);
  CHECK(std::abs(f.sigma2_u.mean - spec.sigma2_u) <= 3.0 * f.sigma2_u.sd);
  CHECK(f.references.size() == spec.n_refs);
  CHECK(f.edges.size() == truth.dataset.edges.size());
  CHECK(f.warnings.empty());
}

TEST_CASE("small edges shrink toward their reference") {
  std::vector<CollabEdge> edges;
  for (int k = 0; k < 12; ++k) edges.push_back({"A", "N" + testing_support::padded(k), 200, 40});
  edges.push_back({"A", "SMALL", 10, 8});
  edges.push_back({"A", "LARGE", 400, 320});
  for (int k = 0; k < 12; ++k) edges.push_back({"B", "M" + testing_support::padded(k), 150, 30});
  const auto d = make_dataset(edges);
  ChainConfig cfg = short_config(2);
  cfg.iterations = 6000;
  const auto f = fit(d, cfg);
  auto rate = [&](const InstId& net) {
    for (const auto& e : f.edges)
      if (e.ref_id == "A" && e.net_id == net) return e.rate.mean;
    FAIL("missing edge");
    return 0.0;
  };
  const double small = rate("SMALL"), large = rate("LARGE");
  CHECK(small < 0.8);
  CHECK(0.8 - small > std::abs(0.8 - large));
  CHECK(std::abs(large - 0.8) < 0.05);
}

TEST_CASE("acceptance outside the band is reported") {
  const auto d = small_dataset();
  ChainConfig cfg = short_config();
  cfg.adapt = false;
  cfg.proposal_scales = {50.0, 50.0, 50.0, 20.0, 20.0};
  const auto c = mh_sample(d, cfg);
  CHECK_FALSE(c.warnings.empty());
  CHECK(c.acceptance.u < 0.15);
}

TEST_CASE("independent chains agree") {
  const auto d = small_dataset();
  const auto chains = mh_sample_chains(d, short_config(9), 3);
  REQUIRE(chains.size() == 3);
  CHECK(chains[0].beta0 != chains[1].beta0);
  CHECK(chains[0].beta0 == mh_sample(d, short_config(9)).beta0);
  std::vector<std::vector<double>> b;
  for (const auto& c : chains) b.push_back(c.beta0);
  CHECK(potential_scale_reduction(b) < 1.1);
}

TEST_CASE("fit results round-trip through JSON") {
  const auto f = fit(small_dataset(), short_config(4));
  const auto doc = to_json(f);
  const auto back = fit_from_json(nlohmann::json::parse(doc.dump()));
  CHECK(to_json(back).dump() == doc.dump());
  CHECK(back.retained == f.retained);
  CHECK(back.edges.size() == f.edges.size());
}

TEST_CASE("split fitting") {
  synth::SyntheticSpec spec;
  spec.n_refs = 30;
  spec.mean_nets_per_ref = 8;
  spec.seed = 5;
  const auto d = synth::generate_synthetic(spec).dataset;
  const auto cfg = short_config(11);

  SUBCASE("no split when under the limit") {
    const auto whole = fit(d, cfg);
    const auto same = split_fit(d, d.edges.size(), cfg);
    CHECK(to_json(same).dump() != "");
    CHECK(same.beta0.mean == whole.beta0.mean);
    CHECK_FALSE(same.pooled_heuristic);
  }

  SUBCASE("partition covers each reference once and respects the limit") {
    const std::size_t limit = 60;
    std::vector<std::string> warnings;
    const auto parts = partition_references(d, limit, 4, &warnings);
    const auto md = ModelData::from(d);
    std::set<std::size_t> seen;
    for (const auto& p : parts) {
      std::size_t load = 0;
      for (auto j : p) {
        CHECK(seen.insert(j).second);
        load += md.ref_edges[j].size();
      }
      CHECK((load <= limit || p.size() == 1));
    }
    CHECK(seen.size() == md.n_refs());
    CHECK(partition_references(d, limit, 4) == parts);
  }

  SUBCASE("pooled summaries") {
    const auto f = split_fit(d, 60, cfg);
    CHECK(f.pooled_heuristic);
    REQUIRE(f.subsets.size() > 1);
    CHECK(f.references.size() == spec.n_refs);
    CHECK(f.edges.size() == d.edges.size());
    double total = 0.0, weighted = 0.0;
    std::size_t refs = 0;
    for (const auto& s : f.subsets) {
      total += static_cast<double>(s.n_edges);
      weighted += static_cast<double>(s.n_edges) * s.beta0.mean;
      refs += s.n_refs;
    }
    CHECK(refs == spec.n_refs);
    CHECK(f.beta0.mean == doctest::Approx(weighted / total).epsilon(1e-12));
    std::set<std::uint64_t> seeds;
    for (const auto& s : f.subsets) seeds.insert(s.seed);
    CHECK(seeds.size() == f.subsets.size());
    CHECK(to_json(split_fit(d, 60, cfg)).dump() == to_json(f).dump());
  }
}

TEST_CASE("intercept-only model fits worse on heterogeneous data") {
  std::vector<CollabEdge> edges;
  for (int j = 0; j < 8; ++j)
    for (int k = 0; k < 6; ++k) {
      const std::int64_t n = 100;
      const std::int64_t y = j < 4 ? 5 + k : 45 + k;
      edges.push_back({"R" + std::to_string(j), "N" + std::to_string(k), n, y});
    }
  const auto d = make_dataset(edges);
  auto cfg = short_config(8);
  const auto full = dic(mh_sample(d, cfg), d);
  cfg.model = ModelKind::intercept_only;
  const auto flat_chain = mh_sample(d, cfg);
  CHECK(flat_chain.u.empty());
  const auto flat = dic(flat_chain, d);
  CHECK(full.dic < flat.dic);
  CHECK(flat.p_d == doctest::Approx(1.0).epsilon(0.3));
}
