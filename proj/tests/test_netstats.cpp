#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "exnet/netstats.hpp"
#include "support.hpp"

using namespace exnet;
using namespace exnet::net;

namespace {

std::vector<InstId> names(std::size_t n) {
  std::vector<InstId> out;
  for (std::size_t k = 0; k < n; ++k) out.push_back("n" + testing_support::padded(k));
  return out;
}

Graph graph_of(std::size_t n, const std::vector<std::pair<std::size_t, std::size_t>>& edges) {
  return make_graph(names(n), edges);
}

// Counts shortest paths through each node by enumerating all pairs with BFS
// distances: sigma_st(v) = sigma_sv * sigma_vt when d(s,v) + d(v,t) = d(s,t).
std::vector<double> brute_betweenness(const Graph& g) {
  const std::size_t n = g.size();
  std::vector<std::vector<long long>> dist(n, std::vector<long long>(n, -1));
  std::vector<std::vector<double>> sigma(n, std::vector<double>(n, 0.0));
  for (std::size_t s = 0; s < n; ++s) {
    std::vector<std::size_t> queue{s};
    dist[s][s] = 0;
    sigma[s][s] = 1.0;
    for (std::size_t h = 0; h < queue.size(); ++h) {
      const auto v = queue[h];
      for (auto w : g.adjacency[v]) {
        if (dist[s][w] < 0) {
          dist[s][w] = dist[s][v] + 1;
          queue.push_back(w);
        }
        if (dist[s][w] == dist[s][v] + 1) sigma[s][w] += sigma[s][v];
      }
    }
  }
  std::vector<double> bc(n, 0.0);
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t t = s + 1; t < n; ++t) {
      if (dist[s][t] < 0) continue;
      for (std::size_t v = 0; v < n; ++v) {
        if (v == s || v == t || dist[s][v] < 0 || dist[v][t] < 0) continue;
        if (dist[s][v] + dist[v][t] == dist[s][t]) bc[v] += sigma[s][v] * sigma[v][t] / sigma[s][t];
      }
    }
  return bc;
}

Graph random_graph(std::size_t n, double p, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution coin(p);
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = a + 1; b < n; ++b)
      if (coin(rng)) edges.emplace_back(a, b);
  return graph_of(n, edges);
}

}  // namespace

TEST_CASE("graph construction collapses loops and duplicates") {
  const auto g = graph_of(3, {{0, 1}, {1, 0}, {1, 1}, {1, 2}});
  CHECK(g.edge_count() == 2);
  CHECK(g.has_edge(1, 0));
  CHECK_FALSE(g.has_edge(0, 2));
  CHECK(g.index_of("n0002") == 2u);
  CHECK_FALSE(g.index_of("zz").has_value());
}

TEST_CASE("betweenness closed forms") {
  SUBCASE("path") {
    const auto g = graph_of(5, {{0, 1}, {1, 2}, {2, 3}, {3, 4}});
    CHECK(betweenness(g) == std::vector<double>{0, 3, 4, 3, 0});
  }
  SUBCASE("complete graph") {
    const auto g = graph_of(4, {{0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 3}, {2, 3}});
    CHECK(betweenness(g) == std::vector<double>(4, 0.0));
  }
  SUBCASE("star") {
    const auto g = graph_of(6, {{0, 1}, {0, 2}, {0, 3}, {0, 4}, {0, 5}});
    const auto bc = betweenness(g);
    CHECK(bc[0] == 10.0);
    for (std::size_t k = 1; k < 6; ++k) CHECK(bc[k] == 0.0);
  }
  SUBCASE("four-cycle splits paths evenly") {
    const auto g = graph_of(4, {{0, 1}, {1, 2}, {2, 3}, {3, 0}});
    CHECK(betweenness(g) == std::vector<double>(4, 0.5));
  }
  SUBCASE("isolated node") {
    const auto g = graph_of(4, {{0, 1}, {1, 2}});
    const auto bc = betweenness(g);
    CHECK(bc[3] == 0.0);
    CHECK(bc[1] == 1.0);
    CHECK(degree(g)[3] == 0);
  }
}

TEST_CASE("betweenness matches pairwise path counting") {
  for (std::uint64_t seed = 1; seed <= 12; ++seed) {
    const auto g = random_graph(20 + seed * 3, 0.08 + 0.01 * static_cast<double>(seed % 5), seed);
    const auto got = betweenness(g);
    const auto want = brute_betweenness(g);
    for (std::size_t v = 0; v < g.size(); ++v)
      CHECK(std::abs(got[v] - want[v]) <= 1e-12 * std::max(1.0, want[v]));
  }
}

TEST_CASE("betweenness is independent of node order and thread count") {
  const auto g = random_graph(120, 0.05, 77);
  const auto base = betweenness(g, 1);
  CHECK(betweenness(g, 4) == base);
  CHECK(betweenness(g, 13) == base);

  std::vector<std::size_t> perm(g.size());
  for (std::size_t k = 0; k < perm.size(); ++k) perm[k] = perm.size() - 1 - k;
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  for (std::size_t a = 0; a < g.size(); ++a)
    for (auto b : g.adjacency[a])
      if (a < b) edges.emplace_back(perm[a], perm[b]);
  const auto h = graph_of(g.size(), edges);
  const auto moved = betweenness(h);
  for (std::size_t v = 0; v < g.size(); ++v) CHECK(std::abs(moved[perm[v]] - base[v]) <= 1e-9);
}

TEST_CASE("dataset statistics") {
  const auto d = testing_support::make_dataset(
      {{"A", "B", 12, 3}, {"B", "A", 20, 5}, {"A", "X", 15, 1}, {"B", "Y", 30, 7}});
  const auto g = build_graph(d);
  CHECK(g.size() == 4);
  CHECK(g.edge_count() == 3);
  CHECK(collab_total(d, "A") == 47);
  CHECK(collab_total(d, "B") == 62);
  CHECK(collab_total(d, "Y") == 30);
  CHECK(collab_total(d, "Q") == 0);

  const auto s = compute_stats(d, 2);
  CHECK(s.n_edges == g.edge_count());
  const auto* a = s.find("A");
  REQUIRE(a);
  CHECK(a->degree == 2);
  CHECK(a->betweenness == 2.0);
  CHECK(s.find("B")->betweenness == 2.0);
  CHECK(s.find("X")->betweenness == 0.0);

  const auto back = stats_from_json(nlohmann::json::parse(to_json(s).dump()));
  CHECK(to_json(back).dump() == to_json(s).dump());
}
