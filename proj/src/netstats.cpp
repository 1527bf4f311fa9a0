#include "exnet/netstats.hpp"

#include <algorithm>
#include <future>
#include <map>
#include <set>
#include <stdexcept>

namespace exnet::net {

namespace {

constexpr std::size_t kSourceChunk = 64;

// Accumulates single-source dependencies of sources [first, last) into `bc`.
// Extended precision keeps the final rounding to double the only one that
// matters for small graphs.
void accumulate_sources(const Graph& g, std::size_t first, std::size_t last, std::vector<long double>& bc) {
  const std::size_t n = g.size();
  std::vector<long double> sigma(n), delta(n);
  std::vector<long> dist(n);
  std::vector<std::vector<std::size_t>> preds(n);
  std::vector<std::size_t> order;
  std::vector<std::size_t> queue;
  order.reserve(n);
  queue.reserve(n);
  for (std::size_t s = first; s < last; ++s) {
    std::fill(sigma.begin(), sigma.end(), 0.0L);
    std::fill(delta.begin(), delta.end(), 0.0L);
    std::fill(dist.begin(), dist.end(), -1L);
    for (auto& p : preds) p.clear();
    order.clear();
    queue.clear();

    sigma[s] = 1.0L;
    dist[s] = 0;
    queue.push_back(s);
    for (std::size_t head = 0; head < queue.size(); ++head) {
      const std::size_t v = queue[head];
      order.push_back(v);
      for (auto w : g.adjacency[v]) {
        if (dist[w] < 0) {
          dist[w] = dist[v] + 1;
          queue.push_back(w);
        }
        if (dist[w] == dist[v] + 1) {
          sigma[w] += sigma[v];
          preds[w].push_back(v);
        }
      }
    }
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      const std::size_t w = *it;
      for (auto v : preds[w]) delta[v] += sigma[v] / sigma[w] * (1.0L + delta[w]);
      if (w != s) bc[w] += delta[w];
    }
  }
}

}  // namespace

std::size_t Graph::edge_count() const {
  std::size_t twice = 0;
  for (const auto& a : adjacency) twice += a.size();
  return twice / 2;
}

std::optional<std::size_t> Graph::index_of(const InstId& id) const {
  const auto it = std::lower_bound(nodes.begin(), nodes.end(), id);
  if (it != nodes.end() && *it == id) return static_cast<std::size_t>(it - nodes.begin());
  // make_graph does not require sorted ids
  const auto lin = std::find(nodes.begin(), nodes.end(), id);
  if (lin == nodes.end()) return std::nullopt;
  return static_cast<std::size_t>(lin - nodes.begin());
}

bool Graph::has_edge(std::size_t a, std::size_t b) const {
  const auto& adj = adjacency.at(a);
  return std::binary_search(adj.begin(), adj.end(), b);
}

Graph make_graph(std::vector<InstId> nodes, std::span<const std::pair<std::size_t, std::size_t>> edges) {
  Graph g;
  g.nodes = std::move(nodes);
  g.adjacency.resize(g.nodes.size());
  for (const auto& [a, b] : edges) {
    if (a >= g.size() || b >= g.size()) throw std::out_of_range("make_graph: edge endpoint out of range");
    if (a == b) continue;
    g.adjacency[a].push_back(b);
    g.adjacency[b].push_back(a);
  }
  for (auto& adj : g.adjacency) {
    std::sort(adj.begin(), adj.end());
    adj.erase(std::unique(adj.begin(), adj.end()), adj.end());
  }
  return g;
}

Graph build_graph(const SubjectAreaDataset& data) {
  std::set<InstId> ids;
  for (const auto& e : data.edges) {
    ids.insert(e.ref_id);
    ids.insert(e.net_id);
  }
  std::vector<InstId> nodes(ids.begin(), ids.end());
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  pairs.reserve(data.edges.size());
  auto index = [&](const InstId& id) {
    return static_cast<std::size_t>(std::lower_bound(nodes.begin(), nodes.end(), id) - nodes.begin());
  };
  for (const auto& e : data.edges) pairs.emplace_back(index(e.ref_id), index(e.net_id));
  return make_graph(std::move(nodes), pairs);
}

std::vector<double> betweenness(const Graph& g, unsigned threads) {
  const std::size_t n = g.size();
  const std::size_t chunks = (n + kSourceChunk - 1) / kSourceChunk;
  std::vector<std::vector<long double>> partial(chunks, std::vector<long double>(n, 0.0L));
  auto run_chunk = [&](std::size_t c) {
    accumulate_sources(g, c * kSourceChunk, std::min(n, (c + 1) * kSourceChunk), partial[c]);
  };
  if (threads <= 1 || chunks <= 1) {
    for (std::size_t c = 0; c < chunks; ++c) run_chunk(c);
  } else {
    std::vector<std::future<void>> workers;
    for (unsigned t = 0; t < threads; ++t) {
      workers.push_back(std::async(std::launch::async, [&, t] {
        for (std::size_t c = t; c < chunks; c += threads) run_chunk(c);
      }));
    }
    for (auto& w : workers) w.get();
  }
  std::vector<long double> sum(n, 0.0L);
  for (const auto& p : partial)
    for (std::size_t v = 0; v < n; ++v) sum[v] += p[v];
  // Every unordered pair was visited from both ends.
  std::vector<double> bc(n);
  for (std::size_t v = 0; v < n; ++v) bc[v] = static_cast<double>(sum[v] / 2.0L);
  return bc;
}

std::vector<std::size_t> degree(const Graph& g) {
  std::vector<std::size_t> d(g.size());
  for (std::size_t v = 0; v < g.size(); ++v) d[v] = g.adjacency[v].size();
  return d;
}

std::int64_t collab_total(const SubjectAreaDataset& data, const InstId& id) {
  std::int64_t total = 0;
  for (const auto& e : data.edges)
    if (e.ref_id == id || e.net_id == id) total += e.n_papers;
  return total;
}

const NodeStats* NetworkStats::find(const InstId& id) const {
  const auto it = std::lower_bound(nodes.begin(), nodes.end(), id,
                                   [](const NodeStats& s, const InstId& key) { return s.id < key; });
  return it != nodes.end() && it->id == id ? &*it : nullptr;
}

NetworkStats compute_stats(const SubjectAreaDataset& data, unsigned threads) {
  const Graph g = build_graph(data);
  const auto bc = betweenness(g, threads);
  const auto deg = degree(g);
  std::map<InstId, std::int64_t> totals;
  for (const auto& e : data.edges) {
    totals[e.ref_id] += e.n_papers;
    totals[e.net_id] += e.n_papers;
  }
  NetworkStats stats;
  stats.subject = data.subject;
  stats.n_edges = g.edge_count();
  for (std::size_t v = 0; v < g.size(); ++v) stats.nodes.push_back({g.nodes[v], bc[v], deg[v], totals[g.nodes[v]]});
  return stats;
}

nlohmann::ordered_json to_json(const NetworkStats& stats) {
  nlohmann::ordered_json j;
  j["subject"] = stats.subject;
  j["n_nodes"] = stats.nodes.size();
  j["n_edges"] = stats.n_edges;
  auto nodes = nlohmann::ordered_json::array();
  for (const auto& s : stats.nodes)
    nodes.push_back({{"id", s.id}, {"betweenness", s.betweenness}, {"degree", s.degree}, {"collab_total", s.collab_total}});
  j["nodes"] = std::move(nodes);
  return j;
}

NetworkStats stats_from_json(const nlohmann::json& doc) {
  NetworkStats stats;
  stats.subject = doc.at("subject").get<std::string>();
  stats.n_edges = doc.at("n_edges").get<std::size_t>();
  for (const auto& n : doc.at("nodes"))
    stats.nodes.push_back({n.at("id").get<std::string>(), n.at("betweenness").get<double>(),
                           n.at("degree").get<std::size_t>(), n.at("collab_total").get<std::int64_t>()});
  std::sort(stats.nodes.begin(), stats.nodes.end(), [](const NodeStats& a, const NodeStats& b) { return a.id < b.id; });
  return stats;
}

}  // namespace exnet::net
