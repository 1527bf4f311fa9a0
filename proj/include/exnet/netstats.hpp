#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "exnet/corpus.hpp"

namespace exnet::net {

/// Undirected 0/1 graph. Nodes are sorted by id; adjacency lists are sorted
/// and carry neither self-loops nor duplicates.
struct Graph {
  std::vector<InstId> nodes;
  std::vector<std::vector<std::size_t>> adjacency;

  std::size_t size() const { return nodes.size(); }
  std::size_t edge_count() const;
  std::optional<std::size_t> index_of(const InstId& id) const;
  bool has_edge(std::size_t a, std::size_t b) const;
};

/// Builds a graph over `nodes` (order kept) from index pairs; self-loops and
/// repeated pairs collapse.
Graph make_graph(std::vector<InstId> nodes, std::span<const std::pair<std::size_t, std::size_t>> edges);

/// One undirected edge per distinct collaborating pair of the dataset.
Graph build_graph(const SubjectAreaDataset& data);

/// Unnormalised undirected betweenness (each unordered pair counted once),
/// by Brandes accumulation. Sources are processed in fixed-size chunks whose
/// partial sums are merged in chunk order, so the result does not depend on
/// `threads`.
std::vector<double> betweenness(const Graph& g, unsigned threads = 1);

std::vector<std::size_t> degree(const Graph& g);

/// Sum of n_papers over the dataset edges incident to `id` in either role.
std::int64_t collab_total(const SubjectAreaDataset& data, const InstId& id);

struct NodeStats {
  InstId id;
  double betweenness = 0.0;
  std::size_t degree = 0;
  std::int64_t collab_total = 0;
};

struct NetworkStats {
  std::string subject;
  std::size_t n_edges = 0;
  std::vector<NodeStats> nodes;  // graph node order

  const NodeStats* find(const InstId& id) const;
};

NetworkStats compute_stats(const SubjectAreaDataset& data, unsigned threads = 1);

nlohmann::ordered_json to_json(const NetworkStats& stats);
NetworkStats stats_from_json(const nlohmann::json& doc);

}  // namespace exnet::net
