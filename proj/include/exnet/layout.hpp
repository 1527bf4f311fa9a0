#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "exnet/corpus.hpp"
#include "exnet/netstats.hpp"

namespace exnet::layout {

struct Point {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Point&, const Point&) = default;
};

struct Position {
  InstId id;
  double x = 0.0;
  double y = 0.0;
};

struct LayoutConfig {
  int iterations = 1000;
  double scaling = 2.0;  // repulsion multiplier
  double gravity = 1.0;
  double jitter_tolerance = 1.0;
  double overlap_margin = 2.0;
  std::uint64_t seed = 1;
  bool include_non_reference = true;  // false: place network-only nodes after the simulation

  void validate() const;
};

/// Radius of the world circle in layout units for geographic placement.
inline constexpr double kMapRadius = 500.0;

/// van der Grinten projection (Snyder's closed form); the world fits in the
/// circle of radius pi * radius. Throws std::domain_error outside
/// lat in [-90, 90], lon in (-180, 180].
Point vdg_project(double lat_deg, double lon_deg, double radius = 1.0);

/// Approximate geographic centroid of an ISO-3166 alpha-3 country.
std::optional<GeoPoint> country_centroid(std::string_view iso3);

/// Projected start positions for the graph's nodes, map circle of radius
/// `map_radius`. Institutions without coordinates start at their country
/// centroid (or the origin) plus seeded jitter.
std::vector<Point> geographic_positions(const net::Graph& g, const SubjectAreaDataset& data, std::uint64_t seed,
                                        double map_radius = kMapRadius,
                                        std::vector<std::string>* warnings = nullptr);

/// ForceAtlas2 (linear attraction, degree-weighted repulsion, weak gravity,
/// adaptive speed) for a fixed number of iterations. Exactly coincident
/// starting points are first separated by seeded jitter.
std::vector<Point> fa2_layout(const net::Graph& g, std::vector<Point> init, const LayoutConfig& cfg);

struct OverlapResult {
  std::vector<Point> positions;
  bool resolved = true;
  std::size_t passes = 0;
};

/// Pairwise separation along centre lines until every pair is at least
/// r_a + r_b + margin apart. Nodes are visited in `ids` order; coincident
/// pairs separate along a direction seeded by their ids.
OverlapResult remove_overlaps(std::vector<Point> positions, std::span<const double> radii,
                              std::span<const InstId> ids, double margin, std::uint64_t seed,
                              std::size_t max_passes = 5000);

/// Number of pairs closer than r_a + r_b + margin (exhaustive).
std::size_t count_overlaps(std::span<const Point> positions, std::span<const double> radii, double margin);

enum class Mode { network, geographic };

struct LayoutResult {
  Mode mode = Mode::network;
  std::vector<Position> positions;  // graph node order
  bool overlaps_resolved = true;
  std::vector<std::string> warnings;
};

/// Geographic start, ForceAtlas2, then overlap removal with `radii` (graph
/// node order, layout units).
LayoutResult network_layout(const SubjectAreaDataset& data, std::span<const double> radii, const LayoutConfig& cfg);

/// Projected coordinates only.
LayoutResult geographic_layout(const SubjectAreaDataset& data, const LayoutConfig& cfg);

std::string mode_name(Mode mode);
Mode parse_mode(std::string_view name);

nlohmann::ordered_json to_json(const LayoutResult& result);
LayoutResult layout_from_json(const nlohmann::json& doc);

}  // namespace exnet::layout
