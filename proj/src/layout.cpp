#include "exnet/layout.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <numbers>
#include <numeric>
#include <stdexcept>
#include <tuple>
#include <unordered_map>

#include "exnet/rng.hpp"

namespace exnet::layout {

namespace {

constexpr double kPi = std::numbers::pi;

struct Centroid {
  const char* iso3;
  double lat;
  double lon;
};

// Rough population-weighted centroids; only used when an institution lacks
// coordinates.
constexpr std::array kCentroids = {
    Centroid{"ARG", -34.6, -58.4}, Centroid{"AUS", -33.9, 151.2}, Centroid{"AUT", 48.2, 16.4},
    Centroid{"BEL", 50.8, 4.4},    Centroid{"BRA", -23.5, -46.6}, Centroid{"CAN", 45.4, -75.7},
    Centroid{"CHE", 47.0, 8.0},    Centroid{"CHL", -33.4, -70.6}, Centroid{"CHN", 34.0, 113.0},
    Centroid{"COL", 4.7, -74.1},   Centroid{"CZE", 50.1, 14.4},   Centroid{"DEU", 51.0, 10.0},
    Centroid{"DNK", 55.7, 12.6},   Centroid{"EGY", 30.0, 31.2},   Centroid{"ESP", 40.4, -3.7},
    Centroid{"FIN", 60.2, 24.9},   Centroid{"FRA", 46.6, 2.4},    Centroid{"GBR", 52.5, -1.5},
    Centroid{"GRC", 38.0, 23.7},   Centroid{"HKG", 22.3, 114.2},  Centroid{"HUN", 47.5, 19.0},
    Centroid{"IND", 22.0, 79.0},   Centroid{"IRL", 53.3, -6.3},   Centroid{"IRN", 35.7, 51.4},
    Centroid{"ISR", 32.1, 34.8},   Centroid{"ITA", 42.8, 12.5},   Centroid{"JPN", 35.7, 139.7},
    Centroid{"KOR", 37.5, 127.0},  Centroid{"MEX", 19.4, -99.1},  Centroid{"MYS", 3.1, 101.7},
    Centroid{"NGA", 9.1, 7.5},     Centroid{"NLD", 52.2, 5.3},    Centroid{"NOR", 59.9, 10.8},
    Centroid{"NZL", -36.9, 174.8}, Centroid{"PAK", 31.5, 74.3},   Centroid{"POL", 52.1, 19.4},
    Centroid{"PRT", 39.4, -8.2},   Centroid{"ROU", 44.4, 26.1},   Centroid{"RUS", 55.8, 37.6},
    Centroid{"SAU", 24.7, 46.7},   Centroid{"SGP", 1.35, 103.8},  Centroid{"SRB", 44.8, 20.5},
    Centroid{"SVN", 46.1, 14.5},   Centroid{"SWE", 59.3, 18.1},   Centroid{"THA", 13.8, 100.5},
    Centroid{"TUN", 36.8, 10.2},   Centroid{"TUR", 39.9, 32.9},   Centroid{"TWN", 25.0, 121.5},
    Centroid{"USA", 39.8, -98.6},  Centroid{"ZAF", -26.2, 28.0},
};

// Deterministic offset in a disc of radius `scale` for (seed, id).
Point jitter(std::uint64_t seed, std::string_view id, double scale) {
  auto rng = make_rng(seed, stable_hash(id));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double angle = 2.0 * kPi * unit(rng);
  const double r = scale * std::sqrt(unit(rng));
  return {r * std::cos(angle), r * std::sin(angle)};
}

// Separates exactly coincident points; the first of each coincident group
// (in node order) stays put.
void perturb_coincident(std::vector<Point>& pos, std::span<const InstId> ids, std::uint64_t seed) {
  std::vector<std::size_t> order(pos.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return std::tie(pos[a].x, pos[a].y) < std::tie(pos[b].x, pos[b].y);
  });
  for (std::size_t k = 1; k < order.size(); ++k) {
    const auto prev = order[k - 1];
    const auto cur = order[k];
    if (pos[cur] == pos[prev]) {
      const Point j = jitter(seed ^ 0xc01dULL, ids[cur], 1e-2);
      pos[cur].x += j.x;
      pos[cur].y += j.y;
    }
  }
}

}  // namespace

void LayoutConfig::validate() const {
  if (iterations <= 0) throw std::invalid_argument("layout iterations must be positive");
  if (!(scaling > 0.0)) throw std::invalid_argument("layout scaling must be positive");
  if (gravity < 0.0) throw std::invalid_argument("layout gravity must be non-negative");
  if (!(jitter_tolerance > 0.0)) throw std::invalid_argument("jitter tolerance must be positive");
  if (overlap_margin < 0.0) throw std::invalid_argument("overlap margin must be non-negative");
}

Point vdg_project(double lat_deg, double lon_deg, double radius) {
  if (!(lat_deg >= -90.0 && lat_deg <= 90.0)) throw std::domain_error("vdg_project: latitude outside [-90, 90]");
  if (!(lon_deg > -180.0 && lon_deg <= 180.0)) throw std::domain_error("vdg_project: longitude outside (-180, 180]");
  const double phi = lat_deg * kPi / 180.0;
  const double lam = lon_deg * kPi / 180.0;
  if (lat_deg == 0.0) return {radius * lam, 0.0};
  const double theta = std::asin(std::min(1.0, std::abs(2.0 * phi / kPi)));
  if (lon_deg == 0.0 || std::abs(lat_deg) == 90.0)
    return {0.0, std::copysign(kPi * radius * std::tan(theta / 2.0), phi)};

  const double a = 0.5 * std::abs(kPi / lam - lam / kPi);
  const double g = std::cos(theta) / (std::sin(theta) + std::cos(theta) - 1.0);
  const double p = g * (2.0 / std::sin(theta) - 1.0);
  const double q = a * a + g;
  const double p2 = p * p;
  const double a2 = a * a;
  const double x_root = std::max(0.0, a2 * (g - p2) * (g - p2) - (p2 + a2) * (g * g - p2));
  const double x = kPi * radius * (a * (g - p2) + std::sqrt(x_root)) / (p2 + a2);
  const double y_root = std::max(0.0, (a2 + 1.0) * (p2 + a2) - q * q);
  const double y = kPi * radius * std::abs(p * q - a * std::sqrt(y_root)) / (p2 + a2);
  return {std::copysign(x, lam), std::copysign(y, phi)};
}

std::optional<GeoPoint> country_centroid(std::string_view iso3) {
  for (const auto& c : kCentroids)
    if (iso3 == c.iso3) return GeoPoint{c.lat, c.lon};
  return std::nullopt;
}

std::vector<Point> geographic_positions(const net::Graph& g, const SubjectAreaDataset& data, std::uint64_t seed,
                                        double map_radius, std::vector<std::string>* warnings) {
  const double r = map_radius / kPi;
  std::vector<Point> out(g.size());
  for (std::size_t v = 0; v < g.size(); ++v) {
    const Institution* inst = data.find_institution(g.nodes[v]);
    if (inst && inst->location) {
      out[v] = vdg_project(inst->location->lat, inst->location->lon, r);
      continue;
    }
    Point base{};
    if (inst) {
      if (const auto c = country_centroid(inst->country)) {
        base = vdg_project(c->lat, c->lon, r);
      } else if (warnings) {
        warnings->push_back("no coordinates or known country for '" + g.nodes[v] + "'; placed near the origin");
      }
    }
    const Point j = jitter(seed, g.nodes[v], 0.02 * map_radius);
    out[v] = {base.x + j.x, base.y + j.y};
  }
  return out;
}

std::vector<Point> fa2_layout(const net::Graph& g, std::vector<Point> pos, const LayoutConfig& cfg) {
  cfg.validate();
  const std::size_t n = g.size();
  if (pos.size() != n) throw std::invalid_argument("fa2_layout: one initial position per node required");
  perturb_coincident(pos, g.nodes, cfg.seed);

  std::vector<double> mass(n);
  for (std::size_t v = 0; v < n; ++v) mass[v] = static_cast<double>(g.adjacency[v].size()) + 1.0;
  std::vector<Point> force(n), old_force(n);
  double speed = 1.0;

  for (int it = 0; it < cfg.iterations; ++it) {
    std::swap(force, old_force);
    std::fill(force.begin(), force.end(), Point{});

    for (std::size_t a = 0; a < n; ++a) {
      for (std::size_t b = a + 1; b < n; ++b) {
        const double dx = pos[a].x - pos[b].x;
        const double dy = pos[a].y - pos[b].y;
        const double d2 = dx * dx + dy * dy;
        if (d2 <= 0.0) continue;
        const double f = cfg.scaling * mass[a] * mass[b] / d2;
        force[a].x += dx * f;
        force[a].y += dy * f;
        force[b].x -= dx * f;
        force[b].y -= dy * f;
      }
    }
    if (cfg.gravity > 0.0) {
      for (std::size_t v = 0; v < n; ++v) {
        const double d = std::hypot(pos[v].x, pos[v].y);
        if (d <= 0.0) continue;
        const double f = cfg.gravity * mass[v] / d;
        force[v].x -= pos[v].x * f;
        force[v].y -= pos[v].y * f;
      }
    }
    for (std::size_t a = 0; a < n; ++a) {
      for (auto b : g.adjacency[a]) {
        if (b <= a) continue;
        const double dx = pos[a].x - pos[b].x;
        const double dy = pos[a].y - pos[b].y;
        force[a].x -= dx;
        force[a].y -= dy;
        force[b].x += dx;
        force[b].y += dy;
      }
    }

    double swinging = 0.0, traction = 0.0;
    for (std::size_t v = 0; v < n; ++v) {
      swinging += mass[v] * std::hypot(old_force[v].x - force[v].x, old_force[v].y - force[v].y);
      traction += mass[v] * 0.5 * std::hypot(old_force[v].x + force[v].x, old_force[v].y + force[v].y);
    }
    if (swinging > 0.0) {
      const double target = cfg.jitter_tolerance * cfg.jitter_tolerance * traction / swinging;
      speed += std::min(target - speed, 0.5 * speed);
    }
    for (std::size_t v = 0; v < n; ++v) {
      const double swing = std::hypot(old_force[v].x - force[v].x, old_force[v].y - force[v].y);
      const double factor = speed / (1.0 + speed * std::sqrt(swing));
      pos[v].x += force[v].x * factor;
      pos[v].y += force[v].y * factor;
    }
  }
  return pos;
}

std::size_t count_overlaps(std::span<const Point> positions, std::span<const double> radii, double margin) {
  std::size_t count = 0;
  for (std::size_t a = 0; a < positions.size(); ++a)
    for (std::size_t b = a + 1; b < positions.size(); ++b) {
      const double need = radii[a] + radii[b] + margin;
      if (std::hypot(positions[a].x - positions[b].x, positions[a].y - positions[b].y) < need) ++count;
    }
  return count;
}

OverlapResult remove_overlaps(std::vector<Point> pos, std::span<const double> radii, std::span<const InstId> ids,
                              double margin, std::uint64_t seed, std::size_t max_passes) {
  const std::size_t n = pos.size();
  if (radii.size() != n || ids.size() != n) throw std::invalid_argument("remove_overlaps: size mismatch");
  for (double r : radii)
    if (!(r > 0.0)) throw std::invalid_argument("remove_overlaps: radii must be positive");
  if (margin < 0.0) throw std::invalid_argument("remove_overlaps: margin must be non-negative");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return ids[a] < ids[b]; });
  std::vector<std::size_t> rank(n);
  for (std::size_t k = 0; k < n; ++k) rank[order[k]] = k;

  const double max_r = n ? *std::max_element(radii.begin(), radii.end()) : 0.0;
  const double cell = 2.0 * max_r + margin;

  OverlapResult result;
  result.resolved = false;
  for (std::size_t pass = 0; pass < max_passes; ++pass) {
    result.passes = pass + 1;
    // Uniform grid over the current positions; any overlapping pair lies in
    // neighbouring cells.
    std::map<std::pair<long, long>, std::vector<std::size_t>> grid;
    auto cell_of = [&](const Point& p) {
      return std::pair<long, long>{static_cast<long>(std::floor(p.x / cell)), static_cast<long>(std::floor(p.y / cell))};
    };
    for (auto v : order) grid[cell_of(pos[v])].push_back(v);

    bool moved = false;
    std::vector<std::size_t> near;
    for (auto a : order) {
      const auto [cx, cy] = cell_of(pos[a]);
      near.clear();
      for (long dx = -1; dx <= 1; ++dx)
        for (long dy = -1; dy <= 1; ++dy)
          if (const auto it = grid.find({cx + dx, cy + dy}); it != grid.end())
            for (auto b : it->second)
              if (rank[b] > rank[a]) near.push_back(b);
      std::sort(near.begin(), near.end(), [&](std::size_t x, std::size_t y) { return rank[x] < rank[y]; });
      for (auto b : near) {
        const double need = radii[a] + radii[b] + margin;
        double ux = pos[b].x - pos[a].x;
        double uy = pos[b].y - pos[a].y;
        const double d = std::hypot(ux, uy);
        if (d >= need) continue;
        if (d > 1e-12 * std::max(1.0, need)) {
          ux /= d;
          uy /= d;
        } else {
          auto rng = make_rng(seed, stable_hash(ids[a]) ^ (stable_hash(ids[b]) * 31));
          const double angle = std::uniform_real_distribution<double>(0.0, 2.0 * kPi)(rng);
          ux = std::cos(angle);
          uy = std::sin(angle);
        }
        const double push = 0.5 * (need * (1.0 + 1e-9) + 1e-9 - d);
        pos[a].x -= ux * push;
        pos[a].y -= uy * push;
        pos[b].x += ux * push;
        pos[b].y += uy * push;
        moved = true;
      }
    }
    if (!moved) {
      result.resolved = true;
      break;
    }
  }
  result.positions = std::move(pos);
  return result;
}

namespace {

std::vector<Position> label(const net::Graph& g, const std::vector<Point>& pts) {
  std::vector<Position> out;
  out.reserve(pts.size());
  for (std::size_t v = 0; v < pts.size(); ++v) out.push_back({g.nodes[v], pts[v].x, pts[v].y});
  return out;
}

}  // namespace

LayoutResult network_layout(const SubjectAreaDataset& data, std::span<const double> radii, const LayoutConfig& cfg) {
  const auto g = net::build_graph(data);
  if (radii.size() != g.size()) throw std::invalid_argument("network_layout: one radius per node required");
  LayoutResult result;
  result.mode = Mode::network;
  auto init = geographic_positions(g, data, cfg.seed, kMapRadius, &result.warnings);

  std::vector<Point> pts;
  if (cfg.include_non_reference) {
    pts = fa2_layout(g, std::move(init), cfg);
  } else {
    // Simulate the reference-only subgraph, then drop every other node at the
    // mean position of its reference neighbours.
    std::vector<std::size_t> refs;
    for (std::size_t v = 0; v < g.size(); ++v) {
      const Institution* inst = data.find_institution(g.nodes[v]);
      if (inst && inst->is_reference) refs.push_back(v);
    }
    std::vector<std::size_t> local(g.size(), g.size());
    for (std::size_t k = 0; k < refs.size(); ++k) local[refs[k]] = k;
    std::vector<InstId> ids;
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    std::vector<Point> sub_init;
    for (auto v : refs) {
      ids.push_back(g.nodes[v]);
      sub_init.push_back(init[v]);
      for (auto w : g.adjacency[v])
        if (local[w] < refs.size() && w > v) pairs.emplace_back(local[v], local[w]);
    }
    const auto sub = net::make_graph(ids, pairs);
    const auto placed = fa2_layout(sub, std::move(sub_init), cfg);
    pts.assign(g.size(), Point{});
    for (std::size_t k = 0; k < refs.size(); ++k) pts[refs[k]] = placed[k];
    for (std::size_t v = 0; v < g.size(); ++v) {
      if (local[v] < refs.size()) continue;
      Point c{};
      std::size_t cnt = 0;
      for (auto w : g.adjacency[v])
        if (local[w] < refs.size()) {
          c.x += pts[w].x;
          c.y += pts[w].y;
          ++cnt;
        }
      if (cnt) {
        c.x /= static_cast<double>(cnt);
        c.y /= static_cast<double>(cnt);
      }
      pts[v] = c;
    }
  }

  auto separated = remove_overlaps(std::move(pts), radii, g.nodes, cfg.overlap_margin, cfg.seed);
  result.overlaps_resolved = separated.resolved;
  if (!separated.resolved) result.warnings.push_back("overlap removal hit its pass limit; some overlaps remain");
  result.positions = label(g, separated.positions);
  return result;
}

LayoutResult geographic_layout(const SubjectAreaDataset& data, const LayoutConfig& cfg) {
  const auto g = net::build_graph(data);
  LayoutResult result;
  result.mode = Mode::geographic;
  result.positions = label(g, geographic_positions(g, data, cfg.seed, kMapRadius, &result.warnings));
  return result;
}

std::string mode_name(Mode mode) { return mode == Mode::network ? "network" : "geographic"; }

Mode parse_mode(std::string_view name) {
  if (name == "network") return Mode::network;
  if (name == "geographic") return Mode::geographic;
  throw std::invalid_argument("unknown layout mode '" + std::string(name) + "'");
}

nlohmann::ordered_json to_json(const LayoutResult& result) {
  nlohmann::ordered_json j;
  j["mode"] = mode_name(result.mode);
  j["overlaps_resolved"] = result.overlaps_resolved;
  auto list = nlohmann::ordered_json::array();
  for (const auto& p : result.positions) list.push_back({{"id", p.id}, {"x", p.x}, {"y", p.y}});
  j["positions"] = std::move(list);
  j["warnings"] = result.warnings;
  return j;
}

LayoutResult layout_from_json(const nlohmann::json& doc) {
  LayoutResult r;
  r.mode = parse_mode(doc.at("mode").get<std::string>());
  r.overlaps_resolved = doc.value("overlaps_resolved", true);
  for (const auto& p : doc.at("positions"))
    r.positions.push_back({p.at("id").get<std::string>(), p.at("x").get<double>(), p.at("y").get<double>()});
  r.warnings = doc.value("warnings", std::vector<std::string>{});
  return r;
}

}  // namespace exnet::layout
