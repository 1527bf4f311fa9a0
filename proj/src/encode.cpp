#include "exnet/encode.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <map>
#include <set>
#include <tuple>

#include "exnet/rng.hpp"

namespace exnet::encode {

namespace {

using ojson = nlohmann::ordered_json;

// D65 reference white.
constexpr double kXn = 0.95047;
constexpr double kYn = 1.0;
constexpr double kZn = 1.08883;

constexpr double kAchromatic = 1e-2;

double to_linear(double c) { return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4); }
double from_linear(double c) { return c <= 0.0031308 ? 12.92 * c : 1.055 * std::pow(c, 1.0 / 2.4) - 0.055; }

double lab_f(double t) {
  constexpr double d = 6.0 / 29.0;
  return t > d * d * d ? std::cbrt(t) : t / (3.0 * d * d) + 4.0 / 29.0;
}
double lab_f_inv(double t) {
  constexpr double d = 6.0 / 29.0;
  return t > d ? t * t * t : 3.0 * d * d * (t - 4.0 / 29.0);
}

std::uint8_t quantise(double linear) {
  const double v = from_linear(std::clamp(linear, 0.0, 1.0));
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

const std::array<Rgb, 20> kCountryPalette = {
    Rgb{0x1f, 0x77, 0xb4}, Rgb{0xae, 0xc7, 0xe8}, Rgb{0xff, 0x7f, 0x0e}, Rgb{0xff, 0xbb, 0x78},
    Rgb{0x2c, 0xa0, 0x2c}, Rgb{0x98, 0xdf, 0x8a}, Rgb{0xd6, 0x27, 0x28}, Rgb{0xff, 0x98, 0x96},
    Rgb{0x94, 0x67, 0xbd}, Rgb{0xc5, 0xb0, 0xd5}, Rgb{0x8c, 0x56, 0x4b}, Rgb{0xc4, 0x9c, 0x94},
    Rgb{0xe3, 0x77, 0xc2}, Rgb{0xf7, 0xb6, 0xd2}, Rgb{0x7f, 0x7f, 0x7f}, Rgb{0xc7, 0xc7, 0xc7},
    Rgb{0xbc, 0xbd, 0x22}, Rgb{0xdb, 0xdb, 0x8d}, Rgb{0x17, 0xbe, 0xcf}, Rgb{0x9e, 0xda, 0xe5},
};

}  // namespace

Rgb parse_hex(std::string_view hex) {
  if (!hex.empty() && hex.front() == '#') hex.remove_prefix(1);
  if (hex.size() != 6) throw std::invalid_argument("colour must be #rrggbb");
  auto byte = [&](std::size_t at) {
    unsigned v = 0;
    for (std::size_t k = at; k < at + 2; ++k) {
      const char c = hex[k];
      v <<= 4;
      if (c >= '0' && c <= '9') v |= static_cast<unsigned>(c - '0');
      else if (c >= 'a' && c <= 'f') v |= static_cast<unsigned>(c - 'a' + 10);
      else if (c >= 'A' && c <= 'F') v |= static_cast<unsigned>(c - 'A' + 10);
      else throw std::invalid_argument("colour must be #rrggbb");
    }
    return static_cast<std::uint8_t>(v);
  };
  return {byte(0), byte(2), byte(4)};
}

std::string to_hex(Rgb c) {
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", c.r, c.g, c.b);
  return buf;
}

Lab srgb_to_lab(Rgb c) {
  const double r = to_linear(c.r / 255.0);
  const double g = to_linear(c.g / 255.0);
  const double b = to_linear(c.b / 255.0);
  const double x = 0.4124564 * r + 0.3575761 * g + 0.1804375 * b;
  const double y = 0.2126729 * r + 0.7151522 * g + 0.0721750 * b;
  const double z = 0.0193339 * r + 0.1191920 * g + 0.9503041 * b;
  const double fx = lab_f(x / kXn), fy = lab_f(y / kYn), fz = lab_f(z / kZn);
  return {116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)};
}

Lch lab_to_lch(Lab c) {
  double h = std::atan2(c.b, c.a) * 180.0 / 3.14159265358979323846;
  if (h < 0.0) h += 360.0;
  return {c.l, std::hypot(c.a, c.b), h};
}

Lab lch_to_lab(Lch c) {
  const double h = c.h * 3.14159265358979323846 / 180.0;
  return {c.l, c.c * std::cos(h), c.c * std::sin(h)};
}

std::array<double, 3> lab_to_linear_rgb(Lab c) {
  const double fy = (c.l + 16.0) / 116.0;
  const double x = kXn * lab_f_inv(fy + c.a / 500.0);
  const double y = kYn * lab_f_inv(fy);
  const double z = kZn * lab_f_inv(fy - c.b / 200.0);
  return {3.2404542 * x - 1.5371385 * y - 0.4985314 * z, -0.9692660 * x + 1.8760108 * y + 0.0415560 * z,
          0.0556434 * x - 0.2040259 * y + 1.0572252 * z};
}

bool in_srgb_gamut(Lab c) {
  constexpr double tol = 1e-9;
  for (double v : lab_to_linear_rgb(c))
    if (v < -tol || v > 1.0 + tol) return false;
  return true;
}

Rgb to_srgb(Lch c) {
  if (!in_srgb_gamut(lch_to_lab(c))) {
    double lo = 0.0, hi = c.c;
    for (int k = 0; k < 50; ++k) {
      const double mid = 0.5 * (lo + hi);
      if (in_srgb_gamut(lch_to_lab({c.l, mid, c.h}))) lo = mid;
      else hi = mid;
    }
    c.c = lo;
  }
  const auto lin = lab_to_linear_rgb(lch_to_lab(c));
  return {quantise(lin[0]), quantise(lin[1]), quantise(lin[2])};
}

Lch interpolate(const Lch& from, const Lch& to, double t) {
  double h0 = from.h, h1 = to.h;
  if (from.c < kAchromatic) h0 = h1;
  if (to.c < kAchromatic) h1 = h0;
  double dh = h1 - h0;
  if (dh > 180.0) dh -= 360.0;
  if (dh < -180.0) dh += 360.0;
  double h = h0 + t * dh;
  if (h < 0.0) h += 360.0;
  if (h >= 360.0) h -= 360.0;
  return {from.l + t * (to.l - from.l), from.c + t * (to.c - from.c), h};
}

ColorScale ColorScale::from_rates(std::span<const double> rates, double average) {
  ColorScale s;
  bool any = false;
  for (double r : rates) {
    if (!std::isfinite(r)) continue;
    if (!any) s.min_rate = s.max_rate = r;
    s.min_rate = std::min(s.min_rate, r);
    s.max_rate = std::max(s.max_rate, r);
    any = true;
  }
  if (!any) s.min_rate = s.max_rate = std::isfinite(average) ? average : 0.0;
  s.avg_rate = std::isfinite(average) ? std::clamp(average, s.min_rate, s.max_rate) : 0.5 * (s.min_rate + s.max_rate);
  return s;
}

void ColorScale::validate() const {
  if (!(min_rate <= avg_rate && avg_rate <= max_rate))
    throw std::invalid_argument("colour scale needs min_rate <= avg_rate <= max_rate");
}

Rgb color_for(double value, const ColorScale& s) {
  s.validate();
  if (std::isnan(value)) return s.mid;
  const double v = std::clamp(value, s.min_rate, s.max_rate);
  if (v < s.avg_rate) {
    const double t = (v - s.min_rate) / (s.avg_rate - s.min_rate);
    if (t <= 0.0) return s.low;
    return to_srgb(interpolate(lab_to_lch(srgb_to_lab(s.low)), lab_to_lch(srgb_to_lab(s.mid)), t));
  }
  if (v > s.avg_rate) {
    const double t = (v - s.avg_rate) / (s.max_rate - s.avg_rate);
    if (t >= 1.0) return s.high;
    return to_srgb(interpolate(lab_to_lch(srgb_to_lab(s.mid)), lab_to_lch(srgb_to_lab(s.high)), t));
  }
  return s.mid;
}

Rgb country_color(std::string_view country) { return kCountryPalette[stable_hash(country) % kCountryPalette.size()]; }

double radius_for(double value, double max_value) {
  if (!(max_value > 0.0) || !(value > 0.0)) return kRadiusMin;
  const double share = std::min(value, max_value) / max_value;
  return kRadiusMin + (kRadiusMax - kRadiusMin) * std::sqrt(share);
}

std::vector<double> radii(const net::NetworkStats& stats, SizeMode mode) {
  auto value = [&](const net::NodeStats& n) {
    return mode == SizeMode::overview ? n.betweenness : static_cast<double>(n.collab_total);
  };
  double max_value = 0.0;
  for (const auto& n : stats.nodes) max_value = std::max(max_value, value(n));
  std::vector<double> out;
  out.reserve(stats.nodes.size());
  for (const auto& n : stats.nodes) out.push_back(radius_for(value(n), max_value));
  return out;
}

double round_sig(double value, int digits) {
  if (!std::isfinite(value) || value == 0.0) return value;
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, value);
  return std::strtod(buf, nullptr);
}

ExportError::ExportError(const std::string& what, std::vector<std::string> list)
    : std::runtime_error(what), offenders(std::move(list)) {}

namespace {

ojson num(double v) {
  if (!std::isfinite(v)) return nullptr;
  return round_sig(v);
}

ojson interval(const bmlr::Interval& i) { return ojson::array({num(i.lower), num(i.upper)}); }

ojson rate_json(const bmlr::PosteriorSummary& s) {
  return {{"mean", num(s.mean)}, {"goldstein", interval(s.goldstein)}, {"hpd", interval(s.hpd)}};
}

ojson scale_json(const ColorScale& s) {
  return {{"min", num(s.min_rate)},
          {"avg", num(s.avg_rate)},
          {"max", num(s.max_rate)},
          {"anchors", {to_hex(s.low), to_hex(s.mid), to_hex(s.high)}}};
}

// Compares two id sets and records what each side lacks.
void compare_ids(const std::set<std::string>& expected, const std::vector<std::string>& actual,
                 const std::string& label, std::vector<std::string>& offenders) {
  std::set<std::string> seen;
  for (const auto& id : actual) {
    if (!seen.insert(id).second) offenders.push_back(label + ": duplicate " + id);
    if (!expected.count(id)) offenders.push_back(label + ": unknown " + id);
  }
  for (const auto& id : expected)
    if (!seen.count(id)) offenders.push_back(label + ": missing " + id);
}

std::map<std::string, layout::Point> position_map(const layout::LayoutResult& r) {
  std::map<std::string, layout::Point> m;
  for (const auto& p : r.positions) m[p.id] = {p.x, p.y};
  return m;
}

}  // namespace

ojson export_subject(const ExportInputs& in) {
  if (!in.data || !in.fit || !in.stats || !in.network || !in.geographic)
    throw std::invalid_argument("export_subject: all inputs are required");
  const auto& data = *in.data;
  const auto& fit = *in.fit;
  const auto& stats = *in.stats;

  std::vector<std::string> offenders;
  if (fit.subject != data.subject) offenders.push_back("fit: subject " + fit.subject);
  if (stats.subject != data.subject) offenders.push_back("stats: subject " + stats.subject);
  if (in.network->mode != layout::Mode::network) offenders.push_back("network layout: wrong mode");
  if (in.geographic->mode != layout::Mode::geographic) offenders.push_back("geographic layout: wrong mode");

  std::set<std::string> all_ids, ref_ids;
  for (const auto& inst : data.institutions) {
    all_ids.insert(inst.id);
    if (inst.is_reference) ref_ids.insert(inst.id);
  }
  auto ids_of = [](const auto& list, auto get) {
    std::vector<std::string> v;
    for (const auto& x : list) v.push_back(get(x));
    return v;
  };
  compare_ids(all_ids, ids_of(stats.nodes, [](const net::NodeStats& n) { return n.id; }), "stats", offenders);
  compare_ids(all_ids, ids_of(in.network->positions, [](const layout::Position& p) { return p.id; }),
              "network layout", offenders);
  compare_ids(all_ids, ids_of(in.geographic->positions, [](const layout::Position& p) { return p.id; }),
              "geographic layout", offenders);
  compare_ids(ref_ids, ids_of(fit.references, [](const bmlr::ReferenceRate& r) { return r.id; }), "fit references",
              offenders);

  std::map<std::pair<std::string, std::string>, const bmlr::EdgeRate*> fit_edges;
  for (const auto& e : fit.edges) {
    if (!fit_edges.emplace(std::pair{e.ref_id, e.net_id}, &e).second)
      offenders.push_back("fit edges: duplicate " + e.ref_id + "-" + e.net_id);
  }
  for (const auto& e : data.edges) {
    const auto it = fit_edges.find({e.ref_id, e.net_id});
    if (it == fit_edges.end()) {
      offenders.push_back("fit edges: missing " + e.ref_id + "-" + e.net_id);
    } else if (it->second->n_papers != e.n_papers || it->second->n_top != e.n_top) {
      offenders.push_back("fit edges: counts differ for " + e.ref_id + "-" + e.net_id);
    }
  }
  if (fit.edges.size() > data.edges.size()) offenders.push_back("fit edges: extra edges not in dataset");

  if (!offenders.empty()) {
    std::string what = "inputs disagree for subject '" + data.subject + "':";
    for (const auto& o : offenders) what += "\n  " + o;
    throw ExportError(what, std::move(offenders));
  }

  std::map<std::string, const bmlr::ReferenceRate*> ref_rate;
  std::vector<double> ref_means;
  for (const auto& r : fit.references) {
    ref_rate[r.id] = &r;
    ref_means.push_back(r.rate.mean);
  }
  std::vector<double> edge_means;
  for (const auto& e : data.edges) edge_means.push_back(fit_edges.at({e.ref_id, e.net_id})->rate.mean);

  ColorScale inst_scale = ColorScale::from_rates(ref_means, fit.overall_rate);
  ColorScale edge_scale = ColorScale::from_rates(edge_means, fit.overall_rate);
  for (ColorScale* s : {&inst_scale, &edge_scale}) {
    s->low = in.palette.low;
    s->mid = in.palette.mid;
    s->high = in.palette.high;
  }

  const auto overview = radii(stats, SizeMode::overview);
  const auto selected = radii(stats, SizeMode::selected);
  std::map<std::string, std::size_t> stat_index;
  for (std::size_t k = 0; k < stats.nodes.size(); ++k) stat_index[stats.nodes[k].id] = k;
  const auto pos_net = position_map(*in.network);
  const auto pos_geo = position_map(*in.geographic);

  ojson bundle;
  bundle["schema_version"] = kBundleSchemaVersion;
  bundle["subject"] = data.subject;
  bundle["overall_rate"] = num(fit.overall_rate);
  bundle["counts"] = {{"n_references", ref_ids.size()},
                      {"n_institutions", data.institutions.size()},
                      {"n_edges", data.edges.size()}};
  bundle["thresholds"] = {{"min_ref_papers", data.thresholds_applied.min_ref_papers},
                          {"min_joint", data.thresholds_applied.min_joint},
                          {"min_refs", data.thresholds_applied.min_refs}};
  bundle["color_scale"] = {{"institution", scale_json(inst_scale)}, {"edge", scale_json(edge_scale)}};
  bundle["radius_range"] = {kRadiusMin, kRadiusMax};

  auto institutions = ojson::array();
  for (const auto& inst : data.institutions) {
    const auto& ns = stats.nodes[stat_index.at(inst.id)];
    const auto k = stat_index.at(inst.id);
    ojson j;
    j["id"] = inst.id;
    j["name"] = inst.name;
    j["country"] = inst.country;
    j["lat"] = inst.location ? num(inst.location->lat) : ojson(nullptr);
    j["lon"] = inst.location ? num(inst.location->lon) : ojson(nullptr);
    j["is_reference"] = inst.is_reference;
    if (inst.is_reference) {
      j["rate"] = rate_json(ref_rate.at(inst.id)->rate);
    } else {
      j["rate"] = nullptr;
    }
    j["betweenness"] = num(ns.betweenness);
    j["degree"] = ns.degree;
    j["collab_total"] = ns.collab_total;
    const auto& pn = pos_net.at(inst.id);
    const auto& pg = pos_geo.at(inst.id);
    j["pos_net"] = {num(pn.x), num(pn.y)};
    j["pos_geo"] = {num(pg.x), num(pg.y)};
    j["radius_overview"] = num(overview[k]);
    j["radius_selected"] = num(selected[k]);
    j["color_country"] = to_hex(country_color(inst.country));
    j["color_rate"] = inst.is_reference ? ojson(to_hex(color_for(ref_rate.at(inst.id)->rate.mean, inst_scale)))
                                        : ojson(nullptr);
    institutions.push_back(std::move(j));
  }
  bundle["institutions"] = std::move(institutions);

  std::map<std::string, std::int64_t> max_joint;
  for (const auto& e : data.edges) max_joint[e.ref_id] = std::max(max_joint[e.ref_id], e.n_papers);

  auto edges = ojson::array();
  std::map<std::string, std::vector<std::size_t>> by_ref;
  for (std::size_t k = 0; k < data.edges.size(); ++k) {
    const auto& e = data.edges[k];
    const auto& rate = fit_edges.at({e.ref_id, e.net_id})->rate;
    edges.push_back({{"ref", e.ref_id},
                     {"net", e.net_id},
                     {"n_papers", e.n_papers},
                     {"n_top", e.n_top},
                     {"rate", rate_json(rate)},
                     {"color", to_hex(color_for(rate.mean, edge_scale))},
                     {"radius", num(radius_for(static_cast<double>(e.n_papers),
                                              static_cast<double>(max_joint[e.ref_id])))}});
    by_ref[e.ref_id].push_back(k);
  }
  bundle["edges"] = std::move(edges);

  // Default table order per reference: joint rate, highest first.
  ojson tables = ojson::object();
  for (auto& [ref, list] : by_ref) {
    std::stable_sort(list.begin(), list.end(), [&](std::size_t a, std::size_t b) {
      const double ra = round_sig(edge_means[a]);
      const double rb = round_sig(edge_means[b]);
      return std::tie(rb, data.edges[a].net_id) < std::tie(ra, data.edges[b].net_id);
    });
    tables[ref] = list;
  }
  bundle["tables"] = std::move(tables);
  return bundle;
}

std::string dump_bundle(const ojson& bundle) { return bundle.dump(2) + "\n"; }

}  // namespace exnet::encode
