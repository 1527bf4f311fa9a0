#include "exnet/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <istream>
#include <numeric>
#include <tuple>
#include <unordered_set>

namespace exnet {

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

template <class T>
std::optional<T> parse_number(std::string_view text) {
  const std::string t = trim(text);
  if (t.empty()) return std::nullopt;
  T value{};
  const char* begin = t.data();
  const char* end = t.data() + t.size();
  if (*begin == '+') ++begin;
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc{} || ptr != end) return std::nullopt;
  return value;
}

std::vector<InstId> split_institutions(std::string_view text) {
  std::vector<InstId> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto pos = text.find(';', start);
    const auto piece = trim(text.substr(start, pos == std::string_view::npos ? pos : pos - start));
    if (!piece.empty() && std::find(out.begin(), out.end(), piece) == out.end()) out.push_back(piece);
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

// Row parse outcome: either a row or a rejection reason.
template <class Row>
using RowResult = std::variant<Row, std::string>;

RowResult<PaperRecord> paper_from_fields(const std::vector<std::string>& f) {
  if (f.size() != 6) return "expected 6 fields, got " + std::to_string(f.size());
  PaperRecord p;
  p.paper_id = trim(f[0]);
  p.subject = trim(f[1]);
  if (p.paper_id.empty()) return std::string("empty paper_id");
  if (p.subject.empty()) return std::string("empty subject");
  const auto year = parse_number<int>(f[2]);
  if (!year) return "bad year '" + f[2] + "'";
  p.year = *year;
  const auto cites = parse_number<std::int64_t>(f[3]);
  if (!cites) return "bad citations '" + f[3] + "'";
  if (*cites < 0) return std::string("negative citations");
  p.citations = *cites;
  const auto prestige = parse_number<double>(f[4]);
  if (!prestige || !std::isfinite(*prestige)) return "bad journal_prestige '" + f[4] + "'";
  if (*prestige < 0) return std::string("negative journal_prestige");
  p.journal_prestige = *prestige;
  p.institutions = split_institutions(f[5]);
  if (p.institutions.empty()) return std::string("no institutions");
  return p;
}

RowResult<PaperRecord> paper_from_json(const std::string& line) {
  const auto j = nlohmann::json::parse(line, nullptr, false);
  if (j.is_discarded() || !j.is_object()) return std::string("malformed JSON");
  auto field = [&](const char* key) -> std::string {
    if (!j.contains(key)) return {};
    const auto& v = j.at(key);
    if (v.is_string()) return v.get<std::string>();
    if (v.is_array()) {
      std::string joined;
      for (const auto& e : v) {
        if (!joined.empty()) joined += ';';
        joined += e.is_string() ? e.get<std::string>() : e.dump();
      }
      return joined;
    }
    return v.dump();
  };
  return paper_from_fields({field("paper_id"), field("subject"), field("year"), field("citations"),
                            field("journal_prestige"), field("institutions")});
}

RowResult<EdgeRow> edge_from_fields(const std::vector<std::string>& f) {
  if (f.size() != 5) return "expected 5 fields, got " + std::to_string(f.size());
  EdgeRow r;
  r.subject = trim(f[0]);
  r.edge.ref_id = trim(f[1]);
  r.edge.net_id = trim(f[2]);
  if (r.subject.empty() || r.edge.ref_id.empty() || r.edge.net_id.empty())
    return std::string("empty identifier");
  if (r.edge.ref_id == r.edge.net_id) return std::string("ref_id equals net_id");
  const auto n = parse_number<std::int64_t>(f[3]);
  const auto y = parse_number<std::int64_t>(f[4]);
  if (!n || !y) return std::string("bad counts");
  if (*n <= 0) return std::string("n_papers must be positive");
  if (*y < 0 || *y > *n) return std::string("n_top outside [0, n_papers]");
  r.edge.n_papers = *n;
  r.edge.n_top = *y;
  return r;
}

RowResult<EdgeRow> edge_from_json(const std::string& line) {
  const auto j = nlohmann::json::parse(line, nullptr, false);
  if (j.is_discarded() || !j.is_object()) return std::string("malformed JSON");
  auto field = [&](const char* key) -> std::string {
    if (!j.contains(key)) return {};
    const auto& v = j.at(key);
    return v.is_string() ? v.get<std::string>() : v.dump();
  };
  return edge_from_fields(
      {field("subject"), field("ref_id"), field("net_id"), field("n_papers"), field("n_top")});
}

template <class Row, class FromFields, class FromJson, class OnRow>
Ingested<Row> ingest_rows(std::istream& in, const IngestOptions& options, const char* header_key,
                          FromFields from_fields, FromJson from_json, OnRow on_row) {
  Ingested<Row> out;
  std::string line;
  std::size_t line_no = 0;
  bool seen_content = false;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string body = trim(line);
    if (body.empty() || body.front() == '#') continue;
    RowResult<Row> parsed;
    if (body.front() == '{') {
      parsed = from_json(body);
    } else {
      auto fields = split_delimited(body);
      if (!seen_content && !fields.empty() && trim(fields[0]) == header_key) {
        seen_content = true;
        continue;
      }
      parsed = from_fields(fields);
    }
    seen_content = true;
    ++out.report.rows_read;
    if (auto* reason = std::get_if<std::string>(&parsed)) {
      out.report.rejected.push_back({line_no, *reason});
      if (out.report.rejected.size() > options.error_budget)
        throw IngestError("too many malformed rows (last at line " + std::to_string(line_no) +
                          ": " + *reason + ")");
      continue;
    }
    on_row(std::get<Row>(parsed), line_no);
    out.rows.push_back(std::move(std::get<Row>(parsed)));
  }
  return out;
}

}  // namespace

std::vector<std::string> split_delimited(const std::string& line, char delimiter) {
  std::vector<std::string> fields;
  std::string current;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          current += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        current += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == delimiter) {
      fields.push_back(std::move(current));
      current.clear();
    } else if (c != '\r') {
      current += c;
    }
  }
  fields.push_back(std::move(current));
  return fields;
}

Ingested<PaperRecord> ingest_papers(std::istream& in, const IngestOptions& options) {
  std::unordered_set<std::string> seen;
  return ingest_rows<PaperRecord>(
      in, options, "paper_id", paper_from_fields, paper_from_json,
      [&](const PaperRecord& p, std::size_t line_no) {
        if (!seen.insert(p.paper_id).second)
          throw IngestError("duplicate paper_id '" + p.paper_id + "' at line " +
                            std::to_string(line_no));
      });
}

Ingested<EdgeRow> ingest_edges(std::istream& in, const IngestOptions& options) {
  return ingest_rows<EdgeRow>(in, options, "subject", edge_from_fields, edge_from_json,
                              [](const EdgeRow&, std::size_t) {});
}

// ---------------------------------------------------------------------------

InstitutionCatalog parse_catalog(const nlohmann::json& doc) {
  const nlohmann::json& list = doc.is_object() && doc.contains("institutions") ? doc.at("institutions") : doc;
  if (!list.is_array()) throw std::invalid_argument("institution catalog must be a JSON array");
  InstitutionCatalog catalog;
  for (const auto& item : list) {
    CatalogEntry entry;
    auto& inst = entry.institution;
    inst.id = item.at("inst_id").get<std::string>();
    inst.name = item.value("name", inst.id);
    inst.country = item.value("country", std::string("UNK"));
    const bool has_lat = item.contains("lat") && item.at("lat").is_number();
    const bool has_lon = item.contains("lon") && item.at("lon").is_number();
    if (has_lat && has_lon) {
      GeoPoint g{item.at("lat").get<double>(), item.at("lon").get<double>()};
      if (g.lat < -90.0 || g.lat > 90.0 || g.lon <= -180.0 || g.lon > 180.0)
        throw std::invalid_argument("institution '" + inst.id + "' has out-of-range coordinates");
      inst.location = g;
    }
    if (item.contains("total_papers_by_subject")) {
      for (const auto& [subject, count] : item.at("total_papers_by_subject").items())
        entry.total_papers_by_subject[subject] = count.get<std::int64_t>();
    }
    if (!catalog.emplace(inst.id, std::move(entry)).second)
      throw std::invalid_argument("duplicate inst_id '" + inst.id + "' in catalog");
  }
  return catalog;
}

nlohmann::ordered_json catalog_to_json(const InstitutionCatalog& catalog) {
  auto list = nlohmann::ordered_json::array();
  for (const auto& [id, entry] : catalog) {
    const auto& inst = entry.institution;
    nlohmann::ordered_json j;
    j["inst_id"] = id;
    j["name"] = inst.name;
    j["country"] = inst.country;
    if (inst.location) {
      j["lat"] = inst.location->lat;
      j["lon"] = inst.location->lon;
    } else {
      j["lat"] = nullptr;
      j["lon"] = nullptr;
    }
    j["total_papers_by_subject"] = entry.total_papers_by_subject;
    list.push_back(std::move(j));
  }
  return list;
}

// ---------------------------------------------------------------------------

std::size_t top_decile_count(std::size_t n) { return (n + 5) / 10; }

bool ranks_above(const PaperRecord& a, const PaperRecord& b) {
  if (a.citations != b.citations) return a.citations > b.citations;
  if (a.journal_prestige != b.journal_prestige) return a.journal_prestige > b.journal_prestige;
  return a.paper_id < b.paper_id;
}

std::vector<bool> assign_top_decile(std::span<const PaperRecord> papers) {
  std::vector<bool> flags(papers.size(), false);
  const std::size_t k = top_decile_count(papers.size());
  if (k == 0) return flags;
  std::vector<std::size_t> order(papers.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::nth_element(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k - 1), order.end(),
                   [&](std::size_t a, std::size_t b) { return ranks_above(papers[a], papers[b]); });
  // nth_element leaves the k best (in any order) in front.
  for (std::size_t i = 0; i < k; ++i) flags[order[i]] = true;
  return flags;
}

std::vector<bool> flag_corpus(std::span<const PaperRecord> papers) {
  std::map<std::pair<std::string, int>, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < papers.size(); ++i) groups[{papers[i].subject, papers[i].year}].push_back(i);
  std::vector<bool> flags(papers.size(), false);
  for (const auto& [key, members] : groups) {
    std::vector<PaperRecord> group;
    group.reserve(members.size());
    for (auto i : members) group.push_back(papers[i]);
    const auto local = assign_top_decile(group);
    for (std::size_t g = 0; g < members.size(); ++g) flags[members[g]] = local[g];
  }
  return flags;
}

std::vector<CollabEdge> aggregate_edges(std::span<const PaperRecord> papers,
                                        const std::vector<bool>& flags,
                                        const std::set<InstId>& references) {
  if (flags.size() != papers.size()) throw std::invalid_argument("flag vector does not match corpus");
  std::map<std::pair<InstId, InstId>, std::pair<std::int64_t, std::int64_t>> counts;
  for (std::size_t p = 0; p < papers.size(); ++p) {
    const auto& insts = papers[p].institutions;
    for (const auto& ref : insts) {
      if (!references.contains(ref)) continue;
      for (const auto& net : insts) {
        if (net == ref) continue;
        auto& c = counts[{ref, net}];
        ++c.first;
        if (flags[p]) ++c.second;
      }
    }
  }
  std::vector<CollabEdge> edges;
  edges.reserve(counts.size());
  for (const auto& [key, c] : counts) edges.push_back({key.first, key.second, c.first, c.second});
  return edges;
}

std::map<std::string, std::map<InstId, std::int64_t>> count_institution_papers(
    std::span<const PaperRecord> papers) {
  std::map<std::string, std::map<InstId, std::int64_t>> counts;
  for (const auto& p : papers)
    for (const auto& inst : p.institutions) ++counts[p.subject][inst];
  return counts;
}

std::set<InstId> select_references(const std::map<InstId, std::int64_t>& total_papers,
                                   std::int64_t min_ref_papers) {
  std::set<InstId> refs;
  for (const auto& [id, total] : total_papers)
    if (total >= min_ref_papers) refs.insert(id);
  return refs;
}

double observed_rate(const CollabEdge& edge) {
  if (edge.n_papers <= 0) throw std::domain_error("observed_rate: n_papers must be positive");
  return static_cast<double>(edge.n_top) / static_cast<double>(edge.n_papers);
}

ThresholdOutcome apply_thresholds(const std::string& subject, std::span<const CollabEdge> edges,
                                  const InstitutionCatalog& catalog,
                                  const std::map<InstId, std::int64_t>& total_papers,
                                  const Thresholds& thresholds) {
  auto total_of = [&](const InstId& id) -> std::int64_t {
    const auto it = total_papers.find(id);
    return it == total_papers.end() ? 0 : it->second;
  };

  SubjectAreaDataset data;
  data.subject = subject;
  data.thresholds_applied = thresholds;
  for (const auto& e : edges) {
    if (total_of(e.ref_id) < thresholds.min_ref_papers) continue;
    if (e.n_papers < thresholds.min_joint) continue;
    data.edges.push_back(e);
  }
  std::sort(data.edges.begin(), data.edges.end(), [](const CollabEdge& a, const CollabEdge& b) {
    return std::tie(a.ref_id, a.net_id) < std::tie(b.ref_id, b.net_id);
  });

  const auto refs = data.references();
  if (refs.size() < thresholds.min_refs) {
    return Rejection{subject, "min_refs",
                     std::to_string(refs.size()) + " reference institutions < " +
                         std::to_string(thresholds.min_refs)};
  }

  std::set<InstId> ids(refs.begin(), refs.end());
  for (const auto& e : data.edges) ids.insert(e.net_id);
  const std::set<InstId> ref_set(refs.begin(), refs.end());
  for (const auto& id : ids) {
    Institution inst;
    if (const auto it = catalog.find(id); it != catalog.end()) {
      inst = it->second.institution;
    } else {
      inst.id = id;
      inst.name = id;
      inst.country = "UNK";
    }
    inst.is_reference = ref_set.contains(id);
    data.institutions.push_back(std::move(inst));
  }
  return data;
}

std::vector<InstId> SubjectAreaDataset::references() const {
  std::vector<InstId> refs;
  for (const auto& e : edges) refs.push_back(e.ref_id);
  std::sort(refs.begin(), refs.end());
  refs.erase(std::unique(refs.begin(), refs.end()), refs.end());
  return refs;
}

const Institution* SubjectAreaDataset::find_institution(const InstId& id) const {
  const auto it = std::lower_bound(institutions.begin(), institutions.end(), id,
                                   [](const Institution& inst, const InstId& key) { return inst.id < key; });
  return it != institutions.end() && it->id == id ? &*it : nullptr;
}

std::vector<ThresholdOutcome> build_datasets(std::span<const PaperRecord> papers,
                                             const InstitutionCatalog& catalog,
                                             const Thresholds& thresholds) {
  std::map<std::string, std::vector<PaperRecord>> by_subject;
  for (const auto& p : papers) by_subject[p.subject].push_back(p);
  const auto totals = count_institution_papers(papers);

  std::vector<ThresholdOutcome> out;
  for (const auto& [subject, subset] : by_subject) {
    const auto& subject_totals = totals.at(subject);
    const auto flags = flag_corpus(subset);
    const auto refs = select_references(subject_totals, thresholds.min_ref_papers);
    const auto edges = aggregate_edges(subset, flags, refs);
    out.push_back(apply_thresholds(subject, edges, catalog, subject_totals, thresholds));
  }
  return out;
}

std::vector<ThresholdOutcome> build_datasets(std::span<const EdgeRow> rows,
                                             const InstitutionCatalog& catalog,
                                             const Thresholds& thresholds) {
  std::map<std::string, std::vector<CollabEdge>> by_subject;
  for (const auto& r : rows) by_subject[r.subject].push_back(r.edge);

  std::vector<ThresholdOutcome> out;
  for (const auto& [subject, edges] : by_subject) {
    std::map<InstId, std::int64_t> totals;
    for (const auto& [id, entry] : catalog) {
      if (const auto it = entry.total_papers_by_subject.find(subject);
          it != entry.total_papers_by_subject.end())
        totals[id] = it->second;
    }
    out.push_back(apply_thresholds(subject, edges, catalog, totals, thresholds));
  }
  return out;
}

// ---------------------------------------------------------------------------

nlohmann::ordered_json to_json(const SubjectAreaDataset& data) {
  nlohmann::ordered_json j;
  j["subject"] = data.subject;
  j["thresholds_applied"] = {{"min_ref_papers", data.thresholds_applied.min_ref_papers},
                             {"min_joint", data.thresholds_applied.min_joint},
                             {"min_refs", data.thresholds_applied.min_refs}};
  auto insts = nlohmann::ordered_json::array();
  for (const auto& inst : data.institutions) {
    nlohmann::ordered_json i;
    i["id"] = inst.id;
    i["name"] = inst.name;
    i["country"] = inst.country;
    if (inst.location) {
      i["lat"] = inst.location->lat;
      i["lon"] = inst.location->lon;
    } else {
      i["lat"] = nullptr;
      i["lon"] = nullptr;
    }
    i["is_reference"] = inst.is_reference;
    insts.push_back(std::move(i));
  }
  j["institutions"] = std::move(insts);
  auto edges = nlohmann::ordered_json::array();
  for (const auto& e : data.edges)
    edges.push_back({{"ref", e.ref_id}, {"net", e.net_id}, {"n_papers", e.n_papers}, {"n_top", e.n_top}});
  j["edges"] = std::move(edges);
  return j;
}

SubjectAreaDataset dataset_from_json(const nlohmann::json& doc) {
  SubjectAreaDataset data;
  data.subject = doc.at("subject").get<std::string>();
  if (doc.contains("thresholds_applied")) {
    const auto& t = doc.at("thresholds_applied");
    data.thresholds_applied.min_ref_papers = t.value("min_ref_papers", std::int64_t{500});
    data.thresholds_applied.min_joint = t.value("min_joint", std::int64_t{10});
    data.thresholds_applied.min_refs = t.value("min_refs", std::size_t{50});
  }
  for (const auto& i : doc.at("institutions")) {
    Institution inst;
    inst.id = i.at("id").get<std::string>();
    inst.name = i.value("name", inst.id);
    inst.country = i.value("country", std::string("UNK"));
    if (i.contains("lat") && i.at("lat").is_number() && i.contains("lon") && i.at("lon").is_number())
      inst.location = GeoPoint{i.at("lat").get<double>(), i.at("lon").get<double>()};
    inst.is_reference = i.value("is_reference", false);
    data.institutions.push_back(std::move(inst));
  }
  std::sort(data.institutions.begin(), data.institutions.end(),
            [](const Institution& a, const Institution& b) { return a.id < b.id; });
  for (const auto& e : doc.at("edges")) {
    CollabEdge edge{e.at("ref").get<std::string>(), e.at("net").get<std::string>(),
                    e.at("n_papers").get<std::int64_t>(), e.at("n_top").get<std::int64_t>()};
    if (edge.n_papers <= 0 || edge.n_top < 0 || edge.n_top > edge.n_papers || edge.ref_id == edge.net_id)
      throw std::invalid_argument("dataset edge " + edge.ref_id + "->" + edge.net_id + " violates invariants");
    data.edges.push_back(std::move(edge));
  }
  std::sort(data.edges.begin(), data.edges.end(), [](const CollabEdge& a, const CollabEdge& b) {
    return std::tie(a.ref_id, a.net_id) < std::tie(b.ref_id, b.net_id);
  });
  for (const auto& e : data.edges) {
    if (!data.find_institution(e.ref_id) || !data.find_institution(e.net_id))
      throw std::invalid_argument("dataset edge references unknown institution");
  }
  return data;
}

std::string subject_slug(const std::string& subject) {
  std::string slug;
  bool dash = false;
  for (unsigned char c : subject) {
    if (std::isalnum(c)) {
      slug += static_cast<char>(std::tolower(c));
      dash = false;
    } else if (!slug.empty() && !dash) {
      slug += '-';
      dash = true;
    }
  }
  while (!slug.empty() && slug.back() == '-') slug.pop_back();
  return slug.empty() ? "subject" : slug;
}

}  // namespace exnet
