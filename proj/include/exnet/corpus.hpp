#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

namespace exnet {

using InstId = std::string;

struct GeoPoint {
  double lat = 0.0;
  double lon = 0.0;
};

struct Institution {
  InstId id;
  std::string name;
  std::string country;  // ISO-3166 alpha-3
  std::optional<GeoPoint> location;
  bool is_reference = false;
};

struct PaperRecord {
  std::string paper_id;
  std::string subject;
  int year = 0;
  std::int64_t citations = 0;
  double journal_prestige = 0.0;
  std::vector<InstId> institutions;
};

/// Aggregated dyad between a reference institution and one of its network
/// institutions: `n_papers` joint papers, `n_top` of them in the top decile.
struct CollabEdge {
  InstId ref_id;
  InstId net_id;
  std::int64_t n_papers = 0;
  std::int64_t n_top = 0;

  friend bool operator==(const CollabEdge&, const CollabEdge&) = default;
};

/// An edge row as it appears in pre-aggregated input, tagged with its subject.
struct EdgeRow {
  std::string subject;
  CollabEdge edge;
};

struct Thresholds {
  std::int64_t min_ref_papers = 500;
  std::int64_t min_joint = 10;
  std::size_t min_refs = 50;

  friend bool operator==(const Thresholds&, const Thresholds&) = default;
};

struct SubjectAreaDataset {
  std::string subject;
  std::vector<CollabEdge> edges;          // sorted by (ref_id, net_id)
  std::vector<Institution> institutions;  // sorted by id; covers every edge endpoint
  Thresholds thresholds_applied;

  /// Distinct reference ids in sorted order.
  std::vector<InstId> references() const;
  const Institution* find_institution(const InstId& id) const;
};

/// Why a subject area failed to produce a dataset. `threshold` is the name of
/// the failed filter parameter (currently always "min_refs").
struct Rejection {
  std::string subject;
  std::string threshold;
  std::string detail;
};

using ThresholdOutcome = std::variant<SubjectAreaDataset, Rejection>;

// ---------------------------------------------------------------------------
// Ingestion

class IngestError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RejectedRow {
  std::size_t line = 0;
  std::string reason;
};

struct IngestReport {
  std::size_t rows_read = 0;
  std::vector<RejectedRow> rejected;
};

template <class Row>
struct Ingested {
  std::vector<Row> rows;
  IngestReport report;
};

struct IngestOptions {
  // Rejected rows tolerated before ingestion aborts with IngestError.
  std::size_t error_budget = 100;
};

enum class RowFormat { papers, edges };

/// Reads paper rows, either delimited
/// `paper_id,subject,year,citations,journal_prestige,inst;inst;...` (RFC 4180
/// quoting, optional header) or one JSON object per line. Duplicate paper ids
/// are fatal.
Ingested<PaperRecord> ingest_papers(std::istream& in, const IngestOptions& options = {});

/// Reads `subject,ref_id,net_id,n_papers,n_top` rows (or JSON lines).
Ingested<EdgeRow> ingest_edges(std::istream& in, const IngestOptions& options = {});

/// Splits one delimited line into fields, honouring double-quoted fields.
std::vector<std::string> split_delimited(const std::string& line, char delimiter = ',');

// ---------------------------------------------------------------------------
// Institution catalog

struct CatalogEntry {
  Institution institution;
  std::map<std::string, std::int64_t> total_papers_by_subject;
};

using InstitutionCatalog = std::map<InstId, CatalogEntry>;

/// Parses `[{inst_id, name, country, lat, lon, total_papers_by_subject:{...}}]`.
/// lat/lon may be null or absent.
InstitutionCatalog parse_catalog(const nlohmann::json& doc);
nlohmann::ordered_json catalog_to_json(const InstitutionCatalog& catalog);

// ---------------------------------------------------------------------------
// Flagging, aggregation, thresholds

/// Number of papers flagged in a group of `n`: round(0.10 n), half up.
std::size_t top_decile_count(std::size_t n);

/// True if `a` ranks above `b`: more citations, then higher journal prestige,
/// then smaller paper id.
bool ranks_above(const PaperRecord& a, const PaperRecord& b);

/// Flags the top decile of `papers`, which must share subject and year.
/// Result is parallel to the input.
std::vector<bool> assign_top_decile(std::span<const PaperRecord> papers);

/// Flags every paper within its own (subject, year) group.
std::vector<bool> flag_corpus(std::span<const PaperRecord> papers);

/// Counts joint and flagged papers for every (reference, co-listed institution)
/// pair. Papers contribute whole counts to every pair they touch.
std::vector<CollabEdge> aggregate_edges(std::span<const PaperRecord> papers,
                                        const std::vector<bool>& flags,
                                        const std::set<InstId>& references);

/// Per-subject paper counts of every institution appearing in `papers`.
std::map<std::string, std::map<InstId, std::int64_t>> count_institution_papers(
    std::span<const PaperRecord> papers);

std::set<InstId> select_references(const std::map<InstId, std::int64_t>& total_papers,
                                   std::int64_t min_ref_papers);

/// Drops edges of references below `min_ref_papers` and edges below
/// `min_joint`; rejects the subject if fewer than `min_refs` references remain.
ThresholdOutcome apply_thresholds(const std::string& subject,
                                  std::span<const CollabEdge> edges,
                                  const InstitutionCatalog& catalog,
                                  const std::map<InstId, std::int64_t>& total_papers,
                                  const Thresholds& thresholds = {});

double observed_rate(const CollabEdge& edge);

/// Paper-level route: flag, aggregate and threshold every subject in the corpus.
/// Reference totals are counted from the corpus itself.
std::vector<ThresholdOutcome> build_datasets(std::span<const PaperRecord> papers,
                                             const InstitutionCatalog& catalog,
                                             const Thresholds& thresholds = {});

/// Edge-level route: reference totals come from the catalog.
std::vector<ThresholdOutcome> build_datasets(std::span<const EdgeRow> rows,
                                             const InstitutionCatalog& catalog,
                                             const Thresholds& thresholds = {});

// ---------------------------------------------------------------------------
// Dataset files

nlohmann::ordered_json to_json(const SubjectAreaDataset& data);
SubjectAreaDataset dataset_from_json(const nlohmann::json& doc);

std::string subject_slug(const std::string& subject);

}  // namespace exnet
