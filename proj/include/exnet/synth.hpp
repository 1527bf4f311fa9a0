#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "exnet/corpus.hpp"

namespace exnet::synth {

/// Forward simulation settings for one synthetic subject area. Defaults sit
/// in a mid-sized, pharmacology-like regime.
struct SyntheticSpec {
  std::string subject = "Synthetic";
  std::size_t n_refs = 102;
  double mean_nets_per_ref = 18.2;
  std::int64_t n_min = 10;
  std::int64_t n_max = 200;
  double beta0 = -1.27;
  double sigma2_u = 0.14;
  double sigma2_tau = 0.32;
  std::uint64_t seed = 1;

  void validate() const;
};

struct SyntheticData {
  SyntheticSpec spec;
  SubjectAreaDataset dataset;
  InstitutionCatalog catalog;
  std::vector<double> tau;       // per reference, dataset reference order
  std::vector<double> u;         // per edge, dataset edge order
  std::map<InstId, std::int64_t> solo_papers;  // reference-only papers padding each total
};

/// Draws tau_j ~ N(beta0, sigma2_tau), u_e ~ N(tau_j, sigma2_u) and
/// y_e ~ Binomial(n_e, logistic(u_e)); n_e is log-uniform on [n_min, n_max].
/// Network partners come from a shared pool and never accumulate enough
/// papers to qualify as references themselves.
SyntheticData generate_synthetic(const SyntheticSpec& spec);

/// Paper-level corpus whose flagging, aggregation and thresholds reproduce
/// `data.dataset` exactly: one two-institution paper per joint paper, padded
/// with single-institution papers so that the top decile is exactly the
/// flagged joint papers (plus, if needed, filler from one background
/// institution).
std::vector<PaperRecord> synthesize_papers(const SyntheticData& data);

std::vector<EdgeRow> edge_rows(const SyntheticData& data);

nlohmann::ordered_json truth_json(const SyntheticData& data);

void write_edges_csv(std::ostream& out, const std::vector<EdgeRow>& rows);
void write_papers_csv(std::ostream& out, const std::vector<PaperRecord>& papers);

/// Writes edges.csv, institutions.json and truth.json (and papers.csv when
/// `with_papers`) into `dir`.
void write_synthetic(const SyntheticData& data, const std::filesystem::path& dir, bool with_papers);

/// Reads flat `key = value` settings; unknown keys throw.
SyntheticSpec spec_from_settings(const std::map<std::string, std::string>& settings);

}  // namespace exnet::synth
