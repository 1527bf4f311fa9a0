#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "exnet/bmlr.hpp"
#include "exnet/corpus.hpp"
#include "exnet/layout.hpp"

namespace exnet::pipeline {

inline constexpr const char* kVersion = "0.1.0";

using Settings = std::map<std::string, std::string>;

struct PipelineConfig {
  std::filesystem::path papers;        // paper-level corpus, or
  std::filesystem::path edges;         // pre-aggregated edge rows
  std::filesystem::path institutions;  // catalog JSON
  std::filesystem::path out_dir = "out";
  Thresholds thresholds;
  bmlr::ChainConfig chain;
  std::size_t max_edges = 0;
  layout::LayoutConfig layout;
  std::vector<std::string> subjects;  // empty: every subject
  std::uint64_t seed = 1;
  unsigned workers = 1;
  unsigned threads = 1;  // betweenness threads per subject

  /// Throws std::invalid_argument on inconsistent settings or missing inputs.
  void validate() const;
};

/// Reads `key = value` lines; `#` starts a comment, blank lines are skipped.
Settings parse_settings(std::istream& in);

/// Every key accepted by apply_settings.
const std::vector<std::string>& setting_keys();

/// Applies settings on top of `cfg`; unknown keys and malformed values throw.
void apply_settings(PipelineConfig& cfg, const Settings& settings);

/// Settings that reproduce `cfg`.
Settings to_settings(const PipelineConfig& cfg);

/// Config file, then command-line overrides, then EXNET_SEED (when set).
PipelineConfig load_config(const std::filesystem::path& file, const Settings& overrides,
                           const std::optional<std::string>& env_seed);

enum class Stage : std::uint64_t { fit = 1, layout = 2 };

/// Seed used by one stage of one subject.
std::uint64_t stage_seed(std::uint64_t seed, const std::string& subject, Stage stage);

struct SubjectOutcome {
  std::string subject;
  std::string status;     // accepted | rejected | failed
  std::string threshold;  // failed threshold for rejected subjects
  std::string detail;
  std::map<std::string, std::string> files;
  std::map<std::string, std::uint64_t> seeds;
  std::map<std::string, double> durations_ms;
  std::vector<std::string> warnings;
};

struct RunResult {
  std::vector<SubjectOutcome> subjects;
  std::map<std::string, double> durations_ms;
  nlohmann::ordered_json manifest;

  std::size_t bundles() const;
  int exit_code() const { return bundles() == 0 ? 1 : 0; }
};

struct SubjectFiles {
  std::filesystem::path dataset, fit, stats, layout_network, layout_geographic, bundle;
};

/// Where the stage outputs of `subject` are written under `out_dir`.
SubjectFiles subject_files(const std::filesystem::path& out_dir, const std::string& subject);

/// Runs every stage for one accepted subject area, persisting each stage's
/// output and reading it back before the next stage.
SubjectOutcome run_subject(const SubjectAreaDataset& data, const PipelineConfig& cfg);

/// Ingest, threshold, then run each accepted subject (up to cfg.workers at
/// a time). Writes bundles, `index.json` and `manifest.json` into out_dir.
RunResult run_pipeline(const PipelineConfig& cfg);

// Stage helpers shared with the command-line tool.
std::vector<ThresholdOutcome> ingest(const PipelineConfig& cfg, std::vector<std::string>* warnings = nullptr);
nlohmann::json read_json(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace exnet::pipeline
