#include "exnet/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <fstream>
#include <istream>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "exnet/encode.hpp"
#include "exnet/netstats.hpp"
#include "exnet/rng.hpp"

namespace exnet::pipeline {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw std::invalid_argument("setting '" + key + "' expects a boolean, got '" + v + "'");
}

template <class T>
T parse_num(const std::string& key, const std::string& v) {
  std::istringstream in(v);
  T out{};
  in >> out;
  if (!in || !(in >> std::ws).eof()) throw std::invalid_argument("setting '" + key + "' has bad value '" + v + "'");
  if constexpr (std::is_unsigned_v<T>) {
    if (!v.empty() && v.front() == '-') throw std::invalid_argument("setting '" + key + "' must be non-negative");
  }
  return out;
}

std::string format_double(double v) {
  std::ostringstream out;
  out.precision(17);
  out << v;
  return out.str();
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(v);
  while (std::getline(in, item, ','))
    if (auto t = trim(item); !t.empty()) out.push_back(t);
  return out;
}

double elapsed_ms(std::chrono::steady_clock::time_point since) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - since).count();
}

std::string rel_path(const fs::path& p, const fs::path& base) { return p.lexically_relative(base).generic_string(); }

}  // namespace

const std::vector<std::string>& setting_keys() {
  static const std::vector<std::string> keys = {
      "papers",     "edges",       "institutions",     "out_dir",          "min_ref_papers",
      "min_joint",  "min_refs",    "iterations",       "burn_in",          "thin",
      "adapt",      "max_edges",   "layout_iterations", "scaling",         "gravity",
      "jitter_tolerance", "overlap_margin", "include_non_reference", "subjects", "seed",
      "workers",    "threads"};
  return keys;
}

Settings parse_settings(std::istream& in) {
  Settings out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("config line " + std::to_string(lineno) + ": expected key = value");
    auto key = trim(line.substr(0, eq));
    auto value = trim(line.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
    if (key.empty()) throw std::invalid_argument("config line " + std::to_string(lineno) + ": empty key");
    out[key] = value;
  }
  return out;
}

void apply_settings(PipelineConfig& cfg, const Settings& settings) {
  for (const auto& [key, v] : settings) {
    if (key == "papers") cfg.papers = v;
    else if (key == "edges") cfg.edges = v;
    else if (key == "institutions") cfg.institutions = v;
    else if (key == "out_dir") cfg.out_dir = v;
    else if (key == "min_ref_papers") cfg.thresholds.min_ref_papers = parse_num<std::int64_t>(key, v);
    else if (key == "min_joint") cfg.thresholds.min_joint = parse_num<std::int64_t>(key, v);
    else if (key == "min_refs") cfg.thresholds.min_refs = parse_num<std::size_t>(key, v);
    else if (key == "iterations") cfg.chain.iterations = parse_num<int>(key, v);
    else if (key == "burn_in") cfg.chain.burn_in = parse_num<int>(key, v);
    else if (key == "thin") cfg.chain.thinning = parse_num<int>(key, v);
    else if (key == "adapt") cfg.chain.adapt = parse_bool(key, v);
    else if (key == "max_edges") cfg.max_edges = parse_num<std::size_t>(key, v);
    else if (key == "layout_iterations") cfg.layout.iterations = parse_num<int>(key, v);
    else if (key == "scaling") cfg.layout.scaling = parse_num<double>(key, v);
    else if (key == "gravity") cfg.layout.gravity = parse_num<double>(key, v);
    else if (key == "jitter_tolerance") cfg.layout.jitter_tolerance = parse_num<double>(key, v);
    else if (key == "overlap_margin") cfg.layout.overlap_margin = parse_num<double>(key, v);
    else if (key == "include_non_reference") cfg.layout.include_non_reference = parse_bool(key, v);
    else if (key == "subjects") cfg.subjects = split_list(v);
    else if (key == "seed") cfg.seed = parse_num<std::uint64_t>(key, v);
    else if (key == "workers") cfg.workers = parse_num<unsigned>(key, v);
    else if (key == "threads") cfg.threads = parse_num<unsigned>(key, v);
    else throw std::invalid_argument("unknown setting '" + key + "'");
  }
}

Settings to_settings(const PipelineConfig& cfg) {
  Settings s;
  s["papers"] = cfg.papers.generic_string();
  s["edges"] = cfg.edges.generic_string();
  s["institutions"] = cfg.institutions.generic_string();
  s["out_dir"] = cfg.out_dir.generic_string();
  s["min_ref_papers"] = std::to_string(cfg.thresholds.min_ref_papers);
  s["min_joint"] = std::to_string(cfg.thresholds.min_joint);
  s["min_refs"] = std::to_string(cfg.thresholds.min_refs);
  s["iterations"] = std::to_string(cfg.chain.iterations);
  s["burn_in"] = std::to_string(cfg.chain.burn_in);
  s["thin"] = std::to_string(cfg.chain.thinning);
  s["adapt"] = cfg.chain.adapt ? "true" : "false";
  s["max_edges"] = std::to_string(cfg.max_edges);
  s["layout_iterations"] = std::to_string(cfg.layout.iterations);
  s["scaling"] = format_double(cfg.layout.scaling);
  s["gravity"] = format_double(cfg.layout.gravity);
  s["jitter_tolerance"] = format_double(cfg.layout.jitter_tolerance);
  s["overlap_margin"] = format_double(cfg.layout.overlap_margin);
  s["include_non_reference"] = cfg.layout.include_non_reference ? "true" : "false";
  std::string subjects;
  for (const auto& x : cfg.subjects) subjects += (subjects.empty() ? "" : ",") + x;
  s["subjects"] = subjects;
  s["seed"] = std::to_string(cfg.seed);
  s["workers"] = std::to_string(cfg.workers);
  s["threads"] = std::to_string(cfg.threads);
  return s;
}

PipelineConfig load_config(const fs::path& file, const Settings& overrides, const std::optional<std::string>& env_seed) {
  PipelineConfig cfg;
  if (!file.empty()) {
    std::ifstream in(file);
    if (!in) throw std::invalid_argument("cannot read config " + file.string());
    const auto base = file.parent_path();
    auto settings = parse_settings(in);
    // Relative input/output paths in a config file are relative to the file.
    for (const char* key : {"papers", "edges", "institutions", "out_dir"}) {
      auto it = settings.find(key);
      if (it != settings.end() && !it->second.empty() && fs::path(it->second).is_relative())
        it->second = (base / it->second).lexically_normal().generic_string();
    }
    apply_settings(cfg, settings);
  }
  apply_settings(cfg, overrides);
  if (env_seed && !env_seed->empty()) apply_settings(cfg, {{"seed", *env_seed}});
  return cfg;
}

void PipelineConfig::validate() const {
  if (papers.empty() == edges.empty()) throw std::invalid_argument("exactly one of 'papers' or 'edges' must be set");
  const auto& input = papers.empty() ? edges : papers;
  if (!fs::exists(input)) throw std::invalid_argument("input file not found: " + input.string());
  if (!institutions.empty() && !fs::exists(institutions))
    throw std::invalid_argument("institution catalog not found: " + institutions.string());
  if (out_dir.empty()) throw std::invalid_argument("out_dir must be set");
  if (workers == 0) throw std::invalid_argument("workers must be positive");
  if (threads == 0) throw std::invalid_argument("threads must be positive");
  chain.validate();
  layout.validate();
}

std::uint64_t stage_seed(std::uint64_t seed, const std::string& subject, Stage stage) {
  return derive_seed(seed, stable_hash(subject) ^ static_cast<std::uint64_t>(stage));
}

std::size_t RunResult::bundles() const {
  return static_cast<std::size_t>(
      std::count_if(subjects.begin(), subjects.end(), [](const SubjectOutcome& s) { return s.status == "accepted"; }));
}

SubjectFiles subject_files(const fs::path& out_dir, const std::string& subject) {
  const auto slug = subject_slug(subject);
  const auto dir = out_dir / slug;
  return {dir / "dataset.json",    dir / "fit.json", dir / "stats.json", dir / "layout_network.json",
          dir / "layout_geographic.json", out_dir / (slug + ".bundle.json")};
}

nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  return nlohmann::json::parse(in);
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

std::vector<ThresholdOutcome> ingest(const PipelineConfig& cfg, std::vector<std::string>* warnings) {
  InstitutionCatalog catalog;
  if (!cfg.institutions.empty()) catalog = parse_catalog(read_json(cfg.institutions));
  auto note = [&](const IngestReport& r, const fs::path& p) {
    if (warnings && !r.rejected.empty())
      warnings->push_back(std::to_string(r.rejected.size()) + " malformed rows skipped in " + p.string());
  };
  if (!cfg.papers.empty()) {
    std::ifstream in(cfg.papers, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + cfg.papers.string());
    auto rows = ingest_papers(in);
    note(rows.report, cfg.papers);
    return build_datasets(std::span<const PaperRecord>(rows.rows), catalog, cfg.thresholds);
  }
  std::ifstream in(cfg.edges, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + cfg.edges.string());
  auto rows = ingest_edges(in);
  note(rows.report, cfg.edges);
  return build_datasets(std::span<const EdgeRow>(rows.rows), catalog, cfg.thresholds);
}

SubjectOutcome run_subject(const SubjectAreaDataset& input, const PipelineConfig& cfg) {
  SubjectOutcome out;
  out.subject = input.subject;
  const auto files = subject_files(cfg.out_dir, input.subject);
  auto stage = [&](const char* name, auto&& body) {
    const auto start = std::chrono::steady_clock::now();
    body();
    out.durations_ms[name] = elapsed_ms(start);
  };
  try {
    SubjectAreaDataset data;
    stage("dataset", [&] {
      write_text(files.dataset, to_json(input).dump(2) + "\n");
      data = dataset_from_json(read_json(files.dataset));
    });
    out.files["dataset"] = rel_path(files.dataset, cfg.out_dir);

    bmlr::FitResult fit;
    stage("fit", [&] {
      auto chain = cfg.chain;
      chain.seed = stage_seed(cfg.seed, data.subject, Stage::fit);
      out.seeds["fit"] = chain.seed;
      const auto result = cfg.max_edges > 0 && data.edges.size() > cfg.max_edges
                              ? bmlr::split_fit(data, cfg.max_edges, chain)
                              : bmlr::fit(data, chain);
      write_text(files.fit, to_json(result).dump(2) + "\n");
      fit = bmlr::fit_from_json(read_json(files.fit));
    });
    out.files["fit"] = rel_path(files.fit, cfg.out_dir);
    out.warnings.insert(out.warnings.end(), fit.warnings.begin(), fit.warnings.end());

    net::NetworkStats stats;
    stage("netstats", [&] {
      write_text(files.stats, to_json(net::compute_stats(data, cfg.threads)).dump(2) + "\n");
      stats = net::stats_from_json(read_json(files.stats));
    });
    out.files["stats"] = rel_path(files.stats, cfg.out_dir);

    layout::LayoutResult net_layout, geo_layout;
    stage("layout", [&] {
      auto lc = cfg.layout;
      lc.seed = stage_seed(cfg.seed, data.subject, Stage::layout);
      out.seeds["layout"] = lc.seed;
      const auto radii = encode::radii(stats, encode::SizeMode::overview);
      write_text(files.layout_network, to_json(layout::network_layout(data, radii, lc)).dump(2) + "\n");
      write_text(files.layout_geographic, to_json(layout::geographic_layout(data, lc)).dump(2) + "\n");
      net_layout = layout::layout_from_json(read_json(files.layout_network));
      geo_layout = layout::layout_from_json(read_json(files.layout_geographic));
    });
    out.files["layout_network"] = rel_path(files.layout_network, cfg.out_dir);
    out.files["layout_geographic"] = rel_path(files.layout_geographic, cfg.out_dir);
    out.warnings.insert(out.warnings.end(), net_layout.warnings.begin(), net_layout.warnings.end());

    stage("export", [&] {
      encode::ExportInputs in;
      in.data = &data;
      in.fit = &fit;
      in.stats = &stats;
      in.network = &net_layout;
      in.geographic = &geo_layout;
      write_text(files.bundle, encode::dump_bundle(encode::export_subject(in)));
    });
    out.files["bundle"] = rel_path(files.bundle, cfg.out_dir);
    out.status = "accepted";
  } catch (const std::exception& e) {
    out.status = "failed";
    out.detail = e.what();
    std::error_code ec;
    fs::remove(files.bundle, ec);
  }
  return out;
}

RunResult run_pipeline(const PipelineConfig& cfg) {
  const auto start = std::chrono::steady_clock::now();
  cfg.validate();
  fs::create_directories(cfg.out_dir);

  RunResult result;
  std::vector<std::string> warnings;
  const auto t_ingest = std::chrono::steady_clock::now();
  auto outcomes = ingest(cfg, &warnings);
  result.durations_ms["ingest"] = elapsed_ms(t_ingest);

  auto subject_of = [](const ThresholdOutcome& o) {
    return std::visit([](const auto& v) { return v.subject; }, o);
  };
  auto allowed = [&](const std::string& s) {
    return cfg.subjects.empty() || std::find(cfg.subjects.begin(), cfg.subjects.end(), s) != cfg.subjects.end();
  };

  std::vector<const SubjectAreaDataset*> accepted;
  std::vector<std::size_t> slot;
  for (const auto& o : outcomes) {
    const auto subject = subject_of(o);
    if (!allowed(subject)) continue;
    SubjectOutcome s;
    s.subject = subject;
    if (const auto* r = std::get_if<Rejection>(&o)) {
      s.status = "rejected";
      s.threshold = r->threshold;
      s.detail = r->detail;
      std::error_code ec;
      fs::remove(subject_files(cfg.out_dir, subject).bundle, ec);
    } else {
      accepted.push_back(&std::get<SubjectAreaDataset>(o));
      slot.push_back(result.subjects.size());
    }
    result.subjects.push_back(std::move(s));
  }
  for (const auto& name : cfg.subjects) {
    const bool present = std::any_of(outcomes.begin(), outcomes.end(),
                                     [&](const ThresholdOutcome& o) { return subject_of(o) == name; });
    if (!present) result.subjects.push_back({name, "failed", "", "subject not present in input", {}, {}, {}, {}});
  }

  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t k = next++; k < accepted.size(); k = next++) result.subjects[slot[k]] = run_subject(*accepted[k], cfg);
  };
  const unsigned n_workers = std::max(1u, std::min<unsigned>(cfg.workers, static_cast<unsigned>(accepted.size())));
  std::vector<std::thread> pool;
  for (unsigned w = 1; w < n_workers; ++w) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  result.durations_ms["total"] = elapsed_ms(start);

  // Index for browsing bundles, sorted by subject.
  auto index = ojson::array();
  std::vector<const SubjectOutcome*> done;
  for (const auto& s : result.subjects)
    if (s.status == "accepted") done.push_back(&s);
  std::sort(done.begin(), done.end(), [](const auto* a, const auto* b) { return a->subject < b->subject; });
  for (const auto* s : done) index.push_back({{"subject", s->subject}, {"bundle", s->files.at("bundle")}});
  write_text(cfg.out_dir / "index.json", ojson{{"schema_version", encode::kBundleSchemaVersion}, {"subjects", index}}.dump(2) + "\n");

  ojson m;
  m["tool"] = "excellence-net";
  m["version"] = kVersion;
  m["seed"] = cfg.seed;
  m["settings"] = to_settings(cfg);
  m["thresholds"] = {{"min_ref_papers", cfg.thresholds.min_ref_papers},
                     {"min_joint", cfg.thresholds.min_joint},
                     {"min_refs", cfg.thresholds.min_refs}};
  m["durations_ms"] = result.durations_ms;
  m["warnings"] = warnings;
  auto subjects = ojson::array();
  for (const auto& s : result.subjects) {
    ojson j;
    j["subject"] = s.subject;
    j["status"] = s.status;
    if (s.status == "rejected") j["result"] = "rejected: " + s.threshold;
    if (!s.threshold.empty()) j["threshold"] = s.threshold;
    if (!s.detail.empty()) j["detail"] = s.detail;
    j["seeds"] = s.seeds;
    j["files"] = s.files;
    j["durations_ms"] = s.durations_ms;
    j["warnings"] = s.warnings;
    subjects.push_back(std::move(j));
  }
  m["subjects"] = std::move(subjects);
  result.manifest = m;
  write_text(cfg.out_dir / "manifest.json", m.dump(2) + "\n");
  return result;
}

}  // namespace exnet::pipeline
