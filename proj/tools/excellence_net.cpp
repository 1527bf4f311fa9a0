#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "exnet/bmlr.hpp"
#include "exnet/corpus.hpp"
#include "exnet/encode.hpp"
#include "exnet/layout.hpp"
#include "exnet/netstats.hpp"
#include "exnet/pipeline.hpp"
#include "exnet/synth.hpp"

namespace fs = std::filesystem;
using namespace exnet;
using pipeline::read_json;
using pipeline::write_text;

namespace {

std::string dump(const nlohmann::ordered_json& j) { return j.dump(2) + "\n"; }

// Output path for one subject when a single run yields several datasets.
fs::path per_subject_path(const fs::path& out, const std::string& subject, bool several) {
  if (!several) return out;
  auto name = out.stem().string() + "." + subject_slug(subject) + out.extension().string();
  return out.parent_path() / name;
}

int cmd_ingest(const pipeline::PipelineConfig& cfg, const fs::path& out, const std::vector<std::string>& only) {
  std::vector<std::string> warnings;
  const auto outcomes = pipeline::ingest(cfg, &warnings);
  for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
  std::vector<const SubjectAreaDataset*> keep;
  for (const auto& o : outcomes) {
    if (const auto* r = std::get_if<Rejection>(&o)) {
      std::cerr << r->subject << ": rejected: " << r->threshold << " (" << r->detail << ")\n";
      continue;
    }
    const auto& d = std::get<SubjectAreaDataset>(o);
    if (only.empty() || std::find(only.begin(), only.end(), d.subject) != only.end()) keep.push_back(&d);
  }
  for (const auto* d : keep) {
    const auto path = per_subject_path(out, d->subject, keep.size() > 1);
    write_text(path, dump(to_json(*d)));
    std::cout << d->subject << ": " << d->references().size() << " references, " << d->edges.size() << " edges -> "
              << path.string() << "\n";
  }
  return keep.empty() ? 1 : 0;
}

int cmd_fit(const fs::path& dataset, const fs::path& out, bmlr::ChainConfig chain, std::size_t max_edges) {
  const auto data = dataset_from_json(read_json(dataset));
  const auto fit = max_edges > 0 && data.edges.size() > max_edges ? bmlr::split_fit(data, max_edges, chain)
                                                                   : bmlr::fit(data, chain);
  for (const auto& w : fit.warnings) std::cerr << "warning: " << w << "\n";
  write_text(out, dump(to_json(fit)));
  std::cout << data.subject << ": beta0 " << fit.beta0.mean << ", sigma2_u " << fit.sigma2_u.mean << ", sigma2_tau "
            << fit.sigma2_tau.mean << ", ICC " << fit.icc_headline << ", DIC " << fit.dic.dic << ", overall rate "
            << fit.overall_rate << "\n";
  return 0;
}

int cmd_diagnose(const fs::path& fit_path, const std::string& param, std::size_t subset, const fs::path& out) {
  const auto fit = bmlr::fit_from_json(read_json(fit_path));
  if (subset >= fit.subsets.size()) throw std::invalid_argument("subset index out of range");
  const auto& s = fit.subsets[subset];
  const auto trace = s.traces.find(param);
  if (trace == s.traces.end()) throw std::invalid_argument("no trace stored for '" + param + "'");
  const auto d = bmlr::diagnostics(trace->second);

  std::ostringstream csv;
  csv.precision(10);
  csv << "kind,index,x,value\n";
  for (std::size_t k = 0; k < trace->second.size(); ++k) csv << "trace," << k << "," << k << "," << trace->second[k] << "\n";
  for (std::size_t k = 0; k < d.autocorrelation.size(); ++k) csv << "acf," << k << "," << k << "," << d.autocorrelation[k] << "\n";
  for (std::size_t k = 0; k < d.trace_means.size(); ++k) csv << "segment_mean," << k << "," << k << "," << d.trace_means[k] << "\n";
  for (std::size_t k = 0; k < d.density.x.size(); ++k)
    csv << "density," << k << "," << d.density.x[k] << "," << d.density.density[k] << "\n";
  csv << "ess,0,0," << d.effective_sample_size << "\n";
  if (out.empty()) std::cout << csv.str();
  else write_text(out, csv.str());
  return 0;
}

int cmd_netstats(const fs::path& dataset, const fs::path& out, unsigned threads) {
  const auto stats = net::compute_stats(dataset_from_json(read_json(dataset)), threads);
  write_text(out, dump(to_json(stats)));
  return 0;
}

int cmd_layout(const std::vector<fs::path>& inputs, const std::string& mode, layout::LayoutConfig cfg, const fs::path& out) {
  std::optional<SubjectAreaDataset> data;
  std::optional<net::NetworkStats> stats;
  for (const auto& p : inputs) {
    const auto j = read_json(p);
    if (j.contains("edges")) data = dataset_from_json(j);
    else if (j.contains("nodes")) stats = net::stats_from_json(j);
    else throw std::invalid_argument(p.string() + " is neither a dataset nor a stats file");
  }
  if (!data) throw std::invalid_argument("layout needs a dataset file");
  layout::LayoutResult result;
  if (layout::parse_mode(mode) == layout::Mode::network) {
    if (!stats) throw std::invalid_argument("network layout needs a stats file for node sizes");
    result = layout::network_layout(*data, encode::radii(*stats, encode::SizeMode::overview), cfg);
  } else {
    result = layout::geographic_layout(*data, cfg);
  }
  for (const auto& w : result.warnings) std::cerr << "warning: " << w << "\n";
  write_text(out, dump(to_json(result)));
  return 0;
}

int cmd_export(const fs::path& dataset, const fs::path& fit_path, const fs::path& stats_path,
               const std::vector<fs::path>& layouts, const fs::path& out) {
  const auto data = dataset_from_json(read_json(dataset));
  const auto fit = bmlr::fit_from_json(read_json(fit_path));
  const auto stats = net::stats_from_json(read_json(stats_path));
  std::optional<layout::LayoutResult> network, geographic;
  for (const auto& p : layouts) {
    auto r = layout::layout_from_json(read_json(p));
    (r.mode == layout::Mode::network ? network : geographic) = std::move(r);
  }
  if (!network || !geographic) throw std::invalid_argument("export needs one network and one geographic layout");
  encode::ExportInputs in;
  in.data = &data;
  in.fit = &fit;
  in.stats = &stats;
  in.network = &*network;
  in.geographic = &*geographic;
  try {
    write_text(out, encode::dump_bundle(encode::export_subject(in)));
  } catch (const encode::ExportError& e) {
    std::cerr << e.what() << "\n";
    return 1;
  }
  return 0;
}

int cmd_run(const fs::path& config, const pipeline::Settings& overrides) {
  const char* env = std::getenv("EXNET_SEED");
  const auto cfg = pipeline::load_config(config, overrides, env ? std::optional<std::string>(env) : std::nullopt);
  const auto result = pipeline::run_pipeline(cfg);
  for (const auto& s : result.subjects) {
    std::cout << s.subject << ": " << s.status;
    if (!s.threshold.empty()) std::cout << ": " << s.threshold;
    if (!s.detail.empty()) std::cout << " (" << s.detail << ")";
    std::cout << "\n";
  }
  std::cout << "manifest: " << (cfg.out_dir / "manifest.json").string() << "\n";
  return result.exit_code();
}

int cmd_synth(const fs::path& spec_file, const pipeline::Settings& overrides, const fs::path& out, bool papers) {
  pipeline::Settings settings;
  if (!spec_file.empty()) {
    std::ifstream in(spec_file);
    if (!in) throw std::invalid_argument("cannot read " + spec_file.string());
    settings = pipeline::parse_settings(in);
  }
  for (const auto& [k, v] : overrides) settings[k] = v;
  const auto data = synth::generate_synthetic(synth::spec_from_settings(settings));
  synth::write_synthetic(data, out, papers);
  std::cout << data.spec.subject << ": " << data.dataset.references().size() << " references, "
            << data.dataset.edges.size() << " edges -> " << out.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Excellence networks: hierarchical best-paper rates and collaboration maps"};
  app.require_subcommand(1);
  app.set_version_flag("--version", pipeline::kVersion);

  // ingest
  pipeline::PipelineConfig ingest_cfg;
  std::string ingest_papers, ingest_edges, ingest_catalog, ingest_out, ingest_input, ingest_format;
  std::vector<std::string> ingest_subjects;
  auto* ingest = app.add_subcommand("ingest", "Flag, aggregate and threshold one or more subject areas");
  auto* in_input = ingest->add_option("input", ingest_input, "Input file, read as --format");
  auto* in_format = ingest->add_option("--format", ingest_format, "Input kind")
                        ->check(CLI::IsMember({"papers", "edges"}))
                        ->needs(in_input);
  in_input->needs(in_format);
  auto* in_papers = ingest->add_option("--papers", ingest_papers, "Paper-level corpus (CSV or JSON lines)")
                        ->excludes(in_input);
  ingest->add_option("--edges", ingest_edges, "Pre-aggregated edge rows")->excludes(in_papers)->excludes(in_input);
  ingest->add_option("--institutions", ingest_catalog, "Institution catalog JSON");
  ingest->add_option("--min-ref-papers", ingest_cfg.thresholds.min_ref_papers);
  ingest->add_option("--min-joint", ingest_cfg.thresholds.min_joint);
  ingest->add_option("--min-refs", ingest_cfg.thresholds.min_refs);
  ingest->add_option("--subject", ingest_subjects, "Keep only these subjects");
  ingest->add_option("--out", ingest_out, "Dataset JSON (suffixed per subject when several)")->required();

  // fit
  bmlr::ChainConfig chain;
  std::size_t max_edges = 0;
  bool no_adapt = false;
  std::string fit_dataset, fit_out;
  auto* fit = app.add_subcommand("fit", "Fit the three-level binomial-logit model");
  fit->add_option("dataset", fit_dataset)->required()->check(CLI::ExistingFile);
  fit->add_option("--iterations", chain.iterations)->capture_default_str();
  fit->add_option("--burn-in", chain.burn_in)->capture_default_str();
  fit->add_option("--thin", chain.thinning)->capture_default_str();
  fit->add_option("--seed", chain.seed)->capture_default_str();
  fit->add_flag("--no-adapt", no_adapt, "Keep initial proposal scales");
  fit->add_option("--max-edges", max_edges, "Split into subsets of at most this many edges (0: never)");
  fit->add_option("--out", fit_out)->required();

  // diagnose
  std::string diag_fit, diag_param = "beta0", diag_out;
  std::size_t diag_subset = 0;
  auto* diagnose = app.add_subcommand("diagnose", "Trace, autocorrelation and density data for one parameter");
  diagnose->add_option("fit", diag_fit)->required()->check(CLI::ExistingFile);
  diagnose->add_option("--param", diag_param, "beta0, sigma2_u, sigma2_tau or icc")->capture_default_str();
  diagnose->add_option("--subset", diag_subset)->capture_default_str();
  diagnose->add_option("--out", diag_out, "CSV output (stdout when omitted)");

  // netstats
  std::string ns_dataset, ns_out;
  unsigned ns_threads = 1;
  auto* netstats = app.add_subcommand("netstats", "Betweenness, degree and collaboration totals");
  netstats->add_option("dataset", ns_dataset)->required()->check(CLI::ExistingFile);
  netstats->add_option("--threads", ns_threads)->capture_default_str();
  netstats->add_option("--out", ns_out)->required();

  // layout
  layout::LayoutConfig lay_cfg;
  std::vector<std::string> lay_inputs;
  std::string lay_mode = "network", lay_out;
  bool lay_exclude = false;
  auto* lay = app.add_subcommand("layout", "Network (ForceAtlas2) or geographic positions");
  lay->add_option("inputs", lay_inputs, "Dataset and stats files")->required()->expected(1, 2)->check(CLI::ExistingFile);
  lay->add_option("--mode", lay_mode)->check(CLI::IsMember({"network", "geographic"}))->capture_default_str();
  lay->add_option("--iterations", lay_cfg.iterations)->capture_default_str();
  lay->add_option("--seed", lay_cfg.seed)->capture_default_str();
  lay->add_option("--scaling", lay_cfg.scaling)->capture_default_str();
  lay->add_option("--gravity", lay_cfg.gravity)->capture_default_str();
  lay->add_option("--jitter-tolerance", lay_cfg.jitter_tolerance)->capture_default_str();
  lay->add_option("--margin", lay_cfg.overlap_margin)->capture_default_str();
  lay->add_flag("--exclude-non-reference", lay_exclude, "Place network-only institutions after the simulation");
  lay->add_option("--out", lay_out)->required();

  // export
  std::string ex_dataset, ex_fit, ex_stats, ex_out;
  std::vector<std::string> ex_layouts;
  auto* exp = app.add_subcommand("export", "Write the visualisation bundle for one subject");
  exp->add_option("--dataset", ex_dataset)->required()->check(CLI::ExistingFile);
  exp->add_option("--fit", ex_fit)->required()->check(CLI::ExistingFile);
  exp->add_option("--stats", ex_stats)->required()->check(CLI::ExistingFile);
  exp->add_option("--layouts", ex_layouts)->required()->expected(2)->check(CLI::ExistingFile);
  exp->add_option("--out", ex_out)->required();

  // run
  std::string run_config;
  std::map<std::string, std::string> run_flags;
  auto* run = app.add_subcommand("run", "Run the full pipeline from a key = value config file");
  run->add_option("--config", run_config, "Config file")->check(CLI::ExistingFile);
  for (const auto& key : pipeline::setting_keys()) {
    auto flag = key;
    std::replace(flag.begin(), flag.end(), '_', '-');
    run->add_option_function<std::string>("--" + flag, [&run_flags, key](const std::string& v) { run_flags[key] = v; },
                                          "Override '" + key + "'");
  }

  // synth
  std::string synth_spec, synth_out;
  bool synth_papers = false;
  std::map<std::string, std::string> synth_flags;
  auto* syn = app.add_subcommand("synth", "Generate a synthetic subject area with known parameters");
  syn->add_option("--spec", synth_spec, "key = value settings file")->check(CLI::ExistingFile);
  for (const char* key : {"subject", "n_refs", "mean_nets_per_ref", "n_min", "n_max", "beta0", "sigma2_u",
                          "sigma2_tau", "seed"}) {
    std::string flag = key;
    std::replace(flag.begin(), flag.end(), '_', '-');
    syn->add_option_function<std::string>("--" + flag, [&synth_flags, key](const std::string& v) { synth_flags[key] = v; });
  }
  syn->add_flag("--papers", synth_papers, "Also write a paper-level corpus");
  syn->add_option("--out", synth_out, "Output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*ingest) {
      ingest_cfg.papers = ingest_papers;
      ingest_cfg.edges = ingest_edges;
      if (ingest_format == "papers") ingest_cfg.papers = ingest_input;
      if (ingest_format == "edges") ingest_cfg.edges = ingest_input;
      ingest_cfg.institutions = ingest_catalog;
      if (ingest_cfg.papers.empty() == ingest_cfg.edges.empty())
        throw std::invalid_argument("give exactly one of --papers or --edges");
      return cmd_ingest(ingest_cfg, ingest_out, ingest_subjects);
    }
    if (*fit) {
      chain.adapt = !no_adapt;
      return cmd_fit(fit_dataset, fit_out, chain, max_edges);
    }
    if (*diagnose) return cmd_diagnose(diag_fit, diag_param, diag_subset, diag_out);
    if (*netstats) return cmd_netstats(ns_dataset, ns_out, ns_threads);
    if (*lay) {
      lay_cfg.include_non_reference = !lay_exclude;
      return cmd_layout({lay_inputs.begin(), lay_inputs.end()}, lay_mode, lay_cfg, lay_out);
    }
    if (*exp) return cmd_export(ex_dataset, ex_fit, ex_stats, {ex_layouts.begin(), ex_layouts.end()}, ex_out);
    if (*run) return cmd_run(run_config, run_flags);
    if (*syn) return cmd_synth(synth_spec, synth_flags, synth_out, synth_papers);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
