#include <doctest.h>

#include <unistd.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <variant>

#include "exnet/pipeline.hpp"
#include "exnet/rng.hpp"
#include "exnet/synth.hpp"

using namespace exnet;
using namespace exnet::pipeline;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("exnet_test_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

synth::SyntheticSpec tiny_spec() {
  synth::SyntheticSpec s;
  s.subject = "Tiny Subject";
  s.n_refs = 6;
  s.mean_nets_per_ref = 4;
  s.seed = 3;
  return s;
}

PipelineConfig tiny_config(const fs::path& dir, bool papers) {
  PipelineConfig cfg;
  (papers ? cfg.papers : cfg.edges) = dir / (papers ? "papers.csv" : "edges.csv");
  cfg.institutions = dir / "institutions.json";
  cfg.out_dir = dir / (papers ? "out_papers" : "out_edges");
  cfg.thresholds.min_refs = 5;
  cfg.chain.iterations = 1200;
  cfg.chain.burn_in = 200;
  cfg.layout.iterations = 60;
  return cfg;
}

}  // namespace

TEST_CASE("settings files") {
  std::istringstream in("# comment\npapers = \"corpus.csv\"\n\nmin_refs=7\nseed = 42 # trailing\n");
  const auto s = parse_settings(in);
  CHECK(s.at("papers") == "corpus.csv");
  CHECK(s.at("min_refs") == "7");
  CHECK(s.at("seed") == "42");

  PipelineConfig cfg;
  apply_settings(cfg, s);
  CHECK(cfg.thresholds.min_refs == 7);
  CHECK(cfg.seed == 42);
  CHECK_THROWS(apply_settings(cfg, {{"colour", "red"}}));
  CHECK_THROWS(apply_settings(cfg, {{"iterations", "many"}}));

  PipelineConfig round;
  apply_settings(round, to_settings(cfg));
  CHECK(to_settings(round) == to_settings(cfg));
  for (const auto& [k, v] : to_settings(cfg))
    CHECK(std::find(setting_keys().begin(), setting_keys().end(), k) != setting_keys().end());
}

TEST_CASE("config precedence") {
  const auto dir = scratch("config");
  {
    std::ofstream f(dir / "run.conf");
    f << "edges = data/edges.csv\nseed = 5\niterations = 3000\n";
  }
  auto cfg = load_config(dir / "run.conf", {}, std::nullopt);
  CHECK(cfg.seed == 5);
  CHECK(cfg.edges == dir / "data/edges.csv");
  cfg = load_config(dir / "run.conf", {{"seed", "6"}}, std::nullopt);
  CHECK(cfg.seed == 6);
  cfg = load_config(dir / "run.conf", {{"seed", "6"}}, std::string("77"));
  CHECK(cfg.seed == 77);
  CHECK(cfg.chain.iterations == 3000);
  fs::remove_all(dir);
}

TEST_CASE("stage seeds") {
  CHECK(stage_seed(1, "A", Stage::fit) == derive_seed(1, stable_hash("A") ^ 1));
  CHECK(stage_seed(1, "A", Stage::fit) != stage_seed(1, "A", Stage::layout));
  CHECK(stage_seed(1, "A", Stage::fit) != stage_seed(1, "B", Stage::fit));
  CHECK(stage_seed(1, "A", Stage::fit) != stage_seed(2, "A", Stage::fit));
}

TEST_CASE("synthetic generator") {
  const auto a = synth::generate_synthetic(tiny_spec());
  const auto b = synth::generate_synthetic(tiny_spec());
  CHECK(a.dataset.edges == b.dataset.edges);
  CHECK(a.dataset.references().size() == 6);
  for (const auto& e : a.dataset.edges) {
    CHECK(e.n_papers >= 10);
    CHECK(e.n_papers <= 200);
    CHECK(e.n_top <= e.n_papers);
  }
  auto degenerate = tiny_spec();
  degenerate.sigma2_u = 0.0;
  degenerate.sigma2_tau = 0.0;
  const auto flat = synth::generate_synthetic(degenerate);
  for (double u : flat.u) CHECK(u == degenerate.beta0);
  auto bad = tiny_spec();
  bad.n_max = 600;
  CHECK_THROWS(synth::generate_synthetic(bad));

  const auto papers = synth::synthesize_papers(a);
  const auto built = build_datasets(papers, a.catalog, a.dataset.thresholds_applied);
  REQUIRE(built.size() == 1);
  const auto* ds = std::get_if<SubjectAreaDataset>(&built[0]);
  REQUIRE(ds);
  CHECK(ds->edges == a.dataset.edges);
}

TEST_CASE("end-to-end run") {
  const auto dir = scratch("run");
  const auto data = synth::generate_synthetic(tiny_spec());
  synth::write_synthetic(data, dir, true);

  const auto cfg = tiny_config(dir, false);
  const auto result = run_pipeline(cfg);
  REQUIRE(result.subjects.size() == 1);
  CHECK(result.subjects[0].status == "accepted");
  CHECK(result.exit_code() == 0);
  const auto files = subject_files(cfg.out_dir, "Tiny Subject");
  CHECK(fs::exists(files.bundle));
  CHECK(fs::exists(files.fit));
  CHECK(fs::exists(cfg.out_dir / "index.json"));
  const auto manifest = read_json(cfg.out_dir / "manifest.json");
  CHECK(manifest["seed"] == 1);
  CHECK(manifest["subjects"].size() == 1);

  SUBCASE("rerun is byte-identical") {
    auto again = cfg;
    again.out_dir = dir / "again";
    again.workers = 3;
    again.threads = 2;
    run_pipeline(again);
    CHECK(slurp(subject_files(again.out_dir, "Tiny Subject").bundle) == slurp(files.bundle));
  }

  SUBCASE("paper route gives the same bundle") {
    const auto pc = tiny_config(dir, true);
    run_pipeline(pc);
    CHECK(slurp(subject_files(pc.out_dir, "Tiny Subject").bundle) == slurp(files.bundle));
  }

  SUBCASE("too few references is a rejection") {
    auto strict = cfg;
    strict.out_dir = dir / "strict";
    strict.thresholds.min_refs = 50;
    const auto r = run_pipeline(strict);
    REQUIRE(r.subjects.size() == 1);
    CHECK(r.subjects[0].status == "rejected");
    CHECK(r.subjects[0].threshold == "min_refs");
    CHECK(r.exit_code() == 1);
    CHECK_FALSE(fs::exists(subject_files(strict.out_dir, "Tiny Subject").bundle));
  }

  SUBCASE("split fits write a pooled result") {
    auto split = cfg;
    split.out_dir = dir / "split";
    split.max_edges = 10;
    const auto r = run_pipeline(split);
    CHECK(r.subjects[0].status == "accepted");
    const auto fit = read_json(subject_files(split.out_dir, "Tiny Subject").fit);
    CHECK(fit["pooled_heuristic"] == true);
  }
  fs::remove_all(dir);
}
