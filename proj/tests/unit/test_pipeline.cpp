#include <array>
#include <chrono>
#include <filesystem>

#include "doctest.h"
#include "gencad/error.hpp"
#include "gencad/geometry.hpp"
#include "gencad/metrics.hpp"
#include "gencad/pipeline/dataset.hpp"
#include "gencad/pipeline/commands.hpp"
#include "gencad/pipeline/io.hpp"
#include "gencad/pipeline/train.hpp"

using namespace gencad;
using namespace gencad::pipeline;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("gencad_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("synthetic programs are valid, deterministic and cover the vocabulary") {
  SynthOptions opt;
  opt.count = 100;
  opt.seed = 5;
  const auto t0 = std::chrono::steady_clock::now();
  const auto a = synth_programs(opt);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  MESSAGE("100 programs in " << secs << " s");
  REQUIRE(a.size() == 100);
  CHECK(invalid_ratio(a) == 0.0);
  std::array<int, kNumCommandTypes> hist{};
  std::array<int, 5> extrudes{};
  for (const auto& s : a) {
    CHECK(validate(s).ok());
    CHECK(s == snap_to_grid(s));
    int e = 0;
    for (const auto& c : s.commands) {
      ++hist[static_cast<std::size_t>(c.type)];
      e += c.type == CommandType::Extrude;
    }
    ++extrudes[static_cast<std::size_t>(std::min(e, 4))];
  }
  for (int h : hist) CHECK(h > 0);
  MESSAGE("extrude counts 1..4: " << extrudes[1] << " " << extrudes[2] << " " << extrudes[3] << " " << extrudes[4]);
  CHECK(extrudes[0] == 0);
  CHECK(extrudes[2] + extrudes[3] + extrudes[4] > 0);
  CHECK(synth_programs(opt) == a);
  opt.seed = 6;
  CHECK(synth_programs(opt) != a);
}

TEST_CASE("synth dataset writes a split manifest with identical bytes per seed") {
  const auto dir = scratch("synth");
  SynthOptions opt;
  opt.count = 40;
  opt.seed = 3;
  const auto m = synth_dataset((dir / "a").string(), opt);
  synth_dataset((dir / "b").string(), opt);
  CHECK(read_text((dir / "a" / "corpus.gcsq").string()) == read_text((dir / "b" / "corpus.gcsq").string()));
  CHECK(read_text((dir / "a" / "manifest.json").string()) == read_text((dir / "b" / "manifest.json").string()));
  CHECK(m.size() == 40);
  // 40 * 152530/168674 = 36.2, 40 * 8515/168674 = 2.02
  CHECK(m.split("train").size() == 36);
  CHECK(m.split("val").size() == 2);
  CHECK(m.split("test").size() == 2);
  const auto back = DatasetManifest::load((dir / "a" / "manifest.json").string());
  CHECK(back.to_json() == m.to_json());
  fs::remove((dir / "a" / m.split("test")[0].sequence));
  CHECK_THROWS_AS(DatasetManifest::load((dir / "a").string()), ConfigError);
  CHECK_THROWS_AS(DatasetManifest::from_json(R"({"splits":{"train":[{"model_id":"x","sequence":"a"}],)"
                                             R"("test":[{"model_id":"x","sequence":"b"}]}})",
                                             "."),
                  ParseError);
}

TEST_CASE("render dataset produces one render and sketch per surviving variant, idempotently") {
  const auto dir = scratch("render");
  SynthOptions opt;
  opt.count = 6;
  opt.seed = 9;
  auto m = synth_dataset(dir.string(), opt, {1, 0, 1});
  RenderDatasetOptions ro;
  ro.image_size = 64;
  ro.factors.push_back({3.0, 3.0, 3.0});  // pushes every program out of range
  const auto t0 = std::chrono::steady_clock::now();
  const auto summary = render_dataset(m, ro);
  MESSAGE("render 6 models x 6 variants in "
          << std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() << " s");
  CHECK(summary.models == 6);
  CHECK(summary.kept + summary.dropped == 36);
  CHECK(summary.dropped >= 6);
  const auto log = read_text(m.path(summary.drop_log));
  CHECK(log.find(",5,3,3,3,") != std::string::npos);
  std::size_t files = 0;
  for (const auto& name : kSplitNames) {
    for (const auto& e : m.split(name)) {
      CHECK(e.renders.size() == e.variants.size());
      for (std::size_t k = 0; k < e.variants.size(); ++k) {
        const auto img = load_pgm(m.path(e.renders[k]));
        CHECK(img.width == 64);
        CHECK(img.sum() > 0.0);
        CHECK(fs::exists(m.path(e.sketches[k])));
        CHECK(e.sketches[k] == "sketches/" + e.model_id + "_" + std::to_string(e.variants[k]) + "_sketch.pgm");
        ++files;
      }
    }
  }
  CHECK(files == summary.kept);
  const auto first = read_text(m.path(m.split("train")[0].renders[0]));
  const auto manifest_text = read_text(m.file());
  auto again = DatasetManifest::load(m.file());
  render_dataset(again, ro);
  CHECK(read_text(m.path(m.split("train")[0].renders[0])) == first);
  CHECK(read_text(m.file()) == manifest_text);
}

TEST_CASE("seed override and reports") {
  Config cfg = Config::parse("seed = 4\n");
  CHECK(resolve_seed(cfg) == 4u);
  setenv("GENCAD_SEED", "17", 1);
  CHECK(resolve_seed(cfg) == 17u);
  setenv("GENCAD_SEED", "x1", 1);
  CHECK_THROWS_AS(resolve_seed(cfg), ConfigError);
  unsetenv("GENCAD_SEED");
  const auto dir = scratch("report");
  Provenance p{"test", 4, "abc", "", {}};
  nlohmann::ordered_json body;
  body["value"] = 1.5;
  write_report((dir / "r").string(), p, body, {{"name", "value"}, {{"a,b", "1.5"}}});
  const auto j = nlohmann::json::parse(read_text((dir / "r.json").string()));
  CHECK(j["provenance"]["seed"] == 4);
  CHECK(j["value"] == 1.5);
  const auto csv = read_text((dir / "r.csv").string());
  CHECK(csv.rfind("# provenance: ", 0) == 0);
  CHECK(csv.find("\"a,b\",1.5\n") != std::string::npos);
}

namespace {

Config toy_config() {
  return Config::parse(R"(seed = 21
csr.d_z = 16
csr.enc_layers = 1
csr.dec_layers = 1
csr.heads = 2
csr.ffn_dim = 32
csr.level_embed = 4
train.csr.steps = 30
train.csr.batch = 8
train.csr.warmup = 5
ccip.width0 = 4
ccip.width1 = 4
ccip.width2 = 8
ccip.width3 = 8
ccip.blocks_per_stage = 1
ccip.image_size = 32
train.ccip.epochs = 2
train.ccip.batch = 8
cdp.steps = 20
cdp.blocks = 2
cdp.width = 32
train.cdp.steps = 40
train.cdp.batch = 16
train.cdp.log_every = 10
train.prior.steps = 20
train.prior.width = 16
train.prior.blocks = 1
)");
}

std::size_t count_lines(const std::string& path) {
  const auto text = read_text(path);
  return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n'));
}

}  // namespace

TEST_CASE("toy run: stage order, resume, frozen dependencies, generate, evaluate, retrieve") {
  const auto dir = scratch("toyrun");
  SynthOptions so;
  so.count = 24;
  so.seed = 2;
  so.difficulty = 1;
  auto m = synth_dataset((dir / "data").string(), so, {2, 0, 1});
  RenderDatasetOptions ro;
  ro.image_size = 48;
  ro.factors.resize(2);
  render_dataset(m, ro);
  const std::string run = (dir / "run").string();
  const RunLayout layout{run};
  auto cfg = toy_config();

  CHECK_THROWS_AS(train_ccip(cfg, m, run), DependencyError);
  CHECK_THROWS_AS(train_cdp(cfg, m, run), DependencyError);

  const auto first = train_csr(cfg, m, run);
  CHECK(first.start_step == 0);
  CHECK(first.end_step == 30);
  CHECK(count_lines(layout.log("csr")) == 3);
  cfg.set("train.csr.steps", 50);
  const auto resumed = train_csr(cfg, m, run);
  CHECK(resumed.start_step == 30);
  CHECK(resumed.end_step == 50);
  CHECK(nn::Checkpoint::load(layout.csr()).step == 50u);
  CHECK(count_lines(layout.log("csr")) == 5);
  auto changed = cfg;
  changed.set("csr.d_z", 8);
  CHECK_THROWS_AS(train_csr(changed, m, run), ConfigError);

  CHECK_THROWS_AS(train_cdp(cfg, m, run), DependencyError);
  const auto csr_bytes = read_text(layout.csr());
  const auto ccip_run = train_ccip(cfg, m, run);
  CHECK(ccip_run.losses.size() == 2);
  CHECK(read_text(layout.csr()) == csr_bytes);
  train_cdp(cfg, m, run);
  CHECK(fs::exists(layout.cdp()));
  CHECK(fs::exists(layout.prior()));
  CHECK(read_text(layout.csr()) == csr_bytes);

  std::vector<std::string> images;
  for (const auto& e : m.split("test")) {
    for (const auto& r : e.renders) {
      if (images.size() < 4) images.push_back(m.path(r));
    }
  }
  REQUIRE(images.size() == 4);
  GenerateOptions go;
  go.images = images;
  go.run_dir = run;
  go.n_per_image = 3;
  go.seed = 5;
  go.out_dir = (dir / "gen_a").string();
  go.render_size = 32;
  go.mesh_resolution = 16;
  const auto ga = generate_cmd(go);
  CHECK(ga.items.size() == 12);
  std::size_t programs = 0;
  for (const auto& f : fs::directory_iterator(dir / "gen_a" / "programs")) programs += f.path().extension() == ".json";
  CHECK(programs == 12);
  for (const auto& it : ga.items) CHECK(it.json_roundtrip);
  const auto report = nlohmann::json::parse(read_text((dir / "gen_a" / "generate_report.json").string()));
  CHECK(report["items"].size() == 12);
  CHECK(report["items"][0].contains("valid"));
  go.out_dir = (dir / "gen_b").string();
  const auto gb = generate_cmd(go);
  for (std::size_t i = 0; i < 12; ++i) {
    CHECK(read_text((dir / "gen_a" / ga.items[i].program).string()) == read_text((dir / "gen_b" / gb.items[i].program).string()));
  }
  go.prior = "deterministic";
  go.out_dir = (dir / "gen_c").string();
  CHECK(generate_cmd(go).items.size() == 12);

  ReconOptions rc;
  rc.self_check = true;
  rc.points = 300;
  rc.out_stem = (dir / "recon_self").string();
  const auto self = evaluate_recon(m, rc);
  CHECK(self.accuracy.cmd == 1.0);
  CHECK(self.accuracy.param == 1.0);
  CHECK(self.mean_cd == 0.0);
  CHECK(self.invalid_ratio == self.corpus_invalid_ratio);
  rc.self_check = false;
  rc.run_dir = run;
  const auto rec = evaluate_recon(m, rc);
  CHECK(rec.count == self.count);
  CHECK(rec.accuracy.cmd >= 0.0);

  GenEvalOptions ge;
  ge.mode = "reference";
  ge.points = 300;
  ge.out_stem = (dir / "gen_ref").string();
  const auto ref = evaluate_gen(m, ge);
  CHECK(ref.cov.mean() == 1.0);
  CHECK(ref.mmd.mean() == 0.0);
  CHECK(ref.jsd.mean() == 0.0);
  CHECK(ref.cov.repeats.size() == 3);
  ge.mode = "conditional";
  ge.run_dir = run;
  ge.repeats = 2;
  const auto cond = evaluate_gen(m, ge);
  CHECK(cond.ir.repeats.size() == 2);
  const auto gj = nlohmann::json::parse(read_text((dir / "gen_ref.json").string()));
  CHECK(gj["protocol"]["repeats"] == 2);
  CHECK(gj["provenance"]["command"] == "evaluate-gen");

  RetrieveOptions rt;
  rt.run_dir = run;
  rt.n_b = {4, 10000};
  rt.repeats = {20, 3};
  rt.queries = {images[0]};
  rt.top_k = 3;
  rt.out_stem = (dir / "retrieve").string();
  const auto rr = retrieve_cmd(m, rt);
  CHECK(rr.rows.size() == 2);
  CHECK(rr.skipped_n_b == std::vector<int>{10000});
  CHECK(rr.queries.front().hits.size() == 3);
  CHECK(EmbeddingIndex::load(rr.index_path).has_image());
  CHECK(read_text((dir / "retrieve.csv").string()).find("Random,4,20,") != std::string::npos);
}
