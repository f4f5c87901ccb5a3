// gencad: command-line front end of the image-to-CAD pipeline.

#include <filesystem>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "gencad/error.hpp"
#include "gencad/pipeline/commands.hpp"
#include "gencad/pipeline/dataset.hpp"
#include "gencad/pipeline/io.hpp"
#include "gencad/pipeline/train.hpp"

namespace fs = std::filesystem;
using namespace gencad;
using namespace gencad::pipeline;

namespace {

struct Common {
  std::string config_path;
  std::vector<std::string> overrides;  // key=value
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("-c,--config", c.config_path, "key-value config file")->check(CLI::ExistingFile);
  app->add_option("--set", c.overrides, "override a config key (key=value), repeatable");
  app->add_option("--seed", c.seed, "run seed (GENCAD_SEED takes precedence)");
}

// config file < --set < --seed < GENCAD_SEED
Config resolve(const Common& c) {
  Config cfg = c.config_path.empty() ? Config{} : Config::load(c.config_path);
  for (const auto& kv : c.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects key=value, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (c.seed) cfg.set("seed", *c.seed);
  cfg.set("seed", resolve_seed(cfg));
  return cfg;
}

std::vector<std::string> expand_images(const std::vector<std::string>& inputs) {
  std::vector<std::string> out;
  for (const auto& in : inputs) {
    if (fs::is_directory(in)) {
      std::vector<std::string> found;
      for (const auto& f : fs::directory_iterator(in)) {
        if (f.path().extension() == ".pgm") found.push_back(f.path().string());
      }
      std::sort(found.begin(), found.end());
      out.insert(out.end(), found.begin(), found.end());
    } else {
      out.push_back(in);
    }
  }
  return out;
}

void print_train(const TrainResult& r) {
  std::cout << r.stage << ": steps " << r.start_step << " -> " << r.end_step;
  if (!r.losses.empty()) std::cout << ", last loss " << r.losses.back();
  std::cout << "\ncheckpoint: " << r.checkpoint << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gencad: synthetic CAD corpus, staged training, image-to-program generation and evaluation"};
  app.require_subcommand(1);

  // synth-dataset
  Common synth_c;
  std::string synth_out;
  std::size_t synth_n = 100;
  int difficulty = 2;
  int padded_len = kDefaultPaddedLength;
  std::vector<double> ratios;
  auto* synth = app.add_subcommand("synth-dataset", "procedurally generate a valid program corpus and split manifest");
  add_common(synth, synth_c);
  synth->add_option("-o,--out", synth_out, "output directory")->required();
  synth->add_option("-n,--count", synth_n, "number of programs");
  synth->add_option("--difficulty", difficulty, "0: one extrude, 1: up to two, 2: up to four")->check(CLI::Range(0, 2));
  synth->add_option("--padded-len", padded_len, "sequence length N");
  synth->add_option("--split-ratios", ratios, "train,val,test weights")->expected(3)->delimiter(',');

  // render-dataset
  std::string render_manifest;
  int render_size = kRenderSize;
  std::size_t render_variants = 5;
  auto* render = app.add_subcommand("render-dataset", "render scale variants and sketches for every model");
  render->add_option("-m,--manifest", render_manifest, "dataset directory or manifest.json")->required();
  render->add_option("--image-size", render_size, "render resolution (full scale: 448)");
  render->add_option("--variants", render_variants, "number of scale variants (at most 5)")->check(CLI::Range(1, 5));

  // training
  Common train_c;
  std::string train_manifest, train_run;
  auto add_train = [&](const char* name, const char* help) {
    auto* sc = app.add_subcommand(name, help);
    add_common(sc, train_c);
    sc->add_option("-m,--manifest", train_manifest, "dataset directory or manifest.json")->required();
    sc->add_option("-r,--run", train_run, "run directory holding checkpoints and logs")->required();
    return sc;
  };
  auto* t_csr = add_train("train-csr", "train the sequence autoencoder");
  auto* t_ccip = add_train("train-ccip", "train the contrastive image encoder against the frozen CSR");
  auto* t_cdp = add_train("train-cdp", "train the diffusion prior (and deterministic prior) on frozen latents");

  // generate
  Common gen_c;
  GenerateOptions go;
  std::vector<std::string> gen_inputs;
  auto* gen = app.add_subcommand("generate", "generate programs from images");
  add_common(gen, gen_c);
  gen->add_option("-r,--run", go.run_dir, "run directory")->required();
  gen->add_option("-i,--images", gen_inputs, "PGM files or directories")->required();
  gen->add_option("-k,--n-per-image", go.n_per_image, "samples per image");
  gen->add_option("-o,--out", go.out_dir, "output directory")->required();
  gen->add_option("--prior", go.prior, "diffusion or deterministic");
  gen->add_option("--render-size", go.render_size, "render resolution of outputs");
  gen->add_option("--mesh-resolution", go.mesh_resolution, "meshing grid resolution");

  // evaluate-recon
  Common rec_c;
  ReconOptions ro;
  std::string rec_manifest;
  auto* rec = app.add_subcommand("evaluate-recon", "command/parameter accuracy, chamfer distance and IR of CSR reconstructions");
  add_common(rec, rec_c);
  rec->add_option("-m,--manifest", rec_manifest, "dataset directory or manifest.json")->required();
  rec->add_option("-r,--run", ro.run_dir, "run directory");
  rec->add_option("--split", ro.split, "train, val or test");
  rec->add_option("--eta", ro.eta, "parameter tolerance in quantization levels");
  rec->add_option("--points", ro.points, "surface samples per shape");
  rec->add_option("--limit", ro.limit, "evaluate the first n models only");
  rec->add_flag("--self", ro.self_check, "score the ground truth against itself");
  rec->add_option("-o,--out", ro.out_stem, "report path without extension")->required();

  // evaluate-gen
  Common ge_c;
  GenEvalOptions ge;
  std::string ge_manifest;
  auto* gev = app.add_subcommand("evaluate-gen", "COV, MMD, JSD, FID and IR of generated shapes over repeats");
  add_common(gev, ge_c);
  gev->add_option("-m,--manifest", ge_manifest, "dataset directory or manifest.json")->required();
  gev->add_option("-r,--run", ge.run_dir, "run directory");
  gev->add_option("--split", ge.split, "reference split");
  gev->add_option("--mode", ge.mode, "conditional, unconditional, deterministic or reference");
  gev->add_option("--repeats", ge.repeats, "independent generation rounds");
  gev->add_option("--points", ge.points, "surface samples per shape");
  gev->add_option("--jsd-grid", ge.jsd_grid, "occupancy grid resolution");
  gev->add_option("--limit", ge.limit, "use the first n reference models only");
  gev->add_option("-o,--out", ge.out_stem, "report path without extension")->required();

  // retrieve
  Common rt_c;
  RetrieveOptions rt;
  std::string rt_manifest;
  std::vector<std::string> rt_queries;
  bool no_random = false;
  auto* ret = app.add_subcommand("retrieve", "image-to-program retrieval protocol and top-k queries");
  add_common(ret, rt_c);
  ret->add_option("-m,--manifest", rt_manifest, "dataset directory or manifest.json")->required();
  ret->add_option("-r,--run", rt.run_dir, "run directory")->required();
  ret->add_option("--split", rt.split, "indexed split");
  ret->add_option("--n-b", rt.n_b, "batch sizes")->delimiter(',');
  ret->add_option("--repeats", rt.repeats, "repeats per batch size")->delimiter(',');
  ret->add_option("-q,--query", rt_queries, "query images or directories");
  ret->add_option("-k,--top-k", rt.top_k, "hits per query");
  ret->add_flag("--no-random", no_random, "skip the random-embedding baseline");
  ret->add_option("-o,--out", rt.out_stem, "report path without extension")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) {
      const auto cfg = resolve(synth_c);
      SynthOptions so;
      so.count = synth_n;
      so.seed = cfg.get("seed", std::uint64_t{0});
      so.difficulty = difficulty;
      so.padded_len = padded_len;
      SplitRatios sr;
      if (ratios.size() == 3) sr = {ratios[0], ratios[1], ratios[2]};
      const auto m = synth_dataset(synth_out, so, sr);
      std::cout << "programs: " << m.size() << " (train " << m.split("train").size() << ", val "
                << m.split("val").size() << ", test " << m.split("test").size() << ")\nmanifest: " << m.file() << "\n";
    } else if (render->parsed()) {
      auto m = DatasetManifest::load(render_manifest);
      RenderDatasetOptions opt;
      opt.image_size = render_size;
      opt.factors.resize(render_variants);
      const auto s = render_dataset(m, opt);
      std::cout << "models: " << s.models << ", variants kept: " << s.kept << ", dropped: " << s.dropped
                << "\ndrop log: " << m.path(s.drop_log) << "\n";
    } else if (t_csr->parsed() || t_ccip->parsed() || t_cdp->parsed()) {
      const auto cfg = resolve(train_c);
      const auto m = DatasetManifest::load(train_manifest);
      fs::create_directories(train_run);
      auto written = with_defaults(cfg);
      if (!cfg.has("csr.seq_len")) written.set("csr.seq_len", m.padded_len);
      written.save(train_run + "/config.txt");
      if (t_csr->parsed()) print_train(train_csr(cfg, m, train_run));
      if (t_ccip->parsed()) print_train(train_ccip(cfg, m, train_run));
      if (t_cdp->parsed()) print_train(train_cdp(cfg, m, train_run));
    } else if (gen->parsed()) {
      go.seed = resolve(gen_c).get("seed", std::uint64_t{0});
      go.images = expand_images(gen_inputs);
      const auto r = generate_cmd(go);
      std::cout << "outputs: " << r.items.size() << ", invalid ratio: " << r.invalid_ratio
                << "\nreport: " << go.out_dir << "/generate_report.json\n";
    } else if (rec->parsed()) {
      ro.seed = resolve(rec_c).get("seed", std::uint64_t{0});
      if (!ro.self_check && ro.run_dir.empty()) throw ConfigError("evaluate-recon needs --run or --self");
      const auto r = evaluate_recon(DatasetManifest::load(rec_manifest), ro);
      std::cout << "mu_cmd " << r.accuracy.cmd << "  mu_param " << r.accuracy.param << "  mu_cd " << r.mean_cd
                << "  IR " << r.invalid_ratio << "  (n=" << r.count << ")\n";
    } else if (gev->parsed()) {
      ge.seed = resolve(ge_c).get("seed", std::uint64_t{0});
      if (ge.mode != "reference" && ge.run_dir.empty()) throw ConfigError("evaluate-gen needs --run");
      const auto r = evaluate_gen(DatasetManifest::load(ge_manifest), ge);
      for (const auto* m : {&r.cov, &r.mmd, &r.jsd, &r.fid, &r.ir}) {
        std::cout << m->name << " " << m->mean() << " +- " << m->stddev() << "\n";
      }
    } else if (ret->parsed()) {
      rt.seed = resolve(rt_c).get("seed", std::uint64_t{0});
      rt.random_baseline = !no_random;
      rt.queries = expand_images(rt_queries);
      const auto r = retrieve_cmd(DatasetManifest::load(rt_manifest), rt);
      for (const auto& row : r.rows) {
        std::cout << row.method << "  n_b=" << row.result.n_b << "  " << row.result.mean << " +- " << row.result.stddev
                  << "  (" << row.result.repeats << " repeats)\n";
      }
      for (int n : r.skipped_n_b) std::cout << "skipped n_b=" << n << " (larger than the split)\n";
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const DependencyError& e) {
    std::cerr << "dependency error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
