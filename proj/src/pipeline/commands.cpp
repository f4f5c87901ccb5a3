#include "gencad/pipeline/commands.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <optional>

#include "gencad/error.hpp"
#include "gencad/mesh.hpp"
#include "gencad/models/generate.hpp"
#include "gencad/parallel.hpp"
#include "gencad/pipeline/io.hpp"
#include "gencad/pipeline/train.hpp"

namespace fs = std::filesystem;

namespace gencad::pipeline {

namespace {

void require_file(const std::string& path, const std::string& what) {
  if (!fs::exists(path)) throw DependencyError(what + " checkpoint missing: " + path);
}

std::vector<ManifestEntry> limited(const DatasetManifest& m, const std::string& split, std::size_t limit) {
  auto entries = m.split(split);
  if (limit > 0 && entries.size() > limit) entries.resize(limit);
  if (entries.empty()) throw ConfigError("split '" + split + "' is empty");
  return entries;
}

// Normalized surface samples; empty for programs that do not build a solid.
// The sampling seed follows the program text, so equal shapes give equal clouds.
std::vector<PointCloud> clouds_of(const std::vector<CadSequence>& programs, std::size_t points, std::uint64_t seed) {
  std::vector<PointCloud> out(programs.size());
  parallel_for(0, programs.size(), [&](std::size_t i) {
    if (!check_program(programs[i]).valid()) return;
    const auto cloud = sample_surface(execute(programs[i]), points, derive_seed(seed, text_hash(to_json(programs[i]))));
    if (!cloud.empty()) out[i] = normalize(cloud);
  });
  return out;
}

nlohmann::ordered_json metric_json(const MetricReport& m) {
  nlohmann::ordered_json j;
  j["mean"] = m.mean();
  j["std"] = m.stddev();
  j["repeats"] = m.repeats;
  return j;
}

std::string stem_of(const std::string& path) { return fs::path(path).stem().string(); }

}  // namespace

// ---- generate -----------------------------------------------------------------

GenerateReport generate_cmd(const GenerateOptions& o) {
  if (o.images.empty()) throw ConfigError("generate: no input images");
  if (o.n_per_image < 1) throw ConfigError("generate: n_per_image must be positive");
  if (o.prior != "diffusion" && o.prior != "deterministic") {
    throw ConfigError("generate: prior must be diffusion or deterministic");
  }
  const RunLayout run{o.run_dir};
  require_file(run.csr(), "csr");
  require_file(run.ccip(), "ccip");
  require_file(o.prior == "diffusion" ? run.cdp() : run.prior(), o.prior == "diffusion" ? "cdp" : "prior");
  auto csr = load_csr(run.csr());
  auto ccip = load_ccip(run.ccip());

  GenerateReport report;
  std::vector<models::Generation> gens;
  std::vector<std::string> stems;
  for (const auto& image_path : o.images) {
    const auto image = load_pgm(image_path);
    stems.push_back(stem_of(image_path));
    for (int j = 0; j < o.n_per_image; ++j) {
      GeneratedItem item;
      item.image = image_path;
      item.sample = j;
      item.seed = derive_seed(o.seed, text_hash(stems.back()) + static_cast<std::uint64_t>(j));
      report.items.push_back(item);
    }
  }
  if (o.prior == "diffusion") {
    auto cdp = load_cdp(run.cdp());
    for (auto& item : report.items) {
      gens.push_back(models::generate(ccip.model, cdp.model, csr.model, load_pgm(item.image), item.seed));
    }
  } else {
    auto prior = load_prior(run.prior());
    for (std::size_t i = 0; i < report.items.size(); i += static_cast<std::size_t>(o.n_per_image)) {
      const Mat<float> z = prior.model.predict(ccip.model.embed_image(load_pgm(report.items[i].image)));
      const auto g = models::decode_latents(csr.model, z).front();
      for (int j = 0; j < o.n_per_image; ++j) gens.push_back(g);
    }
  }

  fs::create_directories(fs::path(o.out_dir) / "programs");
  fs::create_directories(fs::path(o.out_dir) / "meshes");
  fs::create_directories(fs::path(o.out_dir) / "renders");
  RenderOptions ro;
  ro.size = o.render_size;
  parallel_for(0, report.items.size(), [&](std::size_t i) {
    auto& item = report.items[i];
    const auto& g = gens[i];
    const std::string name = stem_of(item.image) + "_s" + std::to_string(item.sample);
    item.status = g.status;
    item.length = static_cast<int>(g.program.commands.size());
    item.program = "programs/" + name + ".json";
    const std::string text = to_json(g.program);
    write_text((fs::path(o.out_dir) / item.program).string(), text);
    try {
      item.json_roundtrip = from_json(text) == g.program;
    } catch (const ParseError&) {
      item.json_roundtrip = false;
    }
    if (!g.status.valid()) return;
    const auto solid = execute(g.program);
    const auto mesh = extract_mesh(solid, o.mesh_resolution);
    item.mesh = "meshes/" + name + ".stl";
    {
      std::ofstream out(fs::path(o.out_dir) / item.mesh);
      write_stl_ascii(out, mesh, name);
    }
    item.render = "renders/" + name + ".pgm";
    save_pgm((fs::path(o.out_dir) / item.render).string(), render_isometric(solid, ro));
  });

  std::size_t invalid = 0;
  Table table{{"image", "sample", "seed", "program", "grammar_ok", "solid_ok", "json_roundtrip", "length", "detail"}, {}};
  nlohmann::ordered_json items = nlohmann::ordered_json::array();
  for (const auto& it : report.items) {
    invalid += it.status.valid() ? 0 : 1;
    nlohmann::ordered_json j;
    j["image"] = it.image;
    j["sample"] = it.sample;
    j["seed"] = it.seed;
    j["program"] = it.program;
    j["grammar_ok"] = it.status.grammar_ok;
    j["solid_ok"] = it.status.solid_ok;
    j["valid"] = it.status.valid();
    j["json_roundtrip"] = it.json_roundtrip;
    j["length"] = it.length;
    j["detail"] = it.status.detail;
    if (!it.mesh.empty()) j["mesh"] = it.mesh;
    if (!it.render.empty()) j["render"] = it.render;
    items.push_back(std::move(j));
    table.rows.push_back({it.image, std::to_string(it.sample), std::to_string(it.seed), it.program,
                          it.status.grammar_ok ? "1" : "0", it.status.solid_ok ? "1" : "0", it.json_roundtrip ? "1" : "0",
                          std::to_string(it.length), it.status.detail});
  }
  report.invalid_ratio = static_cast<double>(invalid) / static_cast<double>(report.items.size());
  Provenance p{"generate", o.seed, "", "", {{"csr", hex64(csr.hash)}, {"ccip", hex64(ccip.hash)}, {"prior", o.prior}}};
  nlohmann::ordered_json body;
  body["n_images"] = o.images.size();
  body["n_per_image"] = o.n_per_image;
  body["invalid_ratio"] = report.invalid_ratio;
  body["items"] = std::move(items);
  write_report((fs::path(o.out_dir) / "generate_report").string(), p, body, table);
  return report;
}

// ---- reconstruction -----------------------------------------------------------

ReconReport evaluate_recon(const DatasetManifest& manifest, const ReconOptions& o) {
  const auto entries = limited(manifest, o.split, o.limit);
  std::vector<CadSequence> gt;
  for (const auto& e : entries) gt.push_back(load_program(manifest, e.sequence));
  std::vector<EncodedSequence> gt_enc;
  for (const auto& s : gt) gt_enc.push_back(encode_sequence(s));

  std::vector<EncodedSequence> pred_enc;
  std::vector<CadSequence> pred;
  std::string csr_hash;
  if (o.self_check) {
    pred_enc = gt_enc;
    pred = gt;
  } else {
    require_file(RunLayout{o.run_dir}.csr(), "csr");
    auto csr = load_csr(RunLayout{o.run_dir}.csr());
    csr_hash = hex64(csr.hash);
    const auto z = encode_programs(csr.model, gt);
    for (auto& g : models::decode_latents(csr.model, z)) {
      pred_enc.push_back(g.encoded);
      pred.push_back(g.program);
    }
  }

  ReconReport r;
  r.count = gt.size();
  r.accuracy = recon_accuracy(pred_enc, gt_enc, o.eta);
  r.invalid_ratio = invalid_ratio(pred);
  r.corpus_invalid_ratio = invalid_ratio(gt);
  const auto gt_clouds = clouds_of(gt, o.points, o.seed);
  const auto pred_clouds = clouds_of(pred, o.points, o.seed);
  std::vector<double> cds(gt.size(), -1.0);
  parallel_for(0, gt.size(), [&](std::size_t i) {
    if (!gt_clouds[i].empty() && !pred_clouds[i].empty()) cds[i] = chamfer(pred_clouds[i], gt_clouds[i]);
  });
  std::vector<double> valid_cd;
  for (double c : cds) {
    if (c >= 0.0) valid_cd.push_back(c);
  }
  r.cd_pairs = valid_cd.size();
  if (!valid_cd.empty()) {
    r.mean_cd = std::accumulate(valid_cd.begin(), valid_cd.end(), 0.0) / static_cast<double>(valid_cd.size());
    std::sort(valid_cd.begin(), valid_cd.end());
    const std::size_t n = valid_cd.size();
    r.median_cd = n % 2 ? valid_cd[n / 2] : 0.5 * (valid_cd[n / 2 - 1] + valid_cd[n / 2]);
  }

  if (!o.out_stem.empty()) {
    // per program-length rows, as in the sequence-length breakdown
    Table table{{"model_id", "length", "cmd_acc", "param_acc", "cd", "valid"}, {}};
    for (std::size_t i = 0; i < gt.size(); ++i) {
      const auto one = recon_accuracy({pred_enc[i]}, {gt_enc[i]}, o.eta);
      table.rows.push_back({entries[i].model_id, std::to_string(program_length(gt_enc[i])), fmt(one.cmd),
                            one.param_sequences ? fmt(one.param) : "", cds[i] >= 0.0 ? fmt(cds[i]) : "",
                            check_program(pred[i]).valid() ? "1" : "0"});
    }
    Provenance p{"evaluate-recon", o.seed, "", hex64(manifest.hash()), {}};
    if (!csr_hash.empty()) p.inputs.push_back({"csr", csr_hash});
    nlohmann::ordered_json body;
    nlohmann::ordered_json protocol;
    protocol["split"] = o.split;
    protocol["count"] = r.count;
    protocol["eta"] = o.eta;
    protocol["points"] = o.points;
    protocol["chamfer"] = "squared, both directions, shapes normalized to a longest extent of 2";
    protocol["self_check"] = o.self_check;
    body["protocol"] = protocol;
    body["mu_cmd"] = r.accuracy.cmd;
    body["mu_param"] = r.accuracy.param;
    body["mu_cd"] = r.mean_cd;
    body["median_cd"] = r.median_cd;
    body["cd_pairs"] = r.cd_pairs;
    body["invalid_ratio"] = r.invalid_ratio;
    body["corpus_invalid_ratio"] = r.corpus_invalid_ratio;
    write_report(o.out_stem, p, body, table);
  }
  return r;
}

// ---- generation metrics -------------------------------------------------------

GenEvalReport evaluate_gen(const DatasetManifest& manifest, const GenEvalOptions& o) {
  static const std::vector<std::string> modes = {"conditional", "unconditional", "deterministic", "reference"};
  if (std::find(modes.begin(), modes.end(), o.mode) == modes.end()) throw ConfigError("evaluate-gen: unknown mode " + o.mode);
  if (o.repeats < 1) throw ConfigError("evaluate-gen: repeats must be positive");
  const auto entries = limited(manifest, o.split, o.limit);
  std::vector<CadSequence> gt;
  for (const auto& e : entries) gt.push_back(load_program(manifest, e.sequence));
  // S: reference shapes, G: generated shapes
  const auto s_all = clouds_of(gt, o.points, o.seed);
  std::vector<PointCloud> s_clouds;
  for (const auto& c : s_all) {
    if (!c.empty()) s_clouds.push_back(c);
  }
  if (s_clouds.empty()) throw NumericError("evaluate-gen: reference set has no valid shapes");

  GenEvalReport r;
  r.reference_size = s_clouds.size();
  Mat<float> ref_latents;
  std::vector<GrayImage> images;
  std::optional<LoadedCsr> csr;
  std::optional<LoadedCcip> ccip;
  std::optional<LoadedCdp> cdp;
  std::optional<LoadedPrior> prior;
  Provenance p{"evaluate-gen", o.seed, "", hex64(manifest.hash()), {{"mode", o.mode}}};
  if (o.mode != "reference") {
    const RunLayout run{o.run_dir};
    require_file(run.csr(), "csr");
    csr.emplace(load_csr(run.csr()));
    p.inputs.push_back({"csr", hex64(csr->hash)});
    ref_latents = encode_programs(csr->model, gt);
    if (o.mode != "unconditional") {
      require_file(run.ccip(), "ccip");
      ccip.emplace(load_ccip(run.ccip()));
      p.inputs.push_back({"ccip", hex64(ccip->hash)});
      const auto modality = ccip->config.get("train.ccip.modality", "render");
      for (const auto& e : entries) {
        if (e.variants.empty()) throw DependencyError("evaluate-gen: " + e.model_id + " has no images");
        images.push_back(load_pgm(manifest.path(modality == "render" ? e.renders.front() : e.sketches.front())));
      }
    }
    if (o.mode == "deterministic") {
      require_file(run.prior(), "prior");
      prior.emplace(load_prior(run.prior()));
    } else {
      require_file(run.cdp(), "cdp");
      cdp.emplace(load_cdp(run.cdp()));
      p.inputs.push_back({"cdp", hex64(cdp->hash)});
      if (o.mode == "unconditional" && cdp->model.conditional()) {
        throw ConfigError("evaluate-gen: unconditional mode needs a prior trained with cdp.cond_dim = 0");
      }
    }
  }

  Table table{{"repeat", "generated", "valid", "cov", "mmd", "jsd", "fid", "ir"}, {}};
  for (int rep = 0; rep < o.repeats; ++rep) {
    std::vector<CadSequence> programs;
    Mat<float> latents;
    const std::uint64_t rep_seed = derive_seed(o.seed, 1000 + static_cast<std::uint64_t>(rep));
    if (o.mode == "reference") {
      programs = gt;
    } else {
      const std::size_t n = gt.size();
      latents.resize(static_cast<Eigen::Index>(n), csr->model.config().d_z);
      for (std::size_t i = 0; i < n; ++i) {
        Mat<float> z;
        if (o.mode == "unconditional") {
          z = cdp->model.sample(1, Mat<float>(), derive_seed(rep_seed, i));
        } else {
          const Mat<float> cond = ccip->model.embed_image(images[i]);
          z = o.mode == "deterministic" ? prior->model.predict(cond) : cdp->model.sample(1, cond, derive_seed(rep_seed, i));
        }
        latents.row(static_cast<Eigen::Index>(i)) = z.row(0);
      }
      for (auto& g : models::decode_latents(csr->model, latents)) programs.push_back(std::move(g.program));
    }
    const auto g_all = clouds_of(programs, o.points, o.seed);
    std::vector<PointCloud> g_clouds;
    for (const auto& c : g_all) {
      if (!c.empty()) g_clouds.push_back(c);
    }
    const double ir = 1.0 - static_cast<double>(g_clouds.size()) / static_cast<double>(programs.size());
    // nothing generated: nothing covered, distances undefined
    double cov = 0.0, fid_v = 0.0;
    double mmd_v = std::numeric_limits<double>::quiet_NaN(), jsd_v = mmd_v;
    if (!g_clouds.empty()) {
      const auto d = chamfer_matrix(g_clouds, s_clouds);
      cov = coverage(d);
      mmd_v = mmd(d);
      jsd_v = jsd(s_clouds, g_clouds, o.jsd_grid);
    }
    if (o.mode != "reference") {
      fid_v = fid(latents.cast<double>(), ref_latents.cast<double>()).value;
    }
    r.cov.repeats.push_back(cov);
    r.mmd.repeats.push_back(mmd_v);
    r.jsd.repeats.push_back(jsd_v);
    r.fid.repeats.push_back(fid_v);
    r.ir.repeats.push_back(ir);
    table.rows.push_back({std::to_string(rep), std::to_string(programs.size()), std::to_string(g_clouds.size()), fmt(cov),
                          fmt(mmd_v), fmt(jsd_v), fmt(fid_v), fmt(ir)});
  }
  nlohmann::ordered_json protocol;
  protocol["split"] = o.split;
  protocol["mode"] = o.mode;
  protocol["reference_size"] = r.reference_size;
  protocol["generated_per_repeat"] = gt.size();
  protocol["repeats"] = o.repeats;
  protocol["points"] = o.points;
  protocol["jsd_grid"] = o.jsd_grid;
  protocol["normalization"] = "centroid at origin, longest extent 2";
  protocol["coverage"] = "fraction of reference shapes that are the nearest neighbour of some generated shape";
  protocol["fid_space"] = "CSR latents";
  for (auto* m : {&r.cov, &r.mmd, &r.jsd, &r.fid, &r.ir}) {
    m->protocol = {{"mode", o.mode}, {"repeats", std::to_string(o.repeats)}, {"split", o.split}};
  }
  if (!o.out_stem.empty()) {
    nlohmann::ordered_json body;
    body["protocol"] = protocol;
    body["COV"] = metric_json(r.cov);
    body["MMD"] = metric_json(r.mmd);
    body["JSD"] = metric_json(r.jsd);
    body["FID"] = metric_json(r.fid);
    body["IR"] = metric_json(r.ir);
    write_report(o.out_stem, p, body, table);
  }
  return r;
}

// ---- retrieval ----------------------------------------------------------------

RetrieveReport retrieve_cmd(const DatasetManifest& manifest, const RetrieveOptions& o) {
  if (o.n_b.size() != o.repeats.size()) throw ConfigError("retrieve: n_b and repeats lists differ in length");
  const RunLayout run{o.run_dir};
  require_file(run.csr(), "csr");
  require_file(run.ccip(), "ccip");
  auto csr = load_csr(run.csr());
  auto ccip = load_ccip(run.ccip());
  const auto modality = ccip.config.get("train.ccip.modality", "render");
  const auto pairs = collect_pairs(manifest, o.split, modality);
  if (pairs.programs.empty()) throw ConfigError("retrieve: split has no image/program pairs");
  std::vector<GrayImage> raw(pairs.images.size());
  parallel_for(0, raw.size(), [&](std::size_t i) { raw[i] = load_pgm(pairs.images[i]); });
  const RowMatrixXf cad = encode_programs(csr.model, pairs.programs);
  const RowMatrixXf img = embed_images(ccip.model, raw);

  RetrieveReport r;
  const EmbeddingIndex index(pairs.ids, cad, img);
  r.index_path = o.run_dir + "/index_" + o.split + ".gcix";
  index.save(r.index_path);

  const auto n = static_cast<int>(pairs.ids.size());
  Rng rng(derive_seed(o.seed, 77));
  RowMatrixXf rand_cad(n, cad.cols()), rand_img(n, cad.cols());
  for (Eigen::Index i = 0; i < rand_cad.size(); ++i) rand_cad.data()[i] = static_cast<float>(rng.normal());
  for (Eigen::Index i = 0; i < rand_img.size(); ++i) rand_img.data()[i] = static_cast<float>(rng.normal());
  for (std::size_t k = 0; k < o.n_b.size(); ++k) {
    if (o.n_b[k] > n) {
      r.skipped_n_b.push_back(o.n_b[k]);
      continue;
    }
    r.rows.push_back({"ccip-" + modality, eval_protocol(index.cad(), index.image(), o.n_b[k], o.repeats[k], o.seed)});
    if (o.random_baseline) {
      r.rows.push_back({"Random", eval_protocol(rand_cad, rand_img, o.n_b[k], o.repeats[k], o.seed)});
    }
  }
  for (const auto& q : o.queries) {
    const Mat<float> z = ccip.model.embed_image(load_pgm(q));
    r.queries.push_back({q, retrieve(z.row(0), index, o.top_k)});
  }

  if (!o.out_stem.empty()) {
    Table table{{"method", "n_b", "repeats", "mean", "std"}, {}};
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    for (const auto& row : r.rows) {
      table.rows.push_back({row.method, std::to_string(row.result.n_b), std::to_string(row.result.repeats),
                            fmt(row.result.mean), fmt(row.result.stddev)});
      nlohmann::ordered_json j;
      j["method"] = row.method;
      j["n_b"] = row.result.n_b;
      j["repeats"] = row.result.repeats;
      j["mean"] = row.result.mean;
      j["std"] = row.result.stddev;
      rows.push_back(std::move(j));
    }
    nlohmann::ordered_json queries = nlohmann::ordered_json::array();
    for (const auto& q : r.queries) {
      nlohmann::ordered_json j;
      j["image"] = q.image;
      nlohmann::ordered_json hits = nlohmann::ordered_json::array();
      for (const auto& h : q.hits) hits.push_back({{"id", h.id}, {"similarity", h.similarity}});
      j["hits"] = std::move(hits);
      queries.push_back(std::move(j));
    }
    nlohmann::ordered_json protocol;
    protocol["split"] = o.split;
    protocol["modality"] = modality;
    protocol["index_size"] = n;
    protocol["metric"] = "top-1 accuracy (%) of image-to-CAD cosine ranking within random batches of n_b pairs";
    protocol["skipped_n_b"] = r.skipped_n_b;
    nlohmann::ordered_json body;
    body["protocol"] = protocol;
    body["index"] = r.index_path;
    body["rows"] = std::move(rows);
    if (!r.queries.empty()) body["queries"] = std::move(queries);
    Provenance p{"retrieve", o.seed, "", hex64(manifest.hash()), {{"csr", hex64(csr.hash)}, {"ccip", hex64(ccip.hash)}}};
    write_report(o.out_stem, p, body, table);
  }
  return r;
}

}  // namespace gencad::pipeline
