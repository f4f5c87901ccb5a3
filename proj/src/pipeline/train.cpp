#include "gencad/pipeline/train.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>

#include "gencad/error.hpp"
#include "gencad/nn/optim.hpp"
#include "gencad/parallel.hpp"
#include "gencad/pipeline/io.hpp"

namespace fs = std::filesystem;

namespace gencad::pipeline {

using models::CcipConfig;
using models::CdpConfig;
using models::CsrConfig;

namespace {

// Appends {step, loss, lr} lines; truncates on a fresh start.
class LossLog {
 public:
  LossLog(const std::string& path, bool append) {
    fs::create_directories(fs::path(path).parent_path());
    out_.open(path, append ? std::ios::app : std::ios::trunc);
    if (!out_) throw Error("cannot write " + path);
  }
  void write(std::int64_t step, double loss, double lr) {
    nlohmann::ordered_json j;
    j["step"] = step;
    j["loss"] = loss;
    j["lr"] = lr;
    out_ << j.dump() << '\n';
    out_.flush();
  }

 private:
  std::ofstream out_;
};

std::string hash_text(std::uint64_t h) { return hex64(h); }

void require(const std::string& path, const std::string& stage, const std::string& needs) {
  if (!fs::exists(path)) {
    throw DependencyError(stage + " requires a trained " + needs + " checkpoint at " + path + " (run train-" + needs +
                          " first)");
  }
}

void verify_frozen(models::CsrModel<float>& m, std::uint64_t expect, const std::string& what) {
  if (nn::parameter_hash(m) != expect) throw Error(what + ": frozen CSR parameters changed during training");
}

template <class M>
void verify_frozen_module(M& m, std::uint64_t expect, const std::string& what) {
  if (nn::parameter_hash(m) != expect) throw Error(what + ": frozen parameters changed during training");
}

std::vector<CadSequence> split_programs(const DatasetManifest& m, const std::string& split) {
  std::vector<CadSequence> out;
  for (const auto& e : m.split(split)) out.push_back(load_program(m, e.sequence));
  return out;
}

std::vector<std::size_t> shuffled(std::size_t n, Rng& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
  return order;
}

// Resume state from an existing checkpoint of the same stage.
template <class M>
std::int64_t maybe_resume(const Config& cfg, const std::string& path, M& model, nn::Adam<float>& opt,
                          const std::string& stage) {
  if (!cfg.get("train.resume", true) || !fs::exists(path)) return 0;
  const auto ck = nn::Checkpoint::load(path);
  const auto saved = Config::parse(ck.config);
  // architecture keys must agree for a resume
  for (const auto& [k, v] : saved.values()) {
    if (k.rfind(stage + ".", 0) == 0 && cfg.get(k, v) != v) {
      throw ConfigError("cannot resume " + stage + ": " + k + " changed from " + v + " to " + cfg.get(k, v));
    }
  }
  ck.restore(model);
  ck.restore_optimizer(opt);
  return static_cast<std::int64_t>(ck.step);
}

Config stage_config(const Config& cfg, const std::vector<std::string>& prefixes) {
  Config out;
  out.set("seed", cfg.get("seed", std::uint64_t{0}));
  for (const auto& [k, v] : cfg.values()) {
    for (const auto& p : prefixes) {
      if (k.rfind(p, 0) == 0) out.set(k, v);
    }
  }
  return out;
}

void save_checkpoint(const std::string& path, const Config& meta, std::uint64_t step, nn::Module<float>& model,
                     nn::Adam<float>* opt) {
  nn::Checkpoint ck;
  ck.config = meta.to_text();
  ck.step = step;
  ck.capture(model);
  if (opt != nullptr) ck.capture_optimizer(*opt);
  fs::create_directories(fs::path(path).parent_path());
  const std::string tmp = path + ".tmp";
  ck.save(tmp);
  fs::rename(tmp, path);
}

std::vector<GrayImage> load_images(const std::vector<std::string>& paths) {
  std::vector<GrayImage> out(paths.size());
  parallel_for(0, paths.size(), [&](std::size_t i) { out[i] = load_pgm(paths[i]); });
  return out;
}

Mat<float> gather_rows(const Mat<float>& m, const std::vector<std::size_t>& idx, std::size_t begin, std::size_t end) {
  Mat<float> out(static_cast<Eigen::Index>(end - begin), m.cols());
  for (std::size_t i = begin; i < end; ++i) out.row(static_cast<Eigen::Index>(i - begin)) = m.row(static_cast<Eigen::Index>(idx[i]));
  return out;
}

}  // namespace

Config default_config() {
  Config c;
  c.set("seed", 0, "GENCAD_SEED overrides");
  c.set("train.resume", true, "continue from an existing stage checkpoint");
  CsrConfig{}.write(c);
  c.set("train.csr.split", std::string("train"));
  c.set("train.csr.steps", 3000, "full scale: 1000 epochs");
  c.set("train.csr.batch", 32, "full scale: 512");
  c.set("train.csr.lr", 1e-3, "full scale: 1e-3");
  c.set("train.csr.warmup", 200, "full scale: 2000");
  c.set("train.csr.clip", 1.0, "full scale: 1.0");
  c.set("train.csr.log_every", 10);
  c.set("train.csr.checkpoint_every", 500);
  CcipConfig cc;
  cc.image_size = 64;
  cc.write(c);
  c.set("train.ccip.split", std::string("train"));
  c.set("train.ccip.modality", std::string("render"), "render or sketch; one model per modality");
  c.set("train.ccip.epochs", 100, "full scale: 300");
  c.set("train.ccip.batch", 32, "full scale: 256");
  c.set("train.ccip.lr", 1e-3, "full scale: 1e-3");
  c.set("train.ccip.weight_decay", 1e-2, "decoupled");
  c.set("train.ccip.plateau_factor", 0.5);
  c.set("train.ccip.plateau_patience", 10);
  CdpConfig{}.write(c);
  c.set("train.cdp.split", std::string("train"));
  c.set("train.cdp.steps", 20000, "full scale: 1000000");
  c.set("train.cdp.batch", 256, "full scale: 2048");
  c.set("train.cdp.lr", 1e-3, "full scale: 1e-5");
  c.set("train.cdp.accumulate", 2, "full scale: 2");
  c.set("train.cdp.clip", 1.0, "full scale: 1.0");
  c.set("train.cdp.log_every", 100);
  c.set("train.cdp.checkpoint_every", 5000);
  c.set("train.prior.steps", 5000, "0 skips the deterministic prior");
  c.set("train.prior.width", 128, "full scale: 2048");
  c.set("train.prior.blocks", 10);
  c.set("train.prior.dropout", 0.1);
  c.set("train.prior.lr", 1e-3);
  c.set("train.prior.batch", 256);
  return c;
}

Config with_defaults(const Config& user) {
  Config c = default_config();
  c.merge(user);
  const auto seed = c.get("seed", std::uint64_t{0});
  // model seeds follow the run seed unless pinned
  const std::pair<const char*, std::uint64_t> seeds[] = {{"csr.seed", 1}, {"ccip.seed", 2}, {"cdp.seed", 3}};
  for (const auto& [key, salt] : seeds) {
    if (!user.has(key)) c.set(key, derive_seed(seed, salt));
  }
  return c;
}

// ---- CSR ----------------------------------------------------------------------

TrainResult train_csr(const Config& user, const DatasetManifest& manifest, const std::string& run_dir) {
  Config cfg = with_defaults(user);
  const RunLayout run{run_dir};
  auto mc = CsrConfig::from(cfg);
  // follows the corpus unless pinned by the user
  mc.seq_len = user.has("csr.seq_len") ? user.get("csr.seq_len", 0) : manifest.padded_len;
  if (mc.seq_len != manifest.padded_len) {
    throw ConfigError("csr.seq_len " + std::to_string(mc.seq_len) + " differs from corpus padded length " +
                      std::to_string(manifest.padded_len));
  }
  cfg.set("csr.seq_len", mc.seq_len);
  models::CsrModel<float> model(mc);
  nn::AdamConfig ac;
  ac.lr = cfg.get("train.csr.lr", 1e-3);
  nn::Adam<float> opt(model.trainable_parameters(), ac);
  const auto programs = split_programs(manifest, cfg.get("train.csr.split", "train"));
  if (programs.empty()) throw ConfigError("train-csr: empty training split");
  std::vector<EncodedSequence> data;
  for (const auto& p : programs) data.push_back(encode_sequence(p));

  Config meta = stage_config(cfg, {"csr.", "train.csr."});
  mc.write(meta);
  meta.set("manifest_hash", hex64(manifest.hash()));

  TrainResult r;
  r.stage = "csr";
  r.checkpoint = run.csr();
  r.start_step = maybe_resume(cfg, run.csr(), model, opt, "csr");
  const auto steps = cfg.get("train.csr.steps", std::int64_t{3000});
  const auto batch = static_cast<std::size_t>(std::max(1, cfg.get("train.csr.batch", 32)));
  const nn::WarmupSchedule warm(ac.lr, cfg.get("train.csr.warmup", std::int64_t{200}));
  const double clip = cfg.get("train.csr.clip", 1.0);
  const auto log_every = std::max<std::int64_t>(1, cfg.get("train.csr.log_every", std::int64_t{10}));
  const auto ckpt_every = std::max<std::int64_t>(1, cfg.get("train.csr.checkpoint_every", std::int64_t{500}));
  LossLog log(run.log("csr"), r.start_step > 0);
  Rng rng(derive_seed(cfg.get("seed", std::uint64_t{0}), 101 + static_cast<std::uint64_t>(r.start_step)));
  const auto params = model.trainable_parameters();
  model.set_training(true);
  std::vector<std::size_t> order;
  std::size_t cursor = 0;
  for (std::int64_t step = r.start_step + 1; step <= steps; ++step) {
    std::vector<EncodedSequence> b;
    while (b.size() < std::min(batch, data.size())) {
      if (cursor >= order.size()) {
        order = shuffled(data.size(), rng);
        cursor = 0;
      }
      b.push_back(data[order[cursor++]]);
    }
    const double lr = warm.lr_at(step);
    opt.set_lr(lr);
    opt.zero_grad();
    const double loss = model.loss_forward(b).total;
    if (!std::isfinite(loss)) throw NumericError("train-csr: non-finite loss at step " + std::to_string(step));
    model.loss_backward();
    nn::clip_grad_norm(params, clip);
    opt.step();
    if (step % log_every == 0 || step == steps) {
      log.write(step, loss, lr);
      r.losses.push_back(loss);
    }
    if (step % ckpt_every == 0 || step == steps) save_checkpoint(run.csr(), meta, static_cast<std::uint64_t>(step), model, &opt);
  }
  r.end_step = std::max(r.start_step, steps);
  if (!fs::exists(run.csr())) save_checkpoint(run.csr(), meta, static_cast<std::uint64_t>(r.end_step), model, &opt);
  return r;
}

// ---- loaders ------------------------------------------------------------------

LoadedCsr load_csr(const std::string& path) {
  const auto ck = nn::Checkpoint::load(path);
  LoadedCsr out{models::CsrModel<float>(CsrConfig::from(Config::parse(ck.config))), 0, Config::parse(ck.config)};
  ck.restore(out.model);
  out.model.set_training(false);
  out.hash = nn::parameter_hash(out.model);
  return out;
}

LoadedCcip load_ccip(const std::string& path) {
  const auto ck = nn::Checkpoint::load(path);
  LoadedCcip out{models::CcipModel<float>(CcipConfig::from(Config::parse(ck.config))), 0, Config::parse(ck.config)};
  ck.restore(out.model);
  out.model.set_training(false);
  out.hash = nn::parameter_hash(out.model);
  return out;
}

LoadedCdp load_cdp(const std::string& path) {
  const auto ck = nn::Checkpoint::load(path);
  LoadedCdp out{models::CdpModel<float>(CdpConfig::from(Config::parse(ck.config))), 0, Config::parse(ck.config)};
  ck.restore(out.model);
  out.model.set_training(false);
  out.hash = nn::parameter_hash(out.model);
  return out;
}

LoadedPrior load_prior(const std::string& path) {
  const auto ck = nn::Checkpoint::load(path);
  const auto c = Config::parse(ck.config);
  LoadedPrior out{models::DeterministicPrior<float>(c.get("cdp.cond_dim", 64), c.get("cdp.d_z", 64),
                                                    c.get("train.prior.width", 128), c.get("train.prior.blocks", 10),
                                                    c.get("train.prior.dropout", 0.1), c.get("cdp.seed", std::uint64_t{0})),
                  0, c};
  ck.restore(out.model);
  out.model.set_training(false);
  out.hash = nn::parameter_hash(out.model);
  return out;
}

Mat<float> encode_programs(models::CsrModel<float>& csr, const std::vector<CadSequence>& programs, int batch) {
  csr.set_training(false);
  Mat<float> z(static_cast<Eigen::Index>(programs.size()), csr.config().d_z);
  for (std::size_t i = 0; i < programs.size(); i += static_cast<std::size_t>(batch)) {
    std::vector<EncodedSequence> b;
    for (std::size_t j = i; j < std::min(programs.size(), i + static_cast<std::size_t>(batch)); ++j) {
      auto p = programs[j];
      p.padded_len = csr.config().seq_len;
      b.push_back(encode_sequence(p));
    }
    z.middleRows(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(b.size())) = csr.encode(b);
  }
  return z;
}

Mat<float> embed_images(models::CcipModel<float>& ccip, const std::vector<GrayImage>& raw, int batch) {
  ccip.set_training(false);
  Mat<float> z(static_cast<Eigen::Index>(raw.size()), ccip.config().d_z);
  for (std::size_t i = 0; i < raw.size(); i += static_cast<std::size_t>(batch)) {
    const std::size_t end = std::min(raw.size(), i + static_cast<std::size_t>(batch));
    std::vector<GrayImage> pre(end - i);
    parallel_for(i, end, [&](std::size_t j) { pre[j - i] = preprocess_for_encoder(raw[j], ccip.config().image_size); });
    const auto n = models::l2_normalize_rows(ccip.image_latents(pre).cast<double>());
    z.middleRows(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(end - i)) = n.cast<float>();
  }
  return z;
}

PairSet collect_pairs(const DatasetManifest& m, const std::string& split, const std::string& modality) {
  if (modality != "render" && modality != "sketch") {
    throw ConfigError("modality must be render or sketch, got '" + modality + "'");
  }
  if (m.image_size == 0) throw DependencyError("dataset has no images (run render-dataset first)");
  PairSet out;
  for (const auto& e : m.split(split)) {
    for (std::size_t k = 0; k < e.variants.size(); ++k) {
      out.ids.push_back(e.model_id + "_" + std::to_string(e.variants[k]));
      out.programs.push_back(load_program(m, e.variant_sequences[k]));
      out.images.push_back(m.path(modality == "render" ? e.renders[k] : e.sketches[k]));
    }
  }
  return out;
}

// ---- CCIP ---------------------------------------------------------------------

TrainResult train_ccip(const Config& user, const DatasetManifest& manifest, const std::string& run_dir) {
  const Config cfg = with_defaults(user);
  const RunLayout run{run_dir};
  require(run.csr(), "train-ccip", "csr");
  auto csr = load_csr(run.csr());
  auto mc = CcipConfig::from(cfg);
  if (mc.d_z != csr.model.config().d_z) {
    if (user.has("ccip.d_z")) throw ConfigError("ccip.d_z must equal the CSR latent width");
    mc.d_z = csr.model.config().d_z;
  }
  const auto modality = cfg.get("train.ccip.modality", "render");
  const auto pairs = collect_pairs(manifest, cfg.get("train.ccip.split", "train"), modality);
  if (pairs.programs.size() < 2) throw ConfigError("train-ccip: need at least two image/program pairs");

  const Mat<float> cad = encode_programs(csr.model, pairs.programs);
  std::vector<GrayImage> images = load_images(pairs.images);
  parallel_for(0, images.size(), [&](std::size_t i) { images[i] = preprocess_for_encoder(images[i], mc.image_size); });

  models::CcipModel<float> model(mc);
  nn::AdamConfig ac;
  ac.lr = cfg.get("train.ccip.lr", 1e-3);
  ac.weight_decay = cfg.get("train.ccip.weight_decay", 1e-2);
  nn::Adam<float> opt(model.trainable_parameters(), ac);

  Config meta = stage_config(cfg, {"ccip.", "train.ccip."});
  mc.write(meta);
  meta.set("depends.csr", hash_text(csr.hash));
  meta.set("manifest_hash", hex64(manifest.hash()));

  TrainResult r;
  r.stage = "ccip";
  r.checkpoint = run.ccip();
  r.start_step = maybe_resume(cfg, run.ccip(), model, opt, "ccip");
  if (r.start_step > 0) {
    const auto saved = Config::parse(nn::Checkpoint::load(run.ccip()).config);
    if (saved.get("depends.csr", "") != hash_text(csr.hash)) {
      throw DependencyError("ccip checkpoint was trained against a different CSR model");
    }
    opt.set_lr(saved.get("train.ccip.current_lr", ac.lr));
  }
  const auto epochs = cfg.get("train.ccip.epochs", std::int64_t{100});
  const auto batch = static_cast<std::size_t>(std::max(2, cfg.get("train.ccip.batch", 32)));
  nn::ReduceOnPlateau plateau(cfg.get("train.ccip.plateau_factor", 0.5), cfg.get("train.ccip.plateau_patience", 10));
  LossLog log(run.log("ccip"), r.start_step > 0);
  Rng rng(derive_seed(cfg.get("seed", std::uint64_t{0}), 202 + static_cast<std::uint64_t>(r.start_step)));
  model.set_training(true);
  for (std::int64_t epoch = r.start_step + 1; epoch <= epochs; ++epoch) {
    const auto order = shuffled(images.size(), rng);
    double sum = 0.0;
    int batches = 0;
    for (std::size_t i = 0; i < order.size(); i += batch) {
      const std::size_t end = std::min(order.size(), i + batch);
      if (end - i < 2) break;  // a single pair has no negatives
      std::vector<GrayImage> bi;
      for (std::size_t k = i; k < end; ++k) bi.push_back(images[order[k]]);
      opt.zero_grad();
      const double loss = model.loss_and_backward(bi, gather_rows(cad, order, i, end));
      if (!std::isfinite(loss)) throw NumericError("train-ccip: non-finite loss in epoch " + std::to_string(epoch));
      opt.step();
      sum += loss;
      ++batches;
    }
    const double mean = sum / std::max(1, batches);
    log.write(epoch, mean, opt.lr());
    r.losses.push_back(mean);
    opt.set_lr(plateau.step(mean, opt.lr()));
  }
  verify_frozen(csr.model, csr.hash, "train-ccip");
  meta.set("train.ccip.current_lr", opt.lr());
  r.end_step = std::max(r.start_step, epochs);
  save_checkpoint(run.ccip(), meta, static_cast<std::uint64_t>(r.end_step), model, &opt);
  return r;
}

// ---- CDP + deterministic prior ------------------------------------------------

TrainResult train_cdp(const Config& user, const DatasetManifest& manifest, const std::string& run_dir) {
  Config cfg = with_defaults(user);
  const RunLayout run{run_dir};
  require(run.csr(), "train-cdp", "csr");
  require(run.ccip(), "train-cdp", "ccip");
  auto csr = load_csr(run.csr());
  auto ccip = load_ccip(run.ccip());
  if (ccip.config.get("depends.csr", "") != hash_text(csr.hash)) {
    throw DependencyError("ccip checkpoint was trained against a different CSR model (retrain ccip)");
  }
  auto mc = CdpConfig::from(cfg);
  mc.d_z = csr.model.config().d_z;
  if (mc.cond_dim != 0) mc.cond_dim = ccip.model.config().d_z;
  mc.write(cfg);

  const auto modality = ccip.config.get("train.ccip.modality", "render");
  const auto pairs = collect_pairs(manifest, cfg.get("train.cdp.split", "train"), modality);
  if (pairs.programs.empty()) throw ConfigError("train-cdp: empty training split");
  const Mat<float> z0 = encode_programs(csr.model, pairs.programs);
  const Mat<float> cond = mc.cond_dim > 0 ? embed_images(ccip.model, load_images(pairs.images)) : Mat<float>();

  models::CdpModel<float> model(mc);
  nn::AdamConfig ac;
  ac.lr = cfg.get("train.cdp.lr", 1e-3);
  nn::Adam<float> opt(model.trainable_parameters(), ac);
  Config meta = stage_config(cfg, {"cdp.", "train.cdp.", "train.prior."});
  meta.set("depends.csr", hash_text(csr.hash));
  meta.set("depends.ccip", hash_text(ccip.hash));
  meta.set("train.ccip.modality", modality);
  meta.set("manifest_hash", hex64(manifest.hash()));

  TrainResult r;
  r.stage = "cdp";
  r.checkpoint = run.cdp();
  r.start_step = maybe_resume(cfg, run.cdp(), model, opt, "cdp");
  if (r.start_step > 0) {
    const auto saved = Config::parse(nn::Checkpoint::load(run.cdp()).config);
    if (saved.get("depends.csr", "") != hash_text(csr.hash) || saved.get("depends.ccip", "") != hash_text(ccip.hash)) {
      throw DependencyError("cdp checkpoint was trained against different CSR/CCIP models");
    }
  }
  const auto steps = cfg.get("train.cdp.steps", std::int64_t{20000});
  const auto batch = static_cast<std::size_t>(std::max(1, cfg.get("train.cdp.batch", 256)));
  nn::GradAccumulator accum(cfg.get("train.cdp.accumulate", 2));
  const double clip = cfg.get("train.cdp.clip", 1.0);
  const auto log_every = std::max<std::int64_t>(1, cfg.get("train.cdp.log_every", std::int64_t{100}));
  const auto ckpt_every = std::max<std::int64_t>(1, cfg.get("train.cdp.checkpoint_every", std::int64_t{5000}));
  LossLog log(run.log("cdp"), r.start_step > 0);
  Rng rng(derive_seed(cfg.get("seed", std::uint64_t{0}), 303 + static_cast<std::uint64_t>(r.start_step)));
  const auto params = model.trainable_parameters();
  model.set_training(true);
  double running = 0.0;
  int running_n = 0;
  opt.zero_grad();
  for (std::int64_t step = r.start_step + 1; step <= steps; ++step) {
    std::vector<std::size_t> idx(std::min(batch, static_cast<std::size_t>(z0.rows())));
    for (auto& i : idx) i = rng.index(static_cast<std::size_t>(z0.rows()));
    const Mat<float> bz = gather_rows(z0, idx, 0, idx.size());
    const Mat<float> bc = mc.cond_dim > 0 ? gather_rows(cond, idx, 0, idx.size()) : Mat<float>();
    const double loss = model.train_step(bz, bc, rng, accum.scale());
    if (!std::isfinite(loss)) throw NumericError("train-cdp: non-finite loss at step " + std::to_string(step));
    running += loss;
    ++running_n;
    if (accum.tick()) {
      nn::clip_grad_norm(params, clip);
      opt.step();
      opt.zero_grad();
    }
    if (step % log_every == 0 || step == steps) {
      log.write(step, running / running_n, opt.lr());
      r.losses.push_back(running / running_n);
      running = 0.0;
      running_n = 0;
    }
    if (step % ckpt_every == 0 || step == steps) save_checkpoint(run.cdp(), meta, static_cast<std::uint64_t>(step), model, &opt);
  }
  r.end_step = std::max(r.start_step, steps);
  if (!fs::exists(run.cdp())) save_checkpoint(run.cdp(), meta, static_cast<std::uint64_t>(r.end_step), model, &opt);

  const auto prior_steps = cfg.get("train.prior.steps", std::int64_t{0});
  if (prior_steps > 0 && mc.cond_dim > 0) {
    models::DeterministicPrior<float> prior(mc.cond_dim, mc.d_z, cfg.get("train.prior.width", 128),
                                            cfg.get("train.prior.blocks", 10), cfg.get("train.prior.dropout", 0.1),
                                            mc.seed);
    nn::AdamConfig pc;
    pc.lr = cfg.get("train.prior.lr", 1e-3);
    nn::Adam<float> popt(prior.trainable_parameters(), pc);
    const auto pbatch = static_cast<std::size_t>(std::max(1, cfg.get("train.prior.batch", 256)));
    LossLog plog(run.log("prior"), false);
    prior.set_training(true);
    for (std::int64_t step = 1; step <= prior_steps; ++step) {
      std::vector<std::size_t> idx(std::min(pbatch, static_cast<std::size_t>(z0.rows())));
      for (auto& i : idx) i = rng.index(static_cast<std::size_t>(z0.rows()));
      popt.zero_grad();
      const double loss = prior.train_step(gather_rows(cond, idx, 0, idx.size()), gather_rows(z0, idx, 0, idx.size()));
      popt.step();
      if (step % log_every == 0 || step == prior_steps) plog.write(step, loss, popt.lr());
    }
    save_checkpoint(run.prior(), meta, static_cast<std::uint64_t>(prior_steps), prior, nullptr);
  }
  verify_frozen(csr.model, csr.hash, "train-cdp");
  verify_frozen_module(ccip.model, ccip.hash, "train-cdp");
  return r;
}

}  // namespace gencad::pipeline
