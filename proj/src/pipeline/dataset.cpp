#include "gencad/pipeline/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include "gencad/error.hpp"
#include "gencad/geometry.hpp"
#include "gencad/nn/checkpoint.hpp"
#include "gencad/parallel.hpp"
#include "gencad/pipeline/io.hpp"
#include "json.hpp"

namespace fs = std::filesystem;

namespace gencad::pipeline {

namespace {

constexpr double kPi = std::numbers::pi;

using Loop = std::vector<CadCommand>;

Loop rect_loop(double w, double h) {
  return {CadCommand::sol(), CadCommand::line(w, 0.0), CadCommand::line(w, h), CadCommand::line(0.0, h),
          CadCommand::line(0.0, 0.0)};
}

// regular k-gon through the origin, centered at (r, 0)
Loop polygon_loop(int k, double r) {
  Loop loop{CadCommand::sol()};
  for (int j = 1; j <= k; ++j) {
    const double a = kPi + 2.0 * kPi * j / k;
    loop.push_back(j == k ? CadCommand::line(0.0, 0.0) : CadCommand::line(r + r * std::cos(a), r * std::sin(a)));
  }
  return loop;
}

Loop d_loop(double w) {
  return {CadCommand::sol(), CadCommand::line(w, 0.0), CadCommand::arc(0.0, 0.0, kPi, true)};
}

Loop stadium_loop(double w, double h) {
  return {CadCommand::sol(), CadCommand::line(w, 0.0), CadCommand::arc(w, h, kPi, true), CadCommand::line(0.0, h),
          CadCommand::arc(0.0, 0.0, kPi, true)};
}

// rectangle whose top edge bulges outward
Loop arch_loop(double w, double h, double sweep) {
  return {CadCommand::sol(), CadCommand::line(w, 0.0), CadCommand::line(w, h), CadCommand::arc(0.0, h, sweep, true),
          CadCommand::line(0.0, 0.0)};
}

Loop circle_loop(double cx, double cy, double r) { return {CadCommand::sol(), CadCommand::circle(cx, cy, r)}; }

void append(std::vector<CadCommand>& out, const Loop& loop) { out.insert(out.end(), loop.begin(), loop.end()); }

// One profile: an outer loop and sometimes a circular hole.
std::vector<CadCommand> random_profile(Rng& rng) {
  std::vector<CadCommand> out;
  const double u = rng.uniform();
  double hole_cx = 0.0;
  double hole_cy = 0.0;
  double hole_room = 0.0;
  if (u < 0.3) {
    const double w = rng.uniform(0.3, 1.0);
    const double h = rng.uniform(0.3, 1.0);
    append(out, rect_loop(w, h));
    hole_cx = 0.5 * w;
    hole_cy = 0.5 * h;
    hole_room = 0.5 * std::min(w, h);
  } else if (u < 0.45) {
    const double r = rng.uniform(0.25, 0.5);
    append(out, polygon_loop(3 + static_cast<int>(rng.index(4)), r));
    hole_cx = r;
    hole_room = 0.5 * r;
  } else if (u < 0.7) {
    const double cx = rng.uniform(-0.3, 0.3);
    const double cy = rng.uniform(-0.3, 0.3);
    const double r = rng.uniform(0.2, 0.6);
    append(out, circle_loop(cx, cy, r));
    hole_cx = cx;
    hole_cy = cy;
    hole_room = r;
  } else if (u < 0.8) {
    const double w = rng.uniform(0.4, 1.0);
    append(out, d_loop(w));
    hole_cx = 0.5 * w;
    hole_cy = 0.2 * w;
    hole_room = 0.25 * w;
  } else if (u < 0.9) {
    const double w = rng.uniform(0.3, 0.8);
    const double h = rng.uniform(0.2, 0.5);
    append(out, stadium_loop(w, h));
    hole_cx = 0.5 * w;
    hole_cy = 0.5 * h;
    hole_room = 0.5 * h;
  } else {
    const double w = rng.uniform(0.4, 1.0);
    const double h = rng.uniform(0.3, 0.8);
    append(out, arch_loop(w, h, rng.uniform(kPi / 6.0, kPi / 2.0)));
    hole_cx = 0.5 * w;
    hole_cy = 0.5 * h;
    hole_room = 0.5 * std::min(w, h);
  }
  if (hole_room > 0.15 && rng.bernoulli(0.3)) {
    append(out, circle_loop(hole_cx, hole_cy, hole_room * rng.uniform(0.3, 0.6)));
  }
  return out;
}

CadCommand random_extrude(Rng& rng, BooleanOp op, bool first) {
  double theta = 0.0;
  double phi = kPi;
  double gamma = kPi;
  if (!first && rng.bernoulli(0.3)) {
    // side planes; pi/2 is not a grid level, so these end up tilted by half a step
    theta = 0.5 * kPi;
    phi = rng.bernoulli(0.5) ? 0.5 * kPi : 0.0;
  }
  const double span = first ? 0.3 : 0.5;
  const double px = rng.uniform(-span, span);
  const double py = rng.uniform(-span, span);
  const double pz = rng.uniform(-span, span);
  const double s = rng.uniform(0.6, 1.2);
  const double e1 = rng.uniform(0.1, 0.8);
  const bool two = rng.bernoulli(0.25);
  const double e2 = two ? rng.uniform(0.1, 0.5) : 0.0;
  return CadCommand::extrude(theta, phi, gamma, px, py, pz, s, e1, e2, op, two ? Sidedness::Two : Sidedness::One);
}

BooleanOp random_op(Rng& rng) {
  const double u = rng.uniform();
  if (u < 0.55) return BooleanOp::Join;
  if (u < 0.9) return BooleanOp::Cut;
  return BooleanOp::Intersect;
}

int extrude_budget(Rng& rng, int difficulty) {
  if (difficulty <= 0) return 1;
  if (difficulty == 1) return 1 + static_cast<int>(rng.index(2));
  const double u = rng.uniform();
  return u < 0.35 ? 1 : u < 0.65 ? 2 : u < 0.85 ? 3 : 4;
}

CadSequence finish(std::vector<CadCommand> body, int padded_len) {
  CadSequence seq;
  seq.commands = std::move(body);
  seq.commands.push_back(CadCommand::eos());
  seq.padded_len = padded_len;
  return snap_to_grid(seq);
}

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

std::string model_id(std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "m%06zu", i);
  return buf;
}

std::vector<std::string> string_list(const nlohmann::json& j, const char* key) {
  std::vector<std::string> out;
  if (j.contains(key)) {
    for (const auto& v : j.at(key)) out.push_back(v.get<std::string>());
  }
  return out;
}

}  // namespace

CadSequence synth_program(Rng& rng, int difficulty, int padded_len) {
  constexpr int kCheckResolution = 32;
  for (int attempt = 0; attempt < 1000; ++attempt) {
    const int budget = extrude_budget(rng, difficulty);
    std::vector<CadCommand> body;
    CadSequence accepted;
    int steps = 0;
    for (int tries = 0; steps < budget && tries < 4 * budget; ++tries) {
      auto trial = body;
      append(trial, random_profile(rng));
      trial.push_back(random_extrude(rng, steps == 0 ? BooleanOp::New : random_op(rng), steps == 0));
      if (static_cast<int>(trial.size()) + 1 > padded_len) break;
      auto candidate = finish(trial, padded_len);
      if (!check_program(candidate, kCheckResolution).valid()) {
        if (steps == 0) break;
        continue;
      }
      body = std::move(trial);
      accepted = std::move(candidate);
      ++steps;
    }
    if (steps > 0 && check_program(accepted).valid()) return accepted;
  }
  throw GeometryError("synthetic generator: no valid program after 1000 attempts");
}

std::vector<CadSequence> synth_programs(const SynthOptions& options) {
  std::vector<CadSequence> out(options.count);
  parallel_for(0, options.count, [&](std::size_t i) {
    Rng rng(splitmix(options.seed ^ splitmix(i)));
    out[i] = synth_program(rng, options.difficulty, options.padded_len);
  });
  return out;
}

// ---- manifest ---------------------------------------------------------------

const std::vector<ManifestEntry>& DatasetManifest::split(const std::string& name) const {
  const auto it = splits.find(name);
  if (it == splits.end()) throw ConfigError("manifest has no split '" + name + "'");
  return it->second;
}

std::string DatasetManifest::path(const std::string& relative) const { return (fs::path(root) / relative).string(); }

std::size_t DatasetManifest::size() const {
  std::size_t n = 0;
  for (const auto& [name, entries] : splits) n += entries.size();
  return n;
}

std::string DatasetManifest::to_json() const {
  nlohmann::ordered_json root;
  root["format"] = "gencad-manifest-1";
  root["seed"] = seed;
  root["difficulty"] = difficulty;
  root["padded_len"] = padded_len;
  root["image_size"] = image_size;
  nlohmann::ordered_json sp = nlohmann::ordered_json::object();
  for (const auto& name : kSplitNames) {
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    const auto it = splits.find(name);
    if (it != splits.end()) {
      for (const auto& e : it->second) {
        nlohmann::ordered_json j;
        j["model_id"] = e.model_id;
        j["sequence"] = e.sequence;
        j["variants"] = e.variants;
        j["variant_sequences"] = e.variant_sequences;
        j["renders"] = e.renders;
        j["sketches"] = e.sketches;
        arr.push_back(std::move(j));
      }
    }
    sp[name] = std::move(arr);
  }
  root["splits"] = std::move(sp);
  return root.dump(2) + "\n";
}

DatasetManifest DatasetManifest::from_json(const std::string& text, const std::string& root) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("manifest: ") + e.what());
  }
  DatasetManifest m;
  m.root = root;
  try {
    m.seed = j.value("seed", std::uint64_t{0});
    m.difficulty = j.value("difficulty", 0);
    m.padded_len = j.value("padded_len", kDefaultPaddedLength);
    m.image_size = j.value("image_size", 0);
    std::set<std::string> seen;
    for (const auto& [name, arr] : j.at("splits").items()) {
      if (std::find(kSplitNames.begin(), kSplitNames.end(), name) == kSplitNames.end()) {
        throw ParseError("manifest: unknown split '" + name + "'");
      }
      auto& entries = m.splits[name];
      for (const auto& e : arr) {
        ManifestEntry me;
        me.model_id = e.at("model_id").get<std::string>();
        me.sequence = e.at("sequence").get<std::string>();
        if (e.contains("variants")) me.variants = e.at("variants").get<std::vector<int>>();
        me.variant_sequences = string_list(e, "variant_sequences");
        me.renders = string_list(e, "renders");
        me.sketches = string_list(e, "sketches");
        if (me.renders.size() != me.variants.size() || me.sketches.size() != me.variants.size() ||
            me.variant_sequences.size() != me.variants.size()) {
          throw ParseError("manifest: variant lists of " + me.model_id + " differ in length");
        }
        if (!seen.insert(me.model_id).second) throw ParseError("manifest: model " + me.model_id + " listed twice");
        entries.push_back(std::move(me));
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("manifest: ") + e.what());
  }
  return m;
}

DatasetManifest DatasetManifest::load(const std::string& manifest_path) {
  const fs::path p(manifest_path);
  const std::string root = fs::is_directory(p) ? p.string() : p.parent_path().string();
  const std::string file = fs::is_directory(p) ? (p / "manifest.json").string() : p.string();
  auto m = from_json(read_text(file), root.empty() ? "." : root);
  for (const auto& [name, entries] : m.splits) {
    for (const auto& e : entries) {
      std::vector<const std::string*> refs{&e.sequence};
      for (const auto& v : {&e.variant_sequences, &e.renders, &e.sketches}) {
        for (const auto& r : *v) refs.push_back(&r);
      }
      for (const auto* r : refs) {
        if (!fs::exists(m.path(*r))) throw ConfigError("manifest references missing file " + m.path(*r));
      }
    }
  }
  return m;
}

void DatasetManifest::save() const { write_text(file(), to_json()); }

std::uint64_t DatasetManifest::hash() const {
  const auto text = to_json();
  return nn::fnv1a(text.data(), text.size());
}

DatasetManifest synth_dataset(const std::string& out_dir, const SynthOptions& options, const SplitRatios& ratios) {
  const double total = ratios.train + ratios.val + ratios.test;
  if (!(ratios.train >= 0 && ratios.val >= 0 && ratios.test >= 0 && total > 0)) {
    throw ConfigError("split ratios must be non-negative with a positive sum");
  }
  const auto programs = synth_programs(options);
  fs::create_directories(fs::path(out_dir) / "sequences");

  DatasetManifest m;
  m.root = out_dir;
  m.seed = options.seed;
  m.difficulty = options.difficulty;
  m.padded_len = options.padded_len;

  std::vector<std::size_t> order(programs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(splitmix(options.seed ^ 0x5eed5eedull));
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
  const auto n = static_cast<double>(programs.size());
  const auto n_train = static_cast<std::size_t>(std::llround(n * ratios.train / total));
  const auto n_val = std::min(programs.size() - n_train, static_cast<std::size_t>(std::llround(n * ratios.val / total)));
  for (const auto& name : kSplitNames) m.splits[name];

  std::vector<EncodedSequence> encoded;
  encoded.reserve(programs.size());
  for (std::size_t i = 0; i < programs.size(); ++i) {
    const std::string id = model_id(i);
    const std::string rel = "sequences/" + id + ".json";
    write_text(m.path(rel), to_json(programs[i]));
    encoded.push_back(encode_sequence(programs[i]));
  }
  for (std::size_t k = 0; k < order.size(); ++k) {
    const std::string& split = k < n_train ? kSplitNames[0] : k < n_train + n_val ? kSplitNames[1] : kSplitNames[2];
    ManifestEntry e;
    e.model_id = model_id(order[k]);
    e.sequence = "sequences/" + e.model_id + ".json";
    m.splits[split].push_back(std::move(e));
  }
  for (auto& [name, entries] : m.splits) {
    std::sort(entries.begin(), entries.end(),
              [](const ManifestEntry& a, const ManifestEntry& b) { return a.model_id < b.model_id; });
  }
  std::ofstream gcsq(m.path("corpus.gcsq"), std::ios::binary);
  if (!gcsq) throw Error("cannot write " + m.path("corpus.gcsq"));
  write_gcsq(gcsq, encoded);
  gcsq.close();
  m.save();
  return m;
}

CadSequence load_program(const DatasetManifest& m, const std::string& relative) {
  return from_json(read_text(m.path(relative)));
}

// ---- rendering --------------------------------------------------------------

RenderSummary render_dataset(DatasetManifest& manifest, const RenderDatasetOptions& options) {
  fs::create_directories(fs::path(manifest.root) / "renders");
  fs::create_directories(fs::path(manifest.root) / "sketches");
  std::vector<ManifestEntry*> entries;
  for (const auto& name : kSplitNames) {
    auto it = manifest.splits.find(name);
    if (it == manifest.splits.end()) continue;
    for (auto& e : it->second) entries.push_back(&e);
  }
  std::vector<std::vector<DroppedVariant>> drops(entries.size());
  RenderOptions ro;
  ro.size = options.image_size;
  parallel_for(0, entries.size(), [&](std::size_t i) {
    auto& e = *entries[i];
    const auto variants = scale_variants(load_program(manifest, e.sequence), options.factors);
    e.variants.clear();
    e.variant_sequences.clear();
    e.renders.clear();
    e.sketches.clear();
    for (const auto& v : variants.kept) {
      const std::string stem = e.model_id + "_" + std::to_string(v.index);
      const auto render = render_isometric(execute(v.sequence), ro);
      const auto sketch = make_sketch(render, options.sketch);
      e.variants.push_back(v.index);
      e.variant_sequences.push_back("sequences/" + stem + ".json");
      e.renders.push_back("renders/" + stem + ".pgm");
      e.sketches.push_back("sketches/" + stem + "_sketch.pgm");
      write_text(manifest.path(e.variant_sequences.back()), to_json(v.sequence));
      save_pgm(manifest.path(e.renders.back()), render);
      save_pgm(manifest.path(e.sketches.back()), sketch);
    }
    drops[i] = variants.dropped;
  });

  RenderSummary summary;
  summary.models = entries.size();
  summary.drop_log = "drop_log.csv";
  std::ostringstream log;
  log << "model_id,variant,kx,ky,kz,reason\n";
  for (std::size_t i = 0; i < entries.size(); ++i) {
    summary.kept += entries[i]->variants.size();
    for (const auto& d : drops[i]) {
      ++summary.dropped;
      log << entries[i]->model_id << ',' << d.index << ',' << d.factor.kx << ',' << d.factor.ky << ','
          << d.factor.kz << ',' << csv_quote(d.reason) << '\n';
    }
  }
  write_text(manifest.path(summary.drop_log), log.str());
  manifest.image_size = options.image_size;
  manifest.save();
  return summary;
}

}  // namespace gencad::pipeline
