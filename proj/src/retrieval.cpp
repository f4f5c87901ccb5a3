#include "gencad/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

#include "gencad/detail/binary_io.hpp"
#include "gencad/rng.hpp"

namespace gencad {

namespace {

RowMatrixXf normalized(const RowMatrixXf& m) {
  RowMatrixXf out = m;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const double n = m.row(i).cast<double>().norm();
    if (n == 0.0) throw NumericError("cannot index a zero latent (row " + std::to_string(i) + ")");
    out.row(i) = (m.row(i).cast<double>() / n).cast<float>();
  }
  return out;
}

void write_rows(std::ostream& out, const RowMatrixXf& m) {
  out.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(float)));
}

RowMatrixXf read_rows(std::istream& in, std::uint32_t n, std::uint32_t d, const char* what) {
  RowMatrixXf m(n, d);
  const auto bytes = static_cast<std::streamsize>(m.size() * sizeof(float));
  in.read(reinterpret_cast<char*>(m.data()), bytes);
  if (in.gcount() != bytes) throw CheckpointError(std::string("GCIX1: truncated ") + what + " rows");
  return m;
}

}  // namespace

EmbeddingIndex::EmbeddingIndex(std::vector<std::string> ids, const RowMatrixXf& cad, const RowMatrixXf& image)
    : ids_(std::move(ids)) {
  if (static_cast<Eigen::Index>(ids_.size()) != cad.rows()) {
    throw ShapeError("index: " + std::to_string(ids_.size()) + " ids for " + std::to_string(cad.rows()) + " latents");
  }
  if (std::set<std::string>(ids_.begin(), ids_.end()).size() != ids_.size()) {
    throw ShapeError("index ids must be unique");
  }
  cad_ = normalized(cad);
  if (image.size() > 0) {
    if (image.rows() != cad.rows() || image.cols() != cad.cols()) throw ShapeError("index: image latents must match cad latents");
    image_ = normalized(image);
  }
}

void EmbeddingIndex::write(std::ostream& out) const {
  detail::write_magic(out, "GCIX1");
  detail::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(size()));
  detail::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(cad_.cols()));
  detail::write_pod<std::uint8_t>(out, has_image() ? 1 : 0);
  for (const auto& id : ids_) detail::write_string(out, id);
  write_rows(out, cad_);
  if (has_image()) write_rows(out, image_);
}

EmbeddingIndex EmbeddingIndex::read(std::istream& in) {
  try {
    detail::expect_magic(in, "GCIX1");
    const auto n = detail::read_pod<std::uint32_t>(in, "index size");
    const auto d = detail::read_pod<std::uint32_t>(in, "index width");
    const auto has_image = detail::read_pod<std::uint8_t>(in, "index flags");
    if (d == 0 || d > 65536 || n > (1u << 26)) throw CheckpointError("GCIX1: implausible header");
    EmbeddingIndex idx;
    idx.ids_.reserve(n);
    for (std::uint32_t i = 0; i < n; ++i) idx.ids_.push_back(detail::read_string(in, "index id", 4096));
    idx.cad_ = read_rows(in, n, d, "cad");
    if (has_image) idx.image_ = read_rows(in, n, d, "image");
    return idx;
  } catch (const ParseError& e) {
    throw CheckpointError(std::string("GCIX1: ") + e.what());
  }
}

void EmbeddingIndex::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  write(out);
}

EmbeddingIndex EmbeddingIndex::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  return read(in);
}

std::vector<RetrievalHit> retrieve(const Eigen::RowVectorXf& query, const EmbeddingIndex& index, std::size_t k) {
  if (query.size() != index.dim()) {
    throw ShapeError("query width " + std::to_string(query.size()) + " != index width " + std::to_string(index.dim()));
  }
  const double qn = query.cast<double>().norm();
  if (qn == 0.0) throw NumericError("zero query latent");
  const Eigen::RowVectorXd q = query.cast<double>() / qn;
  std::vector<RetrievalHit> hits(index.size());
  for (std::size_t i = 0; i < index.size(); ++i) {
    const double s = index.cad().row(static_cast<Eigen::Index>(i)).cast<double>().dot(q);
    hits[i] = {index.ids()[i], std::clamp(s, -1.0, 1.0)};
  }
  std::sort(hits.begin(), hits.end(), [](const RetrievalHit& a, const RetrievalHit& b) {
    return a.similarity != b.similarity ? a.similarity > b.similarity : a.id < b.id;
  });
  hits.resize(std::min(k, hits.size()));
  return hits;
}

ProtocolResult eval_protocol(const RowMatrixXf& cad, const RowMatrixXf& image, int n_b, int repeats,
                             std::uint64_t seed) {
  if (cad.rows() != image.rows() || cad.cols() != image.cols()) throw ShapeError("protocol: latent sets differ in shape");
  if (n_b < 1 || n_b > cad.rows()) {
    throw ConfigError("protocol: n_b = " + std::to_string(n_b) + " outside 1.." + std::to_string(cad.rows()));
  }
  if (repeats < 1) throw ConfigError("protocol: repeats must be positive");
  const RowMatrixXf c = normalized(cad);
  const RowMatrixXf im = normalized(image);
  ProtocolResult r;
  r.n_b = n_b;
  r.repeats = repeats;
  r.seed = seed;
  Rng rng(seed);
  std::vector<std::size_t> pool(static_cast<std::size_t>(cad.rows()));
  for (int rep = 0; rep < repeats; ++rep) {
    std::iota(pool.begin(), pool.end(), std::size_t{0});
    // partial Fisher-Yates: the first n_b entries are a uniform sample
    for (int i = 0; i < n_b; ++i) {
      const std::size_t j = static_cast<std::size_t>(i) + rng.index(pool.size() - static_cast<std::size_t>(i));
      std::swap(pool[static_cast<std::size_t>(i)], pool[j]);
    }
    RowMatrixXf bc(n_b, c.cols());
    RowMatrixXf bi(n_b, c.cols());
    for (int i = 0; i < n_b; ++i) {
      bc.row(i) = c.row(static_cast<Eigen::Index>(pool[static_cast<std::size_t>(i)]));
      bi.row(i) = im.row(static_cast<Eigen::Index>(pool[static_cast<std::size_t>(i)]));
    }
    const Eigen::MatrixXd sim = bi.cast<double>() * bc.cast<double>().transpose();
    int hits = 0;
    for (int i = 0; i < n_b; ++i) {
      Eigen::Index best = 0;
      sim.row(i).maxCoeff(&best);
      if (best == i) ++hits;
    }
    r.per_repeat.push_back(100.0 * hits / n_b);
  }
  r.mean = std::accumulate(r.per_repeat.begin(), r.per_repeat.end(), 0.0) / repeats;
  if (repeats > 1) {
    double s = 0.0;
    for (double v : r.per_repeat) s += (v - r.mean) * (v - r.mean);
    r.stddev = std::sqrt(s / (repeats - 1));
  }
  return r;
}

}  // namespace gencad
