#include "gencad/nn/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include "gencad/detail/binary_io.hpp"

namespace gencad::nn {

std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t h) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

namespace {

template <class T>
constexpr std::uint8_t dtype_of() {
  return sizeof(T) == 4 ? 0 : 1;
}

}  // namespace

template <class T>
void Checkpoint::put(const std::string& name, const Mat<T>& value) {
  StoredTensor t;
  t.dtype = dtype_of<T>();
  t.rows = static_cast<std::uint32_t>(value.rows());
  t.cols = static_cast<std::uint32_t>(value.cols());
  t.bytes.resize(static_cast<std::size_t>(value.size()) * sizeof(T));
  if (!t.bytes.empty()) std::memcpy(t.bytes.data(), value.data(), t.bytes.size());
  tensors[name] = std::move(t);
}

template <class T>
void Checkpoint::get(const std::string& name, Mat<T>& out) const {
  const auto it = tensors.find(name);
  if (it == tensors.end()) throw CheckpointError("checkpoint has no tensor '" + name + "'");
  const auto& t = it->second;
  if (t.rows != out.rows() || t.cols != out.cols()) {
    throw ShapeError("shape mismatch for '" + name + "': checkpoint " + shape_str(t.rows, t.cols) + ", model " +
                     shape_str(out.rows(), out.cols()));
  }
  const std::size_t n = static_cast<std::size_t>(t.rows) * t.cols;
  if (t.dtype == dtype_of<T>()) {
    if (n) std::memcpy(out.data(), t.bytes.data(), n * sizeof(T));
  } else if (t.dtype == 0) {
    for (std::size_t i = 0; i < n; ++i) {
      float v;
      std::memcpy(&v, t.bytes.data() + i * 4, 4);
      out.data()[i] = static_cast<T>(v);
    }
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      double v;
      std::memcpy(&v, t.bytes.data() + i * 8, 8);
      out.data()[i] = static_cast<T>(v);
    }
  }
}

template <class T>
void Checkpoint::capture(Module<T>& module, const std::string& prefix) {
  module.visit(prefix, [&](const std::string& name, Parameter<T>& p) { put(name, p.value); });
}

template <class T>
void Checkpoint::restore(Module<T>& module, const std::string& prefix) const {
  module.visit(prefix, [&](const std::string& name, Parameter<T>& p) { get(name, p.value); });
}

template <class T>
void Checkpoint::capture_optimizer(Adam<T>& opt, const std::string& prefix) {
  opt.visit_state([&](const std::string& name, Parameter<T>& p) { put(prefix + "." + name, p.value); });
  Mat<double> meta(1, 2);
  meta << static_cast<double>(opt.steps()), opt.lr();
  put(prefix + ".meta", meta);
}

template <class T>
void Checkpoint::restore_optimizer(Adam<T>& opt, const std::string& prefix) const {
  opt.visit_state([&](const std::string& name, Parameter<T>& p) { get(prefix + "." + name, p.value); });
  Mat<double> meta(1, 2);
  get(prefix + ".meta", meta);
  opt.set_steps(static_cast<std::int64_t>(meta(0, 0)));
  opt.set_lr(meta(0, 1));
}

void Checkpoint::write(std::ostream& out) const {
  std::ostringstream body;
  detail::write_magic(body, "GCKP1");
  detail::write_string(body, config);
  detail::write_pod<std::uint64_t>(body, step);
  detail::write_pod<std::uint32_t>(body, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    detail::write_string(body, name);
    detail::write_pod<std::uint8_t>(body, t.dtype);
    detail::write_pod<std::uint32_t>(body, t.rows);
    detail::write_pod<std::uint32_t>(body, t.cols);
    body.write(t.bytes.data(), static_cast<std::streamsize>(t.bytes.size()));
  }
  const std::string bytes = body.str();
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  detail::write_magic(out, "GCEND");
  detail::write_pod<std::uint64_t>(out, fnv1a(bytes.data(), bytes.size()));
}

Checkpoint Checkpoint::read(std::istream& in) {
  std::string all((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  constexpr std::size_t trailer = 5 + 8;
  if (all.size() < 5 || all.compare(0, 5, "GCKP1") != 0) throw CheckpointError("not a GCKP1 checkpoint (bad magic)");
  if (all.size() < 5 + trailer || all.compare(all.size() - trailer, 5, "GCEND") != 0) {
    throw CheckpointError("checkpoint truncated or corrupt: missing trailer");
  }
  const std::size_t body_size = all.size() - trailer;
  std::uint64_t stored_hash = 0;
  std::memcpy(&stored_hash, all.data() + body_size + 5, 8);
  if (stored_hash != fnv1a(all.data(), body_size)) throw CheckpointError("checkpoint corrupt: hash mismatch");

  std::istringstream body(all.substr(0, body_size));
  Checkpoint ck;
  try {
    detail::expect_magic(body, "GCKP1");
    ck.config = detail::read_string(body, "config");
    ck.step = detail::read_pod<std::uint64_t>(body, "step");
    const auto count = detail::read_pod<std::uint32_t>(body, "tensor count");
    for (std::uint32_t i = 0; i < count; ++i) {
      const std::string name = detail::read_string(body, "tensor name");
      StoredTensor t;
      t.dtype = detail::read_pod<std::uint8_t>(body, "dtype");
      if (t.dtype > 1) throw CheckpointError("checkpoint corrupt: unknown dtype for '" + name + "'");
      t.rows = detail::read_pod<std::uint32_t>(body, "rows");
      t.cols = detail::read_pod<std::uint32_t>(body, "cols");
      const std::size_t n = static_cast<std::size_t>(t.rows) * t.cols * (t.dtype == 0 ? 4 : 8);
      t.bytes.resize(n);
      body.read(t.bytes.data(), static_cast<std::streamsize>(n));
      if (static_cast<std::size_t>(body.gcount()) != n) throw CheckpointError("checkpoint truncated in '" + name + "'");
      ck.tensors.emplace(name, std::move(t));
    }
  } catch (const ParseError& e) {
    throw CheckpointError(std::string("checkpoint truncated or corrupt: ") + e.what());
  }
  return ck;
}

void Checkpoint::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot open " + path + " for writing");
  write(out);
  if (!out) throw CheckpointError("failed writing " + path);
}

Checkpoint Checkpoint::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("checkpoint not found: " + path);
  return read(in);
}

template <class T>
std::uint64_t parameter_hash(Module<T>& module) {
  std::uint64_t h = fnv1a(nullptr, 0);
  module.visit("", [&](const std::string& name, Parameter<T>& p) {
    h = fnv1a(name.data(), name.size(), h);
    h = fnv1a(p.value.data(), static_cast<std::size_t>(p.value.size()) * sizeof(T), h);
  });
  return h;
}

#define GENCAD_INSTANTIATE(T)                                                             \
  template void Checkpoint::put<T>(const std::string&, const Mat<T>&);                    \
  template void Checkpoint::get<T>(const std::string&, Mat<T>&) const;                    \
  template void Checkpoint::capture<T>(Module<T>&, const std::string&);                   \
  template void Checkpoint::restore<T>(Module<T>&, const std::string&) const;             \
  template void Checkpoint::capture_optimizer<T>(Adam<T>&, const std::string&);           \
  template void Checkpoint::restore_optimizer<T>(Adam<T>&, const std::string&) const;     \
  template std::uint64_t parameter_hash<T>(Module<T>&);

GENCAD_INSTANTIATE(float)
GENCAD_INSTANTIATE(double)
#undef GENCAD_INSTANTIATE

}  // namespace gencad::nn
