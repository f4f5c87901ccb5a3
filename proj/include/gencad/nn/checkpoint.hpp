#pragma once

// GCKP1 checkpoint container:
//   "GCKP1", u32 config length + config text, u64 step, u32 tensor count,
//   then per tensor: u32 name length + name, u8 dtype (0 = f32, 1 = f64),
//   u32 rows, u32 cols, raw little-endian payload;
//   trailer "GCEND" + u64 FNV-1a hash of every preceding byte.

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "gencad/nn/optim.hpp"
#include "gencad/nn/tensor.hpp"

namespace gencad::nn {

struct StoredTensor {
  std::uint8_t dtype = 0;
  std::uint32_t rows = 0;
  std::uint32_t cols = 0;
  std::vector<char> bytes;
};

class Checkpoint {
 public:
  std::string config;
  std::uint64_t step = 0;
  std::map<std::string, StoredTensor> tensors;

  template <class T>
  void put(const std::string& name, const Mat<T>& value);
  /// Copies a stored tensor into `out`, converting dtype; throws ShapeError on mismatch.
  template <class T>
  void get(const std::string& name, Mat<T>& out) const;
  bool has(const std::string& name) const { return tensors.count(name) != 0; }

  /// Stores every parameter of the module under prefix.
  template <class T>
  void capture(Module<T>& module, const std::string& prefix = "");
  /// Loads every parameter of the module; missing names throw CheckpointError.
  template <class T>
  void restore(Module<T>& module, const std::string& prefix = "") const;
  template <class T>
  void capture_optimizer(Adam<T>& opt, const std::string& prefix = "optim");
  template <class T>
  void restore_optimizer(Adam<T>& opt, const std::string& prefix = "optim") const;

  void write(std::ostream& out) const;
  static Checkpoint read(std::istream& in);
  void save(const std::string& path) const;
  static Checkpoint load(const std::string& path);
};

/// FNV-1a over parameter names and raw values, used to verify frozen models.
template <class T>
std::uint64_t parameter_hash(Module<T>& module);

std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t h = 1469598103934665603ull);

}  // namespace gencad::nn
