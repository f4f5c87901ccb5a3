#pragma once

// Image-to-program retrieval over an index of CAD latents, and the batched
// top-1 evaluation protocol.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace gencad {

using RowMatrixXf = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Rows are unit-norm CAD latents (and optionally paired image latents).
class EmbeddingIndex {
 public:
  EmbeddingIndex() = default;
  /// Normalizes rows; ids must be unique.
  EmbeddingIndex(std::vector<std::string> ids, const RowMatrixXf& cad, const RowMatrixXf& image = {});

  std::size_t size() const { return ids_.size(); }
  int dim() const { return static_cast<int>(cad_.cols()); }
  const std::vector<std::string>& ids() const { return ids_; }
  const RowMatrixXf& cad() const { return cad_; }
  const RowMatrixXf& image() const { return image_; }
  bool has_image() const { return image_.rows() > 0; }

  // GCIX1: "GCIX1", u32 n, u32 d, u8 has_image, n ids (u32 len + bytes),
  // n*d float32 cad rows, then n*d float32 image rows when present.
  void write(std::ostream& out) const;
  static EmbeddingIndex read(std::istream& in);
  void save(const std::string& path) const;
  static EmbeddingIndex load(const std::string& path);

 private:
  std::vector<std::string> ids_;
  RowMatrixXf cad_;
  RowMatrixXf image_;
};

struct RetrievalHit {
  std::string id;
  double similarity = 0.0;
};

/// Top-k cosine similarities, descending; equal scores ordered by ascending id.
std::vector<RetrievalHit> retrieve(const Eigen::RowVectorXf& query, const EmbeddingIndex& index, std::size_t k);

struct ProtocolResult {
  int n_b = 0;
  int repeats = 0;
  std::uint64_t seed = 0;
  std::vector<double> per_repeat;  // top-1 accuracy in percent
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation over repeats
};

/// Per repeat: sample n_b distinct pairs, form the n_b x n_b image-to-CAD
/// cosine matrix, and score the fraction of image rows whose best CAD column
/// is their own pair (ties go to the lower batch position).
ProtocolResult eval_protocol(const RowMatrixXf& cad, const RowMatrixXf& image, int n_b, int repeats,
                             std::uint64_t seed);

}  // namespace gencad
