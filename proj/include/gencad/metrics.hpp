#pragma once

// Reconstruction accuracy, chamfer distance, invalid ratio, point-cloud set
// metrics (COV, MMD, JSD) and the Frechet distance on latent embeddings.

#include <map>
#include <string>
#include <vector>

#include "gencad/cad_lang.hpp"
#include "gencad/mesh.hpp"

namespace gencad {

using MatrixXd = Eigen::MatrixXd;

struct ReconAccuracy {
  double cmd = 0.0;    // mu_cmd
  double param = 0.0;  // mu_param
  std::size_t param_sequences = 0;  // sequences with at least one matched active slot
};

/// Per-sequence type accuracy over the ground-truth program length (through
/// its EOS), averaged over sequences.
double cmd_accuracy(const std::vector<EncodedSequence>& pred, const std::vector<EncodedSequence>& gt);
/// Fraction of active ground-truth slots with |p - p_hat| < eta among
/// positions whose type matched, averaged over sequences having such slots.
double param_accuracy(const std::vector<EncodedSequence>& pred, const std::vector<EncodedSequence>& gt,
                      int eta = 3);
ReconAccuracy recon_accuracy(const std::vector<EncodedSequence>& pred, const std::vector<EncodedSequence>& gt,
                             int eta = 3);

/// Static 3-d tree over a point set; nearest squared distance queries.
class KdTree {
 public:
  explicit KdTree(const std::vector<Vec3>& points);
  double nearest_sq(const Vec3& q) const;
  std::size_t size() const { return pts_.size(); }

 private:
  struct Node {
    int point = -1;
    int axis = 0;
    int left = -1;
    int right = -1;
  };
  int build(std::vector<int>& idx, int lo, int hi, int depth);
  void search(int node, const Vec3& q, double& best) const;

  std::vector<Vec3> pts_;
  std::vector<Node> nodes_;
  int root_ = -1;
};

/// mean_x min_y |x-y|^2 + mean_y min_x |x-y|^2 using k-d trees.
double chamfer(const PointCloud& x, const PointCloud& y);
/// O(|X||Y|) reference.
double chamfer_brute(const PointCloud& x, const PointCloud& y);

/// Fraction of programs failing the grammar check or producing no solid.
double invalid_ratio(const std::vector<CadSequence>& programs);

/// d_CD for every (G_i, S_j): rows index G, columns index S.
MatrixXd chamfer_matrix(const std::vector<PointCloud>& g, const std::vector<PointCloud>& s, bool brute = false);

/// COV(S, G) = |{argmin_{Y in S} d(X, Y) : X in G}| / |S|; ties go to the lowest index.
double coverage(const MatrixXd& d_gs);
/// MMD(S, G) = mean over Y in S of min over X in G of d(X, Y).
double mmd(const MatrixXd& d_gs);

/// Jensen-Shannon divergence (natural log) of the occupancy histograms of
/// two point-cloud sets on a grid^3 partition of [-1, 1]^3.
double jsd(const std::vector<PointCloud>& s, const std::vector<PointCloud>& g, int grid = 28);
double jsd_histograms(const std::vector<double>& p, const std::vector<double>& q);

/// Cyclic Jacobi eigen-decomposition of a symmetric matrix.
struct SymEigen {
  Eigen::VectorXd values;
  MatrixXd vectors;  // columns
  int sweeps = 0;
};
SymEigen jacobi_eigen(const MatrixXd& a, double tol = 1e-10, int max_sweeps = 100);
/// Square root of a symmetric PSD matrix; negative eigenvalues are clipped to
/// zero, and those beyond round-off (1e-10 of the largest) are counted in
/// `clipped` when given.
MatrixXd sqrtm_psd(const MatrixXd& a, int* clipped = nullptr);

struct FidResult {
  double value = 0.0;
  int clipped_eigenvalues = 0;
};
/// |mu_s - mu_g|^2 + tr(S_s + S_g - 2 (S_s S_g)^{1/2}) with 1/(n-1)
/// covariances; rows are samples.
FidResult fid(const MatrixXd& emb_s, const MatrixXd& emb_g);

/// A metric value with its protocol and per-repeat values.
struct MetricReport {
  std::string name;
  std::vector<double> repeats;
  std::map<std::string, std::string> protocol;

  double mean() const;
  double stddev() const;  // sample standard deviation, 0 for a single repeat
};

}  // namespace gencad
