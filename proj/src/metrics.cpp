#include "gencad/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <numeric>

#include "gencad/geometry.hpp"
#include "gencad/error.hpp"
#include "gencad/parallel.hpp"

namespace gencad {

namespace {

void check_aligned(const std::vector<EncodedSequence>& pred, const std::vector<EncodedSequence>& gt) {
  if (pred.size() != gt.size()) {
    throw ShapeError("accuracy: " + std::to_string(pred.size()) + " predictions for " + std::to_string(gt.size()) +
                     " references");
  }
  if (gt.empty()) throw ShapeError("accuracy: empty set");
  for (std::size_t k = 0; k < gt.size(); ++k) {
    if (pred[k].size() != gt[k].size()) {
      throw ShapeError("accuracy: sequence " + std::to_string(k) + " has " + std::to_string(pred[k].size()) +
                       " rows, reference has " + std::to_string(gt[k].size()));
    }
  }
}

}  // namespace

ReconAccuracy recon_accuracy(const std::vector<EncodedSequence>& pred, const std::vector<EncodedSequence>& gt,
                             int eta) {
  check_aligned(pred, gt);
  ReconAccuracy acc;
  double param_sum = 0.0;
  for (std::size_t k = 0; k < gt.size(); ++k) {
    const int n_c = program_length(gt[k]);
    int type_hits = 0;
    int slots = 0;
    int slot_hits = 0;
    for (int i = 0; i < n_c; ++i) {
      const auto& t = gt[k][static_cast<std::size_t>(i)];
      const auto& p = pred[k][static_cast<std::size_t>(i)];
      if (t[0] != p[0]) continue;
      ++type_hits;
      const auto layout = layout_of(static_cast<CommandType>(t[0]));
      for (int j = 0; j < kNumParams; ++j) {
        if (!layout.active.test(static_cast<std::size_t>(j))) continue;
        ++slots;
        const auto jj = static_cast<std::size_t>(1 + j);
        if (std::abs(static_cast<int>(t[jj]) - static_cast<int>(p[jj])) < eta) ++slot_hits;
      }
    }
    acc.cmd += static_cast<double>(type_hits) / n_c;
    if (slots > 0) {
      param_sum += static_cast<double>(slot_hits) / slots;
      ++acc.param_sequences;
    }
  }
  acc.cmd /= static_cast<double>(gt.size());
  acc.param = acc.param_sequences ? param_sum / static_cast<double>(acc.param_sequences) : 0.0;
  return acc;
}

double cmd_accuracy(const std::vector<EncodedSequence>& pred, const std::vector<EncodedSequence>& gt) {
  return recon_accuracy(pred, gt).cmd;
}

double param_accuracy(const std::vector<EncodedSequence>& pred, const std::vector<EncodedSequence>& gt, int eta) {
  return recon_accuracy(pred, gt, eta).param;
}

// ---- k-d tree ---------------------------------------------------------------

KdTree::KdTree(const std::vector<Vec3>& points) : pts_(points) {
  std::vector<int> idx(pts_.size());
  std::iota(idx.begin(), idx.end(), 0);
  nodes_.reserve(pts_.size());
  root_ = build(idx, 0, static_cast<int>(idx.size()), 0);
}

int KdTree::build(std::vector<int>& idx, int lo, int hi, int depth) {
  if (lo >= hi) return -1;
  const int axis = depth % 3;
  const int mid = lo + (hi - lo) / 2;
  std::nth_element(idx.begin() + lo, idx.begin() + mid, idx.begin() + hi,
                   [&](int a, int b) { return pts_[static_cast<std::size_t>(a)][axis] < pts_[static_cast<std::size_t>(b)][axis]; });
  const int id = static_cast<int>(nodes_.size());
  nodes_.push_back({idx[static_cast<std::size_t>(mid)], axis, -1, -1});
  const int l = build(idx, lo, mid, depth + 1);
  const int r = build(idx, mid + 1, hi, depth + 1);
  nodes_[static_cast<std::size_t>(id)].left = l;
  nodes_[static_cast<std::size_t>(id)].right = r;
  return id;
}

void KdTree::search(int node, const Vec3& q, double& best) const {
  if (node < 0) return;
  const Node& n = nodes_[static_cast<std::size_t>(node)];
  const Vec3& p = pts_[static_cast<std::size_t>(n.point)];
  best = std::min(best, (p - q).squaredNorm());
  const double diff = q[n.axis] - p[n.axis];
  const int near = diff < 0 ? n.left : n.right;
  const int far = diff < 0 ? n.right : n.left;
  search(near, q, best);
  if (diff * diff < best) search(far, q, best);
}

double KdTree::nearest_sq(const Vec3& q) const {
  if (root_ < 0) throw NumericError("nearest neighbour query on an empty tree");
  double best = std::numeric_limits<double>::infinity();
  search(root_, q, best);
  return best;
}

double chamfer(const PointCloud& x, const PointCloud& y) {
  if (x.empty() || y.empty()) throw NumericError("chamfer distance of an empty cloud");
  const KdTree tx(x.points);
  const KdTree ty(y.points);
  double a = 0.0;
  for (const auto& p : x.points) a += ty.nearest_sq(p);
  double b = 0.0;
  for (const auto& p : y.points) b += tx.nearest_sq(p);
  return a / static_cast<double>(x.size()) + b / static_cast<double>(y.size());
}

double chamfer_brute(const PointCloud& x, const PointCloud& y) {
  if (x.empty() || y.empty()) throw NumericError("chamfer distance of an empty cloud");
  auto one_way = [](const PointCloud& from, const PointCloud& to) {
    double s = 0.0;
    for (const auto& p : from.points) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& q : to.points) best = std::min(best, (p - q).squaredNorm());
      s += best;
    }
    return s / static_cast<double>(from.size());
  };
  return one_way(x, y) + one_way(y, x);
}

double invalid_ratio(const std::vector<CadSequence>& programs) {
  if (programs.empty()) throw NumericError("invalid ratio of an empty set");
  std::vector<char> bad(programs.size(), 0);
  parallel_for(0, programs.size(), [&](std::size_t i) { bad[i] = check_program(programs[i]).valid() ? 0 : 1; });
  return static_cast<double>(std::count(bad.begin(), bad.end(), 1)) / static_cast<double>(programs.size());
}

// ---- set metrics ------------------------------------------------------------

MatrixXd chamfer_matrix(const std::vector<PointCloud>& g, const std::vector<PointCloud>& s, bool brute) {
  if (g.empty() || s.empty()) throw NumericError("set metric on an empty set");
  MatrixXd d(static_cast<Eigen::Index>(g.size()), static_cast<Eigen::Index>(s.size()));
  if (brute) {
    for (std::size_t i = 0; i < g.size(); ++i) {
      for (std::size_t j = 0; j < s.size(); ++j) {
        d(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = chamfer_brute(g[i], s[j]);
      }
    }
    return d;
  }
  std::vector<KdTree> tg, ts;
  tg.reserve(g.size());
  ts.reserve(s.size());
  for (const auto& c : g) {
    if (c.empty()) throw NumericError("chamfer distance of an empty cloud");
    tg.emplace_back(c.points);
  }
  for (const auto& c : s) {
    if (c.empty()) throw NumericError("chamfer distance of an empty cloud");
    ts.emplace_back(c.points);
  }
  const std::size_t total = g.size() * s.size();
  parallel_for(0, total, [&](std::size_t k) {
    const std::size_t i = k / s.size();
    const std::size_t j = k % s.size();
    double a = 0.0;
    for (const auto& p : g[i].points) a += ts[j].nearest_sq(p);
    double b = 0.0;
    for (const auto& p : s[j].points) b += tg[i].nearest_sq(p);
    d(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
        a / static_cast<double>(g[i].size()) + b / static_cast<double>(s[j].size());
  });
  return d;
}

double coverage(const MatrixXd& d_gs) {
  if (d_gs.size() == 0) throw NumericError("coverage of an empty set");
  std::vector<char> hit(static_cast<std::size_t>(d_gs.cols()), 0);
  for (Eigen::Index i = 0; i < d_gs.rows(); ++i) {
    Eigen::Index j = 0;
    d_gs.row(i).minCoeff(&j);
    hit[static_cast<std::size_t>(j)] = 1;
  }
  return static_cast<double>(std::count(hit.begin(), hit.end(), 1)) / static_cast<double>(d_gs.cols());
}

double mmd(const MatrixXd& d_gs) {
  if (d_gs.size() == 0) throw NumericError("MMD of an empty set");
  double s = 0.0;
  for (Eigen::Index j = 0; j < d_gs.cols(); ++j) s += d_gs.col(j).minCoeff();
  return s / static_cast<double>(d_gs.cols());
}

namespace {

std::vector<double> occupancy(const std::vector<PointCloud>& set, int grid) {
  std::vector<double> h(static_cast<std::size_t>(grid) * grid * grid, 0.0);
  std::size_t n = 0;
  auto cell = [grid](double v) { return std::clamp(static_cast<int>(std::floor((v + 1.0) * 0.5 * grid)), 0, grid - 1); };
  for (const auto& c : set) {
    for (const auto& p : c.points) {
      const auto idx = (static_cast<std::size_t>(cell(p.z())) * grid + static_cast<std::size_t>(cell(p.y()))) * grid +
                       static_cast<std::size_t>(cell(p.x()));
      h[idx] += 1.0;
      ++n;
    }
  }
  if (n == 0) throw NumericError("JSD of an empty point set");
  for (auto& v : h) v /= static_cast<double>(n);
  return h;
}

}  // namespace

double jsd_histograms(const std::vector<double>& p, const std::vector<double>& q) {
  if (p.size() != q.size()) throw ShapeError("jsd: histogram sizes differ");
  double kl_p = 0.0;
  double kl_q = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double m = 0.5 * (p[i] + q[i]);
    if (p[i] > 0.0) kl_p += p[i] * std::log(p[i] / m);
    if (q[i] > 0.0) kl_q += q[i] * std::log(q[i] / m);
  }
  return std::max(0.0, 0.5 * kl_p + 0.5 * kl_q);
}

double jsd(const std::vector<PointCloud>& s, const std::vector<PointCloud>& g, int grid) {
  if (grid < 1) throw ConfigError("jsd grid must be positive");
  if (s.empty() || g.empty()) throw NumericError("JSD of an empty set");
  return jsd_histograms(occupancy(s, grid), occupancy(g, grid));
}

// ---- Frechet distance ---------------------------------------------------------

SymEigen jacobi_eigen(const MatrixXd& a_in, double tol, int max_sweeps) {
  if (a_in.rows() != a_in.cols()) throw ShapeError("jacobi_eigen: matrix is not square");
  const Eigen::Index n = a_in.rows();
  MatrixXd a = 0.5 * (a_in + a_in.transpose());
  MatrixXd v = MatrixXd::Identity(n, n);
  SymEigen out;
  const double scale = std::max(a.cwiseAbs().maxCoeff(), 1e-300);
  for (out.sweeps = 0; out.sweeps < max_sweeps; ++out.sweeps) {
    double off = 0.0;
    for (Eigen::Index p = 0; p < n; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) off = std::max(off, std::abs(a(p, q)));
    }
    if (off <= tol * scale) break;
    for (Eigen::Index p = 0; p < n; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        if (std::abs(a(p, q)) <= 1e-300) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (Eigen::Index k = 0; k < n; ++k) {
          const double akp = a(k, p);
          const double akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double apk = a(p, k);
          const double aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double vkp = v(k, p);
          const double vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }
  out.values = a.diagonal();
  out.vectors = v;
  return out;
}

MatrixXd sqrtm_psd(const MatrixXd& a, int* clipped) {
  const auto e = jacobi_eigen(a);
  Eigen::VectorXd r(e.values.size());
  int neg = 0;
  const double floor = -1e-10 * std::max(e.values.cwiseAbs().maxCoeff(), 1e-300);
  for (Eigen::Index i = 0; i < r.size(); ++i) {
    if (e.values(i) < 0.0) {
      if (e.values(i) < floor) ++neg;
      r(i) = 0.0;
    } else {
      r(i) = std::sqrt(e.values(i));
    }
  }
  if (clipped) *clipped = neg;
  return e.vectors * r.asDiagonal() * e.vectors.transpose();
}

FidResult fid(const MatrixXd& s, const MatrixXd& g) {
  if (s.rows() < 2 || g.rows() < 2) throw NumericError("FID needs at least two samples per set");
  if (s.cols() != g.cols()) throw ShapeError("FID: embedding widths differ");
  auto moments = [](const MatrixXd& x, Eigen::RowVectorXd& mu, MatrixXd& cov) {
    mu = x.colwise().mean();
    const MatrixXd c = x.rowwise() - mu;
    cov = c.transpose() * c / static_cast<double>(x.rows() - 1);
  };
  Eigen::RowVectorXd mu_s, mu_g;
  MatrixXd cs, cg;
  moments(s, mu_s, cs);
  moments(g, mu_g, cg);
  FidResult r;
  int c1 = 0;
  int c2 = 0;
  const MatrixXd root_s = sqrtm_psd(cs, &c1);
  // tr (S_s S_g)^{1/2} = tr (S_s^{1/2} S_g S_s^{1/2})^{1/2}, the latter symmetric PSD
  const MatrixXd inner = root_s * cg * root_s;
  const auto e = jacobi_eigen(inner);
  double tr_root = 0.0;
  const double floor = -1e-10 * std::max(e.values.cwiseAbs().maxCoeff(), 1e-300);
  for (Eigen::Index i = 0; i < e.values.size(); ++i) {
    if (e.values(i) < 0.0) {
      if (e.values(i) < floor) ++c2;
    } else {
      tr_root += std::sqrt(e.values(i));
    }
  }
  r.clipped_eigenvalues = c1 + c2;
  if (r.clipped_eigenvalues > 0) {
    std::cerr << "warning: FID clipped " << r.clipped_eigenvalues << " negative eigenvalue(s) to zero\n";
  }
  r.value = std::max(0.0, (mu_s - mu_g).squaredNorm() + cs.trace() + cg.trace() - 2.0 * tr_root);
  return r;
}

double MetricReport::mean() const {
  if (repeats.empty()) return 0.0;
  return std::accumulate(repeats.begin(), repeats.end(), 0.0) / static_cast<double>(repeats.size());
}

double MetricReport::stddev() const {
  if (repeats.size() < 2) return 0.0;
  const double m = mean();
  double s = 0.0;
  for (double v : repeats) s += (v - m) * (v - m);
  return std::sqrt(s / static_cast<double>(repeats.size() - 1));
}

}  // namespace gencad
