#include <Eigen/Eigenvalues>
#include <cmath>
#include <numbers>

#include "common/shapes.hpp"
#include "doctest.h"
#include "gencad/error.hpp"
#include "gencad/metrics.hpp"
#include "gencad/rng.hpp"

using namespace gencad;

namespace {

PointCloud random_cloud(std::size_t n, std::uint64_t seed, double shift = 0.0) {
  Rng rng(seed);
  PointCloud c;
  for (std::size_t i = 0; i < n; ++i) {
    c.points.emplace_back(rng.uniform(-1, 1) + shift, rng.uniform(-1, 1), rng.uniform(-1, 1));
  }
  return c;
}

EncodedSequence six_commands() {
  CadSequence s;
  s.commands = {CadCommand::sol(), CadCommand::line(0.5, 0.0), CadCommand::line(0.5, 0.5), CadCommand::line(0.0, 0.0),
                testing::plain_extrude(0.5), CadCommand::eos()};
  s.padded_len = 10;
  return encode_sequence(s);
}

}  // namespace

TEST_CASE("command and parameter accuracy definitions") {
  const auto gt = six_commands();
  CHECK(cmd_accuracy({gt}, {gt}) == 1.0);
  CHECK(param_accuracy({gt}, {gt}) == 1.0);

  auto wrong_type = gt;
  wrong_type[2][0] = static_cast<std::uint8_t>(CommandType::Arc);
  CHECK(cmd_accuracy({wrong_type}, {gt}) == doctest::Approx(5.0 / 6.0).epsilon(1e-15));

  // padding rows past the reference EOS are not scored
  auto tail = gt;
  tail[8][0] = static_cast<std::uint8_t>(CommandType::Circle);
  CHECK(cmd_accuracy({tail}, {gt}) == 1.0);

  // active slots: 3 lines x 2 + extrude 11 = 17; one slot off by exactly eta fails, eta - 1 passes
  auto off = gt;
  off[1][1] = static_cast<std::uint8_t>(off[1][1] + 3);
  CHECK(param_accuracy({off}, {gt}, 3) == doctest::Approx(16.0 / 17.0).epsilon(1e-15));
  CHECK(param_accuracy({off}, {gt}, 4) == 1.0);
  // a wrong type removes its slots from the denominator
  CHECK(param_accuracy({wrong_type}, {gt}, 3) == 1.0);
  CHECK_THROWS_AS(cmd_accuracy({gt}, {gt, gt}), ShapeError);
}

TEST_CASE("chamfer distance and k-d tree agree with brute force") {
  PointCloud a, b;
  a.points = {Vec3(0, 0, 0)};
  b.points = {Vec3(1, 0, 0)};
  CHECK(chamfer(a, b) == 2.0);
  const auto x = random_cloud(300, 1);
  CHECK(chamfer(x, x) == 0.0);
  double worst = 0.0;
  for (std::uint64_t k = 0; k < 100; ++k) {
    const auto p = random_cloud(150 + k, 10 + k);
    const auto q = random_cloud(120 + 2 * k, 500 + k, 0.3);
    const double fast = chamfer(p, q);
    const double slow = chamfer_brute(p, q);
    worst = std::max(worst, std::abs(fast - slow) / slow);
  }
  CHECK(worst <= 1e-9);
  CHECK_THROWS_AS(chamfer(a, PointCloud{}), NumericError);
}

TEST_CASE("invalid ratio counts grammar and kernel failures") {
  const auto cube = testing::cube(0.5);
  CHECK(invalid_ratio({cube, cube}) == 0.0);
  auto broken = cube;
  broken.commands.erase(broken.commands.begin() + 4);  // drop the closing line
  CHECK(invalid_ratio({cube, broken, cube, broken}) == 0.5);
  // grammar-valid program whose cut removes the whole body
  CadSequence empty = testing::cube(0.5);
  empty.commands.pop_back();
  for (const auto& c : testing::square_loop(0.9)) empty.commands.push_back(c);
  empty.commands.push_back(testing::plain_extrude(0.9, BooleanOp::Cut, -0.2, -0.2, -0.2));
  empty.commands.push_back(CadCommand::eos());
  REQUIRE(validate(empty).ok());
  CHECK(invalid_ratio({empty}) == 1.0);
}

TEST_CASE("coverage and minimum matching distance") {
  std::vector<PointCloud> g, s;
  for (std::uint64_t k = 0; k < 20; ++k) {
    g.push_back(random_cloud(100, k, 0.1 * static_cast<double>(k)));
    s.push_back(random_cloud(90, 100 + k, 0.1 * static_cast<double>(k) + 0.05));
  }
  const auto fast = chamfer_matrix(g, s);
  const auto slow = chamfer_matrix(g, s, true);
  CHECK((fast - slow).cwiseAbs().maxCoeff() == 0.0);
  CHECK(coverage(fast) == coverage(slow));
  CHECK(mmd(fast) == mmd(slow));

  const auto self = chamfer_matrix(g, g);
  CHECK(coverage(self) == 1.0);
  CHECK(mmd(self) == 0.0);

  // every reference nearest to the same generated shape
  std::vector<PointCloud> one_hot(5, random_cloud(50, 999, 50.0));
  one_hot[2] = random_cloud(50, 3);
  const auto d = chamfer_matrix(std::vector<PointCloud>(g.begin(), g.begin() + 4), one_hot);
  CHECK(coverage(d) == doctest::Approx(1.0 / 5.0));
  CHECK(mmd(d) >= 0.0);
}

TEST_CASE("jensen-shannon divergence on occupancy grids") {
  const std::vector<PointCloud> a = {random_cloud(500, 1)};
  const std::vector<PointCloud> b = {random_cloud(700, 2)};
  CHECK(jsd(a, a) == 0.0);
  CHECK(jsd(a, b) == jsd(b, a));
  PointCloud left, right;
  for (int i = 0; i < 50; ++i) {
    left.points.emplace_back(-0.9, -0.9 + 0.01 * i, 0.0);
    right.points.emplace_back(0.9, 0.0, 0.9 - 0.01 * i);
  }
  CHECK(jsd({left}, {right}) == doctest::Approx(std::numbers::ln2).epsilon(1e-15));
  const double j = jsd(a, b);
  CHECK(j >= 0.0);
  CHECK(j <= std::numbers::ln2);
}

TEST_CASE("jacobi eigen solver, matrix square root and frechet distance") {
  Eigen::MatrixXd d(2, 2);
  d << 4, 0, 0, 9;
  const auto r = sqrtm_psd(d);
  CHECK(r(0, 0) == doctest::Approx(2.0).epsilon(1e-14));
  CHECK(r(1, 1) == doctest::Approx(3.0).epsilon(1e-14));
  CHECK(std::abs(r(0, 1)) < 1e-14);

  Rng rng(4);
  Eigen::MatrixXd a(6, 6);
  for (int i = 0; i < 36; ++i) a.data()[i] = rng.normal();
  a = (a + a.transpose()).eval();
  const auto mine = jacobi_eigen(a);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ref(a);
  Eigen::VectorXd v = mine.values;
  std::sort(v.data(), v.data() + v.size());
  CHECK((v - ref.eigenvalues()).cwiseAbs().maxCoeff() < 1e-9);
  const Eigen::MatrixXd spd = a * a.transpose();
  const auto root = sqrtm_psd(spd);
  CHECK((root * root - spd).cwiseAbs().maxCoeff() < 1e-8);

  Eigen::MatrixXd e(300, 4);
  for (Eigen::Index i = 0; i < e.size(); ++i) e.data()[i] = rng.normal();
  CHECK(fid(e, e).value < 1e-6);

  const int n = 100000;
  Eigen::MatrixXd p(n, 1), q(n, 1);
  for (int i = 0; i < n; ++i) {
    p(i, 0) = rng.normal();
    q(i, 0) = 1.0 + rng.normal();
  }
  CHECK(fid(p, q).value == doctest::Approx(1.0).epsilon(0.05));
  CHECK_THROWS_AS(fid(p.topRows(1), q), NumericError);
}

TEST_CASE("metric report aggregates repeats") {
  MetricReport m{"cov", {0.5, 0.7, 0.6}, {{"eta", "3"}}};
  CHECK(m.mean() == doctest::Approx(0.6));
  CHECK(m.stddev() == doctest::Approx(0.1));
}
