#include <cmath>
#include <numbers>
#include <sstream>

#include "common/shapes.hpp"
#include "doctest.h"
#include "gencad/error.hpp"
#include "gencad/mesh.hpp"

using namespace gencad;
namespace gt = gencad::testing;

TEST_CASE("mesh area oracles at R=64") {
  const auto cube = extract_mesh(execute(gt::cube()), 64);
  CHECK(cube.area() == doctest::Approx(6.0).epsilon(0.03));
  const auto cyl = extract_mesh(execute(gt::cylinder()), 64);
  CHECK(cyl.area() == doctest::Approx(2.0 * std::numbers::pi * 0.5 + 2.0 * std::numbers::pi * 0.25).epsilon(0.03));
  CHECK(extract_mesh(SolidModel{}).empty());
}

TEST_CASE("mesh triangles face outward") {
  const auto solid = execute(gt::cube());
  const auto mesh = extract_mesh(solid, 24);
  int inward = 0;
  for (const auto& t : mesh.triangles) {
    const Vec3& a = mesh.vertices[static_cast<std::size_t>(t[0])];
    const Vec3& b = mesh.vertices[static_cast<std::size_t>(t[1])];
    const Vec3& c = mesh.vertices[static_cast<std::size_t>(t[2])];
    const Vec3 n = (b - a).cross(c - a);
    if (n.norm() < 1e-14) continue;
    const Vec3 centroid = (a + b + c) / 3.0;
    if (solid.sdf(centroid + 1e-3 * n.normalized()) < solid.sdf(centroid - 1e-3 * n.normalized())) ++inward;
  }
  CHECK(inward == 0);
}

TEST_CASE("surface samples") {
  const auto solid = execute(gt::cube());
  const auto cloud = sample_surface(solid, 2000, 9);
  CHECK(cloud.size() == 2000);
  const double cell = solid.bounds().extent().maxCoeff() / 64.0;
  for (const auto& p : cloud.points) CHECK(std::abs(solid.sdf(p)) <= 2.0 * cell);
  const auto again = sample_surface(solid, 2000, 9);
  CHECK(again.points == cloud.points);

  // Face histogram: chi-square against uniform, 5 dof, p > 0.01 -> statistic < 15.09.
  std::array<int, 6> counts{};
  for (const auto& p : cloud.points) {
    int best = 0;
    double best_d = 1e9;
    for (int f = 0; f < 6; ++f) {
      const double d = std::abs(p[f / 2] - (f % 2 == 0 ? 0.0 : 1.0));
      if (d < best_d) {
        best_d = d;
        best = f;
      }
    }
    ++counts[static_cast<std::size_t>(best)];
  }
  double chi2 = 0.0;
  for (int c : counts) chi2 += (c - 2000.0 / 6) * (c - 2000.0 / 6) / (2000.0 / 6);
  CHECK(chi2 < 15.09);
  CHECK_THROWS_WITH(sample_surface(SolidModel{}, 10, 0), doctest::Contains("cannot sample empty solid"));
}

TEST_CASE("normalize is idempotent") {
  const auto cloud = sample_surface(execute(gt::cylinder()), 500, 4, 32);
  const auto n1 = normalize(cloud);
  const auto n2 = normalize(n1);
  for (std::size_t i = 0; i < n1.size(); ++i) CHECK((n1.points[i] - n2.points[i]).norm() < 1e-9);
}

TEST_CASE("point cloud and mesh I/O") {
  const auto cloud = sample_surface(execute(gt::cube()), 50, 1, 16);
  std::stringstream xyz;
  write_xyz(xyz, cloud);
  const auto back = read_xyz(xyz);
  CHECK(back.points == cloud.points);
  std::stringstream bin;
  write_gcpc(bin, cloud);
  const auto bin_back = read_gcpc(bin);
  REQUIRE(bin_back.size() == cloud.size());
  CHECK((bin_back.points[3] - cloud.points[3]).norm() < 1e-6);
  std::stringstream bad("1 2\n");
  CHECK_THROWS_AS(read_xyz(bad), ParseError);
  std::stringstream trunc(bin.str().substr(0, 20));
  CHECK_THROWS_AS(read_gcpc(trunc), ParseError);

  const auto mesh = extract_mesh(execute(gt::cube()), 4);
  std::stringstream stl;
  write_stl_ascii(stl, mesh);
  CHECK(stl.str().rfind("solid gencad", 0) == 0);
  std::stringstream obj;
  write_obj(obj, mesh);
  CHECK(obj.str().find("f ") != std::string::npos);
}
