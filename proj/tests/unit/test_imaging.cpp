#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "common/shapes.hpp"
#include "doctest.h"
#include "gencad/error.hpp"
#include "gencad/imaging.hpp"

using namespace gencad;
namespace gt = gencad::testing;

TEST_CASE("isometric cube render shows three shaded faces") {
  const auto solid = execute(gt::cube());
  RenderOptions opt;
  opt.size = 96;
  const auto img = render_isometric(solid, opt);
  CHECK(img.width == 96);
  // Corners of the frame lie outside the projected hexagon.
  CHECK(img.at(0, 0) == 0.0f);
  CHECK(img.at(95, 95) == 0.0f);
  std::map<float, int> plateaus;
  for (float v : img.data) {
    if (v > 0.0f) ++plateaus[v];
  }
  int large = 0;
  for (const auto& [value, count] : plateaus) {
    if (count > 200) ++large;
  }
  CHECK(large == 3);
  CHECK(render_isometric(solid, opt) == img);
  CHECK_THROWS_AS(render_isometric(SolidModel{}, opt), GeometryError);
}

TEST_CASE("canny on synthetic images") {
  GrayImage flat(40, 40, 0.7f);
  const auto none = canny(flat);
  CHECK(none.sum() == 0.0);

  GrayImage step(40, 40, 0.0f);
  for (int y = 0; y < 40; ++y) {
    for (int x = 20; x < 40; ++x) step.at(x, y) = 1.0f;
  }
  const auto edges = canny(step);
  std::set<int> columns;
  for (int y = 8; y < 32; ++y) {
    for (int x = 0; x < 40; ++x) {
      if (edges.at(x, y) > 0.0f) columns.insert(x);
    }
  }
  CHECK(columns.size() == 1);
  CHECK((*columns.begin() == 19 || *columns.begin() == 20));
  for (float v : edges.data) CHECK((v == 0.0f || v == 1.0f));

  CHECK_THROWS_AS(canny(step, CannyParams{0.0, 0.1, 0.3}), RangeError);
  CHECK_THROWS_AS(canny(step, CannyParams{1.0, 0.3, 0.3}), RangeError);
  CHECK(make_sketch(GrayImage(30, 30, 0.0f)).sum() == 0.0);
}

TEST_CASE("gaussian blur preserves mass of interior images") {
  GrayImage img(64, 64, 0.0f);
  for (int y = 24; y < 40; ++y) {
    for (int x = 20; x < 44; ++x) img.at(x, y) = 1.0f;
  }
  const auto blurred = gaussian_blur(img, 1.5);
  CHECK(blurred.sum() == doctest::Approx(img.sum()).epsilon(0.005));
  CHECK_THROWS_AS(gaussian_blur(img, -1.0), RangeError);
}

TEST_CASE("encoder preprocessing") {
  const auto half = preprocess_for_encoder(GrayImage(448, 448, 0.5f));
  CHECK(half.width == 256);
  for (float v : half.data) CHECK(v == 0.0f);
  const auto ones = preprocess_for_encoder(GrayImage(300, 300, 1.0f));
  for (float v : ones.data) CHECK(v == 1.0f);

  GrayImage checker(448, 448);
  for (int y = 0; y < 448; ++y) {
    for (int x = 0; x < 448; ++x) checker.at(x, y) = ((x / 16 + y / 16) % 2) ? 1.0f : 0.0f;
  }
  const auto small = resize_bilinear(checker, 256, 256);
  CHECK(small.sum() / (256.0 * 256.0) == doctest::Approx(checker.sum() / (448.0 * 448.0)).epsilon(0.01));
  const auto pre = preprocess_for_encoder(checker);
  for (float v : pre.data) CHECK((v >= -1.0f && v <= 1.0f));
}

TEST_CASE("scale variants") {
  const auto cube = gt::cube(0.4);
  const auto identity = scale_variants(cube, {{1.0, 1.0, 1.0}});
  REQUIRE(identity.kept.size() == 1);
  CHECK(identity.kept[0].sequence == snap_to_grid(cube));

  const auto doubled = scale_variants(cube, {{2.0, 1.0, 1.0}});
  REQUIRE(doubled.kept.size() == 1);
  const auto v0 = volume_estimate(execute(cube), 400000, 1);
  const auto v1 = volume_estimate(execute(doubled.kept[0].sequence), 400000, 1);
  CHECK(v1.volume / v0.volume == doctest::Approx(2.0).epsilon(0.03));

  const auto tall = scale_variants(cube, {{1.0, 1.0, 3.0}});
  CHECK(tall.kept.empty());
  REQUIRE(tall.dropped.size() == 1);
  CHECK(tall.dropped[0].reason.find("e1") != std::string::npos);

  const auto all = scale_variants(gt::cylinder(0.3, 0.5), default_scale_factors());
  CHECK(all.kept.size() + all.dropped.size() == 5);
}

TEST_CASE("pgm round-trip") {
  GrayImage img(5, 3);
  for (std::size_t i = 0; i < img.data.size(); ++i) img.data[i] = static_cast<float>(i) / 15.0f;
  std::stringstream buf;
  write_pgm(buf, img);
  const auto back = read_pgm(buf);
  REQUIRE(back.width == 5);
  for (std::size_t i = 0; i < img.data.size(); ++i) CHECK(std::abs(back.data[i] - img.data[i]) <= 0.5f / 255.0f);
  std::stringstream bad("P2\n1 1\n255\n0");
  CHECK_THROWS_AS(read_pgm(bad), ParseError);
}
