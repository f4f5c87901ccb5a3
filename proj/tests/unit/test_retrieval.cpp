#include <sstream>

#include "doctest.h"
#include "gencad/error.hpp"
#include "gencad/retrieval.hpp"
#include "gencad/rng.hpp"

using namespace gencad;

namespace {

RowMatrixXf randn(int rows, int cols, std::uint64_t seed) {
  Rng rng(seed);
  RowMatrixXf m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<float>(rng.normal());
  return m;
}

std::vector<std::string> make_ids(int n) {
  std::vector<std::string> ids;
  for (int i = 0; i < n; ++i) ids.push_back("m" + std::to_string(1000 + i));
  return ids;
}

}  // namespace

TEST_CASE("embedding index normalizes, persists and rejects bad input") {
  const auto cad = randn(12, 5, 1);
  const EmbeddingIndex idx(make_ids(12), 3.0f * cad, randn(12, 5, 2));
  CHECK(idx.size() == 12);
  for (Eigen::Index i = 0; i < 12; ++i) {
    CHECK(std::abs(idx.cad().row(i).cast<double>().norm() - 1.0) < 1e-6);
    CHECK(std::abs(idx.image().row(i).cast<double>().norm() - 1.0) < 1e-6);
  }
  std::stringstream a, b;
  idx.write(a);
  EmbeddingIndex(make_ids(12), 3.0f * cad, randn(12, 5, 2)).write(b);
  CHECK(a.str() == b.str());
  const auto back = EmbeddingIndex::read(a);
  CHECK(back.ids() == idx.ids());
  CHECK(back.cad() == idx.cad());
  CHECK(back.image() == idx.image());

  std::string bytes = b.str();
  bytes.resize(bytes.size() - 7);
  std::istringstream cut(bytes);
  CHECK_THROWS_AS(EmbeddingIndex::read(cut), CheckpointError);
  auto dup = make_ids(12);
  dup[3] = dup[4];
  CHECK_THROWS_AS(EmbeddingIndex(dup, cad), ShapeError);
}

TEST_CASE("retrieve ranks by cosine with id tie-break") {
  RowMatrixXf cad(4, 2);
  cad << 1, 0, 0, 1, 2, 0, -1, 0;
  const EmbeddingIndex idx({"d", "c", "a", "b"}, cad);
  const auto hits = retrieve(Eigen::RowVector2f(5, 0), idx, 10);
  REQUIRE(hits.size() == 4);
  CHECK(hits[0].id == "a");  // ties with "d" at similarity 1
  CHECK(hits[1].id == "d");
  CHECK(hits[2].id == "c");
  CHECK(hits[3].id == "b");
  CHECK(hits[3].similarity == doctest::Approx(-1.0));
  for (const auto& h : hits) {
    CHECK(h.similarity <= 1.0);
    CHECK(h.similarity >= -1.0);
  }
  CHECK(retrieve(Eigen::RowVector2f(0, 1), idx, 1).front().id == "c");
  CHECK_THROWS_AS(retrieve(Eigen::RowVector3f(1, 0, 0), idx, 1), ShapeError);
}

TEST_CASE("batched top-1 protocol baselines") {
  const auto cad = randn(400, 16, 3);
  const auto image = randn(400, 16, 4);
  const auto random = eval_protocol(cad, image, 10, 1000, 7);
  CHECK(random.mean == doctest::Approx(10.0).epsilon(0.1));
  const auto again = eval_protocol(cad, image, 10, 1000, 7);
  CHECK(again.per_repeat == random.per_repeat);

  for (int n_b : {1, 10, 128}) {
    const auto oracle = eval_protocol(cad, 2.0f * cad, n_b, 3, 1);
    CHECK(oracle.mean == 100.0);
    CHECK(oracle.stddev == 0.0);
  }
  CHECK(eval_protocol(cad, image, 1, 5, 2).mean == 100.0);
  CHECK_THROWS_AS(eval_protocol(cad, image, 401, 1, 0), ConfigError);
}
