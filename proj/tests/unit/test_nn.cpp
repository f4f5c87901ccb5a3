#include <cmath>
#include <numbers>
#include <sstream>

#include "doctest.h"
#include "gencad/nn/attention.hpp"
#include "gencad/nn/checkpoint.hpp"
#include "gencad/nn/gradcheck.hpp"
#include "gencad/nn/layers.hpp"
#include "gencad/nn/loss.hpp"
#include "gencad/nn/optim.hpp"

using namespace gencad;
using namespace gencad::nn;
using M = Mat<double>;

namespace {

M random_mat(int rows, int cols, std::uint64_t seed, double scale = 1.0) {
  Rng rng(seed);
  M m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.normal();
  return m;
}

FeatureMap<double> as_map(const M& x, int n, int c, int h, int w) {
  FeatureMap<double> f(n, c, h, w);
  f.data = x;
  return f;
}

}  // namespace

TEST_CASE("softmax and layer norm definitions") {
  M c = M::Constant(2, 5, 3.7);
  const auto p = softmax_rows<double>(c);
  for (Eigen::Index i = 0; i < p.size(); ++i) CHECK(p.data()[i] == doctest::Approx(0.2).epsilon(1e-15));

  LayerNorm<double> ln(8);
  const M y = ln.forward(random_mat(4, 8, 1, 3.0));
  for (int r = 0; r < 4; ++r) {
    CHECK(std::abs(y.row(r).mean()) < 1e-6);
    CHECK(std::abs((y.row(r).array() - y.row(r).mean()).square().mean() - 1.0) < 1e-4);
  }
}

TEST_CASE("conv2d with identity 1x1 kernel is the identity") {
  Rng rng(1);
  Conv2d<double> conv(3, 3, 1, 1, 0, rng);
  conv.weight.value = M::Identity(3, 3);
  const auto x = as_map(random_mat(2, 3 * 5 * 4, 2), 2, 3, 5, 4);
  const auto y = conv.forward(x);
  CHECK((y.data - x.data).norm() == 0.0);
}

TEST_CASE("sinusoidal positional encoding") {
  const auto pe = sinusoidal_pe<double>(3, 6);
  for (int i = 0; i < 6; ++i) CHECK(pe(0, i) == (i % 2 == 0 ? 0.0 : 1.0));
  CHECK(sinusoidal_pe<double>(2, 4)(1, 0) == doctest::Approx(std::sin(1.0)));
  CHECK(pe.cwiseAbs().maxCoeff() <= 1.0);
}

TEST_CASE("attention weights") {
  Rng rng(5);
  MultiHeadAttention<double> one(8, 2, true, rng);
  one.forward(random_mat(1, 8, 3), 1);
  CHECK(one.weights(0, 0)(0, 0) == doctest::Approx(1.0));

  MultiHeadAttention<double> uni(8, 2, true, rng);
  uni.wk.weight.value.setZero();
  uni.wk.bias.value.setZero();
  uni.forward(random_mat(5, 8, 4), 5);
  const auto& w = uni.weights(0, 1);
  for (int i = 0; i < 5; ++i) {
    for (int j = 0; j < 5; ++j) CHECK(w(i, j) == doctest::Approx(j <= i ? 1.0 / (i + 1) : 0.0));
  }
  CHECK_THROWS_AS(MultiHeadAttention<double>(10, 3, false, rng), ShapeError);
}

TEST_CASE("causal attention ignores later positions") {
  Rng rng(9);
  TransformerBlock<double> a(8, 2, 16, 0.0, true, rng);
  TransformerBlock<double> b = a;
  M x = random_mat(12, 8, 6);  // two sequences of 6
  const M y0 = a.forward(x, 6);
  for (int j = 3; j < 6; ++j) {
    M x2 = x;
    x2.row(j) += random_mat(1, 8, 100 + static_cast<std::uint64_t>(j));
    const M y1 = b.forward(x2, 6);
    for (int i = 0; i < j; ++i) CHECK((y1.row(i) - y0.row(i)).cwiseAbs().maxCoeff() < 1e-7);
    CHECK((y1.row(j) - y0.row(j)).norm() > 1e-6);
  }
}

TEST_CASE("losses") {
  M perfect = M::Zero(2, 4);
  perfect(0, 1) = 80;
  perfect(1, 3) = 80;
  CHECK(cross_entropy<double>(perfect, {1, 3}) < 1e-30);
  CHECK(cross_entropy<double>(M::Zero(1, 6), {2}) == doctest::Approx(std::log(6.0)));
  CHECK(cross_entropy<double>(M::Zero(2, 6), {2, -1}) == doctest::Approx(std::log(6.0)));
  const M a = random_mat(3, 3, 1);
  CHECK(mse<double>(a, a) == 0.0);

  M grad;
  const M logits = random_mat(3, 5, 2);
  cross_entropy<double>(logits, {0, 4, 2}, &grad);
  const auto rep = finite_diff_check(
      {}, const_cast<M*>(&logits), [&](const M& x) { return M::Constant(1, 1, cross_entropy<double>(x, {0, 4, 2})); },
      [&](const M& dy) { return M(grad * dy(0, 0)); });
  CHECK(rep.max_rel_error < 1e-7);
}

TEST_CASE("adam and schedules") {
  Parameter<double> p;
  p.resize(1, 1);
  p.value(0, 0) = 0.5;
  Adam<double> zero({{"p", &p}}, AdamConfig{0.1});
  zero.step();
  CHECK(p.value(0, 0) == 0.5);

  Adam<double> adam({{"p", &p}}, AdamConfig{0.1});
  p.grad(0, 0) = 1.0;
  adam.step();
  CHECK(p.value(0, 0) == doctest::Approx(0.5 - 0.1 / (1.0 + 1e-8)).epsilon(1e-14));

  Parameter<double> a, b;
  a.resize(1, 2);
  b.resize(1, 2);
  a.grad << std::sqrt(2.0), 0.0;
  b.grad << 0.0, std::sqrt(2.0);
  const double norm = clip_grad_norm<double>({{"a", &a}, {"b", &b}}, 1.0);
  CHECK(norm == doctest::Approx(2.0));
  CHECK(a.grad(0, 0) == doctest::Approx(std::sqrt(2.0) * 0.5));

  WarmupSchedule warm(1e-3, 2000);
  CHECK(warm.lr_at(0) == 0.0);
  CHECK(warm.lr_at(1000) == doctest::Approx(5e-4));
  CHECK(warm.lr_at(2000) == 1e-3);
  CHECK(warm.lr_at(9000) == 1e-3);

  ReduceOnPlateau plateau(0.5, 2);
  double lr = 1.0;
  lr = plateau.step(1.0, lr);
  lr = plateau.step(1.0, lr);
  lr = plateau.step(1.0, lr);
  CHECK(lr == 1.0);
  lr = plateau.step(1.0, lr);
  CHECK(lr == 0.5);
  lr = plateau.step(0.5, lr);
  CHECK(lr == 0.5);

  GradAccumulator acc(2);
  CHECK_FALSE(acc.tick());
  CHECK(acc.tick());
  CHECK(acc.scale() == 0.5);

  Parameter<double> w;
  w.resize(1, 1);
  w.value(0, 0) = 1.0;
  Adam<double> adamw({{"w", &w}}, AdamConfig{0.1, 0.9, 0.999, 1e-8, 0.5, true});
  adamw.step();
  CHECK(w.value(0, 0) == doctest::Approx(0.95));
}

TEST_CASE("finite-difference checks: elementary layers") {
  Rng rng(21);
  SUBCASE("linear") {
    Linear<double> lin(5, 4, rng);
    M x = random_mat(3, 5, 1);
    const auto r = finite_diff_check(lin.parameters(), &x, [&](const M& in) { return lin.forward(in); },
                                     [&](const M& dy) { return lin.backward(dy); });
    CHECK(r.max_rel_error < 1e-7);
  }
  SUBCASE("embedding") {
    Embedding<double> emb(7, 4, rng);
    const std::vector<int> ids = {1, 3, 3, 6};
    const auto r = finite_diff_check(
        emb.parameters(), nullptr, [&](const M&) { return emb.forward(ids); },
        [&](const M& dy) {
          emb.backward(dy);
          return M();
        });
    CHECK(r.max_rel_error < 1e-7);
  }
  SUBCASE("layer norm") {
    LayerNorm<double> ln(6);
    ln.gamma.value = random_mat(1, 6, 4);
    ln.beta.value = random_mat(1, 6, 5);
    M x = random_mat(3, 6, 2);
    const auto r = finite_diff_check(ln.parameters(), &x, [&](const M& in) { return ln.forward(in); },
                                     [&](const M& dy) { return ln.backward(dy); });
    CHECK(r.max_rel_error < 1e-4);
  }
  SUBCASE("tanh and relu") {
    Tanh<double> t;
    ReLU<double> relu;
    M x = random_mat(4, 5, 3);
    const auto r = finite_diff_check(
        {}, &x, [&](const M& in) { return relu.forward(t.forward(in)); },
        [&](const M& dy) { return t.backward(relu.backward(dy)); });
    CHECK(r.max_rel_error < 1e-4);
  }
  SUBCASE("dropout in eval mode is the identity") {
    Dropout<double> drop(0.5, 3);
    drop.set_training(false);
    M x = random_mat(3, 4, 3);
    CHECK(drop.forward(x) == x);
    const auto r = finite_diff_check({}, &x, [&](const M& in) { return drop.forward(in); },
                                     [&](const M& dy) { return drop.backward(dy); });
    CHECK(r.max_rel_error < 1e-7);
  }
  SUBCASE("dropout in train mode zeroes and rescales") {
    Dropout<double> drop(0.5, 3);
    const M y = drop.forward(M::Ones(40, 40));
    int zeros = 0;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
      CHECK((y.data()[i] == 0.0 || y.data()[i] == 2.0));
      zeros += y.data()[i] == 0.0;
    }
    CHECK(zeros > 700);
    CHECK(zeros < 900);
  }
}

TEST_CASE("finite-difference checks: convolutional layers") {
  Rng rng(31);
  SUBCASE("conv2d strided padded") {
    Conv2d<double> conv(2, 3, 3, 2, 1, rng, true);
    M x = random_mat(2, 2 * 5 * 6, 1);
    const auto r = finite_diff_check(
        conv.parameters(), &x, [&](const M& in) { return conv.forward(as_map(in, 2, 2, 5, 6)).data; },
        [&](const M& dy) {
          FeatureMap<double> g(2, 3, 3, 3);
          g.data = dy;
          return conv.backward(g).data;
        });
    CHECK(r.max_rel_error < 1e-7);
  }
  SUBCASE("batch norm train and eval") {
    for (bool train : {true, false}) {
      BatchNorm2d<double> bn(3);
      bn.gamma.value = random_mat(1, 3, 7);
      bn.running_mean.value = random_mat(1, 3, 8);
      bn.running_var.value = M::Constant(1, 3, 1.7);
      bn.set_training(train);
      M x = random_mat(2, 3 * 4, 2);
      const auto r = finite_diff_check(
          bn.parameters(), &x, [&](const M& in) { return bn.forward(as_map(in, 2, 3, 2, 2)).data; },
          [&](const M& dy) { return bn.backward(as_map(dy, 2, 3, 2, 2)).data; });
      CHECK(r.max_rel_error < 1e-4);
    }
  }
  SUBCASE("avg pool and relu2d") {
    AvgPool2d<double> pool(2);
    ReLU2d<double> relu;
    M x = random_mat(2, 2 * 16, 2);
    const auto r = finite_diff_check(
        {}, &x, [&](const M& in) { return pool.forward(relu.forward(as_map(in, 2, 2, 4, 4))).data; },
        [&](const M& dy) { return relu.backward(pool.backward(as_map(dy, 2, 2, 2, 2))).data; });
    CHECK(r.max_rel_error < 1e-7);
  }
  SUBCASE("batch norm running statistics") {
    BatchNorm2d<double> bn(1, 0.1);
    M x(4, 1);
    x << 1, 2, 3, 4;
    bn.forward(as_map(x, 4, 1, 1, 1));
    CHECK(bn.running_mean.value(0, 0) == doctest::Approx(0.25));
    CHECK(bn.running_var.value(0, 0) == doctest::Approx(0.9 + 0.1 * (5.0 / 3.0)));
    bn.set_training(false);
    const auto y = bn.forward(as_map(x, 4, 1, 1, 1));
    CHECK(y.data(0, 0) == doctest::Approx((1 - 0.25) / std::sqrt(0.9 + 0.5 / 3.0 + 1e-5)));
  }
}

TEST_CASE("finite-difference checks: attention") {
  Rng rng(41);
  SUBCASE("multi-head attention") {
    MultiHeadAttention<double> mha(8, 2, true, rng);
    M x = random_mat(8, 8, 3);
    const auto r = finite_diff_check(mha.parameters(), &x, [&](const M& in) { return mha.forward(in, 4); },
                                     [&](const M& dy) { return mha.backward(dy); });
    CHECK(r.max_rel_error < 1e-4);
  }
  SUBCASE("two stacked transformer blocks") {
    TransformerBlock<double> b1(8, 2, 16, 0.1, true, rng);
    TransformerBlock<double> b2(8, 2, 16, 0.1, true, rng);
    b1.set_training(false);
    b2.set_training(false);
    auto params = b1.parameters("b1");
    for (auto& p : b2.parameters("b2")) params.push_back(p);
    M x = random_mat(10, 8, 4);
    const auto r = finite_diff_check(
        params, &x, [&](const M& in) { return b2.forward(b1.forward(in, 5), 5); },
        [&](const M& dy) { return b1.backward(b2.backward(dy)); });
    INFO(r.worst);
    CHECK(r.max_rel_error < 1e-4);
  }
}

TEST_CASE("checkpoint round trip and failures") {
  Rng rng(51);
  Linear<float> lin(4, 3, rng);
  BatchNorm2d<float> bn(2);
  bn.running_mean.value << 0.25f, -1.5f;
  Checkpoint ck;
  ck.config = "d_z = 4\n";
  ck.step = 17;
  Adam<float> opt(lin.trainable_parameters("lin"), AdamConfig{});
  lin.weight.grad.setOnes();
  opt.step();
  ck.capture(lin, "lin");
  ck.capture(bn, "bn");
  ck.capture_optimizer(opt);
  std::stringstream buf;
  ck.write(buf);
  const std::string bytes = buf.str();
  CHECK(bytes.rfind("GCKP1", 0) == 0);

  std::stringstream in(bytes);
  const auto back = Checkpoint::read(in);
  CHECK(back.config == ck.config);
  CHECK(back.step == 17);
  Rng other(99);
  Linear<float> lin2(4, 3, other);
  BatchNorm2d<float> bn2(2);
  back.restore(lin2, "lin");
  back.restore(bn2, "bn");
  Adam<float> opt2(lin2.trainable_parameters("lin"), AdamConfig{});
  back.restore_optimizer(opt2);
  CHECK(opt2.steps() == 1);
  Mat<float> x = Mat<float>::Random(2, 4);
  CHECK(lin.forward(x) == lin2.forward(x));
  CHECK(bn2.running_mean.value == bn.running_mean.value);
  CHECK(parameter_hash(lin) == parameter_hash(lin2));

  std::stringstream truncated(bytes.substr(0, bytes.size() - 10));
  CHECK_THROWS_AS(Checkpoint::read(truncated), CheckpointError);
  std::string flipped = bytes;
  flipped[40] ^= 0x5a;
  std::stringstream corrupt(flipped);
  CHECK_THROWS_AS(Checkpoint::read(corrupt), CheckpointError);

  Linear<float> wrong(5, 3, other);
  CHECK_THROWS_WITH_AS(back.restore(wrong, "lin"), doctest::Contains("shape mismatch"), ShapeError);
  Linear<float> missing(4, 3, other);
  CHECK_THROWS_AS(back.restore(missing, "nope"), CheckpointError);
}
