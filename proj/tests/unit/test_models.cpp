#include <cmath>

#include "common/shapes.hpp"
#include "doctest.h"
#include "gencad/models/config.hpp"
#include "gencad/models/csr.hpp"
#include "gencad/nn/gradcheck.hpp"
#include "gencad/nn/optim.hpp"

using namespace gencad;
using namespace gencad::models;
using M = nn::Mat<double>;

namespace {

CsrConfig tiny_csr(int seq_len = 10) {
  CsrConfig c;
  c.d_z = 4;
  c.d_model = 8;
  c.enc_layers = 1;
  c.dec_layers = 1;
  c.heads = 2;
  c.ffn_dim = 12;
  c.dropout = 0.0;
  c.seq_len = seq_len;
  c.level_embed = 2;
  c.seed = 11;
  return c;
}

EncodedSequence padded(CadSequence seq, int n) {
  seq.padded_len = n;
  return encode_sequence(seq);
}

}  // namespace

TEST_CASE("config text round trip and typed access") {
  const auto cfg = Config::parse("# header\nseed = 42\ncsr.d_z = 16   # small\nname = run one\nflag = true\n");
  CHECK(cfg.get("seed", std::uint64_t{0}) == 42u);
  CHECK(cfg.get("csr.d_z", 0) == 16);
  CHECK(cfg.get("name", "") == "run one");
  CHECK(cfg.get("flag", false));
  CHECK(cfg.get("missing", 2.5) == 2.5);
  CHECK(Config::parse(cfg.to_text()).values() == cfg.values());
  CHECK(cfg.subset("csr.").get("d_z", 0) == 16);
  CHECK_THROWS_AS(Config::parse("seed 42\n"), ParseError);
  CHECK_THROWS_AS(cfg.get("name", 1.0), ParseError);

  const auto c = CsrConfig::from(cfg);
  CHECK(c.d_z == 16);
  CHECK(c.d_model == 16);
  Config out;
  c.write(out);
  CHECK(CsrConfig::from(out).d_z == 16);
}

TEST_CASE("csr latent shape, range and logits layout") {
  CsrModel<double> model(tiny_csr());
  model.set_training(false);
  const std::vector<EncodedSequence> batch = {padded(testing::cube(), 10), padded(testing::cylinder(), 10)};
  const M z = model.encode(batch);
  CHECK(z.rows() == 2);
  CHECK(z.cols() == 4);
  CHECK(z.cwiseAbs().maxCoeff() < 1.0);
  const M l = model.logits(z);
  CHECK(l.rows() == 20);
  CHECK(l.cols() == kNumCommandTypes + kNumParams * kNumLevels);
  CHECK_THROWS_AS(model.encode({padded(testing::cube(), 12)}), ShapeError);
}

TEST_CASE("csr encoder is causal and ignores padding past EOS") {
  CsrModel<double> model(tiny_csr(12));
  model.set_training(false);
  auto a = padded(testing::cube(), 12);  // 7 program rows
  auto b = a;
  b[4] = encode_command(CadCommand::line(0.3, 0.9));
  const M ha = model.encoder_states({a});
  const M hb = model.encoder_states({b});
  CHECK((ha.topRows(4) - hb.topRows(4)).cwiseAbs().maxCoeff() == 0.0);
  CHECK((ha.row(4) - hb.row(4)).cwiseAbs().maxCoeff() > 1e-6);

  auto c = a;
  c[10] = encode_command(CadCommand::circle(0.1, 0.2, 0.3));
  const M za = model.encode({a});
  const M zc = model.encode({c});
  CHECK((za - zc).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("csr loss with uniform heads equals the counting formula") {
  for (double beta : {1.0, 2.0}) {
    auto cfg = tiny_csr();
    cfg.beta = beta;
    CsrModel<double> model(cfg);
    model.set_training(false);
    model.visit("", [](const std::string& name, nn::Parameter<double>& p) {
      if (name.rfind("type_head", 0) == 0 || name.rfind("level_head", 0) == 0) p.value.setZero();
    });
    const auto seq = padded(testing::cube(), 10);
    // targets: rows 1..9 of the program then EOS; count active slots independently
    int active = 0;
    for (std::size_t i = 1; i < seq.size(); ++i) {
      const auto cmd = decode_command(seq[i]);
      if (cmd.type == CommandType::Line) active += 2;
      if (cmd.type == CommandType::Extrude) active += 11;
    }
    const auto parts = model.loss_forward({seq, seq});
    CHECK(parts.type == doctest::Approx(10 * std::log(6.0)).epsilon(1e-12));
    CHECK(parts.param == doctest::Approx(active * std::log(256.0)).epsilon(1e-12));
    CHECK(parts.total == doctest::Approx(parts.type + beta * parts.param).epsilon(1e-12));
  }
}

TEST_CASE("csr end-to-end gradient check") {
  CsrModel<double> model(tiny_csr());
  model.set_training(false);
  const std::vector<EncodedSequence> batch = {padded(testing::cube(), 10), padded(testing::cylinder(), 10)};
  auto params = model.trainable_parameters();
  const auto report = nn::finite_diff_check(
      params, nullptr,
      [&](const M&) {
        M out(1, 1);
        out(0, 0) = model.loss_forward(batch).total;
        return out;
      },
      [&](const M& r) {
        model.loss_backward(r(0, 0));
        return M();
      },
      1e-4, 3, 1e-6);
  INFO(report.worst);
  CHECK(report.checked > 30000);
  CHECK(report.max_rel_error < 1e-4);
}

TEST_CASE("csr overfits two programs and reconstructs them greedily") {
  auto cfg = tiny_csr();
  cfg.d_z = 16;
  cfg.d_model = 32;
  cfg.heads = 4;
  cfg.ffn_dim = 64;
  cfg.level_embed = 8;
  CsrModel<float> model(cfg);
  model.set_training(true);
  const std::vector<EncodedSequence> batch = {padded(testing::cube(0.5), 10), padded(testing::cylinder(0.3, 0.7), 10)};
  nn::AdamConfig ac;
  ac.lr = 3e-3;
  nn::Adam<float> opt(model.trainable_parameters(), ac);
  double loss = 0.0;
  for (int step = 0; step < 400; ++step) {
    opt.zero_grad();
    loss = model.loss_forward(batch).total;
    model.loss_backward();
    opt.step();
  }
  CHECK(loss < 0.5);
  model.set_training(false);
  const auto rec = model.greedy_decode(model.encode(batch));
  REQUIRE(rec.size() == 2);
  for (std::size_t b = 0; b < 2; ++b) {
    const int len = program_length(batch[b]);
    for (int i = 0; i < len; ++i) CHECK(rec[b][static_cast<std::size_t>(i)] == batch[b][static_cast<std::size_t>(i)]);
  }
}
