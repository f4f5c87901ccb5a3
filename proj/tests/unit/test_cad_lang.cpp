#include <bitset>
#include <cmath>
#include <set>
#include <numbers>
#include <sstream>

#include "common/shapes.hpp"
#include "doctest.h"
#include "gencad/cad_lang.hpp"
#include "gencad/error.hpp"

using namespace gencad;
using gencad::testing::cube;

namespace {

bool has_rule(const ValidationReport& r, const std::string& rule) {
  for (const auto& v : r.violations) {
    if (v.rule == rule) return true;
  }
  return false;
}

}  // namespace

TEST_CASE("layout_of matches the vocabulary table") {
  CHECK(layout_of(CommandType::Sol).count() == 0);
  CHECK(layout_of(CommandType::Eos).count() == 0);
  const auto line = layout_of(CommandType::Line);
  CHECK(line.count() == 2);
  CHECK(line.active.test(0));
  CHECK(line.active.test(1));
  CHECK(layout_of(CommandType::Arc).count() == 4);
  const auto circle = layout_of(CommandType::Circle);
  CHECK(circle.count() == 3);
  CHECK(circle.active.test(slot::radius));
  const auto ext = layout_of(CommandType::Extrude);
  CHECK(ext.count() == 11);
  for (int s = 5; s <= 15; ++s) CHECK(ext.active.test(static_cast<std::size_t>(s)));
}

TEST_CASE("every command parameter is housed by exactly one slot") {
  std::set<std::string> names;
  std::bitset<kNumParams> covered;
  for (auto t : {CommandType::Line, CommandType::Arc, CommandType::Circle, CommandType::Extrude}) {
    covered |= layout_of(t).active;
  }
  for (const auto& s : slot_table()) names.insert(std::string(s.name));
  CHECK(covered.all());
  CHECK(names == std::set<std::string>{"x", "y", "alpha", "f", "r", "theta", "phi", "gamma", "px", "py", "pz", "s",
                                       "e1", "e2", "b", "u"});
}

TEST_CASE("quantize and dequantize") {
  const Interval r{-1.0, 1.0};
  CHECK(quantize(-1.0, r) == 0);
  CHECK(quantize(1.0, r) == 255);
  CHECK(quantize(0.0, r) == 128);
  CHECK(quantize(5.0, r) == 255);
  CHECK(dequantize(0, r) == -1.0);
  CHECK(dequantize(255, r) == 1.0);
  CHECK(dequantize(128, r) == doctest::Approx(2.0 * 128 / 255 - 1.0).epsilon(1e-15));
  CHECK_THROWS_AS(dequantize(256, r), RangeError);
  CHECK_THROWS_WITH(quantize(0.3, Interval{0.5, 0.5}), doctest::Contains("empty parameter range"));
  for (int level = 0; level < 256; ++level) CHECK(quantize(dequantize(level, r), r) == level);
}

TEST_CASE("encode_sequence pads with EOS rows and round-trips") {
  const auto seq = cube(1.0);
  const auto rows = encode_sequence(seq);
  REQUIRE(rows.size() == 60);
  CHECK(program_length(rows) == 7);
  for (std::size_t i = 7; i < rows.size(); ++i) CHECK(rows[i] == eos_row());
  CHECK(rows[1][0] == 1);
  CHECK(rows[1][1 + slot::alpha] == kMaskLevel);
  const auto back = decode_sequence(rows);
  REQUIRE(back.commands.size() == seq.commands.size());
  for (std::size_t i = 0; i < seq.commands.size(); ++i) {
    CHECK(back.commands[i].type == seq.commands[i].type);
    const auto layout = layout_of(seq.commands[i].type);
    for (int s = 0; s < kNumParams; ++s) {
      if (!layout.active.test(static_cast<std::size_t>(s))) {
        CHECK(back.commands[i][s] == kMaskValue);
        continue;
      }
      const auto& spec = slot_table()[static_cast<std::size_t>(s)];
      const double tol = spec.kind == SlotKind::Discrete ? 0.0 : spec.range.width() / 510.0;
      CHECK(std::abs(back.commands[i][s] - seq.commands[i][s]) <= tol + 1e-15);
    }
  }
}

TEST_CASE("empty program encodes to all EOS rows and decodes back") {
  CadSequence empty;
  empty.commands = {CadCommand::eos()};
  const auto rows = encode_sequence(empty);
  for (const auto& r : rows) CHECK(r == eos_row());
  const auto back = decode_sequence(rows);
  CHECK(back.commands.size() == 1);
}

TEST_CASE("decode rejects malformed rows") {
  auto rows = encode_sequence(cube());
  rows[0][0] = 7;
  CHECK_THROWS_WITH(decode_sequence(rows), doctest::Contains("invalid token"));
  rows = encode_sequence(cube());
  rows[5][1 + slot::boolean] = 9;
  CHECK_THROWS_WITH(decode_sequence(rows), doctest::Contains("invalid discrete code"));
}

TEST_CASE("sequence overflow") {
  auto seq = cube();
  seq.padded_len = 5;
  CHECK_THROWS_WITH(encode_sequence(seq), doctest::Contains("sequence overflow"));
}

TEST_CASE("padding neutrality") {
  auto a = cube();
  auto b = cube();
  b.padded_len = 90;
  const auto ra = encode_sequence(a);
  const auto rb = encode_sequence(b);
  CHECK(std::equal(ra.begin(), ra.begin() + 7, rb.begin()));
  CHECK(decode_sequence(ra).commands == decode_sequence(rb).commands);
  CHECK(validate(a).ok() == validate(b).ok());
}

TEST_CASE("validate accepts closed programs and names violations") {
  CHECK(validate(cube()).ok());
  CHECK(validate(gencad::testing::cylinder()).ok());

  CadSequence open;
  open.commands = {CadCommand::sol(), CadCommand::line(0.5, 0.0), gencad::testing::plain_extrude(0.5),
                   CadCommand::eos()};
  const auto r1 = validate(open);
  CHECK(has_rule(r1, "open loop"));

  CadSequence bare;
  bare.commands = {gencad::testing::plain_extrude(0.5), CadCommand::eos()};
  const auto r2 = validate(bare);
  REQUIRE_FALSE(r2.ok());
  CHECK(has_rule(r2, "extrude without profile"));
  CHECK(r2.violations.front().position == 0);

  auto missing = cube();
  missing.commands.pop_back();
  CHECK(has_rule(validate(missing), "missing EOS"));

  auto two_circles = gencad::testing::cylinder();
  two_circles.commands.insert(two_circles.commands.begin() + 2, CadCommand::circle(0.1, 0.1, 0.2));
  CHECK(has_rule(validate(two_circles), "circle loop not singleton"));

  auto cut_first = cube();
  cut_first.commands[5] = gencad::testing::plain_extrude(1.0, BooleanOp::Cut);
  CHECK(has_rule(validate(cut_first), "boolean without body"));

  auto trailing = cube();
  trailing.commands.push_back(CadCommand::line(0.0, 0.0));
  CHECK(has_rule(validate(trailing), "content after EOS"));

  CadSequence d;
  d.commands = gencad::testing::d_loop();
  d.commands.push_back(gencad::testing::plain_extrude(0.3));
  d.commands.push_back(CadCommand::eos());
  CHECK(validate(d).ok());
}

TEST_CASE("json round-trip is exact") {
  CadSequence seq;
  seq.commands = gencad::testing::d_loop(0.7);
  seq.commands.push_back(CadCommand::extrude(0.3, -1.1, 2.0, 0.1, -0.2, 0.3, 1.3, 0.4, 0.2, BooleanOp::New,
                                             Sidedness::Two));
  seq.commands.push_back(CadCommand::eos());
  seq.commands[1].params[0] = 0.1 + 0.2;  // not representable in short decimal form
  const auto text = to_json(seq);
  CHECK(from_json(text) == seq);
  CHECK(to_json(from_json(text)) == text);
}

TEST_CASE("json errors carry the path") {
  CHECK_THROWS_WITH(from_json(R"({"commands":[{"type":"SOL"},{"params":{"x":0.5,"y":0.5}}]})"),
                    doctest::Contains("/commands/1/type"));
  CHECK_THROWS_WITH(from_json(R"({"commands":[{"type":"Line","params":{"x":0.5}}]})"),
                    doctest::Contains("/commands/0/params/y"));
  CHECK_THROWS_AS(from_json("{not json"), ParseError);
}

TEST_CASE("json golden text for the unit cube") {
  const std::string golden =
      R"({
  "commands": [
    {
      "type": "SOL"
    },
    {
      "type": "Line",
      "params": {
        "x": 1.0,
        "y": 0.0
      }
    },
)";
  CHECK(to_json(cube()).rfind(golden, 0) == 0);
}

TEST_CASE("GCSQ1 round-trip and corruption") {
  std::vector<EncodedSequence> seqs = {encode_sequence(cube()), encode_sequence(gencad::testing::cylinder())};
  std::stringstream buf;
  write_gcsq(buf, seqs);
  const std::string bytes = buf.str();
  CHECK(bytes.rfind("GCSQ1", 0) == 0);
  std::stringstream in(bytes);
  CHECK(read_gcsq(in) == seqs);
  std::stringstream truncated(bytes.substr(0, bytes.size() - 3));
  CHECK_THROWS_AS(read_gcsq(truncated), ParseError);
  std::stringstream bad("GCSQ2xxxxxxxxxxxx");
  CHECK_THROWS_AS(read_gcsq(bad), ParseError);
}
