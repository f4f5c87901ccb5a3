#include "gencad/cad_lang.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "gencad/detail/binary_io.hpp"
#include "gencad/error.hpp"
#include "json.hpp"

namespace gencad {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kEps = 1e-9;

constexpr std::array<std::string_view, kNumCommandTypes> kTypeNames = {"SOL", "Line",    "Arc",
                                                                       "Circle", "Extrude", "EOS"};

const std::array<SlotSpec, kNumParams> kSlots = {{
    {"x", SlotKind::Continuous, {-1.0, 1.0}, 0},
    {"y", SlotKind::Continuous, {-1.0, 1.0}, 0},
    {"alpha", SlotKind::Continuous, {0.0, 2.0 * kPi}, 0},
    {"f", SlotKind::Discrete, {}, 2},
    {"r", SlotKind::Continuous, {0.0, 1.0}, 0},
    {"theta", SlotKind::Continuous, {0.0, kPi}, 0},
    {"phi", SlotKind::Continuous, {-kPi, kPi}, 0},
    {"gamma", SlotKind::Continuous, {-kPi, kPi}, 0},
    {"px", SlotKind::Continuous, {-1.0, 1.0}, 0},
    {"py", SlotKind::Continuous, {-1.0, 1.0}, 0},
    {"pz", SlotKind::Continuous, {-1.0, 1.0}, 0},
    {"s", SlotKind::Continuous, {0.0, 2.0}, 0},
    {"e1", SlotKind::Continuous, {-1.0, 1.0}, 0},
    {"e2", SlotKind::Continuous, {-1.0, 1.0}, 0},
    {"b", SlotKind::Discrete, {}, 4},
    {"u", SlotKind::Discrete, {}, 2},
}};

ParamLayout make_layout(std::initializer_list<int> slots) {
  ParamLayout l;
  for (int s : slots) l.active.set(static_cast<std::size_t>(s));
  return l;
}

const std::array<ParamLayout, kNumCommandTypes> kLayouts = {
    ParamLayout{},                                                 // SOL
    make_layout({slot::x, slot::y}),                               // Line
    make_layout({slot::x, slot::y, slot::alpha, slot::flag}),      // Arc
    make_layout({slot::x, slot::y, slot::radius}),                 // Circle
    make_layout({5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15}),          // Extrude
    ParamLayout{},                                                 // EOS
};

CadCommand blank(CommandType t) {
  CadCommand c;
  c.type = t;
  c.params.fill(kMaskValue);
  return c;
}

std::size_t idx(int s) { return static_cast<std::size_t>(s); }

}  // namespace

CommandType command_type_from_code(int code) {
  if (code < 0 || code >= kNumCommandTypes) {
    throw ParseError("invalid token: command type code " + std::to_string(code));
  }
  return static_cast<CommandType>(code);
}

std::string_view command_name(CommandType type) { return kTypeNames[static_cast<std::size_t>(type)]; }

std::optional<CommandType> command_type_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kTypeNames.size(); ++i) {
    if (kTypeNames[i] == name) return static_cast<CommandType>(i);
  }
  return std::nullopt;
}

const std::array<SlotSpec, kNumParams>& slot_table() { return kSlots; }

ParamLayout layout_of(CommandType type) { return kLayouts[static_cast<std::size_t>(type)]; }

int quantize(double v, Interval range) {
  if (!(range.hi > range.lo)) throw RangeError("empty parameter range");
  const double clamped = std::clamp(v, range.lo, range.hi);
  const double level = std::round((clamped - range.lo) / range.width() * 255.0);
  return static_cast<int>(std::clamp(level, 0.0, 255.0));
}

double dequantize(int level, Interval range) {
  if (level < 0 || level > 255) {
    throw RangeError("quantization level " + std::to_string(level) + " outside 0..255");
  }
  if (!(range.hi > range.lo)) throw RangeError("empty parameter range");
  return range.lo + static_cast<double>(level) / 255.0 * range.width();
}

CadCommand CadCommand::sol() { return blank(CommandType::Sol); }
CadCommand CadCommand::eos() { return blank(CommandType::Eos); }

CadCommand CadCommand::line(double x, double y) {
  auto c = blank(CommandType::Line);
  c.params[idx(slot::x)] = x;
  c.params[idx(slot::y)] = y;
  return c;
}

CadCommand CadCommand::arc(double x, double y, double sweep, bool ccw) {
  auto c = blank(CommandType::Arc);
  c.params[idx(slot::x)] = x;
  c.params[idx(slot::y)] = y;
  c.params[idx(slot::alpha)] = sweep;
  c.params[idx(slot::flag)] = ccw ? 1.0 : 0.0;
  return c;
}

CadCommand CadCommand::circle(double x, double y, double r) {
  auto c = blank(CommandType::Circle);
  c.params[idx(slot::x)] = x;
  c.params[idx(slot::y)] = y;
  c.params[idx(slot::radius)] = r;
  return c;
}

CadCommand CadCommand::extrude(double theta, double phi, double gamma, double px, double py, double pz,
                               double s, double e1, double e2, BooleanOp op, Sidedness sided) {
  auto c = blank(CommandType::Extrude);
  c.params[idx(slot::theta)] = theta;
  c.params[idx(slot::phi)] = phi;
  c.params[idx(slot::gamma)] = gamma;
  c.params[idx(slot::px)] = px;
  c.params[idx(slot::py)] = py;
  c.params[idx(slot::pz)] = pz;
  c.params[idx(slot::scale)] = s;
  c.params[idx(slot::e1)] = e1;
  c.params[idx(slot::e2)] = e2;
  c.params[idx(slot::boolean)] = static_cast<double>(op);
  c.params[idx(slot::sided)] = static_cast<double>(sided);
  return c;
}

EncodedRow eos_row() {
  EncodedRow row;
  row.fill(kMaskLevel);
  row[0] = static_cast<std::uint8_t>(CommandType::Eos);
  return row;
}

EncodedRow encode_command(const CadCommand& cmd) {
  EncodedRow row;
  row.fill(kMaskLevel);
  row[0] = static_cast<std::uint8_t>(cmd.type);
  const auto layout = layout_of(cmd.type);
  for (int s = 0; s < kNumParams; ++s) {
    if (!layout.active.test(idx(s))) continue;
    const auto& spec = kSlots[idx(s)];
    const double v = cmd.params[idx(s)];
    int level = 0;
    if (spec.kind == SlotKind::Discrete) {
      level = static_cast<int>(std::lround(v));
      if (level < 0 || level >= spec.cardinality || std::abs(v - level) > kEps) {
        throw RangeError("invalid discrete code " + std::to_string(v) + " for slot " +
                         std::string(spec.name));
      }
    } else {
      level = quantize(v, spec.range);
    }
    row[idx(s) + 1] = static_cast<std::uint8_t>(level);
  }
  return row;
}

CadCommand decode_command(const EncodedRow& row) {
  const auto type = command_type_from_code(row[0]);
  auto cmd = blank(type);
  const auto layout = layout_of(type);
  for (int s = 0; s < kNumParams; ++s) {
    if (!layout.active.test(idx(s))) continue;
    const auto& spec = kSlots[idx(s)];
    const int level = row[idx(s) + 1];
    if (spec.kind == SlotKind::Discrete) {
      if (level >= spec.cardinality) {
        throw ParseError("invalid discrete code " + std::to_string(level) + " for slot " +
                         std::string(spec.name));
      }
      cmd.params[idx(s)] = static_cast<double>(level);
    } else {
      cmd.params[idx(s)] = dequantize(level, spec.range);
    }
  }
  return cmd;
}

EncodedSequence encode_sequence(const CadSequence& seq) {
  const auto n = static_cast<std::size_t>(seq.padded_len);
  if (seq.commands.size() > n) {
    throw RangeError("sequence overflow: " + std::to_string(seq.commands.size()) +
                     " commands exceed padded length " + std::to_string(n));
  }
  EncodedSequence out;
  out.reserve(n);
  for (const auto& c : seq.commands) out.push_back(encode_command(c));
  while (out.size() < n) out.push_back(eos_row());
  return out;
}

int program_length(std::span<const EncodedRow> rows) {
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i][0] == static_cast<std::uint8_t>(CommandType::Eos)) return static_cast<int>(i) + 1;
  }
  return static_cast<int>(rows.size());
}

CadSequence decode_sequence(std::span<const EncodedRow> rows) {
  CadSequence seq;
  seq.padded_len = static_cast<int>(rows.size());
  for (const auto& row : rows) {
    seq.commands.push_back(decode_command(row));
    if (seq.commands.back().type == CommandType::Eos) break;
  }
  return seq;
}

CadSequence snap_to_grid(const CadSequence& seq) {
  CadSequence out = seq;
  for (auto& c : out.commands) c = decode_command(encode_command(c));
  return out;
}

double closure_tolerance() { return 2.0 * kSlots[idx(slot::x)].range.width() / 255.0; }

std::string ValidationReport::summary() const {
  if (ok()) return "ok";
  std::ostringstream os;
  for (std::size_t i = 0; i < violations.size(); ++i) {
    const auto& v = violations[i];
    if (i) os << "; ";
    os << v.rule << " at " << v.position;
    if (!v.detail.empty()) os << " (" << v.detail << ")";
  }
  return os.str();
}

namespace {

void check_params(const CadCommand& c, int pos, std::vector<Violation>& out) {
  const auto layout = layout_of(c.type);
  for (int s = 0; s < kNumParams; ++s) {
    const double v = c.params[idx(s)];
    const auto& spec = kSlots[idx(s)];
    if (!layout.active.test(idx(s))) {
      if (v != kMaskValue) out.push_back({pos, "unmasked slot", std::string(spec.name)});
      continue;
    }
    if (!std::isfinite(v)) {
      out.push_back({pos, "invalid parameter", std::string(spec.name) + " is not finite"});
    } else if (spec.kind == SlotKind::Discrete) {
      const double r = std::round(v);
      if (std::abs(v - r) > kEps || r < 0 || r >= spec.cardinality) {
        out.push_back({pos, "invalid discrete code", std::string(spec.name)});
      }
    } else if (v < spec.range.lo - kEps || v > spec.range.hi + kEps) {
      out.push_back({pos, "invalid parameter", std::string(spec.name) + " out of range"});
    }
  }
}

// Checks one sketch loop body (the commands between SOL and the next SOL /
// Extrude / EOS). Curves chain from the loop-local origin.
void check_loop(std::span<const CadCommand> body, int first_pos, std::vector<Violation>& out) {
  const int sol_pos = first_pos - 1;
  if (body.empty()) {
    out.push_back({sol_pos, "empty loop", ""});
    return;
  }
  const bool has_circle = std::any_of(body.begin(), body.end(),
                                      [](const CadCommand& c) { return c.type == CommandType::Circle; });
  if (has_circle) {
    if (body.size() != 1) out.push_back({sol_pos, "circle loop not singleton", ""});
    for (std::size_t i = 0; i < body.size(); ++i) {
      if (body[i].type == CommandType::Circle && !(body[i][slot::radius] > kEps)) {
        out.push_back({first_pos + static_cast<int>(i), "degenerate circle", "radius must be positive"});
      }
    }
    return;
  }
  const double tol = closure_tolerance();
  double sx = 0.0;
  double sy = 0.0;
  for (std::size_t i = 0; i < body.size(); ++i) {
    const auto& c = body[i];
    const int pos = first_pos + static_cast<int>(i);
    double ex = c[slot::x];
    double ey = c[slot::y];
    const bool last = i + 1 == body.size();
    if (last) {
      if (std::hypot(ex, ey) > tol) {
        out.push_back({pos, "open loop", "final endpoint does not return to the loop start"});
        return;
      }
      ex = 0.0;
      ey = 0.0;
    }
    if (std::hypot(ex - sx, ey - sy) <= kEps) {
      out.push_back({pos, "zero-length segment", ""});
    }
    if (c.type == CommandType::Arc) {
      const double a = c[slot::alpha];
      if (!(a > kEps) || !(a < 2.0 * kPi - kEps)) {
        out.push_back({pos, "degenerate arc", "sweep must lie strictly inside (0, 2pi)"});
      }
    }
    sx = ex;
    sy = ey;
  }
}

}  // namespace

ValidationReport validate(const CadSequence& seq) {
  ValidationReport report;
  auto& out = report.violations;
  const auto& cmds = seq.commands;
  const int n = static_cast<int>(cmds.size());
  int pending_loops = 0;
  bool have_body = false;
  bool saw_eos = false;
  int pos = 0;
  while (pos < n) {
    const auto& c = cmds[static_cast<std::size_t>(pos)];
    check_params(c, pos, out);
    switch (c.type) {
      case CommandType::Sol: {
        int end = pos + 1;
        while (end < n) {
          const auto t = cmds[static_cast<std::size_t>(end)].type;
          if (t == CommandType::Sol || t == CommandType::Extrude || t == CommandType::Eos) break;
          ++end;
        }
        for (int k = pos + 1; k < end; ++k) check_params(cmds[static_cast<std::size_t>(k)], k, out);
        check_loop(std::span(cmds).subspan(static_cast<std::size_t>(pos + 1),
                                           static_cast<std::size_t>(end - pos - 1)),
                   pos + 1, out);
        ++pending_loops;
        pos = end;
        continue;
      }
      case CommandType::Line:
      case CommandType::Arc:
      case CommandType::Circle:
        out.push_back({pos, "curve outside loop", "sketch curve without a preceding SOL"});
        break;
      case CommandType::Extrude: {
        if (pending_loops == 0) {
          out.push_back({pos, "extrude without profile", ""});
        }
        const auto op = static_cast<int>(std::lround(c[slot::boolean]));
        if (!have_body && op != static_cast<int>(BooleanOp::New)) {
          out.push_back({pos, "boolean without body", "first extrude must create a new body"});
        }
        const bool two = std::lround(c[slot::sided]) == static_cast<long>(Sidedness::Two);
        const double lo = two ? std::min(-c[slot::e2], c[slot::e1]) : std::min(0.0, c[slot::e1]);
        const double hi = two ? std::max(-c[slot::e2], c[slot::e1]) : std::max(0.0, c[slot::e1]);
        if (!(hi - lo > kEps)) out.push_back({pos, "degenerate extrude", "zero slab thickness"});
        if (!(c[slot::scale] > kEps)) out.push_back({pos, "degenerate extrude", "sketch scale must be positive"});
        pending_loops = 0;
        have_body = true;
        break;
      }
      case CommandType::Eos:
        saw_eos = true;
        break;
    }
    if (saw_eos) break;
    ++pos;
  }
  if (!saw_eos) {
    out.push_back({n, "missing EOS", ""});
  } else {
    if (pending_loops > 0) out.push_back({pos, "loop without extrude", ""});
    if (!have_body) out.push_back({pos, "empty program", "no extrusion before EOS"});
    for (int k = pos + 1; k < n; ++k) {
      if (cmds[static_cast<std::size_t>(k)].type != CommandType::Eos) {
        out.push_back({k, "content after EOS", ""});
        break;
      }
    }
  }
  if (n > seq.padded_len) {
    out.push_back({seq.padded_len, "sequence overflow", std::to_string(n) + " commands"});
  }
  return report;
}

// ---- JSON -------------------------------------------------------------------

std::string to_json(const CadSequence& seq) {
  using ojson = nlohmann::ordered_json;
  ojson commands = ojson::array();
  for (const auto& c : seq.commands) {
    ojson item;
    item["type"] = std::string(command_name(c.type));
    const auto layout = layout_of(c.type);
    if (layout.count() > 0) {
      ojson params = ojson::object();
      for (int s = 0; s < kNumParams; ++s) {
        if (!layout.active.test(idx(s))) continue;
        const auto& spec = kSlots[idx(s)];
        if (spec.kind == SlotKind::Discrete) {
          params[std::string(spec.name)] = static_cast<int>(std::lround(c.params[idx(s)]));
        } else {
          params[std::string(spec.name)] = c.params[idx(s)];
        }
      }
      item["params"] = std::move(params);
    }
    commands.push_back(std::move(item));
  }
  ojson root;
  root["commands"] = std::move(commands);
  root["padded_len"] = seq.padded_len;
  return root.dump(2) + "\n";
}

CadSequence from_json(std::string_view text) {
  nlohmann::json root;
  try {
    root = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("json: ") + e.what());
  }
  if (!root.is_object()) throw ParseError("/: expected an object");
  if (!root.contains("commands")) throw ParseError("/commands: missing field");
  const auto& cmds = root["commands"];
  if (!cmds.is_array()) throw ParseError("/commands: expected an array");
  CadSequence seq;
  if (root.contains("padded_len")) {
    const auto& n = root["padded_len"];
    if (!n.is_number_integer() || n.get<long long>() <= 0) {
      throw ParseError("/padded_len: expected a positive integer");
    }
    seq.padded_len = n.get<int>();
  }
  for (std::size_t i = 0; i < cmds.size(); ++i) {
    const std::string path = "/commands/" + std::to_string(i);
    const auto& item = cmds[i];
    if (!item.is_object()) throw ParseError(path + ": expected an object");
    if (!item.contains("type")) throw ParseError(path + "/type: missing field");
    if (!item["type"].is_string()) throw ParseError(path + "/type: expected a string");
    const auto name = item["type"].get<std::string>();
    const auto type = command_type_from_name(name);
    if (!type) throw ParseError(path + "/type: unknown command '" + name + "'");
    auto cmd = blank(*type);
    const auto layout = layout_of(*type);
    const nlohmann::json empty = nlohmann::json::object();
    const auto& params = item.contains("params") ? item["params"] : empty;
    if (!params.is_object()) throw ParseError(path + "/params: expected an object");
    for (auto it = params.begin(); it != params.end(); ++it) {
      const bool known = std::any_of(kSlots.begin(), kSlots.end(), [&](const SlotSpec& s) {
        return s.name == it.key() && layout.active.test(idx(static_cast<int>(&s - kSlots.data())));
      });
      if (!known) throw ParseError(path + "/params/" + it.key() + ": not a parameter of " + name);
    }
    for (int s = 0; s < kNumParams; ++s) {
      if (!layout.active.test(idx(s))) continue;
      const auto& spec = kSlots[idx(s)];
      const std::string key(spec.name);
      const std::string ppath = path + "/params/" + key;
      if (!params.contains(key)) throw ParseError(ppath + ": missing field");
      const auto& v = params[key];
      if (spec.kind == SlotKind::Discrete) {
        if (!v.is_number_integer()) throw ParseError(ppath + ": expected an integer code");
        const auto code = v.get<long long>();
        if (code < 0 || code >= spec.cardinality) throw ParseError(ppath + ": invalid discrete code");
        cmd.params[idx(s)] = static_cast<double>(code);
      } else {
        if (!v.is_number()) throw ParseError(ppath + ": expected a number");
        cmd.params[idx(s)] = v.get<double>();
      }
    }
    seq.commands.push_back(cmd);
  }
  return seq;
}

// ---- GCSQ1 ------------------------------------------------------------------

void write_gcsq(std::ostream& out, std::span<const EncodedSequence> seqs) {
  const std::uint32_t rows = seqs.empty() ? 0u : static_cast<std::uint32_t>(seqs.front().size());
  detail::write_magic(out, "GCSQ1");
  detail::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(seqs.size()));
  detail::write_pod<std::uint32_t>(out, rows);
  detail::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(kRowWidth));
  for (const auto& s : seqs) {
    if (s.size() != rows) throw ShapeError("GCSQ1 requires equal padded lengths");
    for (const auto& r : s) out.write(reinterpret_cast<const char*>(r.data()), kRowWidth);
  }
}

std::vector<EncodedSequence> read_gcsq(std::istream& in) {
  detail::expect_magic(in, "GCSQ1");
  const auto count = detail::read_pod<std::uint32_t>(in, "GCSQ1 count");
  const auto rows = detail::read_pod<std::uint32_t>(in, "GCSQ1 rows");
  const auto cols = detail::read_pod<std::uint32_t>(in, "GCSQ1 cols");
  if (cols != kRowWidth) throw ParseError("GCSQ1: expected 17 columns, got " + std::to_string(cols));
  std::vector<EncodedSequence> out(count, EncodedSequence(rows));
  for (auto& s : out) {
    for (auto& r : s) {
      in.read(reinterpret_cast<char*>(r.data()), kRowWidth);
      if (in.gcount() != kRowWidth) throw ParseError("truncated GCSQ1 payload");
      if (r[0] >= kNumCommandTypes) throw ParseError("invalid token in GCSQ1 payload");
    }
  }
  return out;
}

}  // namespace gencad
