#pragma once

// CAD command language: vocabulary, fixed 17-wide vector form, quantization,
// grammar validation and canonical serialization.

#include <array>
#include <bitset>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace gencad {

enum class CommandType : std::uint8_t { Sol = 0, Line = 1, Arc = 2, Circle = 3, Extrude = 4, Eos = 5 };

inline constexpr int kNumCommandTypes = 6;
inline constexpr int kNumParams = 16;
inline constexpr int kNumLevels = 256;
inline constexpr int kRowWidth = 1 + kNumParams;
inline constexpr std::uint8_t kMaskLevel = 255;
inline constexpr int kDefaultPaddedLength = 60;
/// Value held by masked (unused) continuous slots.
inline constexpr double kMaskValue = -1.0;

/// Parameter slot indices in the 16-wide parameter vector.
namespace slot {
inline constexpr int x = 0;
inline constexpr int y = 1;
inline constexpr int alpha = 2;
inline constexpr int flag = 3;
inline constexpr int radius = 4;
inline constexpr int theta = 5;
inline constexpr int phi = 6;
inline constexpr int gamma = 7;
inline constexpr int px = 8;
inline constexpr int py = 9;
inline constexpr int pz = 10;
inline constexpr int scale = 11;
inline constexpr int e1 = 12;
inline constexpr int e2 = 13;
inline constexpr int boolean = 14;
inline constexpr int sided = 15;
}  // namespace slot

/// Extrude boolean codes (slot b).
enum class BooleanOp : std::uint8_t { New = 0, Join = 1, Cut = 2, Intersect = 3 };
/// Extrude sidedness codes (slot u).
enum class Sidedness : std::uint8_t { One = 0, Two = 1 };

CommandType command_type_from_code(int code);
std::string_view command_name(CommandType type);
std::optional<CommandType> command_type_from_name(std::string_view name);

struct Interval {
  double lo = 0.0;
  double hi = 1.0;
  double width() const { return hi - lo; }
};

enum class SlotKind { Continuous, Discrete };

struct SlotSpec {
  std::string_view name;
  SlotKind kind = SlotKind::Continuous;
  Interval range;       // continuous slots
  int cardinality = 0;  // discrete slots
};

/// The range table for all 16 slots. One place to swap in other normalizations.
const std::array<SlotSpec, kNumParams>& slot_table();

struct ParamLayout {
  std::bitset<kNumParams> active;
  int count() const { return static_cast<int>(active.count()); }
};

ParamLayout layout_of(CommandType type);

/// level = round((v - lo) / (hi - lo) * 255), half away from zero; v is clamped.
int quantize(double v, Interval range);
double dequantize(int level, Interval range);

struct CadCommand {
  CommandType type = CommandType::Eos;
  std::array<double, kNumParams> params{};

  static CadCommand sol();
  static CadCommand eos();
  static CadCommand line(double x, double y);
  static CadCommand arc(double x, double y, double sweep, bool ccw);
  static CadCommand circle(double x, double y, double r);
  static CadCommand extrude(double theta, double phi, double gamma, double px, double py, double pz,
                            double s, double e1, double e2, BooleanOp op, Sidedness sided);

  double operator[](int i) const { return params[static_cast<std::size_t>(i)]; }
  bool operator==(const CadCommand&) const = default;
};

struct CadSequence {
  std::vector<CadCommand> commands;  // includes the terminating EOS
  int padded_len = kDefaultPaddedLength;

  bool operator==(const CadSequence&) const = default;
};

using EncodedRow = std::array<std::uint8_t, kRowWidth>;
/// N x 17 integer matrix: [type_code, 16 levels] per row.
using EncodedSequence = std::vector<EncodedRow>;

EncodedRow encode_command(const CadCommand& cmd);
CadCommand decode_command(const EncodedRow& row);
EncodedRow eos_row();

EncodedSequence encode_sequence(const CadSequence& seq);
CadSequence decode_sequence(std::span<const EncodedRow> rows);

/// Number of rows up to and including the first EOS (rows.size() if none).
int program_length(std::span<const EncodedRow> rows);

/// Snaps every active slot to its quantization grid.
CadSequence snap_to_grid(const CadSequence& seq);

/// Two quantization steps of the sketch coordinate range.
double closure_tolerance();

struct Violation {
  int position = -1;
  std::string rule;
  std::string detail;
};

struct ValidationReport {
  std::vector<Violation> violations;
  bool ok() const { return violations.empty(); }
  std::string summary() const;
};

ValidationReport validate(const CadSequence& seq);

std::string to_json(const CadSequence& seq);
CadSequence from_json(std::string_view text);

// GCSQ1 sidecar: "GCSQ1", u32 count, u32 rows, u32 cols (=17), then count*rows*cols u8.
void write_gcsq(std::ostream& out, std::span<const EncodedSequence> seqs);
std::vector<EncodedSequence> read_gcsq(std::istream& in);

}  // namespace gencad
