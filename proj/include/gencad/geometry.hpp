#pragma once

// Signed-distance-field geometry kernel: sketch profiles, sketch planes,
// extrusions, and CSG folding of a command sequence into a solid.

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <limits>
#include <optional>
#include <span>
#include <variant>
#include <vector>

#include "gencad/cad_lang.hpp"

namespace gencad {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

struct LineSegment {
  Vec2 a, b;
};

struct ArcSegment {
  Vec2 a, b;
  Vec2 center;
  double radius = 0.0;
  double start_angle = 0.0;  // angle of `a` about `center`
  double sweep = 0.0;        // signed: positive = counter-clockwise
};

struct CircleLoop {
  Vec2 center;
  double radius = 0.0;
};

using CurveSegment = std::variant<LineSegment, ArcSegment>;

struct ProfileLoop {
  std::vector<CurveSegment> segments;  // empty when `circle` is set
  std::optional<CircleLoop> circle;
};

struct Box2 {
  Vec2 lo{Vec2::Constant(std::numeric_limits<double>::infinity())};
  Vec2 hi{Vec2::Constant(-std::numeric_limits<double>::infinity())};
  void extend(const Vec2& p) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
};

struct Box3 {
  Vec3 lo{Vec3::Constant(std::numeric_limits<double>::infinity())};
  Vec3 hi{Vec3::Constant(-std::numeric_limits<double>::infinity())};
  void extend(const Vec3& p) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  void extend(const Box3& b) {
    lo = lo.cwiseMin(b.lo);
    hi = hi.cwiseMax(b.hi);
  }
  bool empty() const { return !(hi.array() >= lo.array()).all(); }
  Vec3 center() const { return 0.5 * (lo + hi); }
  Vec3 extent() const { return hi - lo; }
  bool contains(const Vec3& p, double slack = 0.0) const {
    return (p.array() >= lo.array() - slack).all() && (p.array() <= hi.array() + slack).all();
  }
};

struct Profile2D {
  std::vector<ProfileLoop> loops;
  Box2 bounds() const;
};

/// Builds a profile from sketch commands: one or more loops, each starting at SOL.
Profile2D build_profile(std::span<const CadCommand> loop_commands);

/// Distance to the nearest loop boundary, negative inside (even-odd over loops).
double profile_sdf(const Profile2D& profile, const Vec2& q);

/// Even-odd inside test via a +x ray, arcs split into y-monotone pieces.
bool profile_contains(const Profile2D& profile, const Vec2& q);

double boundary_distance(const Profile2D& profile, const Vec2& q);

struct SketchPlane {
  Vec3 origin = Vec3::Zero();
  double theta = 0.0;
  double phi = 0.0;
  double gamma = 0.0;
  double scale = 1.0;
};

/// R = Rz(phi) * Ry(theta) * Rz(gamma); columns are the sketch u, v, normal axes.
Mat3 plane_rotation(double theta, double phi, double gamma);

/// world = origin + R * (s*u, s*v, w).
struct RigidTransform {
  Mat3 rotation = Mat3::Identity();
  Vec3 origin = Vec3::Zero();
  double scale = 1.0;

  Vec3 to_world(const Vec3& local) const;
  Vec3 to_local(const Vec3& world) const;
};

RigidTransform plane_transform(const SketchPlane& plane);

struct ExtrudeSpec {
  double e1 = 0.0;
  double e2 = 0.0;
  BooleanOp op = BooleanOp::New;
  Sidedness sided = Sidedness::One;
};

struct ExtrudedPrimitive {
  Profile2D profile;
  RigidTransform frame;
  double slab_lo = 0.0;  // along the plane normal, in world units
  double slab_hi = 0.0;

  double sdf(const Vec3& p) const;
  Box3 bounds() const;
};

ExtrudedPrimitive extrude(const Profile2D& profile, const SketchPlane& plane, const ExtrudeSpec& spec);

SketchPlane sketch_plane_of(const CadCommand& extrude_cmd);
ExtrudeSpec extrude_spec_of(const CadCommand& extrude_cmd);

enum class CsgOp { Leaf, Join, Cut, Intersect };

struct CsgNode {
  CsgOp op = CsgOp::Leaf;
  int primitive = -1;  // leaves
  int left = -1;       // internal nodes
  int right = -1;
};

/// Immutable CSG tree of extruded primitives, evaluable as a signed distance field.
class SolidModel {
 public:
  SolidModel() = default;
  SolidModel(std::vector<ExtrudedPrimitive> primitives, std::vector<CsgNode> nodes, int root);

  double sdf(const Vec3& p) const;
  const Box3& bounds() const { return bounds_; }
  bool has_geometry() const { return root_ >= 0; }
  const std::vector<ExtrudedPrimitive>& primitives() const { return primitives_; }
  const std::vector<CsgNode>& nodes() const { return nodes_; }
  int root() const { return root_; }

 private:
  double eval(int node, const Vec3& p) const;

  std::vector<ExtrudedPrimitive> primitives_;
  std::vector<CsgNode> nodes_;
  int root_ = -1;
  Box3 bounds_;
};

/// Folds the extrusions of a sequence into a solid. Throws GeometryError on
/// structural failures; an empty result is a valid SolidModel with is_valid false.
SolidModel execute(const CadSequence& seq);

inline constexpr int kDefaultGridResolution = 64;

/// SDF samples on an (R+1)^3 node lattice spanning the solid bounds.
struct SdfGrid {
  int resolution = 0;
  Box3 box;
  Vec3 cell = Vec3::Zero();
  std::vector<double> values;

  int nodes_per_axis() const { return resolution + 1; }
  std::size_t index(int i, int j, int k) const {
    const auto n = static_cast<std::size_t>(nodes_per_axis());
    return (static_cast<std::size_t>(k) * n + static_cast<std::size_t>(j)) * n + static_cast<std::size_t>(i);
  }
  Vec3 node(int i, int j, int k) const { return box.lo + Vec3(i * cell.x(), j * cell.y(), k * cell.z()); }
};

SdfGrid sample_grid(const SolidModel& solid, int resolution = kDefaultGridResolution);

/// True iff at least one lattice node is strictly inside the solid.
bool is_valid(const SolidModel& solid, int resolution = kDefaultGridResolution);

struct VolumeEstimate {
  double volume = 0.0;
  double std_error = 0.0;
};

VolumeEstimate volume_estimate(const SolidModel& solid, std::size_t n_samples, std::uint64_t seed);

/// Grammar check followed by execution; a program is valid only if both pass
/// and the solid is non-empty.
struct ProgramStatus {
  bool grammar_ok = false;
  bool solid_ok = false;
  std::string detail;  // first violation or kernel error, empty when valid
  bool valid() const { return grammar_ok && solid_ok; }
};

ProgramStatus check_program(const CadSequence& seq, int resolution = kDefaultGridResolution);

}  // namespace gencad
