#include "gencad/geometry.hpp"

#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>
#include <numbers>

#include "gencad/error.hpp"
#include "gencad/rng.hpp"

namespace gencad {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kEps = 1e-9;

double wrap_2pi(double a) {
  a = std::fmod(a, kTwoPi);
  return a < 0.0 ? a + kTwoPi : a;
}

bool arc_spans(const ArcSegment& arc, double angle) {
  if (arc.sweep > 0.0) return wrap_2pi(angle - arc.start_angle) <= arc.sweep;
  return wrap_2pi(arc.start_angle - angle) <= -arc.sweep;
}

Vec2 arc_point(const ArcSegment& arc, double angle) {
  return arc.center + arc.radius * Vec2(std::cos(angle), std::sin(angle));
}

ArcSegment make_arc(const Vec2& a, const Vec2& b, double alpha, bool ccw) {
  const Vec2 chord = b - a;
  const double c = chord.norm();
  const Vec2 dir = chord / c;
  const Vec2 left(-dir.y(), dir.x());
  const double h = 0.5 * c / std::tan(0.5 * alpha);
  ArcSegment arc;
  arc.a = a;
  arc.b = b;
  arc.center = 0.5 * (a + b) + (ccw ? h : -h) * left;
  arc.radius = 0.5 * c / std::sin(0.5 * alpha);
  arc.start_angle = std::atan2(a.y() - arc.center.y(), a.x() - arc.center.x());
  arc.sweep = ccw ? alpha : -alpha;
  return arc;
}

double segment_distance(const LineSegment& s, const Vec2& q) {
  const Vec2 ab = s.b - s.a;
  const double t = std::clamp((q - s.a).dot(ab) / ab.squaredNorm(), 0.0, 1.0);
  return (s.a + t * ab - q).norm();
}

double arc_distance(const ArcSegment& arc, const Vec2& q) {
  const Vec2 d = q - arc.center;
  if (arc_spans(arc, std::atan2(d.y(), d.x()))) return std::abs(d.norm() - arc.radius);
  return std::min((q - arc.a).norm(), (q - arc.b).norm());
}

// Crossing of the +x ray from q with the segment a->b under the half-open rule.
bool crosses(const Vec2& a, const Vec2& b, const Vec2& q) {
  if ((a.y() > q.y()) == (b.y() > q.y())) return false;
  const double x = a.x() + (q.y() - a.y()) * (b.x() - a.x()) / (b.y() - a.y());
  return x > q.x();
}

// Arc pieces between the arc ends and its top/bottom points are y-monotone and
// lie entirely left or right of the center, so each crosses the ray at most once.
int arc_crossings(const ArcSegment& arc, const Vec2& q) {
  std::vector<double> breaks;  // traversal parameters in (0, 1)
  for (double extreme : {0.5 * kPi, 1.5 * kPi}) {
    const double delta = arc.sweep > 0.0 ? wrap_2pi(extreme - arc.start_angle)
                                         : wrap_2pi(arc.start_angle - extreme);
    const double t = delta / std::abs(arc.sweep);
    if (t > 0.0 && t < 1.0) breaks.push_back(t);
  }
  std::sort(breaks.begin(), breaks.end());
  int count = 0;
  Vec2 p0 = arc.a;
  double t0 = 0.0;
  for (std::size_t i = 0; i <= breaks.size(); ++i) {
    const double t1 = i < breaks.size() ? breaks[i] : 1.0;
    const Vec2 p1 = i < breaks.size() ? arc_point(arc, arc.start_angle + t1 * arc.sweep) : arc.b;
    if ((p0.y() > q.y()) != (p1.y() > q.y())) {
      const double mid = arc.start_angle + 0.5 * (t0 + t1) * arc.sweep;
      const double dy = q.y() - arc.center.y();
      const double dx = std::sqrt(std::max(0.0, arc.radius * arc.radius - dy * dy));
      const double x = arc.center.x() + (std::cos(mid) >= 0.0 ? dx : -dx);
      if (x > q.x()) ++count;
    }
    p0 = p1;
    t0 = t1;
  }
  return count;
}

}  // namespace

// ---- profiles -----------------------------------------------------------------

Box2 Profile2D::bounds() const {
  Box2 box;
  for (const auto& loop : loops) {
    if (loop.circle) {
      box.extend(loop.circle->center - Vec2::Constant(loop.circle->radius));
      box.extend(loop.circle->center + Vec2::Constant(loop.circle->radius));
      continue;
    }
    for (const auto& seg : loop.segments) {
      if (const auto* l = std::get_if<LineSegment>(&seg)) {
        box.extend(l->a);
        box.extend(l->b);
      } else {
        const auto& arc = std::get<ArcSegment>(seg);
        box.extend(arc.a);
        box.extend(arc.b);
        for (double a : {0.0, 0.5 * kPi, kPi, 1.5 * kPi}) {
          if (arc_spans(arc, a)) box.extend(arc_point(arc, a));
        }
      }
    }
  }
  return box;
}

Profile2D build_profile(std::span<const CadCommand> cmds) {
  Profile2D profile;
  const double tol = closure_tolerance();
  std::size_t i = 0;
  while (i < cmds.size()) {
    if (cmds[i].type != CommandType::Sol) {
      throw GeometryError("sketch curve outside a loop at command " + std::to_string(i));
    }
    std::size_t end = i + 1;
    while (end < cmds.size() && cmds[end].type != CommandType::Sol) ++end;
    const auto body = cmds.subspan(i + 1, end - i - 1);
    if (body.empty()) throw GeometryError("empty loop");
    ProfileLoop loop;
    if (body.front().type == CommandType::Circle) {
      if (body.size() != 1) throw GeometryError("circle loop must contain exactly one command");
      const double r = body.front()[slot::radius];
      if (!(r > kEps)) throw GeometryError("degenerate circle: non-positive radius");
      loop.circle = CircleLoop{Vec2(body.front()[slot::x], body.front()[slot::y]), r};
    } else {
      Vec2 start = Vec2::Zero();
      for (std::size_t k = 0; k < body.size(); ++k) {
        const auto& c = body[k];
        if (c.type != CommandType::Line && c.type != CommandType::Arc) {
          throw GeometryError("unexpected " + std::string(command_name(c.type)) + " inside a curve loop");
        }
        Vec2 end_pt(c[slot::x], c[slot::y]);
        if (k + 1 == body.size()) {
          if (end_pt.norm() > tol) throw GeometryError("open loop");
          end_pt = Vec2::Zero();
        }
        if ((end_pt - start).norm() <= kEps) throw GeometryError("zero-length segment");
        if (c.type == CommandType::Line) {
          loop.segments.emplace_back(LineSegment{start, end_pt});
        } else {
          const double alpha = c[slot::alpha];
          if (!(alpha > kEps) || !(alpha < kTwoPi - kEps)) {
            throw GeometryError("degenerate arc: sweep must lie strictly inside (0, 2pi)");
          }
          loop.segments.emplace_back(make_arc(start, end_pt, alpha, c[slot::flag] > 0.5));
        }
        start = end_pt;
      }
    }
    profile.loops.push_back(std::move(loop));
    i = end;
  }
  if (profile.loops.empty()) throw GeometryError("profile has no loops");
  return profile;
}

bool profile_contains(const Profile2D& profile, const Vec2& q) {
  int crossings = 0;
  for (const auto& loop : profile.loops) {
    if (loop.circle) {
      if ((q - loop.circle->center).norm() < loop.circle->radius) ++crossings;
      continue;
    }
    for (const auto& seg : loop.segments) {
      if (const auto* l = std::get_if<LineSegment>(&seg)) {
        crossings += crosses(l->a, l->b, q) ? 1 : 0;
      } else {
        crossings += arc_crossings(std::get<ArcSegment>(seg), q);
      }
    }
  }
  return (crossings & 1) != 0;
}

double boundary_distance(const Profile2D& profile, const Vec2& q) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& loop : profile.loops) {
    if (loop.circle) {
      best = std::min(best, std::abs((q - loop.circle->center).norm() - loop.circle->radius));
      continue;
    }
    for (const auto& seg : loop.segments) {
      if (const auto* l = std::get_if<LineSegment>(&seg)) {
        best = std::min(best, segment_distance(*l, q));
      } else {
        best = std::min(best, arc_distance(std::get<ArcSegment>(seg), q));
      }
    }
  }
  return best;
}

double profile_sdf(const Profile2D& profile, const Vec2& q) {
  const double d = boundary_distance(profile, q);
  return profile_contains(profile, q) ? -d : d;
}

// ---- planes -------------------------------------------------------------------

Mat3 plane_rotation(double theta, double phi, double gamma) {
  const Eigen::AngleAxisd rz_phi(phi, Vec3::UnitZ());
  const Eigen::AngleAxisd ry_theta(theta, Vec3::UnitY());
  const Eigen::AngleAxisd rz_gamma(gamma, Vec3::UnitZ());
  return (rz_phi * ry_theta * rz_gamma).toRotationMatrix();
}

Vec3 RigidTransform::to_world(const Vec3& local) const {
  return origin + rotation * Vec3(scale * local.x(), scale * local.y(), local.z());
}

Vec3 RigidTransform::to_local(const Vec3& world) const {
  const Vec3 d = rotation.transpose() * (world - origin);
  return {d.x() / scale, d.y() / scale, d.z()};
}

RigidTransform plane_transform(const SketchPlane& plane) {
  RigidTransform t;
  t.rotation = plane_rotation(plane.theta, plane.phi, plane.gamma);
  t.origin = plane.origin;
  t.scale = plane.scale;
  return t;
}

SketchPlane sketch_plane_of(const CadCommand& c) {
  SketchPlane p;
  p.theta = c[slot::theta];
  p.phi = c[slot::phi];
  p.gamma = c[slot::gamma];
  p.origin = Vec3(c[slot::px], c[slot::py], c[slot::pz]);
  p.scale = c[slot::scale];
  return p;
}

ExtrudeSpec extrude_spec_of(const CadCommand& c) {
  ExtrudeSpec e;
  e.e1 = c[slot::e1];
  e.e2 = c[slot::e2];
  e.op = static_cast<BooleanOp>(std::lround(c[slot::boolean]));
  e.sided = static_cast<Sidedness>(std::lround(c[slot::sided]));
  return e;
}

// ---- extrusion ----------------------------------------------------------------

ExtrudedPrimitive extrude(const Profile2D& profile, const SketchPlane& plane, const ExtrudeSpec& spec) {
  if (!(plane.scale > kEps)) throw GeometryError("degenerate solid: non-positive sketch scale");
  ExtrudedPrimitive prim;
  prim.profile = profile;
  prim.frame = plane_transform(plane);
  if (spec.sided == Sidedness::Two) {
    prim.slab_lo = std::min(-spec.e2, spec.e1);
    prim.slab_hi = std::max(-spec.e2, spec.e1);
  } else {
    prim.slab_lo = std::min(0.0, spec.e1);
    prim.slab_hi = std::max(0.0, spec.e1);
  }
  if (!(prim.slab_hi - prim.slab_lo > kEps)) {
    throw GeometryError("degenerate solid: non-positive slab thickness");
  }
  return prim;
}

double ExtrudedPrimitive::sdf(const Vec3& p) const {
  const Vec3 local = frame.to_local(p);
  const double d2 = profile_sdf(profile, Vec2(local.x(), local.y())) * frame.scale;
  const double center = 0.5 * (slab_lo + slab_hi);
  const double half = 0.5 * (slab_hi - slab_lo);
  const double dw = std::abs(local.z() - center) - half;
  const double outside = std::hypot(std::max(d2, 0.0), std::max(dw, 0.0));
  return outside + std::min(std::max(d2, dw), 0.0);
}

Box3 ExtrudedPrimitive::bounds() const {
  const Box2 b = profile.bounds();
  Box3 box;
  for (int corner = 0; corner < 8; ++corner) {
    const Vec3 local((corner & 1) ? b.hi.x() : b.lo.x(), (corner & 2) ? b.hi.y() : b.lo.y(),
                     (corner & 4) ? slab_hi : slab_lo);
    box.extend(frame.to_world(local));
  }
  return box;
}

// ---- solids -------------------------------------------------------------------

SolidModel::SolidModel(std::vector<ExtrudedPrimitive> primitives, std::vector<CsgNode> nodes, int root)
    : primitives_(std::move(primitives)), nodes_(std::move(nodes)), root_(root) {
  for (const auto& p : primitives_) bounds_.extend(p.bounds());
  if (!bounds_.empty()) {
    const Vec3 pad = (0.05 * bounds_.extent()).cwiseMax(Vec3::Constant(1e-3));
    bounds_.lo -= pad;
    bounds_.hi += pad;
  }
}

double SolidModel::eval(int node, const Vec3& p) const {
  const auto& n = nodes_[static_cast<std::size_t>(node)];
  switch (n.op) {
    case CsgOp::Leaf:
      return primitives_[static_cast<std::size_t>(n.primitive)].sdf(p);
    case CsgOp::Join:
      return std::min(eval(n.left, p), eval(n.right, p));
    case CsgOp::Cut:
      return std::max(eval(n.left, p), -eval(n.right, p));
    case CsgOp::Intersect:
      return std::max(eval(n.left, p), eval(n.right, p));
  }
  return std::numeric_limits<double>::infinity();
}

double SolidModel::sdf(const Vec3& p) const {
  if (root_ < 0) return std::numeric_limits<double>::infinity();
  return eval(root_, p);
}

SolidModel execute(const CadSequence& seq) {
  std::vector<ExtrudedPrimitive> prims;
  std::vector<CsgNode> nodes;
  int root = -1;
  std::size_t loop_start = 0;
  bool in_sketch = false;
  const auto& cmds = seq.commands;
  for (std::size_t i = 0; i < cmds.size(); ++i) {
    const auto& c = cmds[i];
    if (c.type == CommandType::Eos) {
      if (in_sketch) throw GeometryError("sketch loops without a closing extrude");
      break;
    }
    if (c.type == CommandType::Extrude) {
      if (!in_sketch) throw GeometryError("extrude without profile at command " + std::to_string(i));
      const auto profile = build_profile(std::span(cmds).subspan(loop_start, i - loop_start));
      const auto spec = extrude_spec_of(c);
      prims.push_back(extrude(profile, sketch_plane_of(c), spec));
      nodes.push_back({CsgOp::Leaf, static_cast<int>(prims.size()) - 1, -1, -1});
      const int leaf = static_cast<int>(nodes.size()) - 1;
      if (root < 0) {
        if (spec.op != BooleanOp::New) {
          throw GeometryError("boolean without body: first extrude must be 'new'");
        }
        root = leaf;
      } else {
        CsgOp op = CsgOp::Join;
        if (spec.op == BooleanOp::Cut) op = CsgOp::Cut;
        if (spec.op == BooleanOp::Intersect) op = CsgOp::Intersect;
        nodes.push_back({op, -1, root, leaf});
        root = static_cast<int>(nodes.size()) - 1;
      }
      in_sketch = false;
      continue;
    }
    if (!in_sketch) {
      if (c.type != CommandType::Sol) throw GeometryError("sketch curve outside a loop");
      loop_start = i;
      in_sketch = true;
    }
  }
  if (root < 0) throw GeometryError("program contains no extrusion");
  return SolidModel(std::move(prims), std::move(nodes), root);
}

SdfGrid sample_grid(const SolidModel& solid, int resolution) {
  SdfGrid grid;
  grid.resolution = resolution;
  grid.box = solid.bounds();
  grid.cell = grid.box.extent() / static_cast<double>(resolution);
  const int n = grid.nodes_per_axis();
  grid.values.resize(static_cast<std::size_t>(n) * n * n);
  for (int k = 0; k < n; ++k) {
    for (int j = 0; j < n; ++j) {
      for (int i = 0; i < n; ++i) grid.values[grid.index(i, j, k)] = solid.sdf(grid.node(i, j, k));
    }
  }
  return grid;
}

bool is_valid(const SolidModel& solid, int resolution) {
  if (!solid.has_geometry()) return false;
  // same lattice as sample_grid, stopping at the first inside node
  SdfGrid grid;
  grid.resolution = resolution;
  grid.box = solid.bounds();
  grid.cell = grid.box.extent() / static_cast<double>(resolution);
  const int n = grid.nodes_per_axis();
  for (int k = 0; k < n; ++k) {
    for (int j = 0; j < n; ++j) {
      for (int i = 0; i < n; ++i) {
        if (solid.sdf(grid.node(i, j, k)) < 0.0) return true;
      }
    }
  }
  return false;
}

VolumeEstimate volume_estimate(const SolidModel& solid, std::size_t n_samples, std::uint64_t seed) {
  if (!solid.has_geometry() || n_samples == 0) return {};
  Rng rng(seed);
  const Box3& box = solid.bounds();
  const Vec3 ext = box.extent();
  std::size_t inside = 0;
  for (std::size_t s = 0; s < n_samples; ++s) {
    const Vec3 p(box.lo.x() + ext.x() * rng.uniform(), box.lo.y() + ext.y() * rng.uniform(),
                 box.lo.z() + ext.z() * rng.uniform());
    if (solid.sdf(p) < 0.0) ++inside;
  }
  const double box_volume = ext.prod();
  const double frac = static_cast<double>(inside) / static_cast<double>(n_samples);
  return {box_volume * frac,
          box_volume * std::sqrt(frac * (1.0 - frac) / static_cast<double>(n_samples))};
}

ProgramStatus check_program(const CadSequence& seq, int resolution) {
  ProgramStatus st;
  const auto report = validate(seq);
  st.grammar_ok = report.ok();
  if (!st.grammar_ok) {
    st.detail = report.summary();
    return st;
  }
  try {
    st.solid_ok = is_valid(execute(seq), resolution);
    if (!st.solid_ok) st.detail = "empty solid";
  } catch (const GeometryError& e) {
    st.detail = e.what();
  }
  return st;
}

}  // namespace gencad
