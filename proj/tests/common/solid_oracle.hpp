#pragma once

// Point-in-solid oracle written directly against the command semantics,
// sharing no code with the geometry kernel: loops are chord polygons whose
// parity is flipped inside each arc's circular segment, planes are built from
// axis-angle rotations, and booleans are folded as set operations.

#include <Eigen/Geometry>
#include <cmath>
#include <vector>

#include "gencad/cad_lang.hpp"

namespace gencad::testing {

struct OracleArc {
  Eigen::Vector2d a, b, center;
  double radius = 0.0;
  Eigen::Vector2d bulge;  // point on the arc halfway along
};

struct OracleLoop {
  std::vector<Eigen::Vector2d> chord;  // closed polygon vertices
  std::vector<OracleArc> arcs;
  bool is_circle = false;
  Eigen::Vector2d circle_center;
  double circle_radius = 0.0;
};

struct OraclePrimitive {
  std::vector<OracleLoop> loops;
  Eigen::Matrix3d rotation;
  Eigen::Vector3d origin;
  double scale = 1.0;
  double lo = 0.0, hi = 0.0;
  BooleanOp op = BooleanOp::New;
};

inline OracleArc oracle_arc(const Eigen::Vector2d& a, const Eigen::Vector2d& b, double alpha, bool ccw) {
  // Center c solves b - c = Rot(±alpha) (a - c).
  const double ang = ccw ? alpha : -alpha;
  Eigen::Matrix2d rot;
  rot << std::cos(ang), -std::sin(ang), std::sin(ang), std::cos(ang);
  const Eigen::Vector2d c = (Eigen::Matrix2d::Identity() - rot).fullPivLu().solve(b - rot * a);
  Eigen::Matrix2d half;
  half << std::cos(ang / 2), -std::sin(ang / 2), std::sin(ang / 2), std::cos(ang / 2);
  return {a, b, c, (a - c).norm(), c + half * (a - c)};
}

inline bool in_polygon(const std::vector<Eigen::Vector2d>& poly, const Eigen::Vector2d& q) {
  bool inside = false;
  for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
    const auto& pi = poly[i];
    const auto& pj = poly[j];
    if ((pi.y() > q.y()) != (pj.y() > q.y())) {
      const double x = pj.x() + (q.y() - pj.y()) * (pi.x() - pj.x()) / (pi.y() - pj.y());
      if (q.x() < x) inside = !inside;
    }
  }
  return inside;
}

inline double cross2(const Eigen::Vector2d& u, const Eigen::Vector2d& v) { return u.x() * v.y() - u.y() * v.x(); }

inline bool in_loop(const OracleLoop& loop, const Eigen::Vector2d& q) {
  if (loop.is_circle) return (q - loop.circle_center).norm() < loop.circle_radius;
  bool inside = loop.chord.size() >= 3 && in_polygon(loop.chord, q);
  for (const auto& arc : loop.arcs) {
    const Eigen::Vector2d ab = arc.b - arc.a;
    const bool same_side = cross2(ab, q - arc.a) * cross2(ab, arc.bulge - arc.a) > 0.0;
    if (same_side && (q - arc.center).norm() < arc.radius) inside = !inside;
  }
  return inside;
}

inline std::vector<OraclePrimitive> oracle_primitives(const CadSequence& seq) {
  std::vector<OraclePrimitive> prims;
  std::vector<OracleLoop> loops;
  OracleLoop current;
  Eigen::Vector2d pen(0.0, 0.0);
  bool open = false;
  // the closing curve ends exactly at the loop start (closure is enforced within tolerance)
  double last_alpha = 0.0;
  bool last_ccw = false;
  bool last_is_arc = false;
  auto flush = [&] {
    if (open && !current.is_circle && current.chord.size() > 1) {
      const Eigen::Vector2d start = current.chord.front();
      const Eigen::Vector2d from = current.chord[current.chord.size() - 2];
      current.chord.back() = start;
      if (last_is_arc) current.arcs.back() = oracle_arc(from, start, last_alpha, last_ccw);
    }
    if (open) loops.push_back(current);
    current = OracleLoop{};
    pen = Eigen::Vector2d(0.0, 0.0);
    open = false;
  };
  for (const auto& c : seq.commands) {
    switch (c.type) {
      case CommandType::Sol:
        flush();
        current.chord.push_back(pen);
        open = true;
        break;
      case CommandType::Line: {
        pen = Eigen::Vector2d(c[slot::x], c[slot::y]);
        current.chord.push_back(pen);
        last_is_arc = false;
        break;
      }
      case CommandType::Arc: {
        const Eigen::Vector2d end(c[slot::x], c[slot::y]);
        current.arcs.push_back(oracle_arc(pen, end, c[slot::alpha], c[slot::flag] > 0.5));
        last_alpha = c[slot::alpha];
        last_ccw = c[slot::flag] > 0.5;
        last_is_arc = true;
        pen = end;
        current.chord.push_back(pen);
        break;
      }
      case CommandType::Circle:
        current.is_circle = true;
        current.circle_center = Eigen::Vector2d(c[slot::x], c[slot::y]);
        current.circle_radius = c[slot::radius];
        break;
      case CommandType::Extrude: {
        flush();
        OraclePrimitive p;
        p.loops = loops;
        loops.clear();
        p.rotation = (Eigen::AngleAxisd(c[slot::phi], Eigen::Vector3d::UnitZ()) *
                      Eigen::AngleAxisd(c[slot::theta], Eigen::Vector3d::UnitY()) *
                      Eigen::AngleAxisd(c[slot::gamma], Eigen::Vector3d::UnitZ()))
                         .toRotationMatrix();
        p.origin = Eigen::Vector3d(c[slot::px], c[slot::py], c[slot::pz]);
        p.scale = c[slot::scale];
        const bool two = c[slot::sided] > 0.5;
        const double e1 = c[slot::e1];
        const double e2 = two ? -c[slot::e2] : 0.0;
        p.lo = std::min(e1, e2);
        p.hi = std::max(e1, e2);
        p.op = static_cast<BooleanOp>(static_cast<int>(c[slot::boolean]));
        prims.push_back(p);
        break;
      }
      case CommandType::Eos:
        return prims;
    }
  }
  return prims;
}

inline bool in_primitive(const OraclePrimitive& p, const Eigen::Vector3d& x) {
  const Eigen::Vector3d local = p.rotation.transpose() * (x - p.origin);
  if (!(local.z() > p.lo && local.z() < p.hi)) return false;
  const Eigen::Vector2d q(local.x() / p.scale, local.y() / p.scale);
  bool inside = false;
  for (const auto& loop : p.loops) inside ^= in_loop(loop, q);
  return inside;
}

/// Inside test for the whole program; booleans fold left to right.
inline bool in_solid(const std::vector<OraclePrimitive>& prims, const Eigen::Vector3d& x) {
  bool inside = false;
  for (std::size_t i = 0; i < prims.size(); ++i) {
    const bool here = in_primitive(prims[i], x);
    switch (prims[i].op) {
      case BooleanOp::New:
      case BooleanOp::Join:
        inside = i == 0 ? here : (inside || here);
        break;
      case BooleanOp::Cut:
        inside = inside && !here;
        break;
      case BooleanOp::Intersect:
        inside = inside && here;
        break;
    }
  }
  return inside;
}

}  // namespace gencad::testing
