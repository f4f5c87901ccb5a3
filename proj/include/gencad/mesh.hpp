#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <vector>

#include "gencad/geometry.hpp"

namespace gencad {

struct TriangleMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> triangles;

  double triangle_area(std::size_t t) const;
  double area() const;
  bool empty() const { return triangles.empty(); }
};

/// Zero level-set triangulation over the solid bounds on an R^3 cell lattice.
/// Each cell is split into six tetrahedra sharing the main diagonal, so
/// neighbouring cells agree on shared faces and the surface is closed up to the
/// grid. Triangles are oriented with outward normals.
TriangleMesh extract_mesh(const SolidModel& solid, int resolution = kDefaultGridResolution);
TriangleMesh extract_mesh(const SdfGrid& grid);

inline constexpr std::size_t kDefaultPointCount = 2000;

struct PointCloud {
  std::vector<Vec3> points;
  std::uint64_t seed = 0;
  int resolution = 0;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
};

/// Area-weighted uniform samples on the extracted surface; deterministic in seed.
PointCloud sample_surface(const SolidModel& solid, std::size_t count = kDefaultPointCount,
                          std::uint64_t seed = 0, int resolution = kDefaultGridResolution);
PointCloud sample_surface(const TriangleMesh& mesh, std::size_t count, std::uint64_t seed);

/// Recenters to the centroid and scales the longest axis-aligned extent to 2.
PointCloud normalize(const PointCloud& cloud);

void write_stl_ascii(std::ostream& out, const TriangleMesh& mesh, const std::string& name = "gencad");
void write_obj(std::ostream& out, const TriangleMesh& mesh);
void write_xyz(std::ostream& out, const PointCloud& cloud);
PointCloud read_xyz(std::istream& in);

// GCPC1 sidecar: "GCPC1", u32 count, then count * 3 little-endian float32.
void write_gcpc(std::ostream& out, const PointCloud& cloud);
PointCloud read_gcpc(std::istream& in);

}  // namespace gencad
