#include "gencad/mesh.hpp"

#include <algorithm>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <unordered_map>

#include "gencad/detail/binary_io.hpp"
#include "gencad/error.hpp"
#include "gencad/rng.hpp"

namespace gencad {

namespace {

// Kuhn decomposition of a cell into six tetrahedra around the 0-7 diagonal.
// Corner c has offsets (c & 1, (c >> 1) & 1, (c >> 2) & 1).
constexpr std::array<std::array<int, 4>, 6> kTets = {{
    {0, 1, 3, 7},
    {0, 1, 5, 7},
    {0, 2, 3, 7},
    {0, 2, 6, 7},
    {0, 4, 5, 7},
    {0, 4, 6, 7},
}};

class MeshBuilder {
 public:
  explicit MeshBuilder(const SdfGrid& grid) : grid_(grid) {}

  void add_tet(const std::array<std::size_t, 4>& ids, const std::array<Vec3, 4>& pos,
               const std::array<double, 4>& val) {
    std::array<int, 4> in{};
    std::array<int, 4> out{};
    int n_in = 0;
    int n_out = 0;
    for (int v = 0; v < 4; ++v) {
      if (val[static_cast<std::size_t>(v)] < 0.0) {
        in[static_cast<std::size_t>(n_in++)] = v;
      } else {
        out[static_cast<std::size_t>(n_out++)] = v;
      }
    }
    if (n_in == 0 || n_out == 0) return;

    Vec3 in_c = Vec3::Zero();
    Vec3 out_c = Vec3::Zero();
    for (int a = 0; a < n_in; ++a) in_c += pos[static_cast<std::size_t>(in[static_cast<std::size_t>(a)])];
    for (int a = 0; a < n_out; ++a) out_c += pos[static_cast<std::size_t>(out[static_cast<std::size_t>(a)])];
    const Vec3 outward = out_c / n_out - in_c / n_in;

    auto edge = [&](int a, int b) { return vertex_on_edge(ids, pos, val, a, b); };
    if (n_in == 1) {
      emit(edge(in[0], out[0]), edge(in[0], out[1]), edge(in[0], out[2]), outward);
    } else if (n_in == 3) {
      emit(edge(out[0], in[0]), edge(out[0], in[1]), edge(out[0], in[2]), outward);
    } else {
      const int e00 = edge(in[0], out[0]);
      const int e01 = edge(in[0], out[1]);
      const int e11 = edge(in[1], out[1]);
      const int e10 = edge(in[1], out[0]);
      emit(e00, e01, e11, outward);
      emit(e00, e11, e10, outward);
    }
  }

  TriangleMesh take() { return std::move(mesh_); }

 private:
  int vertex_on_edge(const std::array<std::size_t, 4>& ids, const std::array<Vec3, 4>& pos,
                     const std::array<double, 4>& val, int a, int b) {
    auto ua = static_cast<std::size_t>(a);
    auto ub = static_cast<std::size_t>(b);
    if (ids[ua] > ids[ub]) std::swap(ua, ub);
    const std::uint64_t key = static_cast<std::uint64_t>(ids[ua]) * grid_.values.size() + ids[ub];
    const auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;
    const double t = val[ua] / (val[ua] - val[ub]);
    mesh_.vertices.push_back(pos[ua] + t * (pos[ub] - pos[ua]));
    const int id = static_cast<int>(mesh_.vertices.size()) - 1;
    cache_.emplace(key, id);
    return id;
  }

  void emit(int a, int b, int c, const Vec3& outward) {
    const Vec3& pa = mesh_.vertices[static_cast<std::size_t>(a)];
    const Vec3 n = (mesh_.vertices[static_cast<std::size_t>(b)] - pa)
                       .cross(mesh_.vertices[static_cast<std::size_t>(c)] - pa);
    if (n.dot(outward) < 0.0) std::swap(b, c);
    mesh_.triangles.push_back({a, b, c});
  }

  const SdfGrid& grid_;
  TriangleMesh mesh_;
  std::unordered_map<std::uint64_t, int> cache_;
};

}  // namespace

double TriangleMesh::triangle_area(std::size_t t) const {
  const auto& tri = triangles[t];
  const Vec3& a = vertices[static_cast<std::size_t>(tri[0])];
  const Vec3& b = vertices[static_cast<std::size_t>(tri[1])];
  const Vec3& c = vertices[static_cast<std::size_t>(tri[2])];
  return 0.5 * (b - a).cross(c - a).norm();
}

double TriangleMesh::area() const {
  double total = 0.0;
  for (std::size_t t = 0; t < triangles.size(); ++t) total += triangle_area(t);
  return total;
}

TriangleMesh extract_mesh(const SdfGrid& grid) {
  MeshBuilder builder(grid);
  const int r = grid.resolution;
  for (int k = 0; k < r; ++k) {
    for (int j = 0; j < r; ++j) {
      for (int i = 0; i < r; ++i) {
        std::array<std::size_t, 8> ids{};
        std::array<Vec3, 8> pos;
        std::array<double, 8> val{};
        bool any_in = false;
        bool any_out = false;
        for (int c = 0; c < 8; ++c) {
          const int di = c & 1;
          const int dj = (c >> 1) & 1;
          const int dk = (c >> 2) & 1;
          const auto uc = static_cast<std::size_t>(c);
          ids[uc] = grid.index(i + di, j + dj, k + dk);
          pos[uc] = grid.node(i + di, j + dj, k + dk);
          val[uc] = grid.values[ids[uc]];
          (val[uc] < 0.0 ? any_in : any_out) = true;
        }
        if (!any_in || !any_out) continue;
        for (const auto& tet : kTets) {
          std::array<std::size_t, 4> tid{};
          std::array<Vec3, 4> tpos;
          std::array<double, 4> tval{};
          for (std::size_t v = 0; v < 4; ++v) {
            const auto c = static_cast<std::size_t>(tet[v]);
            tid[v] = ids[c];
            tpos[v] = pos[c];
            tval[v] = val[c];
          }
          builder.add_tet(tid, tpos, tval);
        }
      }
    }
  }
  return builder.take();
}

TriangleMesh extract_mesh(const SolidModel& solid, int resolution) {
  if (!solid.has_geometry()) return {};
  return extract_mesh(sample_grid(solid, resolution));
}

PointCloud sample_surface(const TriangleMesh& mesh, std::size_t count, std::uint64_t seed) {
  std::vector<double> cumulative(mesh.triangles.size());
  double total = 0.0;
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    total += mesh.triangle_area(t);
    cumulative[t] = total;
  }
  if (!(total > 0.0)) throw GeometryError("cannot sample empty solid");
  Rng rng(seed);
  PointCloud cloud;
  cloud.seed = seed;
  cloud.points.reserve(count);
  for (std::size_t s = 0; s < count; ++s) {
    const double pick = rng.uniform() * total;
    auto t = static_cast<std::size_t>(std::upper_bound(cumulative.begin(), cumulative.end(), pick) -
                                      cumulative.begin());
    t = std::min(t, cumulative.size() - 1);
    const auto& tri = mesh.triangles[t];
    const double r1 = std::sqrt(rng.uniform());
    const double r2 = rng.uniform();
    const Vec3& a = mesh.vertices[static_cast<std::size_t>(tri[0])];
    const Vec3& b = mesh.vertices[static_cast<std::size_t>(tri[1])];
    const Vec3& c = mesh.vertices[static_cast<std::size_t>(tri[2])];
    cloud.points.push_back((1.0 - r1) * a + r1 * (1.0 - r2) * b + r1 * r2 * c);
  }
  return cloud;
}

PointCloud sample_surface(const SolidModel& solid, std::size_t count, std::uint64_t seed, int resolution) {
  const auto mesh = extract_mesh(solid, resolution);
  if (mesh.empty()) throw GeometryError("cannot sample empty solid");
  auto cloud = sample_surface(mesh, count, seed);
  cloud.resolution = resolution;
  return cloud;
}

PointCloud normalize(const PointCloud& cloud) {
  PointCloud out = cloud;
  if (cloud.empty()) return out;
  Vec3 centroid = Vec3::Zero();
  for (const auto& p : cloud.points) centroid += p;
  centroid /= static_cast<double>(cloud.size());
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = -lo;
  for (const auto& p : cloud.points) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  const double extent = (hi - lo).maxCoeff();
  const double s = extent > 0.0 ? 2.0 / extent : 1.0;
  for (auto& p : out.points) p = (p - centroid) * s;
  return out;
}

void write_stl_ascii(std::ostream& out, const TriangleMesh& mesh, const std::string& name) {
  out << "solid " << name << "\n";
  out.precision(9);
  for (const auto& tri : mesh.triangles) {
    const Vec3& a = mesh.vertices[static_cast<std::size_t>(tri[0])];
    const Vec3& b = mesh.vertices[static_cast<std::size_t>(tri[1])];
    const Vec3& c = mesh.vertices[static_cast<std::size_t>(tri[2])];
    Vec3 n = (b - a).cross(c - a);
    if (n.norm() > 0.0) n.normalize();
    out << "  facet normal " << n.x() << ' ' << n.y() << ' ' << n.z() << "\n    outer loop\n";
    for (const Vec3* v : {&a, &b, &c}) out << "      vertex " << v->x() << ' ' << v->y() << ' ' << v->z() << "\n";
    out << "    endloop\n  endfacet\n";
  }
  out << "endsolid " << name << "\n";
}

void write_obj(std::ostream& out, const TriangleMesh& mesh) {
  out.precision(9);
  for (const auto& v : mesh.vertices) out << "v " << v.x() << ' ' << v.y() << ' ' << v.z() << "\n";
  for (const auto& t : mesh.triangles) out << "f " << t[0] + 1 << ' ' << t[1] + 1 << ' ' << t[2] + 1 << "\n";
}

void write_xyz(std::ostream& out, const PointCloud& cloud) {
  out.precision(17);
  for (const auto& p : cloud.points) out << p.x() << ' ' << p.y() << ' ' << p.z() << "\n";
}

PointCloud read_xyz(std::istream& in) {
  PointCloud cloud;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ls(line);
    double x = 0;
    double y = 0;
    double z = 0;
    if (!(ls >> x >> y >> z)) throw ParseError("xyz line " + std::to_string(lineno) + ": expected three numbers");
    cloud.points.emplace_back(x, y, z);
  }
  return cloud;
}

void write_gcpc(std::ostream& out, const PointCloud& cloud) {
  detail::write_magic(out, "GCPC1");
  detail::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(cloud.size()));
  for (const auto& p : cloud.points) {
    for (int a = 0; a < 3; ++a) detail::write_pod<float>(out, static_cast<float>(p[a]));
  }
}

PointCloud read_gcpc(std::istream& in) {
  detail::expect_magic(in, "GCPC1");
  const auto n = detail::read_pod<std::uint32_t>(in, "GCPC1 count");
  PointCloud cloud;
  cloud.points.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    const float x = detail::read_pod<float>(in, "GCPC1 point");
    const float y = detail::read_pod<float>(in, "GCPC1 point");
    const float z = detail::read_pod<float>(in, "GCPC1 point");
    cloud.points.emplace_back(x, y, z);
  }
  return cloud;
}

}  // namespace gencad
