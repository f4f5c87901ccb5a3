#include "gencad/imaging.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <istream>
#include <numbers>
#include <ostream>

#include "gencad/error.hpp"
#include "gencad/parallel.hpp"

namespace gencad {

GrayImage::GrayImage(int w, int h, float fill)
    : width(w), height(h), data(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), fill) {}

float GrayImage::clamped(int x, int y) const {
  return at(std::clamp(x, 0, width - 1), std::clamp(y, 0, height - 1));
}

double GrayImage::sum() const {
  double s = 0.0;
  for (float v : data) s += v;
  return s;
}

// ---- rendering ----------------------------------------------------------------

namespace {

struct Camera {
  Vec3 forward;
  Vec3 up;
  Vec3 right;
};

Camera isometric_camera() {
  Camera cam;
  cam.forward = -Vec3(1.0, 1.0, 1.0).normalized();
  const Vec3 z = Vec3::UnitZ();
  cam.up = (z - z.dot(cam.forward) * cam.forward).normalized();
  cam.right = cam.forward.cross(cam.up);
  return cam;
}

bool ray_box(const Vec3& o, const Vec3& d, const Box3& box, double& t0, double& t1) {
  t0 = 0.0;
  t1 = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    if (std::abs(d[a]) < 1e-15) {
      if (o[a] < box.lo[a] || o[a] > box.hi[a]) return false;
      continue;
    }
    double ta = (box.lo[a] - o[a]) / d[a];
    double tb = (box.hi[a] - o[a]) / d[a];
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
  }
  return t0 <= t1;
}

}  // namespace

GrayImage render_isometric(const SolidModel& solid, const RenderOptions& opt) {
  if (!solid.has_geometry()) throw GeometryError("cannot render empty solid");
  const Camera cam = isometric_camera();
  const Box3& box = solid.bounds();
  const Vec3 center = box.center();
  const double diameter = box.extent().norm();
  double half = 0.0;
  for (int c = 0; c < 8; ++c) {
    const Vec3 p((c & 1) ? box.hi.x() : box.lo.x(), (c & 2) ? box.hi.y() : box.lo.y(),
                 (c & 4) ? box.hi.z() : box.lo.z());
    half = std::max({half, std::abs((p - center).dot(cam.right)), std::abs((p - center).dot(cam.up))});
  }
  half *= 1.05;
  const double eps = opt.epsilon_fraction * diameter;
  const double h = 0.5 * eps;
  // Key light tilted off the view axis so faces equally inclined to the viewer
  // still receive distinct shades.
  const Vec3 light = (-cam.forward + 0.5 * cam.up + 0.25 * cam.right).normalized();
  const int size = opt.size;
  const double pixel = 2.0 * half / size;

  GrayImage img(size, size, 0.0f);
  parallel_for(0, size, [&](std::size_t row) {
    const int py = static_cast<int>(row);
    for (int px = 0; px < size; ++px) {
      const double sx = -half + (px + 0.5) * pixel;
      const double sy = half - (py + 0.5) * pixel;
      const Vec3 origin = center + sx * cam.right + sy * cam.up - diameter * cam.forward;
      double t = 0.0;
      double t_end = 0.0;
      if (!ray_box(origin, cam.forward, box, t, t_end)) continue;
      bool hit = false;
      Vec3 p;
      for (int step = 0; step < opt.max_steps && t <= t_end; ++step) {
        p = origin + t * cam.forward;
        const double d = solid.sdf(p);
        if (d < eps) {
          hit = true;
          break;
        }
        t += d;
      }
      if (!hit) continue;
      Vec3 n(solid.sdf(p + Vec3(h, 0, 0)) - solid.sdf(p - Vec3(h, 0, 0)),
             solid.sdf(p + Vec3(0, h, 0)) - solid.sdf(p - Vec3(0, h, 0)),
             solid.sdf(p + Vec3(0, 0, h)) - solid.sdf(p - Vec3(0, 0, h)));
      const double len = n.norm();
      const double lambert = len > 0.0 ? std::max(0.0, n.dot(light) / len) : 0.0;
      const double shade = opt.ambient + (1.0 - opt.ambient) * lambert;
      img.at(px, py) = static_cast<float>(std::round(std::clamp(shade, 1.0 / 255.0, 1.0) * 255.0) / 255.0);
    }
  });
  return img;
}

// ---- filtering ----------------------------------------------------------------

GrayImage gaussian_blur(const GrayImage& img, double sigma) {
  if (!(sigma > 0.0)) throw RangeError("gaussian_blur: sigma must be positive");
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
  double norm = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    const double w = std::exp(-0.5 * i * i / (sigma * sigma));
    kernel[static_cast<std::size_t>(i + radius)] = w;
    norm += w;
  }
  for (auto& w : kernel) w /= norm;

  GrayImage tmp(img.width, img.height);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) acc += kernel[static_cast<std::size_t>(i + radius)] * img.clamped(x + i, y);
      tmp.at(x, y) = static_cast<float>(acc);
    }
  }
  GrayImage out(img.width, img.height);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) acc += kernel[static_cast<std::size_t>(i + radius)] * tmp.clamped(x, y + i);
      out.at(x, y) = static_cast<float>(acc);
    }
  }
  return out;
}

GrayImage canny(const GrayImage& img, const CannyParams& params) {
  if (!(params.sigma > 0.0)) throw RangeError("canny: sigma must be positive");
  if (!(params.low < params.high)) throw RangeError("canny: low threshold must be below high threshold");
  const GrayImage smooth = gaussian_blur(img, params.sigma);
  const int w = img.width;
  const int h = img.height;
  std::vector<double> mag(static_cast<std::size_t>(w) * static_cast<std::size_t>(h));
  std::vector<int> dir(mag.size());
  double max_mag = 0.0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      auto s = [&](int dx, int dy) { return static_cast<double>(smooth.clamped(x + dx, y + dy)); };
      const double gx = (s(1, -1) + 2 * s(1, 0) + s(1, 1)) - (s(-1, -1) + 2 * s(-1, 0) + s(-1, 1));
      const double gy = (s(-1, 1) + 2 * s(0, 1) + s(1, 1)) - (s(-1, -1) + 2 * s(0, -1) + s(1, -1));
      const auto i = static_cast<std::size_t>(y) * static_cast<std::size_t>(w) + static_cast<std::size_t>(x);
      mag[i] = std::hypot(gx, gy);
      max_mag = std::max(max_mag, mag[i]);
      double angle = std::atan2(gy, gx) * 180.0 / std::numbers::pi;
      if (angle < 0.0) angle += 180.0;
      dir[i] = (angle < 22.5 || angle >= 157.5) ? 0 : angle < 67.5 ? 1 : angle < 112.5 ? 2 : 3;
    }
  }
  GrayImage edges(w, h, 0.0f);
  if (!(max_mag > 0.0)) return edges;

  static constexpr int kStep[4][2] = {{1, 0}, {1, 1}, {0, 1}, {-1, 1}};
  std::vector<double> thin(mag.size(), 0.0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const auto i = static_cast<std::size_t>(y) * static_cast<std::size_t>(w) + static_cast<std::size_t>(x);
      const int dx = kStep[dir[i]][0];
      const int dy = kStep[dir[i]][1];
      auto at = [&](int xx, int yy) {
        if (xx < 0 || yy < 0 || xx >= w || yy >= h) return 0.0;
        return mag[static_cast<std::size_t>(yy) * static_cast<std::size_t>(w) + static_cast<std::size_t>(xx)];
      };
      // Ties along the gradient keep the earlier pixel only, so plateaus thin to one pixel.
      if (mag[i] >= at(x + dx, y + dy) && mag[i] > at(x - dx, y - dy)) thin[i] = mag[i];
    }
  }

  const double low = params.low * max_mag;
  const double high = params.high * max_mag;
  std::deque<std::pair<int, int>> queue;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const auto i = static_cast<std::size_t>(y) * static_cast<std::size_t>(w) + static_cast<std::size_t>(x);
      if (thin[i] > 0.0 && thin[i] >= high) {
        edges.at(x, y) = 1.0f;
        queue.emplace_back(x, y);
      }
    }
  }
  while (!queue.empty()) {
    const auto [x, y] = queue.front();
    queue.pop_front();
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        const int xx = x + dx;
        const int yy = y + dy;
        if (xx < 0 || yy < 0 || xx >= w || yy >= h || edges.at(xx, yy) > 0.0f) continue;
        const double m = thin[static_cast<std::size_t>(yy) * static_cast<std::size_t>(w) + static_cast<std::size_t>(xx)];
        if (m > 0.0 && m >= low) {
          edges.at(xx, yy) = 1.0f;
          queue.emplace_back(xx, yy);
        }
      }
    }
  }
  return edges;
}

GrayImage make_sketch(const GrayImage& img, const SketchParams& params) {
  return gaussian_blur(canny(img, params.canny), params.blur_sigma);
}

GrayImage resize_bilinear(const GrayImage& img, int width, int height) {
  GrayImage out(width, height);
  const double sx = static_cast<double>(img.width) / width;
  const double sy = static_cast<double>(img.height) / height;
  for (int y = 0; y < height; ++y) {
    const double fy = std::max(0.0, (y + 0.5) * sy - 0.5);
    const int y0 = static_cast<int>(fy);
    const double wy = fy - y0;
    for (int x = 0; x < width; ++x) {
      const double fx = std::max(0.0, (x + 0.5) * sx - 0.5);
      const int x0 = static_cast<int>(fx);
      const double wx = fx - x0;
      const double top = (1 - wx) * img.clamped(x0, y0) + wx * img.clamped(x0 + 1, y0);
      const double bottom = (1 - wx) * img.clamped(x0, y0 + 1) + wx * img.clamped(x0 + 1, y0 + 1);
      out.at(x, y) = static_cast<float>((1 - wy) * top + wy * bottom);
    }
  }
  return out;
}

GrayImage preprocess_for_encoder(const GrayImage& img, int size) {
  GrayImage out = (img.width == size && img.height == size) ? img : resize_bilinear(img, size, size);
  for (auto& v : out.data) v = (v - 0.5f) / 0.5f;
  return out;
}

// ---- axis-scale augmentation --------------------------------------------------

std::vector<ScaleFactor> default_scale_factors() {
  return {{1.0, 1.0, 1.0}, {1.2, 1.0, 1.0}, {1.0, 1.2, 1.0}, {1.0, 1.0, 1.2}, {0.8, 0.8, 0.8}};
}

namespace {

// Index of the world axis a unit column is aligned with, or -1.
int aligned_axis(const Vec3& column) {
  for (int a = 0; a < 3; ++a) {
    if (std::abs(std::abs(column[a]) - 1.0) < 1e-9) return a;
  }
  return -1;
}

std::string check_ranges(const CadSequence& seq) {
  const auto& table = slot_table();
  for (std::size_t i = 0; i < seq.commands.size(); ++i) {
    const auto& c = seq.commands[i];
    const auto layout = layout_of(c.type);
    for (int s = 0; s < kNumParams; ++s) {
      const auto& spec = table[static_cast<std::size_t>(s)];
      if (!layout.active.test(static_cast<std::size_t>(s)) || spec.kind != SlotKind::Continuous) continue;
      const double v = c[s];
      if (v < spec.range.lo - 1e-12 || v > spec.range.hi + 1e-12) {
        return "slot " + std::string(spec.name) + " of command " + std::to_string(i) + " out of range after scaling";
      }
    }
  }
  return {};
}

CadSequence apply_scale(const CadSequence& seq, const ScaleFactor& f) {
  const Vec3 k(f.kx, f.ky, f.kz);
  CadSequence out = seq;
  std::size_t sketch_begin = 0;
  for (std::size_t i = 0; i < out.commands.size(); ++i) {
    auto& c = out.commands[i];
    if (c.type != CommandType::Extrude) continue;
    const Mat3 rot = plane_rotation(c[slot::theta], c[slot::phi], c[slot::gamma]);
    const int au = aligned_axis(rot.col(0));
    const int av = aligned_axis(rot.col(1));
    const int an = aligned_axis(rot.col(2));
    double kn = 1.0;
    if (au >= 0 && av >= 0 && an >= 0) {
      const double ku = k[au];
      const double kv = k[av];
      kn = k[an];
      if (std::abs(ku - kv) < 1e-12) {
        c.params[slot::scale] *= ku;
      } else {
        // Anisotropic in-plane scaling acts on the sketch coordinates; circles
        // and arc sweeps cannot stretch, so radii take the geometric mean.
        for (std::size_t j = sketch_begin; j < i; ++j) {
          auto& s = out.commands[j];
          if (s.type == CommandType::Sol) continue;
          s.params[slot::x] *= ku;
          s.params[slot::y] *= kv;
          if (s.type == CommandType::Circle) s.params[slot::radius] *= std::sqrt(ku * kv);
        }
      }
    } else {
      kn = k.cwiseProduct(rot.col(2)).norm();
    }
    c.params[slot::px] *= k.x();
    c.params[slot::py] *= k.y();
    c.params[slot::pz] *= k.z();
    c.params[slot::e1] *= kn;
    c.params[slot::e2] *= kn;
    sketch_begin = i + 1;
  }
  return out;
}

}  // namespace

ScaleVariants scale_variants(const CadSequence& seq, const std::vector<ScaleFactor>& factors) {
  ScaleVariants result;
  for (std::size_t i = 0; i < factors.size(); ++i) {
    const auto& f = factors[i];
    const int index = static_cast<int>(i);
    const CadSequence scaled = apply_scale(seq, f);
    if (auto reason = check_ranges(scaled); !reason.empty()) {
      result.dropped.push_back({index, f, reason});
      continue;
    }
    const CadSequence snapped = snap_to_grid(scaled);
    const auto report = validate(snapped);
    if (!report.ok()) {
      result.dropped.push_back({index, f, "invalid program: " + report.summary()});
      continue;
    }
    try {
      if (!is_valid(execute(snapped))) {
        result.dropped.push_back({index, f, "empty solid"});
        continue;
      }
    } catch (const GeometryError& e) {
      result.dropped.push_back({index, f, std::string("geometry: ") + e.what()});
      continue;
    }
    result.kept.push_back({index, f, snapped});
  }
  return result;
}

// ---- PGM ----------------------------------------------------------------------

void write_pgm(std::ostream& out, const GrayImage& img) {
  out << "P5\n" << img.width << ' ' << img.height << "\n255\n";
  std::vector<unsigned char> bytes(img.data.size());
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    bytes[i] = static_cast<unsigned char>(std::lround(std::clamp(img.data[i], 0.0f, 1.0f) * 255.0f));
  }
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

namespace {

int read_header_int(std::istream& in) {
  int c = in.peek();
  while (c != EOF) {
    if (std::isspace(c)) {
      in.get();
    } else if (c == '#') {
      std::string skip;
      std::getline(in, skip);
    } else {
      break;
    }
    c = in.peek();
  }
  int v = -1;
  if (!(in >> v)) throw ParseError("PGM: malformed header");
  return v;
}

}  // namespace

GrayImage read_pgm(std::istream& in) {
  std::string magic(2, '\0');
  in.read(magic.data(), 2);
  if (magic != "P5") throw ParseError("PGM: expected binary P5 format");
  const int w = read_header_int(in);
  const int h = read_header_int(in);
  const int maxval = read_header_int(in);
  if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 255) throw ParseError("PGM: unsupported dimensions or maxval");
  in.get();
  std::vector<unsigned char> bytes(static_cast<std::size_t>(w) * static_cast<std::size_t>(h));
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (in.gcount() != static_cast<std::streamsize>(bytes.size())) throw ParseError("PGM: truncated pixel data");
  GrayImage img(w, h);
  for (std::size_t i = 0; i < bytes.size(); ++i) img.data[i] = static_cast<float>(bytes[i]) / static_cast<float>(maxval);
  return img;
}

void save_pgm(const std::string& path, const GrayImage& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path + " for writing");
  write_pgm(out, img);
}

GrayImage load_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  return read_pgm(in);
}

}  // namespace gencad
