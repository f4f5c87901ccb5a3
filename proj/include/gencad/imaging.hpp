#pragma once

// Conditioning modalities: isometric renders, canny+blur sketches, axis-scale
// augmentation, and encoder preprocessing.

#include <iosfwd>
#include <string>
#include <vector>

#include "gencad/cad_lang.hpp"
#include "gencad/geometry.hpp"

namespace gencad {

/// Single-channel raster, row-major. 8-bit sources map to [0, 1]; preprocessed
/// encoder inputs hold normalized values in [-1, 1].
struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<float> data;

  GrayImage() = default;
  GrayImage(int w, int h, float fill = 0.0f);

  float& at(int x, int y) { return data[static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)]; }
  float at(int x, int y) const { return data[static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)]; }
  /// Clamped (replicate-border) read.
  float clamped(int x, int y) const;
  double sum() const;
  bool operator==(const GrayImage&) const = default;
};

inline constexpr int kRenderSize = 448;
inline constexpr int kEncoderInputSize = 256;

struct RenderOptions {
  int size = kRenderSize;
  int max_steps = 128;
  double epsilon_fraction = 1e-3;  // hit threshold as a fraction of the scene diameter
  double ambient = 0.15;
};

/// Orthographic view along -(1,1,1)/sqrt(3), +z up, sphere-traced SDF. Background is 0.
GrayImage render_isometric(const SolidModel& solid, const RenderOptions& options = {});

struct CannyParams {
  double sigma = 1.4;
  double low = 0.1;   // fraction of the maximum gradient magnitude
  double high = 0.3;
};

GrayImage gaussian_blur(const GrayImage& img, double sigma);
/// Binary edge map (0 or 1).
GrayImage canny(const GrayImage& img, const CannyParams& params = {});

struct SketchParams {
  CannyParams canny;
  double blur_sigma = 1.0;
};

GrayImage make_sketch(const GrayImage& img, const SketchParams& params = {});

/// Bilinear resize (half-pixel centers), identity center crop, (x - 0.5) / 0.5.
GrayImage preprocess_for_encoder(const GrayImage& img, int size = kEncoderInputSize);
GrayImage resize_bilinear(const GrayImage& img, int width, int height);

struct ScaleFactor {
  double kx = 1.0;
  double ky = 1.0;
  double kz = 1.0;
};

/// The five per-model variants used for dataset rendering.
std::vector<ScaleFactor> default_scale_factors();

struct ScaledVariant {
  int index = 0;
  ScaleFactor factor;
  CadSequence sequence;
};

struct DroppedVariant {
  int index = 0;
  ScaleFactor factor;
  std::string reason;
};

struct ScaleVariants {
  std::vector<ScaledVariant> kept;
  std::vector<DroppedVariant> dropped;
};

/// Rescales world-space quantities per axis; variants that leave the parameter
/// ranges, fail validation, or produce an empty solid are dropped with a reason.
ScaleVariants scale_variants(const CadSequence& seq, const std::vector<ScaleFactor>& factors);

/// Binary PGM (P5, maxval 255). Values are clamped to [0, 1] and rounded.
void write_pgm(std::ostream& out, const GrayImage& img);
GrayImage read_pgm(std::istream& in);
void save_pgm(const std::string& path, const GrayImage& img);
GrayImage load_pgm(const std::string& path);

}  // namespace gencad
