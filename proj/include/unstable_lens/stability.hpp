#pragma once

#include "unstable_lens/core.hpp"
#include "unstable_lens/mask.hpp"
#include "unstable_lens/operators.hpp"
#include "unstable_lens/reconstructors.hpp"
#include "unstable_lens/rng.hpp"

#include <string>
#include <vector>

namespace ulens {

// ---------------------------------------------------------------------------
// Phantoms
//
// Ellipse parameters live in normalised coordinates: the pixel grid spans
// [-1, 1] on both axes, x to the right and y up, so one unit is n/2 pixels.

struct Ellipse {
  double x0 = 0.0;
  double y0 = 0.0;
  double a = 0.5;          // semi-axis along the rotated x direction
  double b = 0.5;          // semi-axis along the rotated y direction
  double phi_deg = 0.0;    // counter-clockwise rotation
  double value = 1.0;
};

struct EllipsePhantomSpec {
  Eigen::Index n = 64;
  std::vector<Ellipse> ellipses;
  void validate() const;
};

// Superposition of ellipses; each pixel holds the exact-coverage average over
// a supersample x supersample sub-grid.
Image gen_ellipse_phantom(const EllipsePhantomSpec& spec, int supersample = 4);

// Line integral of one ellipse in normalised units along the ray
// x cos(theta) + y sin(theta) = t.
double ellipse_projection(const Ellipse& e, double theta, double t);

// Closed-form sinogram of the spec in pixel units, laid out like radon.apply.
MeasurementVector analytic_sinogram(const EllipsePhantomSpec& spec, const RadonOperator& radon);

// `count` ellipses with positive values inside the unit disk, background ellipse first.
EllipsePhantomSpec random_ellipse_spec(Eigen::Index n, int count, Rng& rng);

// Centred disk of radius (pixels) with anti-aliased edge.
Image disk_phantom(Eigen::Index n, double radius, double value = 1.0, int supersample = 8);

// Three nested squares with intensities 0.3, 0.6 and 1.0.
Image nested_squares_phantom(Eigen::Index n);

// ---------------------------------------------------------------------------
// Glyph overlays

// Card suits at 16 or 32 pixels, or text in a 5x7 font.
RealGrid glyph_bitmap(const std::string& name, int size = 16);
RealGrid text_bitmap(const std::string& text, int scale = 1);
const std::vector<std::string>& card_glyphs();

struct GlyphOverlay {
  std::string glyph_id;
  Eigen::Index row = 0;  // top-left corner
  Eigen::Index col = 0;
  double intensity = 1.0;
  RealGrid bitmap;  // values in [0, 1], fractional on the edge band

  // Glyph by name ("spade", ..., or "text:SOME WORDS").
  static GlyphOverlay make(const std::string& glyph_id, Eigen::Index row, Eigen::Index col, double intensity,
                           int size = 16);
  Eigen::Index height() const { return bitmap.rows(); }
  Eigen::Index width() const { return bitmap.cols(); }
};

// x + intensity * bitmap placed at (row, col).
Image render_overlay(const Image& x, const GlyphOverlay& g);
// The perturbation r alone, on an h x w grid.
Image overlay_perturbation(Eigen::Index h, Eigen::Index w, const GlyphOverlay& g);

struct Detectability {
  double local_psnr = 0.0;  // against baseline + r over the glyph box dilated by 2 px
  double ncc = 0.0;         // Pearson correlation of Re(reconstruction - baseline) with r over that box
};

Detectability detectability(const Image& reconstruction, const GlyphOverlay& g, const Image& baseline);

struct StructuralRow {
  std::string reconstructor;
  std::string glyph;
  double intensity = 0.0;
  Detectability score;
};

// For each reconstructor, glyph and intensity: reconstruct from A(x + r) and
// score against the reconstruction of Ax. Glyph intensities in `glyphs` are
// replaced by each entry of `intensities`.
std::vector<StructuralRow> structural_test(const std::vector<Reconstructor*>& reconstructors,
                                           const SamplingOperator& op, const Image& x,
                                           const std::vector<GlyphOverlay>& glyphs,
                                           const std::vector<double>& intensities);

// ---------------------------------------------------------------------------
// Sample-count sweeps

struct NamedFactory {
  std::string name;
  ReconstructorFactory make;
};

enum class SweepReference { GroundTruth, FullSampling };

struct SweepConfig {
  MaskFamily family = MaskFamily::GaussianLines;
  std::vector<double> rates;
  bool nested = true;
  std::uint64_t seed = 0;
  int center_lines = 8;     // equispaced-lines
  Eigen::Index views = 180; // radial-kth: full view count; k = round(1 / rate)
  SweepReference reference = SweepReference::GroundTruth;
  // Worker threads over (rate, reconstructor) cells; factories must be safe to
  // call concurrently. Row order does not depend on it.
  int threads = 1;
  void validate() const;
};

struct SweepRow {
  double rate = 0.0;
  std::string reconstructor;
  int phantom_id = 0;
  double psnr = 0.0;
  bool missing = false;
};

struct SweepResult {
  SweepConfig config;
  std::vector<SweepRow> rows;
  // Mean PSNR over phantoms for reconstructor/rate; NaN if every point is missing.
  double mean_psnr(const std::string& reconstructor, double rate) const;
  std::vector<std::string> reconstructors() const;
};

// Operator used by the sweep for a rate on an h x w (n x n for Radon) grid.
std::unique_ptr<SamplingOperator> sweep_operator(const SweepConfig& cfg, double rate, Eigen::Index h, Eigen::Index w);

SweepResult sweep(const std::vector<NamedFactory>& reconstructors, const SweepConfig& cfg,
                  const std::vector<Image>& phantoms);

std::string sweep_csv(const SweepResult& result);
// Mean PSNR against rate for one reconstructor.
std::string sweep_svg(const SweepResult& result, const std::string& reconstructor);

}  // namespace ulens
