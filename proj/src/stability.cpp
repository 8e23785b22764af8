#include "unstable_lens/stability.hpp"

#include "unstable_lens/io.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <limits>
#include <map>
#include <mutex>
#include <numbers>
#include <set>
#include <sstream>
#include <thread>

namespace ulens {

// ---------------------------------------------------------------------------
// Phantoms

namespace {

bool inside(const Ellipse& e, double x, double y) {
  const double phi = e.phi_deg * std::numbers::pi / 180.0;
  const double dx = x - e.x0, dy = y - e.y0;
  const double xr = dx * std::cos(phi) + dy * std::sin(phi);
  const double yr = -dx * std::sin(phi) + dy * std::cos(phi);
  return (xr * xr) / (e.a * e.a) + (yr * yr) / (e.b * e.b) <= 1.0;
}

// Coverage-averaged raster of an indicator given in normalised coordinates.
template <typename Pred>
RealGrid coverage(Eigen::Index n, int supersample, Pred&& pred) {
  RealGrid out = RealGrid::Zero(n, n);
  const double unit = 2.0 / static_cast<double>(n);
  const double sub = 1.0 / static_cast<double>(supersample);
  for (Eigen::Index r = 0; r < n; ++r) {
    for (Eigen::Index c = 0; c < n; ++c) {
      int hits = 0;
      for (int i = 0; i < supersample; ++i) {
        const double y = 1.0 - (static_cast<double>(r) + (i + 0.5) * sub) * unit;
        for (int j = 0; j < supersample; ++j) {
          const double x = -1.0 + (static_cast<double>(c) + (j + 0.5) * sub) * unit;
          hits += pred(x, y) ? 1 : 0;
        }
      }
      out(r, c) = static_cast<double>(hits) / static_cast<double>(supersample * supersample);
    }
  }
  return out;
}

}  // namespace

void EllipsePhantomSpec::validate() const {
  if (n < 16) throw ArgumentError("ellipse phantoms need n >= 16");
  for (const auto& e : ellipses) {
    const bool finite = std::isfinite(e.x0) && std::isfinite(e.y0) && std::isfinite(e.a) && std::isfinite(e.b) &&
                        std::isfinite(e.phi_deg) && std::isfinite(e.value);
    if (!finite) throw ArgumentError("ellipse parameters must be finite");
    if (!(e.a > 0.0 && e.b > 0.0)) throw ArgumentError("ellipse semi-axes must be positive");
  }
}

Image gen_ellipse_phantom(const EllipsePhantomSpec& spec, int supersample) {
  spec.validate();
  if (supersample < 1) throw ArgumentError("supersampling factor must be positive");
  RealGrid total = RealGrid::Zero(spec.n, spec.n);
  for (const auto& e : spec.ellipses) {
    total += e.value * coverage(spec.n, supersample, [&](double x, double y) { return inside(e, x, y); });
  }
  return Image::from_real(total);
}

double ellipse_projection(const Ellipse& e, double theta, double t) {
  const double phi = e.phi_deg * std::numbers::pi / 180.0;
  const double u = t - (e.x0 * std::cos(theta) + e.y0 * std::sin(theta));
  const double ct = std::cos(theta - phi), st = std::sin(theta - phi);
  const double s2 = e.a * e.a * ct * ct + e.b * e.b * st * st;
  if (u * u >= s2) return 0.0;
  return e.value * 2.0 * e.a * e.b * std::sqrt(s2 - u * u) / s2;
}

MeasurementVector analytic_sinogram(const EllipsePhantomSpec& spec, const RadonOperator& radon) {
  spec.validate();
  if (radon.side() != spec.n) throw ShapeError("radon operator and phantom sizes differ");
  const double half = 0.5 * static_cast<double>(spec.n);
  MeasurementVector y{Eigen::VectorXcd::Zero(radon.measurement_size()), radon.id()};
  for (Eigen::Index a = 0; a < radon.angle_count(); ++a) {
    const double theta = radon.angles()[static_cast<std::size_t>(a)] * std::numbers::pi / 180.0;
    for (Eigen::Index k = 0; k < radon.detectors(); ++k) {
      const double t = radon.detector_position(k) / half;
      double acc = 0.0;
      for (const auto& e : spec.ellipses) acc += ellipse_projection(e, theta, t);
      y.values[a * radon.detectors() + k] = half * acc;
    }
  }
  return y;
}

EllipsePhantomSpec random_ellipse_spec(Eigen::Index n, int count, Rng& rng) {
  if (count < 1) throw ArgumentError("ellipse count must be positive");
  EllipsePhantomSpec spec;
  spec.n = n;
  spec.ellipses.push_back({0.0, 0.0, rng.uniform(0.65, 0.8), rng.uniform(0.75, 0.9), rng.uniform(-15.0, 15.0),
                           rng.uniform(0.3, 0.5)});
  for (int i = 1; i < count; ++i) {
    const double rho = 0.45 * std::sqrt(rng.uniform());
    const double alpha = 2.0 * std::numbers::pi * rng.uniform();
    spec.ellipses.push_back({rho * std::cos(alpha), rho * std::sin(alpha), rng.uniform(0.06, 0.25),
                             rng.uniform(0.06, 0.25), rng.uniform(0.0, 180.0), rng.uniform(0.1, 0.4)});
  }
  return spec;
}

Image disk_phantom(Eigen::Index n, double radius, double value, int supersample) {
  if (n < 1 || !(radius > 0.0)) throw ArgumentError("disk phantom needs n >= 1 and a positive radius");
  const double rn = radius * 2.0 / static_cast<double>(n);
  return Image::from_real(value * coverage(n, supersample, [&](double x, double y) { return x * x + y * y <= rn * rn; }));
}

Image nested_squares_phantom(Eigen::Index n) {
  if (n < 8) throw ArgumentError("nested squares need n >= 8");
  RealGrid x = RealGrid::Zero(n, n);
  const double levels[] = {0.3, 0.6, 1.0};
  for (int i = 0; i < 3; ++i) {
    const Eigen::Index margin = n / 8 + i * n / 8;
    x.block(margin, margin, n - 2 * margin, n - 2 * margin).setConstant(levels[i]);
  }
  return Image::from_real(x);
}

// ---------------------------------------------------------------------------
// Glyphs

namespace {

bool heart(double x, double y) {
  const double q = x * x + y * y - 1.0;
  return q * q * q - x * x * y * y * y <= 0.0;
}

bool stem(double u, double v) {
  return v <= -0.2 && v >= -0.95 && std::abs(u) <= 0.35 * (-0.2 - v) / 0.75;
}

bool suit(const std::string& name, double u, double v) {
  if (name == "heart") return heart(1.3 * u, 1.3 * v + 0.1);
  if (name == "diamond") return std::abs(u) / 0.65 + std::abs(v) / 0.95 <= 1.0;
  if (name == "spade") return heart(1.5 * u, -(1.5 * v - 0.25)) || stem(u, v);
  if (name == "club") {
    auto disc = [&](double cx, double cy, double r) { return (u - cx) * (u - cx) + (v - cy) * (v - cy) <= r * r; };
    return disc(0.0, 0.45, 0.32) || disc(-0.42, -0.05, 0.32) || disc(0.42, -0.05, 0.32) || disc(0.0, 0.1, 0.2) ||
           stem(u, v);
  }
  throw ArgumentError("unknown glyph '" + name + "'");
}

const std::map<char, std::array<const char*, 7>>& font() {
  static const std::map<char, std::array<const char*, 7>> f = {
      {' ', {"     ", "     ", "     ", "     ", "     ", "     ", "     "}},
      {'A', {" ### ", "#   #", "#   #", "#####", "#   #", "#   #", "#   #"}},
      {'B', {"#### ", "#   #", "#   #", "#### ", "#   #", "#   #", "#### "}},
      {'C', {" ### ", "#   #", "#    ", "#    ", "#    ", "#   #", " ### "}},
      {'D', {"#### ", "#   #", "#   #", "#   #", "#   #", "#   #", "#### "}},
      {'E', {"#####", "#    ", "#    ", "#### ", "#    ", "#    ", "#####"}},
      {'F', {"#####", "#    ", "#    ", "#### ", "#    ", "#    ", "#    "}},
      {'G', {" ### ", "#   #", "#    ", "# ###", "#   #", "#   #", " ####"}},
      {'H', {"#   #", "#   #", "#   #", "#####", "#   #", "#   #", "#   #"}},
      {'I', {" ### ", "  #  ", "  #  ", "  #  ", "  #  ", "  #  ", " ### "}},
      {'J', {"  ###", "   # ", "   # ", "   # ", "   # ", "#  # ", " ##  "}},
      {'K', {"#   #", "#  # ", "# #  ", "##   ", "# #  ", "#  # ", "#   #"}},
      {'L', {"#    ", "#    ", "#    ", "#    ", "#    ", "#    ", "#####"}},
      {'M', {"#   #", "## ##", "# # #", "# # #", "#   #", "#   #", "#   #"}},
      {'N', {"#   #", "#   #", "##  #", "# # #", "#  ##", "#   #", "#   #"}},
      {'O', {" ### ", "#   #", "#   #", "#   #", "#   #", "#   #", " ### "}},
      {'P', {"#### ", "#   #", "#   #", "#### ", "#    ", "#    ", "#    "}},
      {'Q', {" ### ", "#   #", "#   #", "#   #", "# # #", "#  # ", " ## #"}},
      {'R', {"#### ", "#   #", "#   #", "#### ", "# #  ", "#  # ", "#   #"}},
      {'S', {" ####", "#    ", "#    ", " ### ", "    #", "    #", "#### "}},
      {'T', {"#####", "  #  ", "  #  ", "  #  ", "  #  ", "  #  ", "  #  "}},
      {'U', {"#   #", "#   #", "#   #", "#   #", "#   #", "#   #", " ### "}},
      {'V', {"#   #", "#   #", "#   #", "#   #", "#   #", " # # ", "  #  "}},
      {'W', {"#   #", "#   #", "#   #", "# # #", "# # #", "# # #", " # # "}},
      {'X', {"#   #", "#   #", " # # ", "  #  ", " # # ", "#   #", "#   #"}},
      {'Y', {"#   #", "#   #", " # # ", "  #  ", "  #  ", "  #  ", "  #  "}},
      {'Z', {"#####", "    #", "   # ", "  #  ", " #   ", "#    ", "#####"}},
      {'0', {" ### ", "#   #", "#  ##", "# # #", "##  #", "#   #", " ### "}},
      {'1', {"  #  ", " ##  ", "  #  ", "  #  ", "  #  ", "  #  ", " ### "}},
      {'2', {" ### ", "#   #", "    #", "   # ", "  #  ", " #   ", "#####"}},
      {'3', {"#####", "   # ", "  #  ", "   # ", "    #", "#   #", " ### "}},
      {'4', {"   # ", "  ## ", " # # ", "#  # ", "#####", "   # ", "   # "}},
      {'5', {"#####", "#    ", "#### ", "    #", "    #", "#   #", " ### "}},
      {'6', {"  ## ", " #   ", "#    ", "#### ", "#   #", "#   #", " ### "}},
      {'7', {"#####", "    #", "   # ", "  #  ", " #   ", " #   ", " #   "}},
      {'8', {" ### ", "#   #", "#   #", " ### ", "#   #", "#   #", " ### "}},
      {'9', {" ### ", "#   #", "#   #", " ####", "    #", "   # ", " ##  "}},
  };
  return f;
}

}  // namespace

const std::vector<std::string>& card_glyphs() {
  static const std::vector<std::string> names = {"spade", "heart", "diamond", "club"};
  return names;
}

RealGrid glyph_bitmap(const std::string& name, int size) {
  if (size != 16 && size != 32) throw ArgumentError("glyph rasters exist at 16 and 32 pixels");
  const double s = static_cast<double>(size);
  constexpr int kSub = 8;
  RealGrid out(size, size);
  for (int r = 0; r < size; ++r) {
    for (int c = 0; c < size; ++c) {
      int hits = 0;
      for (int i = 0; i < kSub; ++i)
        for (int j = 0; j < kSub; ++j) {
          const double u = -1.0 + 2.0 * (c + (j + 0.5) / kSub) / s;
          const double v = 1.0 - 2.0 * (r + (i + 0.5) / kSub) / s;
          hits += suit(name, u, v) ? 1 : 0;
        }
      out(r, c) = static_cast<double>(hits) / (kSub * kSub);
    }
  }
  return out;
}

RealGrid text_bitmap(const std::string& text, int scale) {
  if (text.empty()) throw ArgumentError("text glyph is empty");
  if (scale < 1) throw ArgumentError("text scale must be positive");
  const auto cols = static_cast<Eigen::Index>(6 * text.size() - 1) * scale;
  RealGrid out = RealGrid::Zero(7 * scale, cols);
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char ch = static_cast<char>(std::toupper(static_cast<unsigned char>(text[i])));
    const auto it = font().find(ch);
    if (it == font().end()) throw ArgumentError(std::string("no glyph for character '") + text[i] + "'");
    for (int r = 0; r < 7; ++r)
      for (int c = 0; c < 5; ++c)
        if (it->second[static_cast<std::size_t>(r)][c] == '#') {
          out.block(r * scale, (static_cast<Eigen::Index>(6 * i) + c) * scale, scale, scale).setConstant(1.0);
        }
  }
  return out;
}

GlyphOverlay GlyphOverlay::make(const std::string& glyph_id, Eigen::Index row, Eigen::Index col, double intensity,
                                int size) {
  if (!(intensity >= 0.0) || !std::isfinite(intensity)) throw ArgumentError("glyph intensity must be non-negative");
  GlyphOverlay g;
  g.glyph_id = glyph_id;
  g.row = row;
  g.col = col;
  g.intensity = intensity;
  if (glyph_id.rfind("text:", 0) == 0) {
    g.bitmap = text_bitmap(glyph_id.substr(5), std::max(1, size / 16));
  } else {
    g.bitmap = glyph_bitmap(glyph_id, size);
  }
  return g;
}

Image overlay_perturbation(Eigen::Index h, Eigen::Index w, const GlyphOverlay& g) {
  if (g.row < 0 || g.col < 0 || g.row + g.height() > h || g.col + g.width() > w) {
    throw ShapeError("glyph '" + g.glyph_id + "' placed out of bounds");
  }
  Image r(h, w);
  r.values().block(g.row, g.col, g.height(), g.width()) = (g.intensity * g.bitmap).cast<Complex>();
  return r;
}

Image render_overlay(const Image& x, const GlyphOverlay& g) {
  return x + overlay_perturbation(x.height(), x.width(), g);
}

Detectability detectability(const Image& reconstruction, const GlyphOverlay& g, const Image& baseline) {
  if (!reconstruction.same_shape(baseline)) throw ShapeError("reconstruction and baseline differ in size");
  const Eigen::Index h = baseline.height(), w = baseline.width();
  const Image r = overlay_perturbation(h, w, g);
  const Eigen::Index r0 = std::max<Eigen::Index>(0, g.row - 2), c0 = std::max<Eigen::Index>(0, g.col - 2);
  const Eigen::Index r1 = std::min(h, g.row + g.height() + 2), c1 = std::min(w, g.col + g.width() + 2);

  const Image reference((baseline.values() + r.values()).block(r0, c0, r1 - r0, c1 - c0).eval());
  const Image window(reconstruction.values().block(r0, c0, r1 - r0, c1 - c0).eval());
  Detectability out;
  const double peak = reference.values().abs().maxCoeff();
  out.local_psnr = psnr(reference, window, peak > 0.0 ? peak : 1.0);

  const RealGrid res = (reconstruction.values() - baseline.values()).real().block(r0, c0, r1 - r0, c1 - c0);
  const RealGrid ref = r.values().real().block(r0, c0, r1 - r0, c1 - c0);
  const RealGrid a = res - res.mean();
  const RealGrid b = ref - ref.mean();
  const double denom = std::sqrt(a.square().sum() * b.square().sum());
  out.ncc = denom > 0.0 ? std::clamp((a * b).sum() / denom, -1.0, 1.0) : 0.0;
  return out;
}

std::vector<StructuralRow> structural_test(const std::vector<Reconstructor*>& reconstructors,
                                           const SamplingOperator& op, const Image& x,
                                           const std::vector<GlyphOverlay>& glyphs,
                                           const std::vector<double>& intensities) {
  std::vector<StructuralRow> rows;
  const MeasurementVector y = op.apply(x);
  for (Reconstructor* f : reconstructors) {
    const Image baseline = f->reconstruct(y);
    for (const auto& g0 : glyphs) {
      for (double intensity : intensities) {
        GlyphOverlay g = g0;
        g.intensity = intensity;
        const Image perturbed = render_overlay(x, g);
        const Image rec = f->reconstruct(op.apply(perturbed));
        rows.push_back({f->name(), g.glyph_id, intensity, detectability(rec, g, baseline)});
      }
    }
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Sweeps

void SweepConfig::validate() const {
  if (threads < 1) throw ArgumentError("sweep thread count must be positive");
  if (rates.empty()) throw ArgumentError("sweep needs at least one rate");
  for (std::size_t i = 0; i < rates.size(); ++i) {
    if (!(rates[i] > 0.0 && rates[i] <= 1.0)) throw ArgumentError("sweep rates must lie in (0, 1]");
    if (i && rates[i] <= rates[i - 1]) throw ArgumentError("sweep rates must be strictly increasing");
  }
  if (family == MaskFamily::Explicit) throw ArgumentError("explicit masks cannot be swept over rates");
  if (views < 1) throw ArgumentError("sweep view count must be positive");
}

std::unique_ptr<SamplingOperator> sweep_operator(const SweepConfig& cfg, double rate, Eigen::Index h, Eigen::Index w) {
  if (cfg.family == MaskFamily::RadialKth) {
    if (h != w) throw ShapeError("radon sweeps need square images");
    const RadonOperator full(h, uniform_angles(static_cast<std::size_t>(cfg.views)));
    const int k = std::max(1, static_cast<int>(std::lround(1.0 / rate)));
    return std::make_unique<RadonOperator>(full.subsample(radial_kth_mask(cfg.views, full.detectors(), k)));
  }
  MaskParams params;
  params.rate = rate;
  params.nested = cfg.nested;
  params.seed = cfg.seed;
  params.center_lines = cfg.center_lines;
  return std::make_unique<FourierOperator>(make_mask(cfg.family, h, w, params));
}

namespace {

Image sweep_reference(const SweepConfig& cfg, const Image& x) {
  if (cfg.reference == SweepReference::GroundTruth) return x;
  const auto full = sweep_operator(cfg, 1.0, x.height(), x.width());
  return adjoint_recon(*full, full->apply(x), true);
}

}  // namespace

SweepResult sweep(const std::vector<NamedFactory>& reconstructors, const SweepConfig& cfg,
                  const std::vector<Image>& phantoms) {
  cfg.validate();
  if (phantoms.empty()) throw ArgumentError("sweep needs at least one phantom");
  SweepResult result;
  result.config = cfg;
  std::vector<Image> references;
  for (const auto& x : phantoms) references.push_back(sweep_reference(cfg, x));

  const std::size_t per_cell = phantoms.size();
  const std::size_t cells = cfg.rates.size() * reconstructors.size();
  result.rows.resize(cells * per_cell);
  auto run_cell = [&](std::size_t cell) {
    const double rate = cfg.rates[cell / reconstructors.size()];
    const auto& named = reconstructors[cell % reconstructors.size()];
    const auto op = sweep_operator(cfg, rate, phantoms.front().height(), phantoms.front().width());
    std::unique_ptr<Reconstructor> f;
    try {
      f = named.make(*op);
    } catch (const std::exception&) {
      f.reset();
    }
    for (std::size_t i = 0; i < per_cell; ++i) {
      SweepRow row{rate, named.name, static_cast<int>(i), std::numeric_limits<double>::quiet_NaN(), true};
      if (f) {
        try {
          const Image rec = f->reconstruct(op->apply(phantoms[i]));
          const double peak = references[i].values().abs().maxCoeff();
          row.psnr = psnr(references[i], rec, peak > 0.0 ? peak : 1.0);
          row.missing = false;
        } catch (const std::exception&) {
          row.missing = true;
        }
      }
      result.rows[cell * per_cell + i] = row;
    }
  };

  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(cfg.threads), cells);
  if (workers <= 1) {
    for (std::size_t c = 0; c < cells; ++c) run_cell(c);
    return result;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < workers; ++t) {
    pool.emplace_back([&] {
      for (std::size_t c = next++; c < cells; c = next++) {
        try {
          run_cell(c);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
  return result;
}

double SweepResult::mean_psnr(const std::string& reconstructor, double rate) const {
  double sum = 0.0;
  int count = 0;
  for (const auto& r : rows) {
    if (r.reconstructor == reconstructor && r.rate == rate && !r.missing) {
      sum += r.psnr;
      ++count;
    }
  }
  return count ? sum / count : std::numeric_limits<double>::quiet_NaN();
}

std::vector<std::string> SweepResult::reconstructors() const {
  std::vector<std::string> names;
  for (const auto& r : rows)
    if (std::find(names.begin(), names.end(), r.reconstructor) == names.end()) names.push_back(r.reconstructor);
  return names;
}

std::string sweep_csv(const SweepResult& result) {
  CsvWriter csv({"rate", "reconstructor", "phantom_id", "psnr"});
  for (const auto& r : result.rows) {
    csv.row({format_double(r.rate), r.reconstructor, std::to_string(r.phantom_id), r.missing ? "" : format_double(r.psnr)});
  }
  return csv.str();
}

std::string sweep_svg(const SweepResult& result, const std::string& reconstructor) {
  constexpr double kW = 480, kH = 320, kLeft = 60, kRight = 20, kTop = 30, kBottom = 50;
  std::vector<std::pair<double, double>> pts;
  for (double rate : result.config.rates) {
    const double p = result.mean_psnr(reconstructor, rate);
    if (std::isfinite(p)) pts.emplace_back(rate, p);
  }
  double lo = 0.0, hi = 1.0;
  if (!pts.empty()) {
    lo = hi = pts.front().second;
    for (const auto& [r, p] : pts) {
      lo = std::min(lo, p);
      hi = std::max(hi, p);
    }
    lo = std::floor(lo - 1.0);
    hi = std::ceil(hi + 1.0);
  }
  auto sx = [&](double rate) { return kLeft + rate * (kW - kLeft - kRight); };
  auto sy = [&](double p) { return kH - kBottom - (p - lo) / (hi - lo) * (kH - kTop - kBottom); };
  auto num = [](double v) {
    std::ostringstream s;
    s.setf(std::ios::fixed);
    s.precision(2);
    s << v;
    return s.str();
  };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH << "\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"" << kW / 2 << "\" y=\"18\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">"
      << reconstructor << " (" << to_string(result.config.family) << (result.config.nested ? ", nested" : "")
      << ")</text>\n";
  svg << "<line x1=\"" << kLeft << "\" y1=\"" << kH - kBottom << "\" x2=\"" << kW - kRight << "\" y2=\""
      << kH - kBottom << "\" stroke=\"black\"/>\n";
  svg << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft << "\" y2=\"" << kH - kBottom
      << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 5; ++i) {
    const double rate = 0.2 * i;
    svg << "<text x=\"" << num(sx(rate)) << "\" y=\"" << kH - kBottom + 16
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" << num(rate) << "</text>\n";
    const double p = lo + (hi - lo) * i / 5.0;
    svg << "<text x=\"" << kLeft - 6 << "\" y=\"" << num(sy(p) + 4)
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" << num(p) << "</text>\n";
  }
  svg << "<text x=\"" << kW / 2 << "\" y=\"" << kH - 12
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">subsampling rate</text>\n";
  svg << "<text x=\"16\" y=\"" << kH / 2 << "\" transform=\"rotate(-90 16 " << kH / 2
      << ")\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">mean PSNR (dB)</text>\n";
  if (!pts.empty()) {
    svg << "<polyline fill=\"none\" stroke=\"#1f5fa8\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < pts.size(); ++i) svg << (i ? " " : "") << num(sx(pts[i].first)) << "," << num(sy(pts[i].second));
    svg << "\"/>\n";
    for (const auto& [r, p] : pts)
      svg << "<circle cx=\"" << num(sx(r)) << "\" cy=\"" << num(sy(p)) << "\" r=\"3\" fill=\"#1f5fa8\"/>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace ulens
