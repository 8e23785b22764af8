#include "unstable_lens/mask.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

namespace ulens {

std::string to_string(MaskFamily f) {
  switch (f) {
    case MaskFamily::GaussianLines: return "gaussian-lines";
    case MaskFamily::EquispacedLines: return "equispaced-lines";
    case MaskFamily::RadialKth: return "radial-kth";
    case MaskFamily::PoissonDisk: return "poisson-disk";
    case MaskFamily::Explicit: return "explicit";
  }
  return "explicit";
}

MaskFamily mask_family_from_string(const std::string& s) {
  if (s == "gaussian-lines") return MaskFamily::GaussianLines;
  if (s == "equispaced-lines") return MaskFamily::EquispacedLines;
  if (s == "radial-kth") return MaskFamily::RadialKth;
  if (s == "poisson-disk") return MaskFamily::PoissonDisk;
  if (s == "explicit") return MaskFamily::Explicit;
  throw ArgumentError("unknown mask family '" + s + "'");
}

SamplingMask::SamplingMask(Eigen::Index height, Eigen::Index width, std::vector<Eigen::Index> indices,
                           MaskFamily family)
    : height_(height), width_(width), indices_(std::move(indices)), family_(family) {
  if (height_ < 0 || width_ < 0) throw ShapeError("negative mask dimensions");
  for (std::size_t i = 0; i < indices_.size(); ++i) {
    if (indices_[i] < 0 || indices_[i] >= grid_size()) throw ArgumentError("mask index out of range");
    if (i && indices_[i] <= indices_[i - 1]) throw ArgumentError("mask indices must be strictly increasing");
  }
}

SamplingMask SamplingMask::full(Eigen::Index height, Eigen::Index width) {
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(height * width));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  return SamplingMask(height, width, std::move(idx), MaskFamily::Explicit);
}

bool SamplingMask::contains(Eigen::Index flat) const {
  return std::binary_search(indices_.begin(), indices_.end(), flat);
}

bool SamplingMask::subset_of(const SamplingMask& other) const {
  return height_ == other.height_ && width_ == other.width_ &&
         std::includes(other.indices_.begin(), other.indices_.end(), indices_.begin(), indices_.end());
}

RealGrid SamplingMask::bitmap() const {
  RealGrid b = RealGrid::Zero(height_, width_);
  for (auto k : indices_) b.data()[k] = 1.0;
  return b;
}

std::vector<Eigen::Index> SamplingMask::rows() const {
  std::vector<Eigen::Index> out;
  for (auto k : indices_) {
    const auto r = k / width_;
    if (out.empty() || out.back() != r) out.push_back(r);
  }
  return out;
}

std::vector<Eigen::Index> SamplingMask::columns() const {
  std::vector<Eigen::Index> out;
  for (auto k : indices_) out.push_back(k % width_);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::string SamplingMask::to_json() const {
  nlohmann::ordered_json j;
  j["h"] = height_;
  j["w"] = width_;
  j["idx"] = indices_;
  j["family"] = to_string(family_);
  return j.dump();
}

SamplingMask SamplingMask::from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    return SamplingMask(j.at("h").get<Eigen::Index>(), j.at("w").get<Eigen::Index>(),
                        j.at("idx").get<std::vector<Eigen::Index>>(),
                        mask_family_from_string(j.value("family", std::string("explicit"))));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed mask: ") + e.what());
  }
}

Eigen::Index line_count(double rate, Eigen::Index lines_available) {
  if (!(rate > 0.0 && rate <= 1.0)) throw ArgumentError("sampling rate must lie in (0, 1]");
  const auto n = static_cast<Eigen::Index>(std::llround(rate * static_cast<double>(lines_available)));
  return std::clamp<Eigen::Index>(n, 1, lines_available);
}

namespace {

SamplingMask from_columns(Eigen::Index h, Eigen::Index w, std::vector<Eigen::Index> cols, MaskFamily family) {
  std::sort(cols.begin(), cols.end());
  std::vector<Eigen::Index> idx;
  idx.reserve(cols.size() * static_cast<std::size_t>(h));
  for (Eigen::Index r = 0; r < h; ++r)
    for (auto c : cols) idx.push_back(r * w + c);
  return SamplingMask(h, w, std::move(idx), family);
}

// Signed frequency of DFT bin c on a grid of width w.
double signed_frequency(Eigen::Index c, Eigen::Index w) {
  return static_cast<double>(c <= w / 2 ? c : c - w);
}

}  // namespace

SamplingMask gaussian_lines_mask(Eigen::Index h, Eigen::Index w, double rate, std::uint64_t seed, bool nested,
                                 double sigma_fraction) {
  const Eigen::Index lines = line_count(rate, w);
  if (!(sigma_fraction > 0.0)) throw ArgumentError("gaussian mask width must be positive");
  // Weighted sampling without replacement (exponential keys). Taking a prefix
  // of one fixed ordering makes masks from the same seed nested across rates.
  Rng rng(seed, nested ? 0 : static_cast<std::uint64_t>(lines));
  const double sigma = sigma_fraction * static_cast<double>(w);
  std::vector<std::pair<double, Eigen::Index>> keys;
  for (Eigen::Index c = 1; c < w; ++c) {
    const double f = signed_frequency(c, w);
    const double weight = std::exp(-0.5 * f * f / (sigma * sigma));
    double u = rng.uniform();
    while (u <= 0.0) u = rng.uniform();
    keys.emplace_back(weight > 0.0 ? std::log(u) / weight : -std::numeric_limits<double>::infinity(), c);
  }
  std::stable_sort(keys.begin(), keys.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  std::vector<Eigen::Index> cols{0};
  for (Eigen::Index i = 0; i + 1 < lines; ++i) cols.push_back(keys[static_cast<std::size_t>(i)].second);
  return from_columns(h, w, std::move(cols), MaskFamily::GaussianLines);
}

SamplingMask equispaced_lines_mask(Eigen::Index h, Eigen::Index w, double rate, int center_lines) {
  const Eigen::Index lines = line_count(rate, w);
  if (center_lines < 0) throw ArgumentError("center block must be non-negative");
  const Eigen::Index center = std::min<Eigen::Index>(center_lines, lines);
  // Work in centred (fft-shifted) coordinates: s = (c + w/2) mod w puts DC at w/2.
  auto unshift = [w](Eigen::Index s) { return ((s - w / 2) % w + w) % w; };
  std::vector<Eigen::Index> cols;
  std::vector<bool> taken(static_cast<std::size_t>(w), false);
  const Eigen::Index first = w / 2 - center / 2;
  for (Eigen::Index s = first; s < first + center; ++s) {
    cols.push_back(unshift(s));
    taken[static_cast<std::size_t>(s)] = true;
  }
  std::vector<Eigen::Index> rest;
  for (Eigen::Index s = 0; s < w; ++s)
    if (!taken[static_cast<std::size_t>(s)]) rest.push_back(s);
  const Eigen::Index remaining = lines - center;
  for (Eigen::Index j = 0; j < remaining; ++j) {
    const auto pos = static_cast<std::size_t>(
        std::floor((static_cast<double>(j) + 0.5) * static_cast<double>(rest.size()) / static_cast<double>(remaining)));
    cols.push_back(unshift(rest[pos]));
  }
  return from_columns(h, w, std::move(cols), MaskFamily::EquispacedLines);
}

SamplingMask radial_kth_mask(Eigen::Index angles, Eigen::Index detectors, int k) {
  if (k < 1) throw ArgumentError("radial stride k must be at least 1");
  std::vector<Eigen::Index> idx;
  for (Eigen::Index a = 0; a < angles; a += k)
    for (Eigen::Index d = 0; d < detectors; ++d) idx.push_back(a * detectors + d);
  return SamplingMask(angles, detectors, std::move(idx), MaskFamily::RadialKth);
}

SamplingMask poisson_disk_mask(Eigen::Index h, Eigen::Index w, double rate, std::uint64_t seed) {
  if (!(rate > 0.0 && rate <= 1.0)) throw ArgumentError("sampling rate must lie in (0, 1]");
  const auto target = std::clamp<Eigen::Index>(
      static_cast<Eigen::Index>(std::llround(rate * static_cast<double>(h * w))), 1, h * w);
  Rng rng(seed, 7);
  // Dart throwing in centred coordinates with a shrinking exclusion radius.
  double radius = 0.75 * std::sqrt(static_cast<double>(h * w) / (std::numbers::pi * static_cast<double>(target)));
  std::vector<bool> taken(static_cast<std::size_t>(h * w), false);
  std::vector<std::pair<double, double>> points{{0.0, 0.0}};
  taken[0] = true;
  std::int64_t failures = 0;
  while (static_cast<Eigen::Index>(points.size()) < target) {
    const auto r = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(h)));
    const auto c = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(w)));
    const auto flat = static_cast<std::size_t>(r * w + c);
    const double y = signed_frequency(r, h);
    const double x = signed_frequency(c, w);
    bool ok = !taken[flat];
    for (std::size_t i = 0; ok && i < points.size(); ++i) {
      const double dy = points[i].first - y;
      const double dx = points[i].second - x;
      ok = dx * dx + dy * dy >= radius * radius;
    }
    if (ok) {
      taken[flat] = true;
      points.emplace_back(y, x);
      failures = 0;
    } else if (++failures > 64) {
      radius *= 0.9;
      failures = 0;
    }
  }
  std::vector<Eigen::Index> idx;
  for (std::size_t k = 0; k < taken.size(); ++k)
    if (taken[k]) idx.push_back(static_cast<Eigen::Index>(k));
  return SamplingMask(h, w, std::move(idx), MaskFamily::PoissonDisk);
}

SamplingMask make_mask(MaskFamily family, Eigen::Index height, Eigen::Index width, const MaskParams& params) {
  switch (family) {
    case MaskFamily::GaussianLines:
      return gaussian_lines_mask(height, width, params.rate, params.seed, params.nested, params.sigma_fraction);
    case MaskFamily::EquispacedLines:
      return equispaced_lines_mask(height, width, params.rate, params.center_lines);
    case MaskFamily::RadialKth:
      return radial_kth_mask(height, width, params.k);
    case MaskFamily::PoissonDisk:
      return poisson_disk_mask(height, width, params.rate, params.seed);
    case MaskFamily::Explicit: {
      auto idx = params.explicit_indices;
      std::sort(idx.begin(), idx.end());
      idx.erase(std::unique(idx.begin(), idx.end()), idx.end());
      return SamplingMask(height, width, std::move(idx), MaskFamily::Explicit);
    }
  }
  throw ArgumentError("unknown mask family");
}

}  // namespace ulens
