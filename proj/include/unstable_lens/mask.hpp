#pragma once

#include "unstable_lens/core.hpp"
#include "unstable_lens/rng.hpp"

#include <optional>
#include <string>
#include <vector>

namespace ulens {

enum class MaskFamily { GaussianLines, EquispacedLines, RadialKth, PoissonDisk, Explicit };

std::string to_string(MaskFamily f);
MaskFamily mask_family_from_string(const std::string& s);

// Sampled set of flat row-major indices on an h x w grid. For line families
// the lines are k-space columns (fixed column index, all rows); for
// radial-kth the grid is (angles x detectors) and the lines are rows.
class SamplingMask {
 public:
  SamplingMask(Eigen::Index height, Eigen::Index width, std::vector<Eigen::Index> indices,
               MaskFamily family = MaskFamily::Explicit);

  static SamplingMask full(Eigen::Index height, Eigen::Index width);

  Eigen::Index height() const { return height_; }
  Eigen::Index width() const { return width_; }
  Eigen::Index grid_size() const { return height_ * width_; }
  Eigen::Index count() const { return static_cast<Eigen::Index>(indices_.size()); }
  const std::vector<Eigen::Index>& indices() const { return indices_; }
  MaskFamily family() const { return family_; }
  double rate() const { return grid_size() ? double(count()) / double(grid_size()) : 0.0; }

  bool contains(Eigen::Index flat) const;
  bool subset_of(const SamplingMask& other) const;
  // 1 on sampled entries, 0 elsewhere.
  RealGrid bitmap() const;
  // Sorted distinct row indices that carry at least one sample.
  std::vector<Eigen::Index> rows() const;
  // Sorted distinct column indices that carry at least one sample.
  std::vector<Eigen::Index> columns() const;

  std::string to_json() const;
  static SamplingMask from_json(const std::string& text);

  bool operator==(const SamplingMask& other) const = default;

 private:
  Eigen::Index height_;
  Eigen::Index width_;
  std::vector<Eigen::Index> indices_;
  MaskFamily family_;
};

struct MaskParams {
  double rate = 1.0;
  // radial-kth stride.
  int k = 1;
  // equispaced-lines: fully sampled block centred on DC.
  int center_lines = 0;
  // gaussian-lines: when set, masks from the same seed are nested across rates.
  bool nested = true;
  // gaussian-lines: standard deviation of the line density, as a fraction of the width.
  double sigma_fraction = 0.15;
  std::uint64_t seed = 0;
  std::vector<Eigen::Index> explicit_indices;
};

// Number of lines used by the line families at a given rate.
Eigen::Index line_count(double rate, Eigen::Index lines_available);

SamplingMask make_mask(MaskFamily family, Eigen::Index height, Eigen::Index width, const MaskParams& params);

SamplingMask gaussian_lines_mask(Eigen::Index h, Eigen::Index w, double rate, std::uint64_t seed,
                                 bool nested = true, double sigma_fraction = 0.15);
SamplingMask equispaced_lines_mask(Eigen::Index h, Eigen::Index w, double rate, int center_lines);
SamplingMask radial_kth_mask(Eigen::Index angles, Eigen::Index detectors, int k);
SamplingMask poisson_disk_mask(Eigen::Index h, Eigen::Index w, double rate, std::uint64_t seed);

}  // namespace ulens
