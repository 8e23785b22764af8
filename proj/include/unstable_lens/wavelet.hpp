#pragma once

#include "unstable_lens/core.hpp"

namespace ulens {

// Orthogonal periodised Daubechies-2 (four-tap) wavelet transform in the
// Mallat layout: after `levels` steps the approximation band occupies the
// top-left (h >> levels) x (w >> levels) block. Both sides must be divisible
// by 2^levels.
class Daubechies2 {
 public:
  explicit Daubechies2(int levels = 3);

  int levels() const { return levels_; }

  ComplexGrid forward(const ComplexGrid& x) const;
  ComplexGrid inverse(const ComplexGrid& c) const;

  // Band label per coefficient: 0 for the approximation, 1 + 3*(level-1) + o
  // for detail orientation o in {0,1,2} at level 1 (finest) .. levels.
  Eigen::ArrayXXi band_labels(Eigen::Index h, Eigen::Index w) const;
  int band_count() const { return 1 + 3 * levels_; }

  void check_shape(Eigen::Index h, Eigen::Index w) const;

 private:
  int levels_;
};

}  // namespace ulens
