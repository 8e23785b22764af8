#pragma once

#include "unstable_lens/core.hpp"
#include "unstable_lens/rng.hpp"

#include <filesystem>
#include <string>

namespace ulens::testing {

inline Image random_image(Eigen::Index h, Eigen::Index w, Rng& rng, bool real = false) {
  Image x(h, w);
  for (Eigen::Index r = 0; r < h; ++r)
    for (Eigen::Index c = 0; c < w; ++c) x(r, c) = Complex(rng.normal(), real ? 0.0 : rng.normal());
  return x;
}

inline Eigen::VectorXcd random_vector(Eigen::Index n, Rng& rng) {
  Eigen::VectorXcd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = Complex(rng.normal(), rng.normal());
  return v;
}

// Filled disk of the given radius (pixels) centred on the grid.
inline Image disk(Eigen::Index n, double radius, double value = 1.0) {
  Image x(n, n);
  const double c = 0.5 * static_cast<double>(n - 1);
  for (Eigen::Index r = 0; r < n; ++r)
    for (Eigen::Index col = 0; col < n; ++col) {
      const double dx = static_cast<double>(col) - c, dy = c - static_cast<double>(r);
      if (dx * dx + dy * dy <= radius * radius) x(r, col) = value;
    }
  return x;
}

inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("ulens_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace ulens::testing

namespace ulens::testing {

// Three nested squares with intensities 0.3, 0.6, 1.0.
inline Image nested_squares(Eigen::Index n) {
  Image x(n, n);
  const double levels[] = {0.3, 0.6, 1.0};
  for (int i = 0; i < 3; ++i) {
    const Eigen::Index margin = n / 8 + i * n / 8;
    x.values().block(margin, margin, n - 2 * margin, n - 2 * margin).setConstant(levels[i]);
  }
  return x;
}

}  // namespace ulens::testing
