#include "unstable_lens/wavelet.hpp"

#include <array>
#include <cmath>

namespace ulens {

namespace {

constexpr double kSqrt3 = 1.7320508075688772;
constexpr double kNorm = 4.0 * 1.4142135623730951;
constexpr std::array<double, 4> kLow = {(1.0 + kSqrt3) / kNorm, (3.0 + kSqrt3) / kNorm, (3.0 - kSqrt3) / kNorm,
                                        (1.0 - kSqrt3) / kNorm};
constexpr std::array<double, 4> kHigh = {kLow[3], -kLow[2], kLow[1], -kLow[0]};

// One analysis step on the first n entries of v (strided access).
template <typename Vec>
void analyse(Vec v, Eigen::Index n, Eigen::VectorXcd& tmp) {
  const Eigen::Index half = n / 2;
  for (Eigen::Index i = 0; i < half; ++i) {
    Complex a = 0.0, d = 0.0;
    for (int k = 0; k < 4; ++k) {
      const Complex x = v[(2 * i + k) % n];
      a += kLow[k] * x;
      d += kHigh[k] * x;
    }
    tmp[i] = a;
    tmp[half + i] = d;
  }
  for (Eigen::Index i = 0; i < n; ++i) v[i] = tmp[i];
}

template <typename Vec>
void synthesise(Vec v, Eigen::Index n, Eigen::VectorXcd& tmp) {
  const Eigen::Index half = n / 2;
  tmp.head(n).setZero();
  for (Eigen::Index i = 0; i < half; ++i) {
    const Complex a = v[i];
    const Complex d = v[half + i];
    for (int k = 0; k < 4; ++k) tmp[(2 * i + k) % n] += kLow[k] * a + kHigh[k] * d;
  }
  for (Eigen::Index i = 0; i < n; ++i) v[i] = tmp[i];
}

}  // namespace

Daubechies2::Daubechies2(int levels) : levels_(levels) {
  if (levels_ < 0) throw ArgumentError("wavelet levels must be non-negative");
}

void Daubechies2::check_shape(Eigen::Index h, Eigen::Index w) const {
  const Eigen::Index block = Eigen::Index{1} << levels_;
  if (h % block || w % block || (levels_ > 0 && (h >> levels_) < 1)) {
    throw ShapeError("image sides must be divisible by 2^levels for the wavelet transform");
  }
}

ComplexGrid Daubechies2::forward(const ComplexGrid& x) const {
  check_shape(x.rows(), x.cols());
  ComplexGrid c = x;
  Eigen::VectorXcd tmp(std::max(x.rows(), x.cols()));
  Eigen::Index h = x.rows(), w = x.cols();
  for (int l = 0; l < levels_; ++l) {
    for (Eigen::Index r = 0; r < h; ++r) analyse(c.row(r), w, tmp);
    for (Eigen::Index col = 0; col < w; ++col) analyse(c.col(col), h, tmp);
    h /= 2;
    w /= 2;
  }
  return c;
}

ComplexGrid Daubechies2::inverse(const ComplexGrid& c) const {
  check_shape(c.rows(), c.cols());
  ComplexGrid x = c;
  Eigen::VectorXcd tmp(std::max(c.rows(), c.cols()));
  for (int l = levels_ - 1; l >= 0; --l) {
    const Eigen::Index h = c.rows() >> l;
    const Eigen::Index w = c.cols() >> l;
    for (Eigen::Index col = 0; col < w; ++col) synthesise(x.col(col), h, tmp);
    for (Eigen::Index r = 0; r < h; ++r) synthesise(x.row(r), w, tmp);
  }
  return x;
}

Eigen::ArrayXXi Daubechies2::band_labels(Eigen::Index h, Eigen::Index w) const {
  check_shape(h, w);
  Eigen::ArrayXXi labels = Eigen::ArrayXXi::Zero(h, w);
  for (int l = 1; l <= levels_; ++l) {
    const Eigen::Index bh = h >> l;
    const Eigen::Index bw = w >> l;
    const int base = 1 + 3 * (l - 1);
    labels.block(0, bw, bh, bw).setConstant(base);       // horizontal detail
    labels.block(bh, 0, bh, bw).setConstant(base + 1);   // vertical detail
    labels.block(bh, bw, bh, bw).setConstant(base + 2);  // diagonal detail
  }
  return labels;
}

}  // namespace ulens
