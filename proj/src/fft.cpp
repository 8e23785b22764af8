#include "unstable_lens/fft.hpp"

#include <unsupported/Eigen/FFT>

#include <cmath>
#include <vector>

namespace ulens {

namespace {

Eigen::FFT<double>& engine() {
  thread_local Eigen::FFT<double> fft = [] {
    Eigen::FFT<double> f;
    f.SetFlag(Eigen::FFT<double>::Unscaled);
    return f;
  }();
  return fft;
}

// kissfft crashes on length 1, where the transform is the identity anyway.
void transform1(std::vector<Complex>& dst, std::vector<Complex>& src, bool inverse) {
  if (src.size() == 1) {
    dst = src;
    return;
  }
  inverse ? engine().inv(dst, src) : engine().fwd(dst, src);
}

// Unscaled transform along rows then columns.
ComplexGrid transform2(const ComplexGrid& in, bool inverse) {
  const Eigen::Index h = in.rows();
  const Eigen::Index w = in.cols();
  ComplexGrid out(h, w);
  std::vector<Complex> src(static_cast<std::size_t>(std::max(h, w)));
  std::vector<Complex> dst;

  src.resize(static_cast<std::size_t>(w));
  for (Eigen::Index r = 0; r < h; ++r) {
    for (Eigen::Index c = 0; c < w; ++c) src[c] = in(r, c);
    transform1(dst, src, inverse);
    for (Eigen::Index c = 0; c < w; ++c) out(r, c) = dst[c];
  }
  src.resize(static_cast<std::size_t>(h));
  for (Eigen::Index c = 0; c < w; ++c) {
    for (Eigen::Index r = 0; r < h; ++r) src[r] = out(r, c);
    transform1(dst, src, inverse);
    for (Eigen::Index r = 0; r < h; ++r) out(r, c) = dst[r];
  }
  return out;
}

}  // namespace

Image dft2(const Image& x) {
  if (x.size() == 0) return Image(x.height(), x.width(), Domain::KSpace);
  const double scale = 1.0 / std::sqrt(static_cast<double>(x.size()));
  return Image(transform2(x.values(), false) * scale, Domain::KSpace);
}

Image idft2(const Image& k) {
  if (k.size() == 0) return Image(k.height(), k.width(), Domain::Image);
  const double scale = 1.0 / std::sqrt(static_cast<double>(k.size()));
  return Image(transform2(k.values(), true) * scale, Domain::Image);
}

void fft_inplace(Eigen::VectorXcd& v) {
  if (v.size() < 2) return;
  std::vector<Complex> src(v.data(), v.data() + v.size()), dst;
  engine().fwd(dst, src);
  v = Eigen::Map<Eigen::VectorXcd>(dst.data(), v.size());
}

void ifft_inplace(Eigen::VectorXcd& v) {
  if (v.size() < 2) return;
  std::vector<Complex> src(v.data(), v.data() + v.size()), dst;
  engine().inv(dst, src);
  v = Eigen::Map<Eigen::VectorXcd>(dst.data(), v.size()) / static_cast<double>(v.size());
}

}  // namespace ulens
