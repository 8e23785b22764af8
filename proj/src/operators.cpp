#include "unstable_lens/operators.hpp"

#include "unstable_lens/fft.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace ulens {

void SamplingOperator::check_image(const Image& x) const {
  if (x.height() != image_height() || x.width() != image_width()) {
    throw ShapeError("image is " + std::to_string(x.height()) + "x" + std::to_string(x.width()) +
                     ", operator expects " + std::to_string(image_height()) + "x" + std::to_string(image_width()));
  }
}

void SamplingOperator::check_measurement(const MeasurementVector& y) const {
  if (y.size() != measurement_size()) {
    throw ShapeError("measurement length " + std::to_string(y.size()) + " does not match operator output " +
                     std::to_string(measurement_size()));
  }
}

// ---------------------------------------------------------------------------
// Fourier

FourierOperator::FourierOperator(SamplingMask mask) : mask_(std::move(mask)) {}

std::string FourierOperator::id() const {
  return "fourier:" + std::to_string(mask_.height()) + "x" + std::to_string(mask_.width()) +
         ":m=" + std::to_string(mask_.count());
}

Eigen::VectorXcd FourierOperator::restrict(const Image& kspace) const {
  Eigen::VectorXcd out(mask_.count());
  const Complex* data = kspace.values().data();
  const auto& idx = mask_.indices();
  for (std::size_t i = 0; i < idx.size(); ++i) out[static_cast<Eigen::Index>(i)] = data[idx[i]];
  return out;
}

Image FourierOperator::zero_fill(const Eigen::VectorXcd& samples) const {
  Image k(mask_.height(), mask_.width(), Domain::KSpace);
  Complex* data = k.values().data();
  const auto& idx = mask_.indices();
  for (std::size_t i = 0; i < idx.size(); ++i) data[idx[i]] = samples[static_cast<Eigen::Index>(i)];
  return k;
}

MeasurementVector FourierOperator::apply(const Image& x) const {
  check_image(x);
  return {restrict(dft2(x)), id()};
}

Image FourierOperator::adjoint(const MeasurementVector& y) const {
  check_measurement(y);
  return idft2(zero_fill(y.values));
}

// ---------------------------------------------------------------------------
// Parallel Fourier

CoilSet::CoilSet(std::vector<Image> sensitivities) : maps_(std::move(sensitivities)) {
  if (maps_.empty()) throw ArgumentError("coil set needs at least one sensitivity map");
  for (const auto& m : maps_) {
    if (!m.same_shape(maps_.front())) throw ShapeError("coil sensitivity maps differ in size");
  }
}

CoilSet synthetic_coils(std::size_t count, Eigen::Index height, Eigen::Index width) {
  if (count == 0) throw ArgumentError("coil count must be positive");
  const double cy = 0.5 * static_cast<double>(height - 1);
  const double cx = 0.5 * static_cast<double>(width - 1);
  const double side = static_cast<double>(std::max(height, width));
  const double ring = 0.6 * 0.5 * side;
  const double sigma = 0.5 * side;
  std::vector<Image> maps;
  RealGrid total = RealGrid::Zero(height, width);
  for (std::size_t i = 0; i < count; ++i) {
    const double alpha = 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(count);
    const double py = cy + ring * std::sin(alpha);
    const double px = cx + ring * std::cos(alpha);
    Image s(height, width);
    for (Eigen::Index r = 0; r < height; ++r) {
      for (Eigen::Index c = 0; c < width; ++c) {
        const double dy = static_cast<double>(r) - py;
        const double dx = static_cast<double>(c) - px;
        const double amp = std::exp(-0.5 * (dx * dx + dy * dy) / (sigma * sigma));
        const double phase = std::numbers::pi * (dx * std::cos(alpha) + dy * std::sin(alpha)) / side;
        s(r, c) = std::polar(amp, phase);
      }
    }
    total += s.values().abs2();
    maps.push_back(std::move(s));
  }
  const RealGrid scale = total.sqrt().inverse();
  for (auto& m : maps) m.values() *= scale.cast<Complex>();
  return CoilSet(std::move(maps));
}

ParallelFourierOperator::ParallelFourierOperator(CoilSet coils, SamplingMask mask)
    : coils_(std::move(coils)), single_(std::move(mask)) {
  if (coils_.height() != single_.image_height() || coils_.width() != single_.image_width()) {
    throw ShapeError("coil sensitivities do not match the mask grid");
  }
}

std::string ParallelFourierOperator::id() const {
  return "parallel-fourier:c=" + std::to_string(coils_.count()) + ":" + single_.id();
}

MeasurementVector ParallelFourierOperator::apply(const Image& x) const {
  check_image(x);
  const Eigen::Index m = single_.measurement_size();
  MeasurementVector y{Eigen::VectorXcd(measurement_size()), id()};
  for (std::size_t i = 0; i < coils_.count(); ++i) {
    const Image weighted(coils_[i].values() * x.values());
    y.values.segment(static_cast<Eigen::Index>(i) * m, m) = single_.restrict(dft2(weighted));
  }
  return y;
}

Image ParallelFourierOperator::adjoint(const MeasurementVector& y) const {
  check_measurement(y);
  const Eigen::Index m = single_.measurement_size();
  Image out(image_height(), image_width());
  for (std::size_t i = 0; i < coils_.count(); ++i) {
    const Image back = idft2(single_.zero_fill(y.values.segment(static_cast<Eigen::Index>(i) * m, m)));
    out.values() += coils_[i].values().conjugate() * back.values();
  }
  return out;
}

// ---------------------------------------------------------------------------
// Radon

Eigen::Index default_detector_count(Eigen::Index n) {
  auto d = static_cast<Eigen::Index>(std::ceil(static_cast<double>(n) * std::numbers::sqrt2));
  return d % 2 == 0 ? d + 1 : d;
}

std::vector<double> uniform_angles(std::size_t count) {
  std::vector<double> a(count);
  for (std::size_t i = 0; i < count; ++i) a[i] = 180.0 * static_cast<double>(i) / static_cast<double>(count);
  return a;
}

RadonOperator::RadonOperator(Eigen::Index n, std::vector<double> angles_deg, Eigen::Index detectors)
    : n_(n), angles_(std::move(angles_deg)), detectors_(detectors ? detectors : default_detector_count(n)) {
  if (n_ < 1) throw ArgumentError("radon image side must be positive");
  if (detectors_ < static_cast<Eigen::Index>(std::ceil(static_cast<double>(n_) * std::numbers::sqrt2))) {
    throw ArgumentError("detector count must be at least ceil(n sqrt 2)");
  }
  for (std::size_t i = 0; i < angles_.size(); ++i) {
    if (!(angles_[i] >= 0.0 && angles_[i] < 180.0)) throw ArgumentError("radon angles must lie in [0, 180)");
    if (i && angles_[i] <= angles_[i - 1]) throw ArgumentError("radon angles must be strictly increasing");
  }
}

std::string RadonOperator::id() const {
  return "radon:n=" + std::to_string(n_) + ":angles=" + std::to_string(angles_.size()) +
         ":d=" + std::to_string(detectors_);
}

namespace {

struct Direction {
  double c;
  double s;
};

std::vector<Direction> directions(const std::vector<double>& angles) {
  std::vector<Direction> out;
  out.reserve(angles.size());
  for (double a : angles) {
    const double rad = a * std::numbers::pi / 180.0;
    out.push_back({std::cos(rad), std::sin(rad)});
  }
  return out;
}

// Visits the bilinear stencil of every sample point on ray (angle, bin),
// calling visit(flat_pixel_index, weight).
template <typename Visit>
void trace_ray(Eigen::Index n, Eigen::Index steps, double t, Direction dir, Visit&& visit) {
  const double half = 0.5 * static_cast<double>(n - 1);
  const double s_half = 0.5 * static_cast<double>(steps - 1);
  for (Eigen::Index l = 0; l < steps; ++l) {
    const double s = static_cast<double>(l) - s_half;
    const double x = t * dir.c - s * dir.s;
    const double y = t * dir.s + s * dir.c;
    const double col = x + half;
    const double row = half - y;
    if (col <= -1.0 || row <= -1.0 || col >= static_cast<double>(n) || row >= static_cast<double>(n)) continue;
    const double r0f = std::floor(row);
    const double c0f = std::floor(col);
    const double fr = row - r0f;
    const double fc = col - c0f;
    const auto r0 = static_cast<Eigen::Index>(r0f);
    const auto c0 = static_cast<Eigen::Index>(c0f);
    const bool r0_ok = r0 >= 0;
    const bool r1_ok = r0 + 1 < n;
    const bool c0_ok = c0 >= 0;
    const bool c1_ok = c0 + 1 < n;
    if (r0_ok && c0_ok) visit(r0 * n + c0, (1.0 - fr) * (1.0 - fc));
    if (r0_ok && c1_ok) visit(r0 * n + c0 + 1, (1.0 - fr) * fc);
    if (r1_ok && c0_ok) visit((r0 + 1) * n + c0, fr * (1.0 - fc));
    if (r1_ok && c1_ok) visit((r0 + 1) * n + c0 + 1, fr * fc);
  }
}

}  // namespace

MeasurementVector RadonOperator::apply(const Image& x) const {
  check_image(x);
  const double scale = std::max(1.0, x.values().abs().maxCoeff());
  if (!x.is_real(1e-12 * scale)) throw ArgumentError("radon transform needs a real image");
  const RealGrid re = x.real();
  const double* px = re.data();
  MeasurementVector y{Eigen::VectorXcd::Zero(measurement_size()), id()};
  const auto dirs = directions(angles_);
  for (Eigen::Index a = 0; a < angle_count(); ++a) {
    for (Eigen::Index k = 0; k < detectors_; ++k) {
      double acc = 0.0;
      trace_ray(n_, detectors_, detector_position(k), dirs[static_cast<std::size_t>(a)],
                [&](Eigen::Index p, double w) { acc += w * px[p]; });
      y.values[a * detectors_ + k] = acc;
    }
  }
  return y;
}

Image RadonOperator::adjoint(const MeasurementVector& y) const {
  check_measurement(y);
  Image out(n_, n_);
  Complex* po = out.values().data();
  const auto dirs = directions(angles_);
  for (Eigen::Index a = 0; a < angle_count(); ++a) {
    for (Eigen::Index k = 0; k < detectors_; ++k) {
      const Complex v = y.values[a * detectors_ + k];
      if (v == Complex(0.0, 0.0)) continue;
      trace_ray(n_, detectors_, detector_position(k), dirs[static_cast<std::size_t>(a)],
                [&](Eigen::Index p, double w) { po[p] += w * v; });
    }
  }
  return out;
}

RadonOperator RadonOperator::subsample(const SamplingMask& angle_mask) const {
  if (angle_mask.height() != angle_count() || angle_mask.width() != detectors_) {
    throw ShapeError("angle mask does not match the sinogram grid");
  }
  std::vector<double> kept;
  for (auto r : angle_mask.rows()) kept.push_back(angles_[static_cast<std::size_t>(r)]);
  return RadonOperator(n_, std::move(kept), detectors_);
}

MeasurementVector RadonOperator::restrict_sinogram(const MeasurementVector& y, const SamplingMask& angle_mask) {
  if (y.size() != angle_mask.grid_size()) throw ShapeError("sinogram does not match the angle mask grid");
  const auto rows = angle_mask.rows();
  const Eigen::Index d = angle_mask.width();
  MeasurementVector out{Eigen::VectorXcd(static_cast<Eigen::Index>(rows.size()) * d), y.operator_id + ":subsampled"};
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.values.segment(static_cast<Eigen::Index>(i) * d, d) = y.values.segment(rows[i] * d, d);
  }
  return out;
}

Image RadonOperator::to_sinogram(const MeasurementVector& y) const {
  check_measurement(y);
  Image s(angle_count(), detectors_, Domain::Sinogram);
  s.flat() = y.values;
  return s;
}

MeasurementVector RadonOperator::from_sinogram(const Image& sinogram) const {
  if (sinogram.height() != angle_count() || sinogram.width() != detectors_) {
    throw ShapeError("sinogram does not match the radon operator");
  }
  return {sinogram.flat(), id()};
}

// ---------------------------------------------------------------------------
// Filtered back projection

Eigen::VectorXd ram_lak_kernel(Eigen::Index len) {
  Eigen::VectorXd h = Eigen::VectorXd::Zero(len);
  if (len > 0) h[0] = 0.5;
  for (Eigen::Index k = 1; k < len; k += 2) {
    h[k] = -2.0 / (std::numbers::pi * std::numbers::pi * static_cast<double>(k * k));
  }
  return h;
}

namespace {

class RampFilter {
 public:
  explicit RampFilter(Eigen::Index detectors) : d_(detectors) {
    padded_ = 1;
    while (padded_ < 2 * d_) padded_ *= 2;
    const Eigen::VectorXd taps = ram_lak_kernel(padded_ / 2 + 1);
    response_ = Eigen::VectorXcd::Zero(padded_);
    for (Eigen::Index j = 0; j < padded_; ++j) response_[j] = taps[std::min(j, padded_ - j)];
    fft_inplace(response_);
  }

  // Linear convolution with the symmetric kernel, truncated to d samples.
  Eigen::VectorXcd operator()(const Eigen::VectorXcd& p) const {
    Eigen::VectorXcd buf = Eigen::VectorXcd::Zero(padded_);
    buf.head(d_) = p;
    fft_inplace(buf);
    buf = buf.cwiseProduct(response_);
    ifft_inplace(buf);
    return buf.head(d_);
  }

 private:
  Eigen::Index d_;
  Eigen::Index padded_;
  Eigen::VectorXcd response_;
};

template <typename Visit>
void back_project_angle(Eigen::Index n, Eigen::Index d, Direction dir, Visit&& visit) {
  const double half = 0.5 * static_cast<double>(n - 1);
  const double dhalf = 0.5 * static_cast<double>(d - 1);
  for (Eigen::Index r = 0; r < n; ++r) {
    const double y = half - static_cast<double>(r);
    for (Eigen::Index c = 0; c < n; ++c) {
      const double x = static_cast<double>(c) - half;
      const double u = x * dir.c + y * dir.s + dhalf;
      const double k0f = std::floor(u);
      const double f = u - k0f;
      const auto k0 = static_cast<Eigen::Index>(k0f);
      const Eigen::Index p = r * n + c;
      if (k0 >= 0 && k0 < d) visit(p, k0, 1.0 - f);
      if (k0 + 1 >= 0 && k0 + 1 < d) visit(p, k0 + 1, f);
    }
  }
}

double fbp_scale(const RadonOperator& radon) {
  return radon.angle_count() ? std::numbers::pi / (2.0 * static_cast<double>(radon.angle_count())) : 0.0;
}

}  // namespace

Image fbp(const RadonOperator& radon, const MeasurementVector& sinogram) {
  if (sinogram.size() != radon.measurement_size()) throw ShapeError("sinogram does not match the radon operator");
  const Eigen::Index n = radon.side();
  const Eigen::Index d = radon.detectors();
  const RampFilter filter(d);
  const auto dirs = directions(radon.angles());
  Image out(n, n);
  Complex* po = out.values().data();
  for (Eigen::Index a = 0; a < radon.angle_count(); ++a) {
    const Eigen::VectorXcd q = filter(sinogram.values.segment(a * d, d));
    back_project_angle(n, d, dirs[static_cast<std::size_t>(a)],
                       [&](Eigen::Index p, Eigen::Index k, double w) { po[p] += w * q[k]; });
  }
  out.values() *= fbp_scale(radon);
  return out;
}

MeasurementVector fbp_adjoint(const RadonOperator& radon, const Image& image) {
  const Eigen::Index n = radon.side();
  const Eigen::Index d = radon.detectors();
  if (image.height() != n || image.width() != n) throw ShapeError("image does not match the radon operator");
  const RampFilter filter(d);
  const auto dirs = directions(radon.angles());
  const Complex* pi = image.values().data();
  MeasurementVector y{Eigen::VectorXcd::Zero(radon.measurement_size()), radon.id()};
  Eigen::VectorXcd spread(d);
  for (Eigen::Index a = 0; a < radon.angle_count(); ++a) {
    spread.setZero();
    back_project_angle(n, d, dirs[static_cast<std::size_t>(a)],
                       [&](Eigen::Index p, Eigen::Index k, double w) { spread[k] += w * pi[p]; });
    y.values.segment(a * d, d) = filter(spread);
  }
  y.values *= fbp_scale(radon);
  return y;
}

}  // namespace ulens
