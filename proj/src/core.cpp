#include "unstable_lens/core.hpp"

#include <cmath>

namespace ulens {

std::string to_string(Domain d) {
  switch (d) {
    case Domain::Image: return "image";
    case Domain::KSpace: return "k-space";
    case Domain::Sinogram: return "sinogram-row-major";
  }
  return "image";
}

Domain domain_from_string(const std::string& s) {
  if (s == "image") return Domain::Image;
  if (s == "k-space") return Domain::KSpace;
  if (s == "sinogram-row-major") return Domain::Sinogram;
  throw FormatError("unknown domain tag '" + s + "'");
}

Image::Image(Eigen::Index height, Eigen::Index width, Domain domain)
    : values_(ComplexGrid::Zero(height, width)), domain_(domain) {
  if (height < 0 || width < 0) throw ShapeError("negative image dimensions");
}

Image::Image(ComplexGrid values, Domain domain) : values_(std::move(values)), domain_(domain) {}

Image Image::from_real(const RealGrid& values, Domain domain) {
  return Image(values.cast<Complex>(), domain);
}

bool Image::is_real(double tol) const {
  return values_.size() == 0 || values_.imag().abs().maxCoeff() <= tol;
}

namespace {
void require_same_shape(const Image& a, const Image& b) {
  if (!a.same_shape(b)) throw ShapeError("image dimensions differ");
}
void require_same_length(const MeasurementVector& a, const MeasurementVector& b) {
  if (a.size() != b.size()) throw ShapeError("measurement lengths differ");
}
}  // namespace

Image operator+(const Image& a, const Image& b) {
  require_same_shape(a, b);
  return Image(a.values() + b.values(), a.domain());
}

Image operator-(const Image& a, const Image& b) {
  require_same_shape(a, b);
  return Image(a.values() - b.values(), a.domain());
}

Image operator*(double s, const Image& a) { return Image(s * a.values(), a.domain()); }

MeasurementVector operator+(const MeasurementVector& a, const MeasurementVector& b) {
  require_same_length(a, b);
  return {a.values + b.values, a.operator_id};
}

MeasurementVector operator-(const MeasurementVector& a, const MeasurementVector& b) {
  require_same_length(a, b);
  return {a.values - b.values, a.operator_id};
}

double norm2(const Image& x) { return std::sqrt(x.values().abs2().sum()); }
double norm2(const MeasurementVector& y) { return std::sqrt(y.values.cwiseAbs2().sum()); }

double real_dot(const Image& a, const Image& b) {
  require_same_shape(a, b);
  return a.flat().dot(b.flat()).real();
}

double real_dot(const MeasurementVector& a, const MeasurementVector& b) {
  require_same_length(a, b);
  return a.values.dot(b.values).real();
}

double psnr(const Image& reference, const Image& candidate, double peak) {
  require_same_shape(reference, candidate);
  if (!(peak > 0.0)) throw ArgumentError("psnr peak must be positive");
  if (reference.size() == 0) throw ShapeError("psnr of empty images");
  const double mse = (reference.magnitude() - candidate.magnitude()).square().mean();
  if (mse == 0.0) return kInfinitePsnr;
  return 10.0 * std::log10(peak * peak / mse);
}

double psnr(const Image& reference, const Image& candidate) {
  require_same_shape(reference, candidate);
  if (reference.size() == 0) throw ShapeError("psnr of empty images");
  return psnr(reference, candidate, reference.magnitude().maxCoeff());
}

}  // namespace ulens
