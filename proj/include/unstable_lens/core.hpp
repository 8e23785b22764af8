#pragma once

#include <Eigen/Dense>

#include <complex>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>

namespace ulens {

using Complex = std::complex<double>;

// Row-major so that the flat index of pixel (row, col) is row * width + col.
using ComplexGrid = Eigen::Array<Complex, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RealGrid = Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct ArgumentError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct CapabilityError : std::logic_error {
  using std::logic_error::logic_error;
};

enum class Domain { Image, KSpace, Sinogram };

std::string to_string(Domain d);
Domain domain_from_string(const std::string& s);

// A complex pixel grid. The domain tag is fixed at construction.
class Image {
 public:
  Image() = default;
  Image(Eigen::Index height, Eigen::Index width, Domain domain = Domain::Image);
  Image(ComplexGrid values, Domain domain = Domain::Image);
  static Image from_real(const RealGrid& values, Domain domain = Domain::Image);

  Eigen::Index height() const { return values_.rows(); }
  Eigen::Index width() const { return values_.cols(); }
  Eigen::Index size() const { return values_.size(); }
  Domain domain() const { return domain_; }

  const ComplexGrid& values() const { return values_; }
  ComplexGrid& values() { return values_; }

  Complex& operator()(Eigen::Index row, Eigen::Index col) { return values_(row, col); }
  const Complex& operator()(Eigen::Index row, Eigen::Index col) const { return values_(row, col); }

  // Flat row-major view.
  Eigen::Map<Eigen::VectorXcd> flat() { return {values_.data(), values_.size()}; }
  Eigen::Map<const Eigen::VectorXcd> flat() const { return {values_.data(), values_.size()}; }

  RealGrid magnitude() const { return values_.abs(); }
  RealGrid real() const { return values_.real(); }
  bool is_real(double tol = 0.0) const;

  bool same_shape(const Image& other) const {
    return height() == other.height() && width() == other.width();
  }

 private:
  ComplexGrid values_;
  Domain domain_ = Domain::Image;
};

Image operator+(const Image& a, const Image& b);
Image operator-(const Image& a, const Image& b);
Image operator*(double s, const Image& a);

struct MeasurementVector {
  Eigen::VectorXcd values;
  std::string operator_id;

  Eigen::Index size() const { return values.size(); }
};

MeasurementVector operator+(const MeasurementVector& a, const MeasurementVector& b);
MeasurementVector operator-(const MeasurementVector& a, const MeasurementVector& b);

// Euclidean norm over real and imaginary parts jointly.
double norm2(const Image& x);
double norm2(const MeasurementVector& y);

template <typename Derived>
double norm2(const Eigen::DenseBase<Derived>& v) {
  return std::sqrt(v.derived().cwiseAbs2().sum());
}

// Real part of <a, b> = sum conj(a_k) b_k, i.e. the R^{2n} inner product.
double real_dot(const Image& a, const Image& b);
double real_dot(const MeasurementVector& a, const MeasurementVector& b);

inline constexpr double kInfinitePsnr = std::numeric_limits<double>::infinity();

// 10 log10(peak^2 / MSE) between magnitude images. Infinite when MSE is zero.
double psnr(const Image& reference, const Image& candidate, double peak);
// Peak defaults to the maximum magnitude of the reference.
double psnr(const Image& reference, const Image& candidate);

}  // namespace ulens
