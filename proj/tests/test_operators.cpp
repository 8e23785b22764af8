#include <doctest.h>

#include "support.hpp"
#include "unstable_lens/fft.hpp"
#include "unstable_lens/operators.hpp"
#include "unstable_lens/stability.hpp"
#include "unstable_lens/wavelet.hpp"

#include <cmath>
#include <numbers>

using namespace ulens;
using ulens::testing::random_image;
using ulens::testing::random_vector;

namespace {

// Direct O(N^2) unitary DFT.
Image brute_dft(const Image& x) {
  const Eigen::Index h = x.height(), w = x.width();
  Image out(h, w, Domain::KSpace);
  const double norm = 1.0 / std::sqrt(static_cast<double>(h * w));
  for (Eigen::Index k = 0; k < h; ++k)
    for (Eigen::Index l = 0; l < w; ++l) {
      Complex acc = 0.0;
      for (Eigen::Index r = 0; r < h; ++r)
        for (Eigen::Index c = 0; c < w; ++c) {
          const double phase = -2.0 * std::numbers::pi *
                               (static_cast<double>(k * r) / static_cast<double>(h) +
                                static_cast<double>(l * c) / static_cast<double>(w));
          acc += x(r, c) * std::polar(1.0, phase);
        }
      out(k, l) = norm * acc;
    }
  return out;
}

SamplingMask random_mask(Eigen::Index h, Eigen::Index w, double rate, Rng& rng) {
  std::vector<Eigen::Index> idx;
  for (Eigen::Index i = 0; i < h * w; ++i)
    if (rng.uniform() < rate) idx.push_back(i);
  if (idx.empty()) idx.push_back(0);
  return SamplingMask(h, w, idx);
}

// |<Ax, y> - <x, A*y>| / (||Ax|| ||y||)
double dot_test(const SamplingOperator& op, const Image& x, const MeasurementVector& y) {
  const MeasurementVector ax = op.apply(x);
  const Image aty = op.adjoint(y);
  const Complex lhs = ax.values.dot(y.values);
  const Complex rhs = x.flat().dot(aty.flat());
  return std::abs(lhs - rhs) / (norm2(ax) * norm2(y));
}

// Integral of the image (bilinear surface) along one ray by fine stepping.
double fine_ray_integral(const Image& x, double t, double theta, double step) {
  const Eigen::Index n = x.height();
  const double half = 0.5 * static_cast<double>(n - 1);
  const double c = std::cos(theta), s = std::sin(theta);
  const double reach = static_cast<double>(n);
  double acc = 0.0;
  for (double u = -reach; u <= reach; u += step) {
    const double px = t * c - u * s, py = t * s + u * c;
    const double col = px + half, row = half - py;
    const double r0 = std::floor(row), c0 = std::floor(col);
    const double fr = row - r0, fc = col - c0;
    auto at = [&](double rr, double cc) {
      if (rr < 0 || cc < 0 || rr >= n || cc >= n) return 0.0;
      return x(static_cast<Eigen::Index>(rr), static_cast<Eigen::Index>(cc)).real();
    };
    acc += (1 - fr) * (1 - fc) * at(r0, c0) + (1 - fr) * fc * at(r0, c0 + 1) + fr * (1 - fc) * at(r0 + 1, c0) +
           fr * fc * at(r0 + 1, c0 + 1);
  }
  return acc * step;
}

}  // namespace

TEST_CASE("dft2 small cases") {
  Image ones(2, 2);
  ones.values().setConstant(1.0);
  const Image k = dft2(ones);
  CHECK(std::abs(k(0, 0) - Complex(2.0)) < 1e-15);
  CHECK(std::abs(k(0, 1)) < 1e-15);
  CHECK(std::abs(k(1, 1)) < 1e-15);
  CHECK(k.domain() == Domain::KSpace);

  Image delta(2, 2);
  delta(0, 0) = 1.0;
  const Image kd = dft2(delta);
  for (Eigen::Index i = 0; i < 4; ++i) CHECK(std::abs(kd.values().data()[i] - Complex(0.5)) < 1e-15);
}

TEST_CASE("dft2 matches brute-force summation") {
  Rng rng(4);
  for (auto [h, w] : {std::pair<Eigen::Index, Eigen::Index>{8, 8}, {6, 10}, {5, 7}, {1, 6}, {6, 1}, {1, 1}}) {
    const Image x = random_image(h, w, rng);
    const Image fast = dft2(x);
    const Image slow = brute_dft(x);
    CHECK((fast.values() - slow.values()).abs().maxCoeff() < 1e-12);
    CHECK(norm2(fast) == doctest::Approx(norm2(x)).epsilon(1e-12));
    CHECK(norm2(idft2(fast) - x) <= 1e-12 * norm2(x));
    CHECK(idft2(fast).domain() == Domain::Image);
  }
}

TEST_CASE("fourier operator") {
  Rng rng(5);
  const Image x = random_image(8, 8, rng);
  const FourierOperator full(SamplingMask::full(8, 8));
  CHECK((full.apply(x).values - dft2(x).flat()).norm() < 1e-13);
  CHECK(norm2(full.adjoint(full.apply(x)) - x) < 1e-12 * norm2(x));

  Image ones(4, 4);
  ones.values().setConstant(1.0);
  const FourierOperator dc(SamplingMask(4, 4, {0}));
  const auto y = dc.apply(ones);
  REQUIRE(y.size() == 1);
  CHECK(std::abs(y.values[0] - Complex(4.0)) < 1e-14);

  CHECK_THROWS_AS(full.apply(Image(4, 8)), ShapeError);
  CHECK_THROWS_AS(full.adjoint(MeasurementVector{Eigen::VectorXcd(3), ""}), ShapeError);

  // Linearity.
  const FourierOperator op(random_mask(16, 16, 0.3, rng));
  const Image a = random_image(16, 16, rng), b = random_image(16, 16, rng);
  const double alpha = 0.7;
  const Eigen::VectorXcd lhs = op.apply(alpha * a + b).values;
  const Eigen::VectorXcd rhs = alpha * op.apply(a).values + op.apply(b).values;
  CHECK((lhs - rhs).norm() <= 1e-12 * rhs.norm());
}

TEST_CASE("fourier adjoint dot-product test") {
  Rng rng(6);
  for (int t = 0; t < 200; ++t) {
    const FourierOperator op(random_mask(16, 16, 0.3, rng));
    const Image x = random_image(16, 16, rng);
    const MeasurementVector y{random_vector(op.measurement_size(), rng), op.id()};
    CHECK(dot_test(op, x, y) < 1e-12);
  }
}

TEST_CASE("parallel fourier operator") {
  Rng rng(7);
  const SamplingMask mask = random_mask(16, 16, 0.15, rng);
  const Image x = random_image(16, 16, rng);

  Image one(16, 16), zero(16, 16);
  one.values().setConstant(1.0);
  const ParallelFourierOperator single(CoilSet({one}), mask);
  CHECK((single.apply(x).values - FourierOperator(mask).apply(x).values).norm() < 1e-14);

  const ParallelFourierOperator pair(CoilSet({one, zero}), mask);
  const auto y2 = pair.apply(x);
  CHECK(y2.size() == 2 * mask.count());
  CHECK(y2.values.tail(mask.count()).norm() == 0.0);

  const CoilSet coils = synthetic_coils(3, 16, 16);
  RealGrid total = RealGrid::Zero(16, 16);
  for (const auto& s : coils.maps()) total += s.values().abs2();
  CHECK((total - 1.0).abs().maxCoeff() < 1e-12);

  const ParallelFourierOperator op(coils, mask);
  for (int t = 0; t < 200; ++t) {
    const Image xt = random_image(16, 16, rng);
    const MeasurementVector y{random_vector(op.measurement_size(), rng), op.id()};
    CHECK(dot_test(op, xt, y) < 1e-12);
  }
  CHECK_THROWS_AS(ParallelFourierOperator(synthetic_coils(2, 8, 8), mask), ShapeError);
  CHECK_THROWS_AS(CoilSet({one, Image(8, 8)}), ShapeError);
}

TEST_CASE("radon operator geometry and validation") {
  CHECK(default_detector_count(64) == 91);
  CHECK(default_detector_count(128) == 183);
  CHECK(default_detector_count(2) == 3);
  CHECK_THROWS_AS(RadonOperator(16, {0.0, 0.0}), ArgumentError);
  CHECK_THROWS_AS(RadonOperator(16, {180.0}), ArgumentError);
  CHECK_THROWS_AS(RadonOperator(16, {0.0}, 22), ArgumentError);

  const RadonOperator op(16, uniform_angles(8));
  Image complex_input(16, 16);
  complex_input(3, 3) = Complex(0.0, 1.0);
  CHECK_THROWS_AS(op.apply(complex_input), ArgumentError);
  CHECK_THROWS_AS(op.apply(Image(16, 15)), ShapeError);
  CHECK(norm2(op.apply(Image(16, 16))) == 0.0);
}

TEST_CASE("radon adjoint dot-product test") {
  Rng rng(8);
  const RadonOperator op(32, uniform_angles(60));
  for (int t = 0; t < 200; ++t) {
    const Image x = random_image(32, 32, rng, true);
    const MeasurementVector y{random_vector(op.measurement_size(), rng), op.id()};
    CHECK(dot_test(op, x, y) < 1e-10);
  }
}

TEST_CASE("radon rays match fine numerical integration") {
  const Eigen::Index n = 32;
  const Image x = ulens::testing::disk(n, 9.0);
  const RadonOperator op(n, {0.0, 30.0, 45.0, 90.0, 137.0});
  const auto y = op.apply(x);
  for (Eigen::Index a = 0; a < op.angle_count(); ++a) {
    const double theta = op.angles()[static_cast<std::size_t>(a)] * std::numbers::pi / 180.0;
    for (Eigen::Index k = 0; k < op.detectors(); k += 3) {
      const double oracle = fine_ray_integral(x, op.detector_position(k), theta, 1e-3);
      CHECK(std::abs(y.values[a * op.detectors() + k].real() - oracle) < 0.25);
    }
    // Central chord of a radius-9 disk has length 18.
    const Eigen::Index mid = op.detectors() / 2;
    CHECK(std::abs(y.values[a * op.detectors() + mid].real() - 18.0) < 1.5);
  }
}

TEST_CASE("ram-lak taps") {
  const auto h = ram_lak_kernel(5);
  CHECK(h[0] == doctest::Approx(0.5));
  CHECK(h[1] == doctest::Approx(-2.0 / (std::numbers::pi * std::numbers::pi)));
  CHECK(h[2] == 0.0);
  CHECK(h[3] == doctest::Approx(-2.0 / (9.0 * std::numbers::pi * std::numbers::pi)));
}

TEST_CASE("fbp_adjoint is the transpose of fbp") {
  Rng rng(9);
  const RadonOperator op(24, uniform_angles(20));
  for (int t = 0; t < 20; ++t) {
    const Image x = random_image(24, 24, rng);
    const MeasurementVector y{random_vector(op.measurement_size(), rng), op.id()};
    const Complex lhs = x.flat().dot(fbp(op, y).flat());
    const Complex rhs = fbp_adjoint(op, x).values.dot(y.values);
    CHECK(std::abs(lhs - rhs) < 1e-10 * norm2(x) * norm2(y));
  }
  CHECK(norm2(fbp(op, MeasurementVector{Eigen::VectorXcd::Zero(op.measurement_size()), op.id()})) == 0.0);
}

TEST_CASE("fbp reconstructs a disk and degrades with fewer views") {
  const Eigen::Index n = 128;
  const Image x = disk_phantom(n, 40.0);
  const RadonOperator dense(n, uniform_angles(1000));
  const double p_dense = psnr(x, fbp(dense, dense.apply(x)), 1.0);
  MESSAGE("fbp disk psnr, 1000 views: " << p_dense);
  CHECK(p_dense >= 30.0);
  CHECK(p_dense == doctest::Approx(32.179).epsilon(1e-4));  // regression baseline

  const SamplingMask views = radial_kth_mask(1000, dense.detectors(), 20);
  const RadonOperator sparse = dense.subsample(views);
  CHECK(sparse.angle_count() == 50);
  const double p_sparse = psnr(x, fbp(sparse, sparse.apply(x)), 1.0);
  MESSAGE("fbp disk psnr, 50 views: " << p_sparse);
  CHECK(p_sparse < p_dense);
}

TEST_CASE("sinogram restriction and layout") {
  Rng rng(10);
  const RadonOperator full(16, uniform_angles(12));
  const SamplingMask views = radial_kth_mask(12, full.detectors(), 4);
  const RadonOperator sub = full.subsample(views);
  const Image x = random_image(16, 16, rng, true);
  const auto restricted = RadonOperator::restrict_sinogram(full.apply(x), views);
  CHECK((restricted.values - sub.apply(x).values).norm() < 1e-12);
  const Image s = full.to_sinogram(full.apply(x));
  CHECK(s.domain() == Domain::Sinogram);
  CHECK(s.height() == 12);
  CHECK((full.from_sinogram(s).values - full.apply(x).values).norm() == 0.0);
}

TEST_CASE("mask families") {
  const SamplingMask eq = equispaced_lines_mask(8, 8, 0.5, 2);
  CHECK(eq.columns().size() == 4);
  CHECK(eq.count() == 32);
  const auto cols = eq.columns();
  // Central block in fft-shifted coordinates is {w/2 - 1, w/2}, i.e. bins 7 and 0.
  CHECK(std::find(cols.begin(), cols.end(), 0) != cols.end());
  CHECK(std::find(cols.begin(), cols.end(), 7) != cols.end());

  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const SamplingMask lo = gaussian_lines_mask(32, 64, 0.2, seed);
    const SamplingMask hi = gaussian_lines_mask(32, 64, 0.4, seed);
    CHECK(lo.subset_of(hi));
    CHECK(lo.contains(0));
    CHECK(lo.columns().size() == static_cast<std::size_t>(line_count(0.2, 64)));
    CHECK(lo.count() == line_count(0.2, 64) * 32);
  }
  CHECK(gaussian_lines_mask(32, 64, 0.3, 5) == gaussian_lines_mask(32, 64, 0.3, 5));

  const SamplingMask radial = radial_kth_mask(1000, 183, 20);
  CHECK(radial.rows().size() == 50);
  CHECK(radial.count() == 50 * 183);

  const SamplingMask pd = poisson_disk_mask(32, 32, 0.25, 3);
  CHECK(pd.count() == 256);
  CHECK(pd.contains(0));

  CHECK_THROWS_AS(gaussian_lines_mask(8, 8, 0.0, 1), ArgumentError);
  CHECK_THROWS_AS(gaussian_lines_mask(8, 8, 1.5, 1), ArgumentError);
  CHECK_THROWS_AS(SamplingMask(4, 4, {3, 2}), ArgumentError);
  CHECK_THROWS_AS(SamplingMask(4, 4, {16}), ArgumentError);

  const SamplingMask round = SamplingMask::from_json(eq.to_json());
  CHECK(round == eq);
  CHECK_THROWS_AS(SamplingMask::from_json("{\"h\":2}"), FormatError);

  MaskParams params;
  params.rate = 0.25;
  params.center_lines = 4;
  CHECK(make_mask(MaskFamily::EquispacedLines, 16, 16, params) == equispaced_lines_mask(16, 16, 0.25, 4));
}

TEST_CASE("daubechies-2 wavelet is orthogonal") {
  Rng rng(11);
  const Daubechies2 psi(3);
  const Image x = random_image(32, 16, rng);
  const ComplexGrid c = psi.forward(x.values());
  CHECK(std::sqrt(c.abs2().sum()) == doctest::Approx(norm2(x)).epsilon(1e-12));
  CHECK((psi.inverse(c) - x.values()).abs().maxCoeff() < 1e-12);

  // Constant images live entirely in the approximation band.
  ComplexGrid flat = ComplexGrid::Constant(16, 16, 1.0);
  const ComplexGrid cf = psi.forward(flat);
  const auto labels = psi.band_labels(16, 16);
  for (Eigen::Index r = 0; r < 16; ++r)
    for (Eigen::Index c = 0; c < 16; ++c)
      if (labels(r, c) != 0) CHECK(std::abs(cf(r, c)) < 1e-12);
  CHECK(labels.maxCoeff() == 9);
  CHECK(psi.band_count() == 10);
  CHECK_THROWS_AS(psi.forward(ComplexGrid::Zero(12, 16)), ShapeError);
}
