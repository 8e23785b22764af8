#include <doctest.h>

#include "support.hpp"
#include "unstable_lens/io.hpp"

#include <cmath>
#include <cstring>

using namespace ulens;
using ulens::testing::random_image;

namespace {

double loop_mse(const Image& a, const Image& b) {
  double s = 0.0;
  for (Eigen::Index r = 0; r < a.height(); ++r)
    for (Eigen::Index c = 0; c < a.width(); ++c) {
      const double d = std::abs(a(r, c)) - std::abs(b(r, c));
      s += d * d;
    }
  return s / static_cast<double>(a.size());
}

}  // namespace

TEST_CASE("psnr of identical images is infinite") {
  Rng rng(1);
  const Image a = random_image(8, 8, rng);
  CHECK(psnr(a, a, 1.0) == kInfinitePsnr);
  CHECK(psnr(a, a, 7.5) == kInfinitePsnr);
}

TEST_CASE("psnr with uniform error gives 20 dB") {
  Image a(4, 4), b(4, 4);
  a.values().setConstant(0.5);
  b.values().setConstant(0.6);  // MSE 0.01
  CHECK(psnr(a, b, 1.0) == doctest::Approx(20.0).epsilon(1e-12));
}

TEST_CASE("psnr of noisy disk matches a scalar-loop mse") {
  Rng rng(7);
  const Image x = ulens::testing::disk(64, 20.0);
  Image noisy = x;
  for (Eigen::Index r = 0; r < 64; ++r)
    for (Eigen::Index c = 0; c < 64; ++c) noisy(r, c) += 0.1 * rng.normal();
  const double expected = 10.0 * std::log10(1.0 / loop_mse(x, noisy));
  CHECK(psnr(x, noisy, 1.0) == doctest::Approx(expected).epsilon(1e-12));
  CHECK(std::abs(expected - 20.0) < 0.5);
  CHECK(psnr(x, noisy, 1.0) == doctest::Approx(psnr(noisy, x, 1.0)).epsilon(1e-14));
}

TEST_CASE("psnr rejects bad arguments") {
  Image a(4, 4), b(4, 5);
  CHECK_THROWS_AS(psnr(a, b, 1.0), ShapeError);
  CHECK_THROWS_AS(psnr(a, a, 0.0), ArgumentError);
  CHECK_THROWS_AS(psnr(a, a, -1.0), ArgumentError);
}

TEST_CASE("norm2") {
  CHECK(norm2(Image(4, 4)) == 0.0);
  Image one(1, 1);
  one(0, 0) = Complex(3, 4);
  CHECK(norm2(one) == doctest::Approx(5.0));

  Rng rng(3);
  MeasurementVector v{ulens::testing::random_vector(16, rng), "x"};
  double s = 0.0;
  for (Eigen::Index i = 0; i < 16; ++i) s += v.values[i].real() * v.values[i].real() + v.values[i].imag() * v.values[i].imag();
  CHECK(norm2(v) == doctest::Approx(std::sqrt(s)).epsilon(1e-14));

  for (int t = 0; t < 100; ++t) {
    const Image a = random_image(5, 3, rng), b = random_image(5, 3, rng);
    CHECK(norm2(a + b) <= (norm2(a) + norm2(b)) * (1 + 1e-12));
  }
}

TEST_CASE("rng streams are reproducible and independent") {
  Rng a(42), b(42), c(43), d(42, 1);
  bool differs_seed = false, differs_stream = false;
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next_u64();
    CHECK(x == b.next_u64());
    differs_seed |= x != c.next_u64();
    differs_stream |= x != d.next_u64();
  }
  CHECK(differs_seed);
  CHECK(differs_stream);

  Rng u(5);
  double mean = 0.0, var = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double z = u.normal();
    mean += z;
    var += z * z;
  }
  mean /= n;
  var = var / n - mean * mean;
  CHECK(std::abs(mean) < 0.03);
  CHECK(std::abs(var - 1.0) < 0.05);

  Rng k(9);
  for (int i = 0; i < 1000; ++i) CHECK(k.below(7) < 7);
  const Rng parent(11);
  CHECK(parent.fork(3).next_u64() == parent.fork(3).next_u64());
  CHECK(parent.counter() == 0);
}

TEST_CASE("native image format round trip is bit exact") {
  Rng rng(12);
  for (int t = 0; t < 1000; ++t) {
    const Eigen::Index h = 1 + static_cast<Eigen::Index>(rng.below(9));
    const Eigen::Index w = 1 + static_cast<Eigen::Index>(rng.below(9));
    const Image x = random_image(h, w, rng);
    const Image y = decode_image(encode_image(x));
    REQUIRE(y.same_shape(x));
    CHECK(std::memcmp(x.values().data(), y.values().data(), sizeof(Complex) * x.size()) == 0);
  }
  const auto dir = ulens::testing::scratch_dir("core_io");
  Image s(32, 32, Domain::Sinogram);
  s.values() = random_image(32, 32, rng).values();
  save_image(s, dir / "a.img");
  const Image back = load_image(dir / "a.img");
  CHECK(back.domain() == Domain::Sinogram);
  CHECK((back.values() == s.values()).all());
}

TEST_CASE("native image format rejects damaged files") {
  std::string bytes = encode_image(Image(4, 4));
  CHECK_THROWS_WITH_AS(decode_image(bytes.substr(0, bytes.size() - 16)), doctest::Contains("truncated payload"),
                       FormatError);
  CHECK_THROWS_WITH_AS(decode_image(bytes + "x"), doctest::Contains("trailing"), FormatError);
  CHECK_THROWS_AS(decode_image("{\"h\":4,\"w\"\n"), FormatError);
  CHECK_THROWS_AS(decode_image("no header at all"), FormatError);
  CHECK_THROWS_WITH_AS(decode_image("{\"h\":4294967296,\"w\":4294967296,\"domain\":\"image\",\"dtype\":\"c128\"}\n"),
                       doctest::Contains("dimension overflow"), FormatError);
}

TEST_CASE("png quantisation rounds half up and clamps") {
  Image x(3, 3);
  x.values().setConstant(0.5);
  for (auto v : quantize_magnitude(x, 1.0)) CHECK(v == 128);
  x(0, 0) = 2.0;
  x(0, 1) = Complex(0.0, -1.0);
  const auto q = quantize_magnitude(x, 1.0);
  CHECK(q[0] == 255);
  CHECK(q[1] == 255);

  const auto dir = ulens::testing::scratch_dir("core_png");
  save_png(x, dir / "x.png", 1.0);
  const std::string png = read_text(dir / "x.png");
  REQUIRE(png.size() > 8);
  CHECK(png.substr(1, 3) == "PNG");
}

TEST_CASE("csv writer follows rfc 4180") {
  CsvWriter csv({"a", "b"});
  csv.row({"1", "x,y"}).row({"say \"hi\"", "line\nbreak"});
  CHECK(csv.str() == "a,b\r\n1,\"x,y\"\r\n\"say \"\"hi\"\"\",\"line\nbreak\"\r\n");
  CHECK_THROWS_AS(csv.row({"only one"}), ShapeError);
  CHECK(format_double(0.1) == "0.1");
  CHECK(format_double(kInfinitePsnr) == "inf");
}

TEST_CASE("hashing and base64") {
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  for (const std::string s : {"", "f", "fo", "foo", "foob", "fooba", "foobar"}) CHECK(base64_decode(base64_encode(s)) == s);
  CHECK(base64_encode("foobar") == "Zm9vYmFy");
  CHECK(base64_encode("fo") == "Zm8=");
  Rng rng(2);
  const auto v = ulens::testing::random_vector(33, rng);
  CHECK(unpack_complex(base64_decode(base64_encode(pack_complex(v)))) == v);
}
