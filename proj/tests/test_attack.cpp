#include <doctest.h>

#include "support.hpp"
#include "unstable_lens/attack.hpp"
#include "unstable_lens/io.hpp"
#include "unstable_lens/stability.hpp"
#include "unstable_lens/toynet.hpp"

#include <cmath>

using namespace ulens;
using ulens::testing::random_image;

namespace {

FourierOperator full_fourier(Eigen::Index n) { return FourierOperator(SamplingMask::full(n, n)); }

ToyNetReconstructor random_net(Eigen::Index n, std::uint64_t seed) {
  Rng rng(seed);
  return ToyNetReconstructor(ToyNet(FourierOperator(gaussian_lines_mask(n, n, 0.33, seed)), ToyNetShape{}, rng));
}

Image real_noise(Eigen::Index n, Rng& rng, double scale) {
  RealGrid g(n, n);
  for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = scale * rng.normal();
  return Image::from_real(g);
}

}  // namespace

TEST_CASE("objective closed forms") {
  const auto op = full_fourier(16);
  AdjointReconstructor f(op);
  Rng rng(3);
  const Image x = random_image(16, 16, rng);
  const MeasurementVector y = op.apply(x);
  const Image p = f.reconstruct(y);

  CHECK(std::abs(objective(f, op, y, p, 0.7, Image(16, 16))) <= 1e-24);

  Image r = real_noise(16, rng, 1.0);
  r = (2.0 / norm2(r)) * r;
  CHECK(objective(f, op, y, p, 0.5, r) == doctest::Approx(1.0).epsilon(1e-12));

  const double fit = norm2(f.reconstruct(y + op.apply(r)) - x);
  CHECK(objective(f, op, y, x, 0.0, r) == doctest::Approx(0.5 * fit * fit).epsilon(1e-14));

  CHECK_THROWS_AS(objective(f, op, y, p, 0.5, Image(8, 8)), ShapeError);
}

TEST_CASE("gradient closed forms") {
  const auto op = full_fourier(16);
  AdjointReconstructor f(op);
  Rng rng(4);
  const Image x = random_image(16, 16, rng);
  const MeasurementVector y = op.apply(x);
  const Image p = f.reconstruct(y);

  CHECK(norm2(grad_objective(f, op, y, p, 0.3, Image(16, 16))) <= 1e-12);
  const Image r = real_noise(16, rng, 1.0);
  for (double lambda : {0.0, 0.25, 2.0}) {
    const Image g = grad_objective(f, op, y, p, lambda, r);
    CHECK(norm2(g - (1.0 - lambda) * r) <= 1e-12 * norm2(r));
  }

  SplitBregmanReconstructor sb(op, SplitBregmanConfig::unit_range_defaults());
  CHECK_THROWS_AS(grad_objective(sb, op, y, p, 0.1, r), CapabilityError);
}

TEST_CASE("toy net gradient against central differences") {
  const Eigen::Index n = 64;
  const double step = 1e-5;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto f = random_net(n, seed);
    const auto& op = f.net().op();
    Rng rng(seed, 11);
    const Image x = Image::from_real(gen_ellipse_phantom(random_ellipse_spec(n, 6, rng)).real());
    const MeasurementVector y = op.apply(x);
    const Image p = x;
    const double lambda = 0.01;
    const Image r = real_noise(n, rng, 0.01);
    const Image g = grad_objective(f, op, y, p, lambda, r);

    f.reconstruct(y + op.apply(r));
    const auto pattern = f.net().activation_pattern();
    double err = 0.0, ref = 0.0;
    int used = 0, skipped = 0;
    while (used < 50) {
      const auto j = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n * n)));
      Image up = r, dn = r;
      up.values().data()[j] += step;
      dn.values().data()[j] -= step;
      const double qu = objective(f, op, y, p, lambda, up);
      const bool same_up = f.net().activation_pattern() == pattern;
      const double qd = objective(f, op, y, p, lambda, dn);
      const bool same_dn = f.net().activation_pattern() == pattern;
      if (!same_up || !same_dn) {
        REQUIRE(++skipped < 500);
        continue;
      }
      const double fd = (qu - qd) / (2 * step);
      const double an = g.values().data()[j].real();
      err += (fd - an) * (fd - an);
      ref += an * an;
      ++used;
    }
    CHECK(std::sqrt(err / ref) < 1e-5);
  }
}

TEST_CASE("zero iterations return the scaled start") {
  const auto op = full_fourier(16);
  AdjointReconstructor f(op);
  Rng rng(5);
  const Image x = random_image(16, 16, rng, true);
  AttackConfig cfg;
  cfg.iterations = 0;
  cfg.tau = 0.25;
  cfg.seed = 9;
  cfg.checkpoints = {0};
  const auto trace = find_perturbation(f, op, x, cfg);
  const Image r0 = initial_perturbation(16, 16, cfg);
  CHECK(norm2(trace.r - r0) == 0.0);
  CHECK(trace.iterations_run == 0);
  REQUIRE(trace.checkpoints.size() == 1);
  CHECK(trace.checkpoints[0].iteration == 0);
  CHECK(r0.values().real().minCoeff() >= 0.0);
  CHECK(r0.values().real().maxCoeff() < 0.25);
  CHECK(r0.is_real());

  const RadonOperator radon(16, uniform_angles(24));
  FbpReconstructor fb(radon);
  const auto rt = find_perturbation_radon(fb, radon, x, cfg);
  CHECK(norm2(rt.r - r0) == 0.0);
}

TEST_CASE("searches are bit reproducible") {
  auto f1 = random_net(32, 2);
  auto f2 = random_net(32, 2);
  const auto& op = f1.net().op();
  Rng rng(6);
  const Image x = Image::from_real(gen_ellipse_phantom(random_ellipse_spec(32, 4, rng)).real());
  AttackConfig cfg = AttackConfig::preset("deep-mri-table1");
  cfg.iterations = 15;
  cfg.checkpoints = {0, 7, 15};
  cfg.seed = 77;
  const auto a = find_perturbation(f1, op, x, cfg);
  const auto b = find_perturbation(f2, op, x, cfg);
  CHECK((a.r.values() == b.r.values()).all());
  REQUIRE(a.checkpoints.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) CHECK(a.checkpoints[i].objective == b.checkpoints[i].objective);

  cfg.seed = 78;
  const auto c = find_perturbation(f1, op, x, cfg);
  CHECK(norm2(a.r - c.r) > 0.0);
}

TEST_CASE("no momentum matches plain gradient ascent") {
  auto f = random_net(32, 3);
  const auto& op = f.net().op();
  Rng rng(7);
  const Image x = Image::from_real(gen_ellipse_phantom(random_ellipse_spec(32, 4, rng)).real());
  AttackConfig cfg;
  cfg.gamma = 0.0;
  cfg.eta = 0.05;
  cfg.lambda = 0.1;
  cfg.iterations = 12;
  cfg.seed = 4;
  const auto trace = find_perturbation(f, op, x, cfg);

  const MeasurementVector y = op.apply(x);
  const Image p = f.reconstruct(y);
  Image r = initial_perturbation(32, 32, cfg);
  for (int i = 0; i < cfg.iterations; ++i) r = r + cfg.eta * grad_objective(f, op, y, p, cfg.lambda, r);
  CHECK(norm2(trace.r - r) <= 1e-12 * norm2(r));
}

TEST_CASE("small steps ascend") {
  int steps = 0, ascending = 0;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    auto f = random_net(32, seed);
    const auto& op = f.net().op();
    Rng rng(seed, 5);
    const Image x = Image::from_real(gen_ellipse_phantom(random_ellipse_spec(32, 4, rng)).real());
    AttackConfig cfg;
    cfg.gamma = 0.0;
    cfg.lambda = 0.0;
    cfg.eta = 1e-4;
    cfg.iterations = 30;
    cfg.seed = seed;
    for (int i = 0; i <= cfg.iterations; ++i) cfg.checkpoints.push_back(i);
    const auto trace = find_perturbation(f, op, x, cfg);
    REQUIRE(trace.checkpoints.size() == 31);
    for (std::size_t i = 1; i < trace.checkpoints.size(); ++i) {
      ++steps;
      if (trace.checkpoints[i].objective >= trace.checkpoints[i - 1].objective - 1e-9) ++ascending;
    }
  }
  CHECK(ascending >= 0.95 * steps);
}

TEST_CASE("unitary adjoint offers nothing to amplify") {
  const auto op = full_fourier(32);
  AdjointReconstructor f(op);
  Rng rng(8);
  const Image x = Image::from_real(gen_ellipse_phantom(random_ellipse_spec(32, 4, rng)).real());
  AttackConfig cfg = AttackConfig::preset("deep-mri-table1");
  cfg.lambda = 0.0;
  cfg.iterations = 50;
  cfg.checkpoints.clear();
  const auto trace = find_perturbation(f, op, x, cfg);
  const double dev = norm2(f.reconstruct(op.apply(x + trace.r)) - f.reconstruct(op.apply(x)));
  CHECK(dev / norm2(trace.r) <= 1.01);
}

TEST_CASE("radon loop with fbp stays under the operator norm") {
  const Eigen::Index n = 32;
  const RadonOperator radon(n, uniform_angles(48));
  FbpReconstructor f(radon);

  // Largest singular value of r -> fbp(R r) by power iteration on its normal map.
  Rng rng(9);
  Image v = real_noise(n, rng, 1.0);
  double sigma = 0.0;
  for (int it = 0; it < 200; ++it) {
    v = (1.0 / norm2(v)) * v;
    const Image bv = fbp(radon, radon.apply(v));
    sigma = norm2(bv);
    // grad_g at p = 0 is 2 K^T-ish in measurement space: R* of half of it gives K^T K v.
    const MeasurementVector gk = f.grad_g(radon.apply(v), Image(n, n));
    v = Image::from_real(0.5 * radon.adjoint(gk).real());
  }
  const Image x = Image::from_real(gen_ellipse_phantom(random_ellipse_spec(n, 4, rng)).real());
  AttackConfig cfg = AttackConfig::preset("med-50");
  cfg.iterations = 40;
  cfg.lambda = 0.0;
  const auto trace = find_perturbation_radon(f, radon, x, cfg);
  const double dev = norm2(f.reconstruct(radon.apply(x + trace.r)) - f.reconstruct(radon.apply(x)));
  CHECK(sigma > 0.0);
  CHECK(dev / norm2(trace.r) <= sigma * (1.0 + 1e-6));
}

TEST_CASE("presets") {
  const auto deep = AttackConfig::preset("deep-mri-table1");
  CHECK(deep.lambda == 0.001);
  CHECK(deep.gamma == 0.9);
  CHECK(deep.eta == 0.01);
  CHECK(deep.tau == 0.01);
  CHECK(deep.p_mode == PMode::NetworkOutput);
  CHECK(deep.checkpoints == std::vector<int>{2000, 4000, 6000});
  CHECK(deep.iterations == 6000);

  const auto med = AttackConfig::preset("med-50");
  CHECK(med.lambda == 20.0);
  CHECK(med.eta == 0.005);
  CHECK(med.tau == 0.005);

  const auto fig = AttackConfig::preset("automap-fig-si");
  CHECK(fig.p_mode == PMode::GroundTruth);
  CHECK(fig.tau == 1e-5);
  CHECK(AttackConfig::preset("automap-fig2").p_mode == PMode::NetworkOutput);
  CHECK(AttackConfig::preset("mri-vn").lambda == 1.0);
  CHECK(AttackConfig::preset_names().size() == 5);

  try {
    AttackConfig::preset("deep-ct");
    FAIL("expected an error");
  } catch (const ArgumentError& e) {
    CHECK(std::string(e.what()).find("unknown preset") != std::string::npos);
  }
}

TEST_CASE("config validation and json") {
  AttackConfig cfg = AttackConfig::preset("automap-fig2");
  cfg.seed = 42;
  cfg.norm_budget = 3.5;
  const auto back = AttackConfig::from_json(cfg.to_json());
  CHECK(back.name == cfg.name);
  CHECK(back.lambda == cfg.lambda);
  CHECK(back.tau == cfg.tau);
  CHECK(back.seed == 42);
  CHECK(back.checkpoints == cfg.checkpoints);
  CHECK(back.norm_budget == 3.5);
  CHECK(back.to_json() == cfg.to_json());

  const auto custom =
      AttackConfig::from_json(R"({"name": "mine", "lambda": 0.2, "gamma": 0.5, "eta": 0.1, "tau": 0.3, "p_mode": "gt"})");
  CHECK(custom.p_mode == PMode::GroundTruth);
  CHECK(custom.gamma == 0.5);
  CHECK_THROWS_AS(AttackConfig::from_json(R"({"name": "mine", "lambda": 0.2})"), FormatError);
  CHECK_THROWS_AS(AttackConfig::from_json("{"), FormatError);
  CHECK_THROWS_AS(AttackConfig::from_json(R"({"name": "deep-mri-table1", "gamma": 1.0})"), ArgumentError);

  AttackConfig bad;
  bad.checkpoints = {10, 5};
  CHECK_THROWS_AS(bad.validate(), ArgumentError);
  bad.checkpoints = {bad.iterations + 1};
  CHECK_THROWS_AS(bad.validate(), ArgumentError);
  CHECK_THROWS_AS(p_mode_from_string("both"), ArgumentError);

  const auto dir = ulens::testing::scratch_dir("presets");
  write_text(dir / "p.json", R"([{"name": "med-50"}, {"name": "x", "lambda": 1, "gamma": 0, "eta": 1, "tau": 1}])");
  const auto loaded = load_presets(dir / "p.json");
  REQUIRE(loaded.size() == 2);
  CHECK(loaded[0].lambda == 20.0);
  CHECK(loaded[1].name == "x");
}

TEST_CASE("diverging searches abort cleanly") {
  const auto op = full_fourier(16);
  AdjointReconstructor f(op);
  Rng rng(10);
  const Image x = random_image(16, 16, rng, true);
  AttackConfig cfg;
  cfg.lambda = 0.0;
  cfg.gamma = 0.0;
  cfg.eta = 1e30;
  cfg.iterations = 500;
  cfg.checkpoints = {0, 1};
  const auto trace = find_perturbation(f, op, x, cfg);
  CHECK(trace.aborted);
  CHECK(!trace.abort_reason.empty());
  CHECK(trace.iterations_run < 500);
  CHECK(trace.r.values().allFinite());
}

TEST_CASE("norm budget stops at the last admissible iterate") {
  auto f = random_net(32, 4);
  const auto& op = f.net().op();
  Rng rng(11);
  const Image x = Image::from_real(gen_ellipse_phantom(random_ellipse_spec(32, 4, rng)).real());
  AttackConfig cfg = AttackConfig::preset("deep-mri-table1");
  cfg.iterations = 2000;
  cfg.checkpoints = {0};
  cfg.norm_budget = 0.05 * norm2(x);
  const auto trace = find_perturbation(f, op, x, cfg);
  CHECK(trace.budget_reached);
  CHECK(trace.iterations_run < 2000);
  CHECK(norm2(trace.r) <= cfg.norm_budget);
  REQUIRE(trace.checkpoints.size() == 2);
  CHECK(trace.checkpoints.back().iteration == trace.iterations_run);
  CHECK(norm2(trace.checkpoints.back().r - trace.r) == 0.0);
}

TEST_CASE("reports recompute from saved perturbations") {
  auto f = random_net(32, 5);
  const auto& op = f.net().op();
  Rng rng(12);
  const Image x = Image::from_real(gen_ellipse_phantom(random_ellipse_spec(32, 4, rng)).real());
  SplitBregmanConfig sbc = SplitBregmanConfig::unit_range_defaults();
  sbc.max_outer = 20;
  SplitBregmanReconstructor sb(op, sbc);

  AttackConfig cfg = AttackConfig::preset("deep-mri-table1");
  cfg.iterations = 20;
  cfg.checkpoints = {0, 10, 20};
  cfg.seed = 3;
  const auto trace = find_perturbation(f, op, x, cfg);
  const auto rec = attack_report(trace, x, f, op, &sb);
  REQUIRE(rec.rows.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(rec.rows[i].objective == doctest::Approx(trace.checkpoints[i].objective).epsilon(1e-12));
    CHECK(rec.rows[i].deviation == doctest::Approx(trace.checkpoints[i].deviation).epsilon(1e-12));
    CHECK(!std::isnan(rec.rows[i].stable_deviation));
  }

  const auto dir = ulens::testing::scratch_dir("trace");
  save_trace(trace, dir);
  const auto loaded = load_trace(dir);
  CHECK(loaded.config.to_json() == trace.config.to_json());
  REQUIRE(loaded.checkpoints.size() == 3);
  CHECK((loaded.r.values() == trace.r.values()).all());
  const auto rec2 = attack_report(loaded, x, f, op, &sb);
  CHECK(stability_csv(rec2) == stability_csv(rec));

  write_attack_outputs(loaded, rec2, x, f, op, &sb, dir / "panels");
  CHECK(std::filesystem::exists(dir / "panels" / "metrics.csv"));
  CHECK(std::filesystem::exists(dir / "panels" / "f_000010.png"));
  CHECK(std::filesystem::exists(dir / "panels" / "stable_000020.png"));

  AttackConfig none = cfg;
  none.checkpoints.clear();
  const auto empty = attack_report(find_perturbation(f, op, x, none), x, f, op);
  CHECK(empty.rows.empty());
  CHECK(empty.max_amplification == 0.0);

  AttackConfig zero = cfg;
  zero.iterations = 0;
  zero.checkpoints = {0};
  const auto t0 = find_perturbation(f, op, x, zero);
  const auto r0 = attack_report(t0, x, f, op);
  const Image fy = f.reconstruct(op.apply(x));
  CHECK(r0.rows[0].deviation == norm2(f.reconstruct(op.apply(x + t0.r)) - fy));
}

TEST_CASE("later checkpoints deviate more") {
  int ordered = 0;
  const int runs = 10;
  for (int s = 0; s < runs; ++s) {
    auto f = random_net(32, 20 + static_cast<std::uint64_t>(s));
    const auto& op = f.net().op();
    Rng rng(static_cast<std::uint64_t>(s), 13);
    const Image x = Image::from_real(gen_ellipse_phantom(random_ellipse_spec(32, 4, rng)).real());
    AttackConfig cfg = AttackConfig::preset("deep-mri-table1");
    cfg.iterations = 30;
    cfg.checkpoints = {10, 20, 30};
    cfg.seed = static_cast<std::uint64_t>(s);
    const auto trace = find_perturbation(f, op, x, cfg);
    bool ok = true;
    for (std::size_t i = 1; i < trace.checkpoints.size(); ++i)
      ok = ok && trace.checkpoints[i].deviation >= trace.checkpoints[i - 1].deviation;
    ordered += ok;
  }
  CHECK(ordered >= 0.9 * runs);
}
