#include "unstable_lens/reconstructors.hpp"

#include "unstable_lens/fft.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <numeric>

namespace ulens {

MeasurementVector Reconstructor::grad_g(const MeasurementVector&, const Image&) {
  throw CapabilityError("reconstructor '" + name() + "' does not expose gradients");
}

MeasurementVector AdjointReconstructor::grad_g(const MeasurementVector& u, const Image& p) {
  // g(u) = ||A* u - p||^2  =>  grad = 2 A (A* u - p)
  const Image residual = op_->adjoint(u) - p;
  MeasurementVector g = op_->apply(residual);
  g.values *= 2.0;
  return g;
}

MeasurementVector FbpReconstructor::grad_g(const MeasurementVector& u, const Image& p) {
  const Image residual = fbp(op_, u) - p;
  MeasurementVector g = fbp_adjoint(op_, residual);
  g.values *= 2.0;
  return g;
}

Image adjoint_recon(const SamplingOperator& op, const MeasurementVector& y, bool use_fbp_for_radon) {
  if (use_fbp_for_radon) {
    if (const auto* radon = dynamic_cast<const RadonOperator*>(&op)) return fbp(*radon, y);
  }
  return op.adjoint(y);
}

double reweight(Complex c, double eps) {
  if (!(eps > 0.0)) throw ArgumentError("reweighting epsilon must be positive");
  return std::clamp(1.0 / (std::abs(c) + eps), 0.0, 1.0 / eps);
}

RealGrid reweight(const ComplexGrid& coeffs, double eps) {
  if (!(eps > 0.0)) throw ArgumentError("reweighting epsilon must be positive");
  return (coeffs.abs() + eps).inverse().min(1.0 / eps).max(0.0);
}

namespace {

// Soft-threshold level theta with sum max(m_k - theta, 0) = radius.
double l1_threshold(std::vector<double> mags, double radius) {
  std::sort(mags.begin(), mags.end(), std::greater<>());
  double cumulative = 0.0;
  double theta = 0.0;
  for (std::size_t i = 0; i < mags.size(); ++i) {
    cumulative += mags[i];
    const double candidate = (cumulative - radius) / static_cast<double>(i + 1);
    if (i + 1 < mags.size() && candidate >= mags[i + 1]) {
      theta = candidate;
      break;
    }
    theta = candidate;
  }
  return std::max(theta, 0.0);
}

}  // namespace

Eigen::VectorXcd project_l1_ball(const Eigen::VectorXcd& v, double radius) {
  if (radius < 0.0) throw ArgumentError("l1 ball radius must be non-negative");
  const Eigen::VectorXd mags = v.cwiseAbs();
  if (mags.sum() <= radius) return v;
  if (radius == 0.0) return Eigen::VectorXcd::Zero(v.size());
  const double theta = l1_threshold(std::vector<double>(mags.data(), mags.data() + mags.size()), radius);
  return shrink(v.array(), theta).matrix();
}

Eigen::VectorXd project_l1_ball(const Eigen::VectorXd& v, double radius) {
  if (radius < 0.0) throw ArgumentError("l1 ball radius must be non-negative");
  const Eigen::VectorXd mags = v.cwiseAbs();
  if (mags.sum() <= radius) return v;
  if (radius == 0.0) return Eigen::VectorXd::Zero(v.size());
  const double theta = l1_threshold(std::vector<double>(mags.data(), mags.data() + mags.size()), radius);
  return shrink(v.array(), theta).matrix();
}

Gradient2 forward_differences(const ComplexGrid& z) {
  const Eigen::Index h = z.rows(), w = z.cols();
  Gradient2 g{ComplexGrid(h, w), ComplexGrid(h, w)};
  for (Eigen::Index r = 0; r < h; ++r) {
    for (Eigen::Index c = 0; c < w; ++c) {
      g.dx(r, c) = z(r, (c + 1) % w) - z(r, c);
      g.dy(r, c) = z((r + 1) % h, c) - z(r, c);
    }
  }
  return g;
}

ComplexGrid forward_differences_adjoint(const Gradient2& g) {
  const Eigen::Index h = g.dx.rows(), w = g.dx.cols();
  ComplexGrid out(h, w);
  for (Eigen::Index r = 0; r < h; ++r) {
    for (Eigen::Index c = 0; c < w; ++c) {
      out(r, c) = g.dx(r, (c + w - 1) % w) - g.dx(r, c) + g.dy((r + h - 1) % h, c) - g.dy(r, c);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Split Bregman

SplitBregmanConfig SplitBregmanConfig::radon_defaults() {
  SplitBregmanConfig cfg;
  cfg.fidelity = 50.0;
  cfg.mu_wavelet = 500.0;
  cfg.mu_tv = 0.0;
  cfg.epsilon = 1e-8;
  return cfg;
}

SplitBregmanConfig SplitBregmanConfig::unit_range_defaults() {
  SplitBregmanConfig cfg;
  cfg.band_weights.assign(static_cast<std::size_t>(1 + 3 * cfg.wavelet_levels), 1e-3);
  cfg.band_weights[0] = 0.0;
  cfg.tv_weight = 0.01;
  cfg.fidelity = 10.0;
  cfg.mu_wavelet = 0.01;
  cfg.mu_tv = 1.0;
  cfg.max_outer = 200;
  return cfg;
}

void SplitBregmanConfig::validate() const {
  for (double w : band_weights)
    if (w < 0.0) throw ArgumentError("split Bregman band weights must be non-negative");
  if (tv_weight < 0.0 || fidelity < 0.0 || mu_wavelet < 0.0 || mu_tv < 0.0) {
    throw ArgumentError("split Bregman weights must be non-negative");
  }
  if (!(epsilon > 0.0)) throw ArgumentError("split Bregman epsilon must be positive");
  if (mu_wavelet == 0.0 && mu_tv == 0.0 && fidelity == 0.0) {
    throw ArgumentError("split Bregman system is singular: all quadratic weights are zero");
  }
  if (max_outer < 0 || gauss_seidel_sweeps < 1 || cg_max_iterations < 1) {
    throw ArgumentError("split Bregman iteration counts are invalid");
  }
}

namespace {

// Preconditioned conjugate gradients for a Hermitian positive definite
// operator, warm-started from x.
template <typename Apply, typename Precondition>
void conjugate_gradient(Apply&& apply, Precondition&& precondition, const Eigen::VectorXcd& rhs, Eigen::VectorXcd& x,
                        double tol, int max_iter) {
  const double rhs_norm = rhs.norm();
  if (rhs_norm == 0.0) {
    x.setZero();
    return;
  }
  Eigen::VectorXcd r = rhs - apply(x);
  Eigen::VectorXcd z = precondition(r);
  Eigen::VectorXcd p = z;
  double rz = r.dot(z).real();
  for (int it = 0; it < max_iter && r.norm() > tol * rhs_norm; ++it) {
    const Eigen::VectorXcd ap = apply(p);
    const double pap = p.dot(ap).real();
    if (pap <= 0.0) break;
    const double alpha = rz / pap;
    x += alpha * p;
    r -= alpha * ap;
    z = precondition(r);
    const double rz_next = r.dot(z).real();
    p = z + (rz_next / rz) * p;
    rz = rz_next;
  }
}

Eigen::Map<const Eigen::VectorXcd> flat(const ComplexGrid& g) { return {g.data(), g.size()}; }

ComplexGrid grid_from(const Eigen::VectorXcd& v, Eigen::Index h, Eigen::Index w) {
  return Eigen::Map<const ComplexGrid>(v.data(), h, w);
}

}  // namespace

SplitBregmanResult split_bregman_recon(const SamplingOperator& op, const MeasurementVector& y,
                                       const SplitBregmanConfig& cfg) {
  cfg.validate();
  if (y.size() != op.measurement_size()) throw ShapeError("measurements do not match the operator");
  const Eigen::Index h = op.image_height(), w = op.image_width();
  const Daubechies2 wavelet(cfg.wavelet_levels);
  wavelet.check_shape(h, w);

  const Eigen::ArrayXXi labels = wavelet.band_labels(h, w);
  std::vector<double> band_weights = cfg.band_weights;
  if (band_weights.empty()) {
    band_weights.assign(static_cast<std::size_t>(wavelet.band_count()), 1.0);
    band_weights[0] = 0.0;
  }
  if (static_cast<int>(band_weights.size()) != wavelet.band_count()) {
    throw ArgumentError("split Bregman needs one weight per wavelet band");
  }
  RealGrid lambda(h, w);
  for (Eigen::Index r = 0; r < h; ++r)
    for (Eigen::Index c = 0; c < w; ++c) lambda(r, c) = band_weights[static_cast<std::size_t>(labels(r, c))];

  const bool use_tv = cfg.mu_tv > 0.0;
  ComplexGrid z = ComplexGrid::Zero(h, w);
  ComplexGrid d_w = ComplexGrid::Zero(h, w), b_w = ComplexGrid::Zero(h, w);
  Gradient2 d_t{ComplexGrid::Zero(h, w), ComplexGrid::Zero(h, w)};
  Gradient2 b_t = d_t;
  RealGrid weights = RealGrid::Ones(h, w);
  MeasurementVector y_k = y;

  auto normal_op = [&](const Eigen::VectorXcd& v) -> Eigen::VectorXcd {
    const Image img(grid_from(v, h, w));
    Eigen::VectorXcd out = cfg.mu_wavelet * v;
    if (cfg.fidelity > 0.0) out += cfg.fidelity * op.adjoint(op.apply(img)).flat();
    if (use_tv) out += cfg.mu_tv * flat(forward_differences_adjoint(forward_differences(img.values())));
    return out;
  };

  // For a single-coil Fourier operator every term of the z-step system is
  // diagonal in k-space, so this preconditioner is exact.
  std::function<Eigen::VectorXcd(const Eigen::VectorXcd&)> precondition = [](const Eigen::VectorXcd& r) {
    return Eigen::VectorXcd(r);
  };
  if (const auto* fourier = dynamic_cast<const FourierOperator*>(&op)) {
    RealGrid diag(h, w);
    for (Eigen::Index k = 0; k < h; ++k) {
      const double sk = std::sin(std::numbers::pi * static_cast<double>(k) / static_cast<double>(h));
      for (Eigen::Index l = 0; l < w; ++l) {
        const double sl = std::sin(std::numbers::pi * static_cast<double>(l) / static_cast<double>(w));
        diag(k, l) = cfg.mu_wavelet + (use_tv ? cfg.mu_tv * 4.0 * (sk * sk + sl * sl) : 0.0);
      }
    }
    if (cfg.fidelity > 0.0)
      for (auto idx : fourier->mask().indices()) diag.data()[idx] += cfg.fidelity;
    if ((diag > 0.0).all()) {
      const RealGrid inv = diag.inverse();
      precondition = [inv, h, w](const Eigen::VectorXcd& r) -> Eigen::VectorXcd {
        Image k = dft2(Image(grid_from(r, h, w)));
        k.values() *= inv.cast<Complex>();
        return idft2(k).flat();
      };
    }
  }

  SplitBregmanResult result;
  Eigen::VectorXcd z_vec = Eigen::VectorXcd::Zero(h * w);
  for (int k = 0; k < cfg.max_outer; ++k) {
    const ComplexGrid z_prev = z;
    ComplexGrid coeffs;
    Gradient2 grad;
    for (int sweep = 0; sweep < cfg.gauss_seidel_sweeps; ++sweep) {
      // z-step: (beta A*A + mu1 I + mu2 D^T D) z = beta A* y_k + mu1 Psi^T (d - b) + mu2 D^T (d - b)
      Eigen::VectorXcd rhs = cfg.mu_wavelet * flat(wavelet.inverse(d_w - b_w));
      if (cfg.fidelity > 0.0) rhs += cfg.fidelity * op.adjoint(y_k).flat();
      if (use_tv) {
        rhs += cfg.mu_tv * flat(forward_differences_adjoint({d_t.dx - b_t.dx, d_t.dy - b_t.dy}));
      }
      conjugate_gradient(normal_op, precondition, rhs, z_vec, cfg.cg_tolerance, cfg.cg_max_iterations);
      z = grid_from(z_vec, h, w);

      // d-step: shrinkage with the current reweighting.
      coeffs = wavelet.forward(z);
      if (cfg.mu_wavelet > 0.0) {
        const RealGrid thresholds = lambda * weights / cfg.mu_wavelet;
        const ComplexGrid v = coeffs + b_w;
        for (Eigen::Index i = 0; i < v.size(); ++i) d_w.data()[i] = shrink(v.data()[i], thresholds.data()[i]);
      }
      if (use_tv) {
        grad = forward_differences(z);
        const double t = cfg.tv_weight / cfg.mu_tv;
        d_t.dx = shrink(grad.dx + b_t.dx, t);
        d_t.dy = shrink(grad.dy + b_t.dy, t);
      }
    }
    b_w += coeffs - d_w;
    if (use_tv) {
      b_t.dx += grad.dx - d_t.dx;
      b_t.dy += grad.dy - d_t.dy;
    }
    const Image z_img(z);
    const MeasurementVector az = op.apply(z_img);
    y_k.values += y.values - az.values;
    weights = reweight(coeffs, cfg.epsilon);

    const double residual = (az.values - y.values).norm();
    double objective = 0.5 * cfg.fidelity * residual * residual + (lambda * weights * coeffs.abs()).sum();
    if (use_tv) {
      const Gradient2 g = forward_differences(z);
      objective += cfg.tv_weight * (g.dx.abs().sum() + g.dy.abs().sum());
    }
    result.residuals.push_back(residual);
    result.objectives.push_back(objective);
    result.iterations = k + 1;

    const double z_norm = std::sqrt(z.abs2().sum());
    const double change = std::sqrt((z - z_prev).abs2().sum());
    if (z_norm == 0.0 ? change == 0.0 : change <= cfg.convergence_tolerance * z_norm) {
      result.converged = true;
      break;
    }
  }
  result.image = Image(z);
  return result;
}

Image SplitBregmanReconstructor::reconstruct(const MeasurementVector& y) {
  last_ = split_bregman_recon(*op_, y, cfg_);
  return last_.image;
}

// ---------------------------------------------------------------------------
// Basis pursuit denoise

void BpdnConfig::validate() const {
  if (!(delta >= 0.0)) throw ArgumentError("bpdn delta must be non-negative");
  if (max_iterations < 1) throw ArgumentError("bpdn iteration cap must be positive");
}

BpdnResult bpdn_recon(const SamplingOperator& op, const MeasurementVector& y, const BpdnConfig& cfg) {
  cfg.validate();
  if (y.size() != op.measurement_size()) throw ShapeError("measurements do not match the operator");
  const Eigen::Index h = op.image_height(), w = op.image_width();
  const Daubechies2 wavelet(cfg.wavelet_levels);
  wavelet.check_shape(h, w);

  // M z = A Psi^{-1} z and M^H r = Psi A* r (Psi orthogonal).
  auto forward = [&](const Eigen::VectorXcd& z) {
    return op.apply(Image(wavelet.inverse(grid_from(z, h, w)))).values;
  };
  auto adjoint = [&](const Eigen::VectorXcd& r) -> Eigen::VectorXcd {
    const ComplexGrid c = wavelet.forward(op.adjoint({r, op.id()}).values());
    return flat(c);
  };

  BpdnResult result;
  Eigen::VectorXcd z = Eigen::VectorXcd::Zero(h * w);
  const double y_norm = y.values.norm();
  if (y_norm <= cfg.delta) {
    result.image = Image(h, w);
    result.residual = y_norm;
    result.converged = true;
    return result;
  }

  Eigen::VectorXcd r = y.values;
  Eigen::VectorXcd g = -adjoint(r);
  double tau = 0.0;
  double step = 1.0;
  int iterations = 0;
  const double target_slack = cfg.residual_tolerance * std::max(cfg.delta, 1e-6 * y_norm);

  for (int newton = 0; newton < 100 && iterations < cfg.max_iterations; ++newton) {
    result.newton_steps = newton + 1;
    double r_norm = r.norm();
    const double dual = g.cwiseAbs().maxCoeff();
    if (r_norm - cfg.delta <= target_slack) {
      result.converged = true;
      break;
    }
    if (dual == 0.0) break;
    // Newton step on phi(tau) = ||r_tau|| towards phi = delta.
    tau += (r_norm - cfg.delta) * r_norm / dual;

    // Spectral projected gradient on min 0.5 ||M z - y||^2 s.t. ||z||_1 <= tau.
    z = project_l1_ball(z, tau);
    r = y.values - forward(z);
    g = -adjoint(r);
    double f = 0.5 * r.squaredNorm();
    while (iterations < cfg.max_iterations) {
      const double gap = r.squaredNorm() - y.values.dot(r).real() + tau * g.cwiseAbs().maxCoeff();
      if (gap <= cfg.gap_tolerance * std::max(1.0, f)) break;
      ++iterations;
      Eigen::VectorXcd z_new;
      Eigen::VectorXcd r_new;
      double f_new = f;
      double alpha = step;
      // Backtracking on the projected arc.
      for (int ls = 0; ls < 40; ++ls) {
        z_new = project_l1_ball(Eigen::VectorXcd(z - alpha * g), tau);
        r_new = y.values - forward(z_new);
        f_new = 0.5 * r_new.squaredNorm();
        if (f_new <= f + 1e-4 * g.dot(z_new - z).real()) break;
        alpha *= 0.5;
      }
      const Eigen::VectorXcd g_new = -adjoint(r_new);
      const Eigen::VectorXcd s = z_new - z;
      const double sy = s.dot(g_new - g).real();
      step = sy > 0.0 ? std::clamp(s.squaredNorm() / sy, 1e-10, 1e10) : 1e10;
      const bool stalled = s.norm() <= 1e-15 * std::max(1.0, z.norm());
      z = std::move(z_new);
      r = std::move(r_new);
      g = g_new;
      f = f_new;
      if (stalled) break;
    }
  }
  result.iterations = iterations;
  result.tau = tau;
  result.residual = r.norm();
  if (!result.converged && result.residual - cfg.delta <= target_slack) result.converged = true;
  result.image = Image(wavelet.inverse(grid_from(z, h, w)));
  return result;
}

}  // namespace ulens
