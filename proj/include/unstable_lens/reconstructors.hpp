#pragma once

#include "unstable_lens/core.hpp"
#include "unstable_lens/operators.hpp"
#include "unstable_lens/wavelet.hpp"

#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace ulens {

// A reconstruction map f from measurements to images. Gradient-capable maps
// also expose grad_g(u, p), the R^{2m} gradient of u -> ||f(u) - p||^2
// packed as a complex vector.
class Reconstructor {
 public:
  virtual ~Reconstructor() = default;

  virtual std::string name() const = 0;
  virtual const SamplingOperator& op() const = 0;
  virtual Image reconstruct(const MeasurementVector& y) = 0;
  virtual bool gradient_capable() const { return false; }
  virtual MeasurementVector grad_g(const MeasurementVector& u, const Image& p);
  virtual std::unique_ptr<Reconstructor> clone() const = 0;
};

// Builds a reconstructor bound to a given operator (used when sweeping masks).
using ReconstructorFactory = std::function<std::unique_ptr<Reconstructor>(const SamplingOperator&)>;

// f(y) = A* y.
class AdjointReconstructor final : public Reconstructor {
 public:
  explicit AdjointReconstructor(const SamplingOperator& op) : op_(op.clone()) {}
  AdjointReconstructor(const AdjointReconstructor& other) : op_(other.op_->clone()) {}

  std::string name() const override { return "adjoint"; }
  const SamplingOperator& op() const override { return *op_; }
  Image reconstruct(const MeasurementVector& y) override { return op_->adjoint(y); }
  bool gradient_capable() const override { return true; }
  MeasurementVector grad_g(const MeasurementVector& u, const Image& p) override;
  std::unique_ptr<Reconstructor> clone() const override { return std::make_unique<AdjointReconstructor>(*this); }

 private:
  std::unique_ptr<SamplingOperator> op_;
};

// f(y) = fbp(y) for Radon measurements.
class FbpReconstructor final : public Reconstructor {
 public:
  explicit FbpReconstructor(RadonOperator op) : op_(std::move(op)) {}

  std::string name() const override { return "fbp"; }
  const SamplingOperator& op() const override { return op_; }
  Image reconstruct(const MeasurementVector& y) override { return fbp(op_, y); }
  bool gradient_capable() const override { return true; }
  MeasurementVector grad_g(const MeasurementVector& u, const Image& p) override;
  std::unique_ptr<Reconstructor> clone() const override { return std::make_unique<FbpReconstructor>(*this); }

 private:
  RadonOperator op_;
};

// The warm-start reconstruction H: A* y, or fbp for Radon when requested.
Image adjoint_recon(const SamplingOperator& op, const MeasurementVector& y, bool use_fbp_for_radon = false);

// Soft threshold v * max(0, |v| - t) / |v|, zero at v = 0.
inline double shrink(double v, double t) {
  const double mag = std::abs(v);
  return mag <= t ? 0.0 : v * ((mag - t) / mag);
}

inline Complex shrink(Complex v, double t) {
  const double mag = std::abs(v);
  return mag <= t ? Complex(0.0) : v * ((mag - t) / mag);
}

template <typename Derived>
auto shrink(const Eigen::ArrayBase<Derived>& v, double t) {
  using Scalar = typename Derived::Scalar;
  return v.unaryExpr([t](Scalar x) -> Scalar { return shrink(x, t); });
}

// w_k = 1 / (|c_k| + eps), clamped to [0, 1/eps].
RealGrid reweight(const ComplexGrid& coeffs, double eps);
double reweight(Complex c, double eps);

// Euclidean projection onto {z : sum |z_k| <= radius}; phases are preserved.
Eigen::VectorXcd project_l1_ball(const Eigen::VectorXcd& v, double radius);
Eigen::VectorXd project_l1_ball(const Eigen::VectorXd& v, double radius);

struct SplitBregmanConfig {
  // Weight per wavelet band (see Daubechies2::band_labels); empty means
  // 0 on the approximation band and 1 on every detail band.
  std::vector<double> band_weights;
  int wavelet_levels = 3;
  double tv_weight = 1.0;      // alpha_1
  double fidelity = 1e5;       // beta
  double mu_wavelet = 5000.0;  // mu_1
  double mu_tv = 10.0;         // mu_2
  double epsilon = 1e-5;
  int max_outer = 500;
  int gauss_seidel_sweeps = 1;
  double cg_tolerance = 1e-8;
  int cg_max_iterations = 200;
  double convergence_tolerance = 1e-6;

  static SplitBregmanConfig fourier_defaults() { return {}; }
  // Weights that recover piecewise-constant images with values in [0, 1]
  // from Fourier samples; the defaults above barely move off the adjoint there.
  static SplitBregmanConfig unit_range_defaults();
  static SplitBregmanConfig radon_defaults();
  void validate() const;
};

struct SplitBregmanResult {
  Image image;
  std::vector<double> residuals;   // ||A z_k - y|| per outer iteration
  std::vector<double> objectives;  // weighted l1 + TV + fidelity per outer iteration
  int iterations = 0;
  bool converged = false;
};

SplitBregmanResult split_bregman_recon(const SamplingOperator& op, const MeasurementVector& y,
                                       const SplitBregmanConfig& cfg);

class SplitBregmanReconstructor final : public Reconstructor {
 public:
  SplitBregmanReconstructor(const SamplingOperator& op, SplitBregmanConfig cfg) : op_(op.clone()), cfg_(cfg) {}
  SplitBregmanReconstructor(const SplitBregmanReconstructor& other) : op_(other.op_->clone()), cfg_(other.cfg_) {}

  std::string name() const override { return "split-bregman"; }
  const SamplingOperator& op() const override { return *op_; }
  Image reconstruct(const MeasurementVector& y) override;
  std::unique_ptr<Reconstructor> clone() const override {
    return std::make_unique<SplitBregmanReconstructor>(*this);
  }
  const SplitBregmanResult& last_result() const { return last_; }

 private:
  std::unique_ptr<SamplingOperator> op_;
  SplitBregmanConfig cfg_;
  SplitBregmanResult last_;
};

struct BpdnConfig {
  double delta = 0.01;
  int max_iterations = 5000;  // total projected-gradient steps
  int wavelet_levels = 3;
  double gap_tolerance = 1e-4;        // duality gap relative to max(1, f)
  double residual_tolerance = 1e-3;  // relative slack on ||r|| - delta
  void validate() const;
};

struct BpdnResult {
  Image image;
  double residual = 0.0;
  double tau = 0.0;
  int iterations = 0;
  int newton_steps = 0;
  bool converged = false;
};

// min ||z||_1 s.t. ||A Psi^{-1} z - y|| <= delta, by Newton root finding on the
// Pareto curve with spectral projected gradient Lasso solves.
BpdnResult bpdn_recon(const SamplingOperator& op, const MeasurementVector& y, const BpdnConfig& cfg);

class BpdnReconstructor final : public Reconstructor {
 public:
  BpdnReconstructor(const SamplingOperator& op, BpdnConfig cfg) : op_(op.clone()), cfg_(cfg) {}
  BpdnReconstructor(const BpdnReconstructor& other) : op_(other.op_->clone()), cfg_(other.cfg_) {}

  std::string name() const override { return "bpdn"; }
  const SamplingOperator& op() const override { return *op_; }
  Image reconstruct(const MeasurementVector& y) override { return bpdn_recon(*op_, y, cfg_).image; }
  std::unique_ptr<Reconstructor> clone() const override { return std::make_unique<BpdnReconstructor>(*this); }

 private:
  std::unique_ptr<SamplingOperator> op_;
  BpdnConfig cfg_;
};

// Periodic forward differences and their adjoint.
struct Gradient2 {
  ComplexGrid dx;
  ComplexGrid dy;
};
Gradient2 forward_differences(const ComplexGrid& z);
ComplexGrid forward_differences_adjoint(const Gradient2& g);

}  // namespace ulens
