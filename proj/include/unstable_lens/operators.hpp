#pragma once

#include "unstable_lens/core.hpp"
#include "unstable_lens/mask.hpp"

#include <memory>
#include <string>
#include <vector>

namespace ulens {

// A linear sampling map A from images to measurements, with its adjoint.
class SamplingOperator {
 public:
  virtual ~SamplingOperator() = default;

  virtual Eigen::Index image_height() const = 0;
  virtual Eigen::Index image_width() const = 0;
  virtual Eigen::Index measurement_size() const = 0;
  virtual std::string id() const = 0;

  virtual MeasurementVector apply(const Image& x) const = 0;
  virtual Image adjoint(const MeasurementVector& y) const = 0;
  virtual std::unique_ptr<SamplingOperator> clone() const = 0;

  Eigen::Index image_size() const { return image_height() * image_width(); }

 protected:
  void check_image(const Image& x) const;
  void check_measurement(const MeasurementVector& y) const;
};

// A = P_Omega F with F the unitary 2-D DFT.
class FourierOperator final : public SamplingOperator {
 public:
  explicit FourierOperator(SamplingMask mask);

  const SamplingMask& mask() const { return mask_; }

  Eigen::Index image_height() const override { return mask_.height(); }
  Eigen::Index image_width() const override { return mask_.width(); }
  Eigen::Index measurement_size() const override { return mask_.count(); }
  std::string id() const override;

  MeasurementVector apply(const Image& x) const override;
  Image adjoint(const MeasurementVector& y) const override;
  std::unique_ptr<SamplingOperator> clone() const override { return std::make_unique<FourierOperator>(*this); }

  // Restriction of a k-space grid to the mask, and its transpose.
  Eigen::VectorXcd restrict(const Image& kspace) const;
  Image zero_fill(const Eigen::VectorXcd& samples) const;

 private:
  SamplingMask mask_;
};

// Receiver sensitivities S_1..S_c; all maps share dimensions.
class CoilSet {
 public:
  explicit CoilSet(std::vector<Image> sensitivities);

  std::size_t count() const { return maps_.size(); }
  Eigen::Index height() const { return maps_.front().height(); }
  Eigen::Index width() const { return maps_.front().width(); }
  const Image& operator[](std::size_t i) const { return maps_[i]; }
  const std::vector<Image>& maps() const { return maps_; }

 private:
  std::vector<Image> maps_;
};

// Smooth complex Gaussian-bump profiles placed on a ring, normalised so that
// sum_i |S_i|^2 = 1 at every pixel.
CoilSet synthetic_coils(std::size_t count, Eigen::Index height, Eigen::Index width);

// A_pf x = [P F S_1 x; ...; P F S_c x], m' = c |Omega|.
class ParallelFourierOperator final : public SamplingOperator {
 public:
  ParallelFourierOperator(CoilSet coils, SamplingMask mask);

  const CoilSet& coils() const { return coils_; }
  const SamplingMask& mask() const { return single_.mask(); }

  Eigen::Index image_height() const override { return coils_.height(); }
  Eigen::Index image_width() const override { return coils_.width(); }
  Eigen::Index measurement_size() const override {
    return static_cast<Eigen::Index>(coils_.count()) * single_.measurement_size();
  }
  std::string id() const override;

  MeasurementVector apply(const Image& x) const override;
  Image adjoint(const MeasurementVector& y) const override;
  std::unique_ptr<SamplingOperator> clone() const override {
    return std::make_unique<ParallelFourierOperator>(*this);
  }

 private:
  CoilSet coils_;
  FourierOperator single_;
};

// Smallest odd integer >= ceil(n sqrt 2).
Eigen::Index default_detector_count(Eigen::Index n);
// count angles uniformly spaced over [0, 180).
std::vector<double> uniform_angles(std::size_t count);

// Parallel-beam discrete Radon transform. Each ray is sampled at unit steps
// with bilinear interpolation; the adjoint is the exact transpose. The
// sinogram is angle-major: entry (a, k) sits at a * detectors + k.
class RadonOperator final : public SamplingOperator {
 public:
  RadonOperator(Eigen::Index n, std::vector<double> angles_deg, Eigen::Index detectors = 0);

  Eigen::Index side() const { return n_; }
  Eigen::Index detectors() const { return detectors_; }
  const std::vector<double>& angles() const { return angles_; }
  Eigen::Index angle_count() const { return static_cast<Eigen::Index>(angles_.size()); }

  Eigen::Index image_height() const override { return n_; }
  Eigen::Index image_width() const override { return n_; }
  Eigen::Index measurement_size() const override { return angle_count() * detectors_; }
  std::string id() const override;

  MeasurementVector apply(const Image& x) const override;
  Image adjoint(const MeasurementVector& y) const override;
  std::unique_ptr<SamplingOperator> clone() const override { return std::make_unique<RadonOperator>(*this); }

  // Keeps the angles whose rows are sampled by a radial-kth style mask.
  RadonOperator subsample(const SamplingMask& angle_mask) const;
  // Restricts a full sinogram of this operator to the rows kept by angle_mask.
  static MeasurementVector restrict_sinogram(const MeasurementVector& y, const SamplingMask& angle_mask);

  Image to_sinogram(const MeasurementVector& y) const;
  MeasurementVector from_sinogram(const Image& sinogram) const;

  // Detector coordinate (pixel units, centred) of bin k.
  double detector_position(Eigen::Index k) const {
    return static_cast<double>(k) - 0.5 * static_cast<double>(detectors_ - 1);
  }

 private:
  Eigen::Index n_;
  std::vector<double> angles_;
  Eigen::Index detectors_;
};

// Discrete Ram-Lak kernel taps h[0..len) for lags 0, 1, 2, ... with the
// ramp normalised to 1 at Nyquist.
Eigen::VectorXd ram_lak_kernel(Eigen::Index len);

// Filtered back projection: Ram-Lak filtering of each projection by
// zero-padded FFT, then linear-interpolation back projection scaled by
// pi / (2 * angles).
Image fbp(const RadonOperator& radon, const MeasurementVector& sinogram);
// Exact transpose of fbp.
MeasurementVector fbp_adjoint(const RadonOperator& radon, const Image& image);

}  // namespace ulens
