#pragma once

#include "unstable_lens/core.hpp"
#include "unstable_lens/operators.hpp"
#include "unstable_lens/reconstructors.hpp"
#include "unstable_lens/rng.hpp"

#include <filesystem>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace ulens {

struct StaleCacheError : std::logic_error {
  using std::logic_error::logic_error;
};

// Feature maps are (pixels x channels); row p = row * width + col.
using FeatureMap = Eigen::MatrixXd;

// 3x3 convolution, stride 1, zero padding that preserves the grid.
// Kernel column index is in_channel * 9 + ky * 3 + kx.
struct ConvLayer {
  int in_channels = 0;
  int out_channels = 0;
  Eigen::MatrixXd kernel;  // out x (9 * in)
  Eigen::VectorXd bias;

  ConvLayer() = default;
  ConvLayer(int in, int out);

  // He-style fan-in initialisation.
  void init_he(Rng& rng);

  // Forward pass; stores the unfolded patches (pixels x 9*in) in `columns`.
  FeatureMap forward(const FeatureMap& in, Eigen::Index h, Eigen::Index w, Eigen::MatrixXd& columns) const;
  // Returns d(loss)/d(input); accumulates kernel and bias gradients when given.
  FeatureMap backward(const FeatureMap& grad_out, const Eigen::MatrixXd& columns, Eigen::Index h, Eigen::Index w,
                      Eigen::MatrixXd* grad_kernel, Eigen::VectorXd* grad_bias) const;
};

Eigen::MatrixXd im2col(const FeatureMap& in, Eigen::Index h, Eigen::Index w);
FeatureMap col2im(const Eigen::MatrixXd& columns, int channels, Eigen::Index h, Eigen::Index w);

// Data-consistency layer F^{-1} g_lambda(F z, y, Omega). A lambda of +inf
// replaces the sampled coefficients by y.
struct DcLayer {
  double lambda = std::numeric_limits<double>::infinity();
  bool infinite() const { return std::isinf(lambda); }
};

Image dc_apply(const Image& z, const MeasurementVector& y, const DcLayer& layer, const FourierOperator& op);

// Reverse pass of dc_apply: given d/d(out), returns d/dz and accumulates d/dy.
Image dc_backward(const Image& grad_out, const DcLayer& layer, const FourierOperator& op, Eigen::VectorXcd& grad_y);

FeatureMap to_channels(const Image& z);
Image from_channels(const FeatureMap& f, Eigen::Index h, Eigen::Index w);

struct ToyBlock {
  std::vector<ConvLayer> convs;  // channel plan 2 -> c -> ... -> c -> 2, ReLU between
  DcLayer dc;
};

struct ToyNetShape {
  int blocks = 3;
  int hidden_layers = 2;  // convolutions followed by ReLU per block
  int channels = 8;
  double dc_lambda = std::numeric_limits<double>::infinity();
};

// Cascade f(y) = DC(CNN_n(... DC(CNN_1(A* y)) ...)) with residual CNN blocks.
class ToyNet {
 public:
  ToyNet(FourierOperator op, ToyNetShape shape, Rng& rng);
  ToyNet(FourierOperator op, std::vector<ToyBlock> blocks);

  const FourierOperator& op() const { return op_; }
  const std::vector<ToyBlock>& blocks() const { return blocks_; }
  std::vector<ToyBlock>& blocks() { return blocks_; }

  // Binds the same weights to a different mask on the same grid.
  ToyNet rebind(FourierOperator op) const;

  Image forward(const MeasurementVector& y);
  // Gradient of u -> ||f(u) - p||^2; requires the cached forward pass for u.
  MeasurementVector grad_g(const MeasurementVector& u, const Image& p) const;

  // Which ReLUs were active in the cached forward pass. The net is piecewise
  // linear in u; finite differences are only meaningful inside one piece.
  std::vector<bool> activation_pattern() const;

  struct Gradients {
    Eigen::VectorXcd input;   // d/du, complex-packed
    Eigen::VectorXd params;   // flattened like parameters()
  };
  // Reverse sweep from d(loss)/d(output) through the cached forward pass.
  Gradients backward(const Image& grad_out, bool want_params) const;

  Eigen::VectorXd parameters() const;
  void set_parameters(const Eigen::VectorXd& theta);
  // Squared l2 norm of the convolution kernels (biases excluded).
  double kernel_norm_squared() const;
  // Gradient of kernel_norm_squared in the parameters() layout.
  Eigen::VectorXd kernel_norm_gradient() const;
  Eigen::Index parameter_count() const;

  void save(const std::filesystem::path& path) const;
  static ToyNet load(const std::filesystem::path& path);
  std::string serialize() const;
  static ToyNet deserialize(const std::string& bytes);

 private:
  struct BlockCache {
    Image input;
    std::vector<Eigen::MatrixXd> columns;
    std::vector<FeatureMap> pre_activation;
    Image cnn_output;
  };

  FourierOperator op_;
  std::vector<ToyBlock> blocks_;
  std::optional<Eigen::VectorXcd> cached_u_;
  std::vector<BlockCache> cache_;
  Image cached_output_;
};

class ToyNetReconstructor final : public Reconstructor {
 public:
  explicit ToyNetReconstructor(ToyNet net) : net_(std::move(net)) {}

  std::string name() const override { return "toy-net"; }
  const SamplingOperator& op() const override { return net_.op(); }
  Image reconstruct(const MeasurementVector& y) override { return net_.forward(y); }
  bool gradient_capable() const override { return true; }
  MeasurementVector grad_g(const MeasurementVector& u, const Image& p) override;
  std::unique_ptr<Reconstructor> clone() const override { return std::make_unique<ToyNetReconstructor>(*this); }

  ToyNet& net() { return net_; }

 private:
  ToyNet net_;
};

struct TrainConfig {
  double learning_rate = 1e-2;
  double momentum = 0.9;
  int epochs = 100;
  double weight_decay = 1e-7;
  int batch_size = 1;
  std::uint64_t seed = 0;
  void validate() const;
};

struct TrainingPair {
  Image image;
  MeasurementVector measurements;
};

struct TrainResult {
  std::vector<double> epoch_loss;  // mean per-sample loss (MSE + decay) over each epoch
};

// Per-sample loss: mean |f(y) - x|^2 over pixels plus weight_decay * ||kernels||^2.
double sample_loss(ToyNet& net, const TrainingPair& pair, double weight_decay);

using EpochCallback = std::function<void(int epoch, double loss)>;

// SGD with momentum: v <- momentum v + grad, theta <- theta - lr v.
TrainResult train(ToyNet& net, const std::vector<TrainingPair>& data, const TrainConfig& cfg,
                  const EpochCallback& on_epoch = {});

}  // namespace ulens
