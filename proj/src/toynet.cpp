#include "unstable_lens/toynet.hpp"

#include "unstable_lens/fft.hpp"
#include "unstable_lens/io.hpp"

#include <json.hpp>

#include <bit>
#include <cmath>
#include <numeric>

namespace ulens {

// ---------------------------------------------------------------------------
// Convolution

ConvLayer::ConvLayer(int in, int out)
    : in_channels(in), out_channels(out), kernel(Eigen::MatrixXd::Zero(out, 9 * in)), bias(Eigen::VectorXd::Zero(out)) {
  if (in < 1 || out < 1) throw ArgumentError("convolution channel counts must be positive");
}

void ConvLayer::init_he(Rng& rng) {
  const double std_dev = std::sqrt(2.0 / (9.0 * in_channels));
  for (Eigen::Index j = 0; j < kernel.cols(); ++j)
    for (Eigen::Index i = 0; i < kernel.rows(); ++i) kernel(i, j) = std_dev * rng.normal();
  bias.setZero();
}

Eigen::MatrixXd im2col(const FeatureMap& in, Eigen::Index h, Eigen::Index w) {
  const Eigen::Index channels = in.cols();
  Eigen::MatrixXd columns = Eigen::MatrixXd::Zero(h * w, 9 * channels);
  for (Eigen::Index ci = 0; ci < channels; ++ci) {
    const double* src = in.col(ci).data();
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        double* dst = columns.col(ci * 9 + ky * 3 + kx).data();
        for (Eigen::Index r = 0; r < h; ++r) {
          const Eigen::Index rr = r + ky - 1;
          if (rr < 0 || rr >= h) continue;
          const Eigen::Index c_lo = std::max<Eigen::Index>(0, 1 - kx);
          const Eigen::Index c_hi = std::min<Eigen::Index>(w, w + 1 - kx);
          for (Eigen::Index c = c_lo; c < c_hi; ++c) dst[r * w + c] = src[rr * w + c + kx - 1];
        }
      }
    }
  }
  return columns;
}

FeatureMap col2im(const Eigen::MatrixXd& columns, int channels, Eigen::Index h, Eigen::Index w) {
  FeatureMap out = FeatureMap::Zero(h * w, channels);
  for (Eigen::Index ci = 0; ci < channels; ++ci) {
    double* dst = out.col(ci).data();
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        const double* src = columns.col(ci * 9 + ky * 3 + kx).data();
        for (Eigen::Index r = 0; r < h; ++r) {
          const Eigen::Index rr = r + ky - 1;
          if (rr < 0 || rr >= h) continue;
          const Eigen::Index c_lo = std::max<Eigen::Index>(0, 1 - kx);
          const Eigen::Index c_hi = std::min<Eigen::Index>(w, w + 1 - kx);
          for (Eigen::Index c = c_lo; c < c_hi; ++c) dst[rr * w + c + kx - 1] += src[r * w + c];
        }
      }
    }
  }
  return out;
}

FeatureMap ConvLayer::forward(const FeatureMap& in, Eigen::Index h, Eigen::Index w, Eigen::MatrixXd& columns) const {
  if (in.cols() != in_channels || in.rows() != h * w) throw ShapeError("convolution input has the wrong shape");
  columns = im2col(in, h, w);
  FeatureMap out = columns * kernel.transpose();
  out.rowwise() += bias.transpose();
  return out;
}

FeatureMap ConvLayer::backward(const FeatureMap& grad_out, const Eigen::MatrixXd& columns, Eigen::Index h,
                               Eigen::Index w, Eigen::MatrixXd* grad_kernel, Eigen::VectorXd* grad_bias) const {
  if (grad_kernel) grad_kernel->noalias() += grad_out.transpose() * columns;
  if (grad_bias) *grad_bias += grad_out.colwise().sum().transpose();
  return col2im(grad_out * kernel, in_channels, h, w);
}

FeatureMap to_channels(const Image& z) {
  FeatureMap f(z.size(), 2);
  f.col(0) = z.flat().real();
  f.col(1) = z.flat().imag();
  return f;
}

Image from_channels(const FeatureMap& f, Eigen::Index h, Eigen::Index w) {
  Image z(h, w);
  z.flat().real() = f.col(0);
  z.flat().imag() = f.col(1);
  return z;
}

// ---------------------------------------------------------------------------
// Data consistency

Image dc_apply(const Image& z, const MeasurementVector& y, const DcLayer& layer, const FourierOperator& op) {
  if (!(layer.lambda >= 0.0)) throw ArgumentError("data-consistency lambda must be non-negative");
  if (z.height() != op.image_height() || z.width() != op.image_width()) {
    throw ShapeError("data-consistency input does not match the mask grid");
  }
  if (y.size() != op.measurement_size()) throw ShapeError("measurements do not match the mask");
  Image k = dft2(z);
  Complex* data = k.values().data();
  const auto& idx = op.mask().indices();
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const Complex yi = y.values[static_cast<Eigen::Index>(i)];
    data[idx[i]] = layer.infinite() ? yi : (data[idx[i]] + layer.lambda * yi) / (1.0 + layer.lambda);
  }
  return idft2(k);
}

Image dc_backward(const Image& grad_out, const DcLayer& layer, const FourierOperator& op, Eigen::VectorXcd& grad_y) {
  Image k = dft2(grad_out);
  Complex* data = k.values().data();
  const auto& idx = op.mask().indices();
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const auto j = static_cast<Eigen::Index>(i);
    if (layer.infinite()) {
      grad_y[j] += data[idx[i]];
      data[idx[i]] = 0.0;
    } else {
      grad_y[j] += layer.lambda / (1.0 + layer.lambda) * data[idx[i]];
      data[idx[i]] /= (1.0 + layer.lambda);
    }
  }
  return idft2(k);
}

// ---------------------------------------------------------------------------
// Cascade

ToyNet::ToyNet(FourierOperator op, ToyNetShape shape, Rng& rng) : op_(std::move(op)) {
  if (shape.blocks < 1) throw ArgumentError("toy net needs at least one block");
  if (shape.hidden_layers < 1 || shape.channels < 1) throw ArgumentError("toy net layer plan is empty");
  for (int b = 0; b < shape.blocks; ++b) {
    ToyBlock block;
    block.dc.lambda = shape.dc_lambda;
    int in = 2;
    for (int l = 0; l < shape.hidden_layers; ++l) {
      block.convs.emplace_back(in, shape.channels);
      in = shape.channels;
    }
    block.convs.emplace_back(in, 2);
    for (auto& conv : block.convs) conv.init_he(rng);
    blocks_.push_back(std::move(block));
  }
}

ToyNet::ToyNet(FourierOperator op, std::vector<ToyBlock> blocks) : op_(std::move(op)), blocks_(std::move(blocks)) {
  if (blocks_.empty()) throw ArgumentError("toy net needs at least one block");
  for (const auto& b : blocks_) {
    if (b.convs.empty() || b.convs.front().in_channels != 2 || b.convs.back().out_channels != 2) {
      throw ArgumentError("toy net blocks must map 2 channels to 2 channels");
    }
    for (std::size_t l = 1; l < b.convs.size(); ++l) {
      if (b.convs[l].in_channels != b.convs[l - 1].out_channels) throw ArgumentError("toy net channel plan mismatch");
    }
  }
}

ToyNet ToyNet::rebind(FourierOperator op) const {
  if (op.image_height() != op_.image_height() || op.image_width() != op_.image_width()) {
    throw ShapeError("rebinding the toy net requires the same image grid");
  }
  return ToyNet(std::move(op), blocks_);
}

Image ToyNet::forward(const MeasurementVector& y) {
  if (y.size() != op_.measurement_size()) throw ShapeError("measurements do not match the bound operator");
  const Eigen::Index h = op_.image_height(), w = op_.image_width();
  cache_.assign(blocks_.size(), {});
  Image z = op_.adjoint(y);
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    const auto& block = blocks_[b];
    auto& cache = cache_[b];
    cache.input = z;
    cache.columns.resize(block.convs.size());
    cache.pre_activation.resize(block.convs.size());
    FeatureMap act = to_channels(z);
    for (std::size_t l = 0; l < block.convs.size(); ++l) {
      FeatureMap pre = block.convs[l].forward(act, h, w, cache.columns[l]);
      const bool last = l + 1 == block.convs.size();
      act = last ? pre : FeatureMap(pre.cwiseMax(0.0));
      cache.pre_activation[l] = std::move(pre);
    }
    cache.cnn_output = z + from_channels(act, h, w);
    z = dc_apply(cache.cnn_output, y, block.dc, op_);
  }
  cached_u_ = y.values;
  cached_output_ = z;
  return z;
}

ToyNet::Gradients ToyNet::backward(const Image& grad_out, bool want_params) const {
  if (!cached_u_) throw StaleCacheError("toy net backward called before forward");
  const Eigen::Index h = op_.image_height(), w = op_.image_width();
  Gradients grads;
  grads.input = Eigen::VectorXcd::Zero(op_.measurement_size());
  if (want_params) grads.params = Eigen::VectorXd::Zero(parameter_count());

  // Parameter offsets in the parameters() layout.
  std::vector<std::vector<Eigen::Index>> offsets(blocks_.size());
  Eigen::Index offset = 0;
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    for (const auto& conv : blocks_[b].convs) {
      offsets[b].push_back(offset);
      offset += conv.kernel.size() + conv.bias.size();
    }
  }

  Image grad = grad_out;
  for (std::size_t bi = blocks_.size(); bi-- > 0;) {
    const auto& block = blocks_[bi];
    const auto& cache = cache_[bi];
    // Through DC to the residual sum.
    const Image grad_sum = dc_backward(grad, block.dc, op_, grads.input);
    // Skip connection plus the convolution stack.
    FeatureMap g = to_channels(grad_sum);
    for (std::size_t l = block.convs.size(); l-- > 0;) {
      const auto& conv = block.convs[l];
      const bool last = l + 1 == block.convs.size();
      if (!last) g = g.cwiseProduct((cache.pre_activation[l].array() > 0.0).cast<double>().matrix());
      Eigen::MatrixXd gk;
      Eigen::VectorXd gb;
      if (want_params) {
        gk = Eigen::MatrixXd::Zero(conv.kernel.rows(), conv.kernel.cols());
        gb = Eigen::VectorXd::Zero(conv.bias.size());
      }
      g = conv.backward(g, cache.columns[l], h, w, want_params ? &gk : nullptr, want_params ? &gb : nullptr);
      if (want_params) {
        const Eigen::Index o = offsets[bi][l];
        grads.params.segment(o, gk.size()) = Eigen::Map<const Eigen::VectorXd>(gk.data(), gk.size());
        grads.params.segment(o + gk.size(), gb.size()) = gb;
      }
    }
    grad = grad_sum + from_channels(g, h, w);
  }
  // First layer x0 = A* y.
  grads.input += op_.apply(grad).values;
  return grads;
}

MeasurementVector ToyNet::grad_g(const MeasurementVector& u, const Image& p) const {
  if (!cached_u_ || cached_u_->size() != u.size() || *cached_u_ != u.values) {
    throw StaleCacheError("toy net gradient requested for an input other than the cached forward pass");
  }
  const Image grad_out = 2.0 * (cached_output_ - p);
  return {backward(grad_out, false).input, op_.id()};
}

std::vector<bool> ToyNet::activation_pattern() const {
  if (!cached_u_) throw StaleCacheError("toy net has no cached forward pass");
  std::vector<bool> pattern;
  for (const auto& cache : cache_)
    for (std::size_t l = 0; l + 1 < cache.pre_activation.size(); ++l) {
      const auto& pre = cache.pre_activation[l];
      for (Eigen::Index i = 0; i < pre.size(); ++i) pattern.push_back(pre.data()[i] > 0.0);
    }
  return pattern;
}

Eigen::Index ToyNet::parameter_count() const {
  Eigen::Index n = 0;
  for (const auto& b : blocks_)
    for (const auto& c : b.convs) n += c.kernel.size() + c.bias.size();
  return n;
}

Eigen::VectorXd ToyNet::parameters() const {
  Eigen::VectorXd theta(parameter_count());
  Eigen::Index o = 0;
  for (const auto& b : blocks_) {
    for (const auto& c : b.convs) {
      theta.segment(o, c.kernel.size()) = Eigen::Map<const Eigen::VectorXd>(c.kernel.data(), c.kernel.size());
      o += c.kernel.size();
      theta.segment(o, c.bias.size()) = c.bias;
      o += c.bias.size();
    }
  }
  return theta;
}

void ToyNet::set_parameters(const Eigen::VectorXd& theta) {
  if (theta.size() != parameter_count()) throw ShapeError("parameter vector has the wrong length");
  Eigen::Index o = 0;
  for (auto& b : blocks_) {
    for (auto& c : b.convs) {
      Eigen::Map<Eigen::VectorXd>(c.kernel.data(), c.kernel.size()) = theta.segment(o, c.kernel.size());
      o += c.kernel.size();
      c.bias = theta.segment(o, c.bias.size());
      o += c.bias.size();
    }
  }
  cached_u_.reset();
}

double ToyNet::kernel_norm_squared() const {
  double s = 0.0;
  for (const auto& b : blocks_)
    for (const auto& c : b.convs) s += c.kernel.squaredNorm();
  return s;
}

Eigen::VectorXd ToyNet::kernel_norm_gradient() const {
  Eigen::VectorXd g = Eigen::VectorXd::Zero(parameter_count());
  Eigen::Index o = 0;
  for (const auto& b : blocks_) {
    for (const auto& c : b.convs) {
      g.segment(o, c.kernel.size()) = 2.0 * Eigen::Map<const Eigen::VectorXd>(c.kernel.data(), c.kernel.size());
      o += c.kernel.size() + c.bias.size();
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// Weight files: JSON manifest line, newline, little-endian float64 blobs.

std::string ToyNet::serialize() const {
  nlohmann::ordered_json manifest;
  manifest["format"] = "ulens-toynet";
  manifest["version"] = 1;
  manifest["mask"] = nlohmann::json::parse(op_.mask().to_json());
  std::string blob;
  auto layers = nlohmann::ordered_json::array();
  std::size_t offset = 0;
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    const auto& block = blocks_[b];
    for (std::size_t l = 0; l < block.convs.size(); ++l) {
      const auto& c = block.convs[l];
      nlohmann::ordered_json entry;
      entry["block"] = b;
      entry["index"] = l;
      entry["in"] = c.in_channels;
      entry["out"] = c.out_channels;
      entry["kernel"] = 3;
      entry["dc_lambda"] = block.dc.infinite() ? nlohmann::json("inf") : nlohmann::json(block.dc.lambda);
      const Eigen::Index count = c.kernel.size() + c.bias.size();
      entry["offset"] = offset;
      entry["count"] = count;
      Eigen::VectorXd values(count);
      values.head(c.kernel.size()) = Eigen::Map<const Eigen::VectorXd>(c.kernel.data(), c.kernel.size());
      values.tail(c.bias.size()) = c.bias;
      std::string raw(static_cast<std::size_t>(count) * 8, '\0');
      for (Eigen::Index k = 0; k < count; ++k) {
        auto bits = std::bit_cast<std::uint64_t>(values[k]);
        for (int byte = 0; byte < 8; ++byte) raw[static_cast<std::size_t>(k * 8 + byte)] = static_cast<char>((bits >> (8 * byte)) & 0xff);
      }
      blob += raw;
      offset += raw.size();
      layers.push_back(entry);
    }
  }
  manifest["layers"] = layers;
  return manifest.dump() + "\n" + blob;
}

ToyNet ToyNet::deserialize(const std::string& bytes) {
  const auto newline = bytes.find('\n');
  if (newline == std::string::npos) throw FormatError("weight file has no manifest line");
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(bytes.substr(0, newline));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed weight manifest: ") + e.what());
  }
  if (manifest.value("format", std::string()) != "ulens-toynet" || manifest.value("version", 0) != 1) {
    throw FormatError("not a version-1 toy net weight file");
  }
  const std::string_view blob(bytes.data() + newline + 1, bytes.size() - newline - 1);
  SamplingMask mask = SamplingMask::from_json(manifest.at("mask").dump());
  std::vector<ToyBlock> blocks;
  for (const auto& entry : manifest.at("layers")) {
    const auto b = entry.at("block").get<std::size_t>();
    if (b >= blocks.size()) blocks.resize(b + 1);
    ConvLayer c(entry.at("in").get<int>(), entry.at("out").get<int>());
    const auto offset = entry.at("offset").get<std::size_t>();
    const auto count = entry.at("count").get<Eigen::Index>();
    if (count != c.kernel.size() + c.bias.size()) throw FormatError("weight blob size does not match the layer");
    if (offset + static_cast<std::size_t>(count) * 8 > blob.size()) throw FormatError("truncated weight blob");
    Eigen::VectorXd values(count);
    for (Eigen::Index k = 0; k < count; ++k) {
      std::uint64_t bits = 0;
      for (int byte = 0; byte < 8; ++byte) {
        bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(blob[offset + static_cast<std::size_t>(k * 8 + byte)]))
                << (8 * byte);
      }
      values[k] = std::bit_cast<double>(bits);
    }
    Eigen::Map<Eigen::VectorXd>(c.kernel.data(), c.kernel.size()) = values.head(c.kernel.size());
    c.bias = values.tail(c.bias.size());
    const auto& lam = entry.at("dc_lambda");
    blocks[b].dc.lambda = lam.is_string() ? std::numeric_limits<double>::infinity() : lam.get<double>();
    blocks[b].convs.push_back(std::move(c));
  }
  return ToyNet(FourierOperator(std::move(mask)), std::move(blocks));
}

void ToyNet::save(const std::filesystem::path& path) const { write_text(path, serialize()); }

ToyNet ToyNet::load(const std::filesystem::path& path) { return deserialize(read_text(path)); }

MeasurementVector ToyNetReconstructor::grad_g(const MeasurementVector& u, const Image& p) {
  net_.forward(u);
  return net_.grad_g(u, p);
}

// ---------------------------------------------------------------------------
// Training

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ArgumentError("learning rate must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ArgumentError("momentum must lie in [0, 1)");
  if (epochs < 0 || batch_size < 1) throw ArgumentError("epochs and batch size must be valid");
  if (weight_decay < 0.0) throw ArgumentError("weight decay must be non-negative");
}

double sample_loss(ToyNet& net, const TrainingPair& pair, double weight_decay) {
  const Image out = net.forward(pair.measurements);
  const double mse = (out.values() - pair.image.values()).abs2().mean();
  return mse + weight_decay * net.kernel_norm_squared();
}

TrainResult train(ToyNet& net, const std::vector<TrainingPair>& data, const TrainConfig& cfg,
                  const EpochCallback& on_epoch) {
  cfg.validate();
  if (data.empty()) throw ArgumentError("training set is empty");
  TrainResult result;
  Rng rng(cfg.seed, 0x7a11);
  Eigen::VectorXd theta = net.parameters();
  Eigen::VectorXd velocity = Eigen::VectorXd::Zero(theta.size());
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      const double batch = static_cast<double>(stop - start);
      Eigen::VectorXd grad = cfg.weight_decay * net.kernel_norm_gradient();
      for (std::size_t s = start; s < stop; ++s) {
        const auto& pair = data[order[s]];
        const Image out = net.forward(pair.measurements);
        const Image diff = out - pair.image;
        const double n = static_cast<double>(diff.size());
        epoch_loss += diff.values().abs2().sum() / n + cfg.weight_decay * net.kernel_norm_squared();
        grad += net.backward((2.0 / (n * batch)) * diff, true).params;
      }
      velocity = cfg.momentum * velocity + grad;
      theta -= cfg.learning_rate * velocity;
      net.set_parameters(theta);
    }
    epoch_loss /= static_cast<double>(data.size());
    if (!std::isfinite(epoch_loss)) {
      throw NumericalError("training diverged at epoch " + std::to_string(epoch) + " (loss is not finite)");
    }
    result.epoch_loss.push_back(epoch_loss);
    if (on_epoch) on_epoch(epoch, epoch_loss);
  }
  return result;
}

}  // namespace ulens
