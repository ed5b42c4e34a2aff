#pragma once

#include <Eigen/Core>
#include <optional>
#include <string>
#include <vector>

#include "bevloc/rng.hpp"

namespace bevloc {

/// Dense feature map. Storage is a (h*w) x c matrix: one row per pixel in
/// row-major (y, x) order, one column per channel. Columns are contiguous,
/// which makes per-channel 2D views cheap and per-pixel channel reductions
/// (layer norm) vectorize well.
struct Tensor {
  int h = 0;
  int w = 0;
  int c = 0;
  Eigen::MatrixXd m;

  Tensor() = default;
  Tensor(int h_, int w_, int c_) : h(h_), w(w_), c(c_), m(Eigen::MatrixXd::Zero(int64_t(h_) * w_, c_)) {}

  double& at(int y, int x, int ch) { return m(int64_t(y) * w + x, ch); }
  double at(int y, int x, int ch) const { return m(int64_t(y) * w + x, ch); }

  using ChannelView = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
  using ChannelViewMut = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
  ChannelView channel(int ch) const { return ChannelView(m.col(ch).data(), h, w); }
  ChannelViewMut channel(int ch) { return ChannelViewMut(m.col(ch).data(), h, w); }
};

/// Named handle onto one parameter tensor and its gradient accumulator.
struct ParamEntry {
  std::string name;
  Eigen::MatrixXd* value = nullptr;
  Eigen::MatrixXd* grad = nullptr;
};

struct ParamRegistry {
  std::vector<ParamEntry> entries;

  void add(const std::string& name, Eigen::MatrixXd* value, Eigen::MatrixXd* grad) {
    entries.push_back({name, value, grad});
  }
  int64_t total_size() const {
    int64_t n = 0;
    for (const auto& e : entries) n += e.value->size();
    return n;
  }
  void zero_grads() {
    for (auto& e : entries) e.grad->setZero();
  }
  const ParamEntry* find(const std::string& name) const {
    for (const auto& e : entries)
      if (e.name == name) return &e;
    return nullptr;
  }
};

/// 2D convolution, stride 1. ksize 3 uses zero padding 1 ("same"), ksize 1
/// has no padding. Weights are stored (ksize*ksize*in_ch) x out_ch with row
/// index o * in_ch + ci for kernel offset o = (dy+1)*ksize + (dx+1).
class Conv2d {
 public:
  struct Cache {
    Eigen::MatrixXd cols;  // im2col of the input (empty for 1x1)
    Eigen::MatrixXd input; // kept for 1x1 convolutions
    int h = 0, w = 0;
  };

  Conv2d(std::string name, int in_ch, int out_ch, int ksize, Rng& rng);

  Tensor forward(const Tensor& x, Cache* cache) const;
  Tensor backward(const Tensor& g, const Cache& cache);
  void register_params(ParamRegistry& reg);

  int in_channels() const { return in_ch_; }
  int out_channels() const { return out_ch_; }

 private:
  std::string name_;
  int in_ch_, out_ch_, k_;
  Eigen::MatrixXd w_, wg_;
  Eigen::MatrixXd b_, bg_;  // out_ch x 1
};

/// Per-pixel layer normalization across channels, learnable scale/offset
/// per channel.
class LayerNorm {
 public:
  struct Cache {
    Eigen::MatrixXd xhat;
    Eigen::VectorXd inv_std;
  };

  LayerNorm(std::string name, int channels, double eps);

  Tensor forward(const Tensor& x, Cache* cache) const;
  Tensor backward(const Tensor& g, const Cache& cache);
  void register_params(ParamRegistry& reg);

 private:
  std::string name_;
  int channels_;
  double eps_;
  Eigen::MatrixXd g_, gg_;
  Eigen::MatrixXd b_, bg_;
};

class LeakyRelu {
 public:
  struct Cache {
    Eigen::MatrixXd dmask;  // 1 where input >= 0, slope elsewhere
  };

  explicit LeakyRelu(double slope) : slope_(slope) {}

  Tensor forward(const Tensor& x, Cache* cache) const;
  Tensor backward(const Tensor& g, const Cache& cache) const;

 private:
  double slope_;
};

/// 2x2 max pooling, stride 2. Input dimensions must be even.
class MaxPool2 {
 public:
  struct Cache {
    Eigen::MatrixXi argmax;  // source pixel row per (pooled pixel, channel)
    int in_h = 0, in_w = 0, c = 0;
  };

  Tensor forward(const Tensor& x, Cache* cache) const;
  Tensor backward(const Tensor& g, const Cache& cache) const;
};

/// Fixed 2x upsampling by separable interpolation (align_corners=false,
/// replicate border). Linear in the input, so the backward pass is the
/// exact transpose.
class Upsample2x {
 public:
  enum class Mode { Bilinear, Bicubic };

  Upsample2x(Mode mode, int in_h, int in_w);

  Tensor forward(const Tensor& x) const;
  Tensor backward(const Tensor& g) const;

  int out_h() const { return 2 * in_h_; }
  int out_w() const { return 2 * in_w_; }

 private:
  int in_h_, in_w_;
  Eigen::MatrixXd row_w_;  // (2*in_h) x in_h
  Eigen::MatrixXd col_w_;  // (2*in_w) x in_w
};

/// Convolution -> layer norm -> LeakyReLU.
class ConvBlock {
 public:
  struct Cache {
    Conv2d::Cache conv;
    LayerNorm::Cache ln;
    LeakyRelu::Cache act;
  };

  ConvBlock(const std::string& name, int in_ch, int out_ch, int ksize, double slope, double eps, Rng& rng);

  Tensor forward(const Tensor& x, Cache* cache) const;
  Tensor backward(const Tensor& g, const Cache& cache);
  void register_params(ParamRegistry& reg);

 private:
  Conv2d conv_;
  LayerNorm ln_;
  LeakyRelu act_;
};

/// Two-convolution residual block with a 1x1 projection on the skip path
/// when the channel count changes. Activation after the sum.
class ResBlock {
 public:
  struct Cache {
    Conv2d::Cache conv1, conv2, proj;
    LayerNorm::Cache ln1, ln2;
    LeakyRelu::Cache act1, act2;
  };

  ResBlock(const std::string& name, int in_ch, int out_ch, double slope, double eps, Rng& rng);

  Tensor forward(const Tensor& x, Cache* cache) const;
  Tensor backward(const Tensor& g, const Cache& cache);
  void register_params(ParamRegistry& reg);

 private:
  Conv2d conv1_;
  LayerNorm ln1_;
  Conv2d conv2_;
  LayerNorm ln2_;
  std::optional<Conv2d> proj_;
  LeakyRelu act_;
};

}  // namespace bevloc
