#include "bevloc/tensor.hpp"

#include <cmath>
#include <stdexcept>

namespace bevloc {

namespace {

// Uniform in (-bound, bound), filled row-major for a pinned draw order.
void fill_uniform(Eigen::MatrixXd& m, double bound, Rng& rng) {
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = rng.uniform(-bound, bound);
}

Eigen::MatrixXd im2col3(const Tensor& x) {
  const int h = x.h, w = x.w, cin = x.c;
  Eigen::MatrixXd cols = Eigen::MatrixXd::Zero(int64_t(h) * w, 9 * cin);
  for (int dy = -1; dy <= 1; ++dy) {
    for (int dx = -1; dx <= 1; ++dx) {
      const int o = (dy + 1) * 3 + (dx + 1);
      const int x0 = std::max(0, -dx);
      const int len = w - std::abs(dx);
      for (int y = 0; y < h; ++y) {
        const int ys = y + dy;
        if (ys < 0 || ys >= h) continue;
        cols.block(int64_t(y) * w + x0, int64_t(o) * cin, len, cin) =
            x.m.block(int64_t(ys) * w + x0 + dx, 0, len, cin);
      }
    }
  }
  return cols;
}

void col2im3(const Eigen::MatrixXd& gcols, Tensor& gin) {
  const int h = gin.h, w = gin.w, cin = gin.c;
  for (int dy = -1; dy <= 1; ++dy) {
    for (int dx = -1; dx <= 1; ++dx) {
      const int o = (dy + 1) * 3 + (dx + 1);
      const int x0 = std::max(0, -dx);
      const int len = w - std::abs(dx);
      for (int y = 0; y < h; ++y) {
        const int ys = y + dy;
        if (ys < 0 || ys >= h) continue;
        gin.m.block(int64_t(ys) * w + x0 + dx, 0, len, cin) +=
            gcols.block(int64_t(y) * w + x0, int64_t(o) * cin, len, cin);
      }
    }
  }
}

}  // namespace

Conv2d::Conv2d(std::string name, int in_ch, int out_ch, int ksize, Rng& rng)
    : name_(std::move(name)), in_ch_(in_ch), out_ch_(out_ch), k_(ksize) {
  if (ksize != 1 && ksize != 3) throw std::invalid_argument("Conv2d: ksize must be 1 or 3");
  const int fan_in = ksize * ksize * in_ch;
  const double bound = std::sqrt(1.0 / fan_in);
  w_.resize(fan_in, out_ch);
  fill_uniform(w_, bound, rng);
  b_.resize(out_ch, 1);
  fill_uniform(b_, bound, rng);
  wg_ = Eigen::MatrixXd::Zero(w_.rows(), w_.cols());
  bg_ = Eigen::MatrixXd::Zero(b_.rows(), b_.cols());
}

Tensor Conv2d::forward(const Tensor& x, Cache* cache) const {
  if (x.c != in_ch_) throw std::invalid_argument("Conv2d " + name_ + ": channel mismatch");
  Tensor y(x.h, x.w, out_ch_);
  if (k_ == 1) {
    y.m.noalias() = x.m * w_;
    if (cache) {
      cache->input = x.m;
      cache->h = x.h;
      cache->w = x.w;
    }
  } else {
    Eigen::MatrixXd cols = im2col3(x);
    y.m.noalias() = cols * w_;
    if (cache) {
      cache->cols = std::move(cols);
      cache->h = x.h;
      cache->w = x.w;
    }
  }
  y.m.rowwise() += b_.col(0).transpose();
  return y;
}

Tensor Conv2d::backward(const Tensor& g, const Cache& cache) {
  bg_.col(0).noalias() += g.m.colwise().sum().transpose();
  Tensor gin(cache.h, cache.w, in_ch_);
  if (k_ == 1) {
    wg_.noalias() += cache.input.transpose() * g.m;
    gin.m.noalias() = g.m * w_.transpose();
  } else {
    wg_.noalias() += cache.cols.transpose() * g.m;
    const Eigen::MatrixXd gcols = g.m * w_.transpose();
    col2im3(gcols, gin);
  }
  return gin;
}

void Conv2d::register_params(ParamRegistry& reg) {
  reg.add(name_ + ".w", &w_, &wg_);
  reg.add(name_ + ".b", &b_, &bg_);
}

LayerNorm::LayerNorm(std::string name, int channels, double eps)
    : name_(std::move(name)), channels_(channels), eps_(eps) {
  g_ = Eigen::MatrixXd::Ones(channels, 1);
  b_ = Eigen::MatrixXd::Zero(channels, 1);
  gg_ = Eigen::MatrixXd::Zero(channels, 1);
  bg_ = Eigen::MatrixXd::Zero(channels, 1);
}

Tensor LayerNorm::forward(const Tensor& x, Cache* cache) const {
  if (x.c != channels_) throw std::invalid_argument("LayerNorm " + name_ + ": channel mismatch");
  const Eigen::VectorXd mu = x.m.rowwise().mean();
  Eigen::MatrixXd centered = x.m.colwise() - mu;
  const Eigen::VectorXd var = centered.array().square().rowwise().mean();
  const Eigen::VectorXd inv_std = (var.array() + eps_).rsqrt();
  Eigen::MatrixXd xhat = centered.array().colwise() * inv_std.array();
  Tensor y(x.h, x.w, x.c);
  y.m = (xhat.array().rowwise() * g_.col(0).transpose().array()).rowwise() +
        b_.col(0).transpose().array();
  if (cache) {
    cache->xhat = std::move(xhat);
    cache->inv_std = inv_std;
  }
  return y;
}

Tensor LayerNorm::backward(const Tensor& g, const Cache& cache) {
  gg_.col(0).noalias() += (g.m.array() * cache.xhat.array()).colwise().sum().matrix().transpose();
  bg_.col(0).noalias() += g.m.colwise().sum().transpose();
  const Eigen::MatrixXd gxhat = g.m.array().rowwise() * g_.col(0).transpose().array();
  const Eigen::VectorXd m1 = gxhat.rowwise().mean();
  const Eigen::VectorXd m2 = (gxhat.array() * cache.xhat.array()).rowwise().mean();
  Tensor gin(g.h, g.w, g.c);
  gin.m = (((gxhat.colwise() - m1).array() - cache.xhat.array().colwise() * m2.array()).colwise() *
           cache.inv_std.array())
              .matrix();
  return gin;
}

void LayerNorm::register_params(ParamRegistry& reg) {
  reg.add(name_ + ".g", &g_, &gg_);
  reg.add(name_ + ".b", &b_, &bg_);
}

Tensor LeakyRelu::forward(const Tensor& x, Cache* cache) const {
  Tensor y(x.h, x.w, x.c);
  y.m = x.m.array().max(x.m.array() * slope_);
  if (cache) cache->dmask = (x.m.array() >= 0.0).select(1.0, Eigen::MatrixXd::Constant(x.m.rows(), x.m.cols(), slope_));
  return y;
}

Tensor LeakyRelu::backward(const Tensor& g, const Cache& cache) const {
  Tensor gin(g.h, g.w, g.c);
  gin.m = g.m.array() * cache.dmask.array();
  return gin;
}

Tensor MaxPool2::forward(const Tensor& x, Cache* cache) const {
  if (x.h % 2 != 0 || x.w % 2 != 0) throw std::invalid_argument("MaxPool2: odd input dimensions");
  const int h2 = x.h / 2, w2 = x.w / 2;
  Tensor y(h2, w2, x.c);
  Eigen::MatrixXi argmax(int64_t(h2) * w2, x.c);
  for (int y2 = 0; y2 < h2; ++y2) {
    for (int x2 = 0; x2 < w2; ++x2) {
      const int64_t p2 = int64_t(y2) * w2 + x2;
      const int64_t base = int64_t(2 * y2) * x.w + 2 * x2;
      const int64_t cand[4] = {base, base + 1, base + x.w, base + x.w + 1};
      for (int c = 0; c < x.c; ++c) {
        double best = x.m(cand[0], c);
        int64_t bi = cand[0];
        for (int k = 1; k < 4; ++k) {
          const double v = x.m(cand[k], c);
          if (v > best) {  // ties keep the first (row-major) source
            best = v;
            bi = cand[k];
          }
        }
        y.m(p2, c) = best;
        argmax(p2, c) = static_cast<int>(bi);
      }
    }
  }
  if (cache) {
    cache->argmax = std::move(argmax);
    cache->in_h = x.h;
    cache->in_w = x.w;
    cache->c = x.c;
  }
  return y;
}

Tensor MaxPool2::backward(const Tensor& g, const Cache& cache) const {
  Tensor gin(cache.in_h, cache.in_w, cache.c);
  for (Eigen::Index p2 = 0; p2 < g.m.rows(); ++p2)
    for (int c = 0; c < cache.c; ++c) gin.m(cache.argmax(p2, c), c) += g.m(p2, c);
  return gin;
}

namespace {

double cubic_kernel(double t) {
  // Keys kernel, a = -0.75 (the common image-resize choice).
  const double a = -0.75;
  const double at = std::abs(t);
  if (at <= 1.0) return ((a + 2.0) * at - (a + 3.0)) * at * at + 1.0;
  if (at < 2.0) return (((at - 5.0) * at + 8.0) * at - 4.0) * a;
  return 0.0;
}

Eigen::MatrixXd resize_weights(int n_in, Upsample2x::Mode mode) {
  const int n_out = 2 * n_in;
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(n_out, n_in);
  for (int i = 0; i < n_out; ++i) {
    const double src = (i + 0.5) / 2.0 - 0.5;
    const int f = static_cast<int>(std::floor(src));
    if (mode == Upsample2x::Mode::Bilinear) {
      const double t = src - f;
      w(i, std::clamp(f, 0, n_in - 1)) += 1.0 - t;
      w(i, std::clamp(f + 1, 0, n_in - 1)) += t;
    } else {
      for (int j = -1; j <= 2; ++j) {
        const double weight = cubic_kernel(src - (f + j));
        w(i, std::clamp(f + j, 0, n_in - 1)) += weight;
      }
    }
  }
  return w;
}

}  // namespace

Upsample2x::Upsample2x(Mode mode, int in_h, int in_w) : in_h_(in_h), in_w_(in_w) {
  row_w_ = resize_weights(in_h, mode);
  col_w_ = resize_weights(in_w, mode);
}

Tensor Upsample2x::forward(const Tensor& x) const {
  Tensor y(out_h(), out_w(), x.c);
  for (int c = 0; c < x.c; ++c) {
    y.channel(c) = row_w_ * x.channel(c) * col_w_.transpose();
  }
  return y;
}

Tensor Upsample2x::backward(const Tensor& g) const {
  Tensor gin(in_h_, in_w_, g.c);
  for (int c = 0; c < g.c; ++c) {
    gin.channel(c) = row_w_.transpose() * g.channel(c) * col_w_;
  }
  return gin;
}

ConvBlock::ConvBlock(const std::string& name, int in_ch, int out_ch, int ksize, double slope,
                     double eps, Rng& rng)
    : conv_(name + ".conv", in_ch, out_ch, ksize, rng), ln_(name + ".ln", out_ch, eps), act_(slope) {}

Tensor ConvBlock::forward(const Tensor& x, Cache* cache) const {
  Tensor t = conv_.forward(x, cache ? &cache->conv : nullptr);
  t = ln_.forward(t, cache ? &cache->ln : nullptr);
  return act_.forward(t, cache ? &cache->act : nullptr);
}

Tensor ConvBlock::backward(const Tensor& g, const Cache& cache) {
  Tensor t = act_.backward(g, cache.act);
  t = ln_.backward(t, cache.ln);
  return conv_.backward(t, cache.conv);
}

void ConvBlock::register_params(ParamRegistry& reg) {
  conv_.register_params(reg);
  ln_.register_params(reg);
}

ResBlock::ResBlock(const std::string& name, int in_ch, int out_ch, double slope, double eps, Rng& rng)
    : conv1_(name + ".conv1", in_ch, out_ch, 3, rng),
      ln1_(name + ".ln1", out_ch, eps),
      conv2_(name + ".conv2", out_ch, out_ch, 3, rng),
      ln2_(name + ".ln2", out_ch, eps),
      act_(slope) {
  if (in_ch != out_ch) proj_.emplace(name + ".proj", in_ch, out_ch, 1, rng);
}

Tensor ResBlock::forward(const Tensor& x, Cache* cache) const {
  Tensor t = conv1_.forward(x, cache ? &cache->conv1 : nullptr);
  t = ln1_.forward(t, cache ? &cache->ln1 : nullptr);
  t = act_.forward(t, cache ? &cache->act1 : nullptr);
  t = conv2_.forward(t, cache ? &cache->conv2 : nullptr);
  t = ln2_.forward(t, cache ? &cache->ln2 : nullptr);
  if (proj_) {
    t.m += proj_->forward(x, cache ? &cache->proj : nullptr).m;
  } else {
    t.m += x.m;
  }
  return act_.forward(t, cache ? &cache->act2 : nullptr);
}

Tensor ResBlock::backward(const Tensor& g, const Cache& cache) {
  Tensor gsum = act_.backward(g, cache.act2);
  Tensor t = ln2_.backward(gsum, cache.ln2);
  t = conv2_.backward(t, cache.conv2);
  t = act_.backward(t, cache.act1);
  t = ln1_.backward(t, cache.ln1);
  Tensor gin = conv1_.backward(t, cache.conv1);
  if (proj_) {
    gin.m += proj_->backward(gsum, cache.proj).m;
  } else {
    gin.m += gsum.m;
  }
  return gin;
}

void ResBlock::register_params(ParamRegistry& reg) {
  conv1_.register_params(reg);
  ln1_.register_params(reg);
  conv2_.register_params(reg);
  ln2_.register_params(reg);
  if (proj_) proj_->register_params(reg);
}

}  // namespace bevloc
