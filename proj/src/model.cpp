#include "bevloc/model.hpp"

#include <stdexcept>

namespace bevloc {

namespace {

bool is_pow2(int v) { return v > 0 && (v & (v - 1)) == 0; }

}  // namespace

void ModelConfig::validate() const {
  if (input_h <= 0 || input_w <= 0) throw std::invalid_argument("ModelConfig: non-positive input size");
  if (landmark_count < 1) throw std::invalid_argument("ModelConfig: landmark_count must be >= 1");
  if (base_channels < 1 || max_channels < base_channels)
    throw std::invalid_argument("ModelConfig: bad channel widths");
  if (depth < 1) throw std::invalid_argument("ModelConfig: depth must be >= 1");
  if (d_p < 1 || input_h % d_p != 0 || input_w % d_p != 0)
    throw std::invalid_argument("ModelConfig: d_p must divide the input dimensions");
  const int stride = 1 << depth;
  if (input_h % stride != 0 || input_w % stride != 0)
    throw std::invalid_argument("ModelConfig: 2^depth must divide the input dimensions");
  const int deep_h = input_h / stride, deep_w = input_w / stride;
  if (deep_h < d_p || deep_w < d_p || deep_h / d_p != deep_w / d_p || !is_pow2(deep_h / d_p) ||
      deep_h % d_p != 0 || deep_w % d_p != 0)
    throw std::invalid_argument("ModelConfig: deepest feature cannot be pooled to the d_p grid");
}

ModelConfig ModelConfig::desk(int landmarks, uint64_t seed) {
  ModelConfig c;
  c.input_h = c.input_w = 64;
  c.d_p = 4;
  c.landmark_count = landmarks;
  c.base_channels = 16;
  c.max_channels = 32;
  c.depth = 3;
  c.seed = seed;
  return c;
}

ModelConfig ModelConfig::full(int landmarks, uint64_t seed) {
  ModelConfig c;
  c.input_h = c.input_w = 512;
  c.d_p = 16;
  c.landmark_count = landmarks;
  c.base_channels = 32;
  c.max_channels = 256;
  c.depth = 5;
  c.seed = seed;
  return c;
}

struct Model::Blocks {
  ConvBlock stem;
  ResBlock enc0;
  std::vector<MaxPool2> pools;
  std::vector<ResBlock> enc;
  std::vector<Conv2d> laterals;      // levels depth .. 1 (deepest first)
  std::vector<Upsample2x> ups;       // bilinear, one per merge level
  std::vector<ConvBlock> merges;     // levels depth-1 .. 1
  ConvBlock head_block;
  Conv2d head_out;
  Upsample2x head_up;                // bicubic, half -> full resolution
  std::vector<MaxPool2> corr_pools;
  std::vector<ConvBlock> corr_pool_blocks;
  ConvBlock corr_block;
  Conv2d corr_out;
  Eigen::MatrixXd landmarks;       // landmark_count x 2
  Eigen::MatrixXd landmarks_grad;

  Blocks(const ModelConfig& cfg, Rng& rng)
      : stem("stem", 1, cfg.channels_at(0), 3, cfg.leaky_slope, cfg.ln_eps, rng),
        enc0("enc0", cfg.channels_at(0), cfg.channels_at(0), cfg.leaky_slope, cfg.ln_eps, rng),
        pools(),
        enc(),
        laterals(),
        ups(),
        merges(),
        head_block("head", cfg.pyramid_channels(), cfg.pyramid_channels(), 3, cfg.leaky_slope, cfg.ln_eps, rng),
        head_out("head_out", cfg.pyramid_channels(), 1, 3, rng),
        head_up(Upsample2x::Mode::Bicubic, cfg.input_h / 2, cfg.input_w / 2),
        corr_block("corr", cfg.channels_at(cfg.depth), cfg.channels_at(cfg.depth), 3, cfg.leaky_slope, cfg.ln_eps, rng),
        corr_out("corr_out", cfg.channels_at(cfg.depth), cfg.landmark_count, 1, rng) {
    for (int k = 1; k <= cfg.depth; ++k) {
      pools.emplace_back();
      enc.emplace_back("down" + std::to_string(k), cfg.channels_at(k - 1), cfg.channels_at(k),
                       cfg.leaky_slope, cfg.ln_eps, rng);
    }
    const int p = cfg.pyramid_channels();
    for (int k = cfg.depth; k >= 1; --k) {
      laterals.emplace_back("lat" + std::to_string(k), cfg.channels_at(k), p, 1, rng);
    }
    for (int k = cfg.depth - 1; k >= 1; --k) {
      const int h = cfg.input_h >> (k + 1), w = cfg.input_w >> (k + 1);
      ups.emplace_back(Upsample2x::Mode::Bilinear, h, w);
      merges.emplace_back("merge" + std::to_string(k), p, p, 3, cfg.leaky_slope, cfg.ln_eps, rng);
    }
    int res = cfg.input_h >> cfg.depth;
    int idx = 0;
    while (res > cfg.d_p) {
      corr_pools.emplace_back();
      corr_pool_blocks.emplace_back("corr_down" + std::to_string(idx), cfg.channels_at(cfg.depth),
                                    cfg.channels_at(cfg.depth), 3, cfg.leaky_slope, cfg.ln_eps, rng);
      res /= 2;
      ++idx;
    }
  }
};

struct Model::Caches {
  ConvBlock::Cache stem;
  ResBlock::Cache enc0;
  std::vector<MaxPool2::Cache> pools;
  std::vector<ResBlock::Cache> enc;
  std::vector<Conv2d::Cache> laterals;
  std::vector<ConvBlock::Cache> merges;
  ConvBlock::Cache head_block;
  Conv2d::Cache head_out;
  std::vector<MaxPool2::Cache> corr_pools;
  std::vector<ConvBlock::Cache> corr_pool_blocks;
  ConvBlock::Cache corr_block;
  Conv2d::Cache corr_out;
  // encoder outputs per level, needed to route gradients through laterals
  std::vector<Tensor> enc_out;
  bool valid = false;

  explicit Caches(const ModelConfig& cfg)
      : pools(cfg.depth),
        enc(cfg.depth),
        laterals(cfg.depth),
        merges(cfg.depth >= 1 ? cfg.depth - 1 : 0) {}
};

Model::Model(const ModelConfig& config) : config_(config) {
  config_.validate();
  Rng rng(config_.seed);
  blocks_ = std::make_unique<Blocks>(config_, rng);
  caches_ = std::make_unique<Caches>(config_);
  caches_->corr_pools.resize(blocks_->corr_pools.size());
  caches_->corr_pool_blocks.resize(blocks_->corr_pool_blocks.size());

  // Landmarks live inside the parameter set but are initialized by the
  // trainer from the landmark module; zero until then.
  blocks_->landmarks = Eigen::MatrixXd::Zero(config_.landmark_count, 2);
  blocks_->landmarks_grad = Eigen::MatrixXd::Zero(config_.landmark_count, 2);

  blocks_->stem.register_params(registry_);
  blocks_->enc0.register_params(registry_);
  for (auto& b : blocks_->enc) b.register_params(registry_);
  for (auto& l : blocks_->laterals) l.register_params(registry_);
  for (auto& m : blocks_->merges) m.register_params(registry_);
  blocks_->head_block.register_params(registry_);
  blocks_->head_out.register_params(registry_);
  for (auto& b : blocks_->corr_pool_blocks) b.register_params(registry_);
  blocks_->corr_block.register_params(registry_);
  blocks_->corr_out.register_params(registry_);
  registry_.add("landmarks", &blocks_->landmarks, &blocks_->landmarks_grad);
}

Model::Model(Model&& other) noexcept = default;
Model& Model::operator=(Model&& other) noexcept = default;
Model::~Model() = default;

Eigen::MatrixXd& Model::landmarks() { return blocks_->landmarks; }
const Eigen::MatrixXd& Model::landmarks() const { return blocks_->landmarks; }
Eigen::MatrixXd& Model::landmarks_grad() { return blocks_->landmarks_grad; }

Tensor Model::image_to_tensor(const BevImage& image) const {
  if (image.density.rows() != config_.input_h || image.density.cols() != config_.input_w)
    throw std::invalid_argument("Model: image dimensions do not match the configuration");
  Tensor x(config_.input_h, config_.input_w, 1);
  for (int v = 0; v < config_.input_h; ++v)
    x.m.block(int64_t(v) * config_.input_w, 0, config_.input_w, 1) = image.density.row(v).transpose();
  return x;
}

ForwardOutput Model::run_forward(const Tensor& x, Caches* cc) const {
  const Blocks& bb = *blocks_;
  const int depth = config_.depth;

  std::vector<Tensor> enc_out(depth + 1);
  enc_out[0] = bb.enc0.forward(bb.stem.forward(x, cc ? &cc->stem : nullptr), cc ? &cc->enc0 : nullptr);
  for (int k = 1; k <= depth; ++k) {
    Tensor pooled = bb.pools[k - 1].forward(enc_out[k - 1], cc ? &cc->pools[k - 1] : nullptr);
    enc_out[k] = bb.enc[k - 1].forward(pooled, cc ? &cc->enc[k - 1] : nullptr);
  }

  // top-down heatmap path
  Tensor p = bb.laterals[0].forward(enc_out[depth], cc ? &cc->laterals[0] : nullptr);
  for (int i = 0; i < depth - 1; ++i) {
    Tensor up = bb.ups[i].forward(p);
    Tensor lat = bb.laterals[i + 1].forward(enc_out[depth - 1 - i], cc ? &cc->laterals[i + 1] : nullptr);
    up.m += lat.m;
    p = bb.merges[i].forward(up, cc ? &cc->merges[i] : nullptr);
  }
  Tensor hm_half = bb.head_out.forward(bb.head_block.forward(p, cc ? &cc->head_block : nullptr),
                                       cc ? &cc->head_out : nullptr);
  Tensor hm = bb.head_up.forward(hm_half);

  // correspondence path
  Tensor q = enc_out[depth];
  for (size_t i = 0; i < bb.corr_pools.size(); ++i) {
    q = bb.corr_pools[i].forward(q, cc ? &cc->corr_pools[i] : nullptr);
    q = bb.corr_pool_blocks[i].forward(q, cc ? &cc->corr_pool_blocks[i] : nullptr);
  }
  q = bb.corr_block.forward(q, cc ? &cc->corr_block : nullptr);
  Tensor corr = bb.corr_out.forward(q, cc ? &cc->corr_out : nullptr);

  if (cc) {
    cc->enc_out = std::move(enc_out);
    cc->valid = true;
  }

  ForwardOutput out;
  out.heatmap.resize(config_.input_h, config_.input_w);
  for (int v = 0; v < config_.input_h; ++v)
    out.heatmap.row(v) = hm.m.block(int64_t(v) * config_.input_w, 0, config_.input_w, 1).transpose();
  out.corr = corr.m;
  return out;
}

ForwardOutput Model::forward(const BevImage& image) const {
  return run_forward(image_to_tensor(image), nullptr);
}

ForwardOutput Model::forward_train(const BevImage& image) {
  return run_forward(image_to_tensor(image), caches_.get());
}

void Model::backward(const Eigen::MatrixXd& g_heatmap, const Eigen::MatrixXd& g_corr) {
  if (!caches_->valid) throw std::logic_error("Model::backward without forward_train");
  Blocks& bb = *blocks_;
  Caches& cc = *caches_;
  const int depth = config_.depth;
  const int dgrid = config_.d_p;

  if (g_heatmap.rows() != config_.input_h || g_heatmap.cols() != config_.input_w ||
      g_corr.rows() != int64_t(dgrid) * dgrid || g_corr.cols() != config_.landmark_count)
    throw std::invalid_argument("Model::backward: upstream gradient shape mismatch");

  // gradients arriving at each encoder level
  std::vector<Tensor> g_enc(depth + 1);
  for (int k = 0; k <= depth; ++k) {
    const Tensor& ref = cc.enc_out[k];
    g_enc[k] = Tensor(ref.h, ref.w, ref.c);
  }

  // correspondence branch
  Tensor gq(dgrid, dgrid, config_.landmark_count);
  gq.m = g_corr;
  gq = bb.corr_block.backward(bb.corr_out.backward(gq, cc.corr_out), cc.corr_block);
  for (int i = static_cast<int>(bb.corr_pools.size()) - 1; i >= 0; --i) {
    gq = bb.corr_pool_blocks[i].backward(gq, cc.corr_pool_blocks[i]);
    gq = bb.corr_pools[i].backward(gq, cc.corr_pools[i]);
  }
  g_enc[depth].m += gq.m;

  // heatmap branch
  Tensor ghm(config_.input_h, config_.input_w, 1);
  for (int v = 0; v < config_.input_h; ++v)
    ghm.m.block(int64_t(v) * config_.input_w, 0, config_.input_w, 1) = g_heatmap.row(v).transpose();
  Tensor gp = bb.head_block.backward(bb.head_out.backward(bb.head_up.backward(ghm), cc.head_out),
                                     cc.head_block);
  for (int i = depth - 2; i >= 0; --i) {
    gp = bb.merges[i].backward(gp, cc.merges[i]);
    // the merge input was up(p_prev) + lateral(enc)
    Tensor glat = bb.laterals[i + 1].backward(gp, cc.laterals[i + 1]);
    g_enc[depth - 1 - i].m += glat.m;
    gp = bb.ups[i].backward(gp);
  }
  Tensor gdeep = bb.laterals[0].backward(gp, cc.laterals[0]);
  g_enc[depth].m += gdeep.m;

  // encoder, deepest level first
  for (int k = depth; k >= 1; --k) {
    Tensor g = bb.enc[k - 1].backward(g_enc[k], cc.enc[k - 1]);
    g = bb.pools[k - 1].backward(g, cc.pools[k - 1]);
    g_enc[k - 1].m += g.m;
  }
  Tensor gx = bb.stem.backward(bb.enc0.backward(g_enc[0], cc.enc0), cc.stem);
  (void)gx;  // gradient w.r.t. the input raster is not used
}

void Model::zero_grads() { registry_.zero_grads(); }

int64_t param_count(const ModelConfig& config) {
  Model model(config);
  return model.param_count();
}

}  // namespace bevloc
