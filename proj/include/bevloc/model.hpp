#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <memory>
#include <vector>

#include "bevloc/bev.hpp"
#include "bevloc/tensor.hpp"

namespace bevloc {

/// Architecture hyperparameters. The network is a small feature-pyramid
/// encoder-decoder over the BEV raster:
///  - encoder: stem conv block, a residual block, then `depth` down blocks
///    (max pool + residual block), channels min(base << level, max);
///  - heatmap branch: 1x1 lateral convs feed a top-down path with bilinear
///    2x upsampling and a conv block per merge, a head at half resolution,
///    and a final bicubic 2x upsample to full resolution;
///  - correspondence branch: reads the deepest encoder feature, max-pools
///    down to the d_p x d_p patch grid, and maps to landmark_count logits
///    through conv blocks (no upsampling).
struct ModelConfig {
  int input_h = 64;
  int input_w = 64;
  int d_p = 4;
  int landmark_count = 1;
  int base_channels = 16;
  int max_channels = 32;
  int depth = 3;
  double leaky_slope = 0.01;
  double ln_eps = 1e-5;
  uint64_t seed = 0;

  int channels_at(int level) const {
    const int64_t c = int64_t(base_channels) << level;
    return static_cast<int>(std::min<int64_t>(c, max_channels));
  }
  int pyramid_channels() const { return 2 * base_channels; }

  void validate() const;

  /// 64 x 64 raster, 4 x 4 patch grid; roughly 1e5 parameters.
  static ModelConfig desk(int landmarks, uint64_t seed = 0);
  /// 512 x 512 raster, 16 x 16 patch grid; several million parameters.
  static ModelConfig full(int landmarks = 600, uint64_t seed = 0);

  bool operator==(const ModelConfig&) const = default;
};

/// The two network outputs.
struct ForwardOutput {
  /// Unbounded detection scores, input_h x input_w, indexed (v, u).
  Eigen::MatrixXd heatmap;
  /// Correspondence logits, (d_p * d_p) x landmark_count; patch rows in
  /// row-major (pv, pu) order.
  Eigen::MatrixXd corr;
};

class Model {
 public:
  explicit Model(const ModelConfig& config);
  Model(Model&& other) noexcept;
  Model& operator=(Model&& other) noexcept;
  ~Model();

  /// Inference: no state is written, safe to call concurrently.
  ForwardOutput forward(const BevImage& image) const;

  /// Training forward: caches activations for the following backward().
  ForwardOutput forward_train(const BevImage& image);

  /// Accumulates parameter gradients from upstream gradients on the two
  /// outputs. Requires a preceding forward_train. The landmark embedding
  /// receives no gradient here; it is only touched by the loss.
  void backward(const Eigen::MatrixXd& g_heatmap, const Eigen::MatrixXd& g_corr);

  void zero_grads();

  ParamRegistry& params() { return registry_; }
  const ParamRegistry& params() const { return registry_; }

  Eigen::MatrixXd& landmarks();
  const Eigen::MatrixXd& landmarks() const;
  Eigen::MatrixXd& landmarks_grad();

  const ModelConfig& config() const { return config_; }
  int64_t param_count() const { return registry_.total_size(); }

 private:
  struct Blocks;
  struct Caches;

  Tensor image_to_tensor(const BevImage& image) const;
  ForwardOutput run_forward(const Tensor& x, Caches* caches) const;

  ModelConfig config_;
  // All parameters live behind blocks_, so the registry's raw pointers
  // survive moves of the Model object itself.
  std::unique_ptr<Blocks> blocks_;
  std::unique_ptr<Caches> caches_;
  ParamRegistry registry_;
};

/// Exact parameter count (including the 2L landmark entries) for a config.
int64_t param_count(const ModelConfig& config);

/// Everything inference needs: the trained network (landmark embedding
/// included) plus the raster geometry its inputs must be built with.
struct Bundle {
  BevConfig bev;
  Model model;

  Bundle(const BevConfig& bev_, const ModelConfig& model_config) : bev(bev_), model(model_config) {}
};

}  // namespace bevloc
