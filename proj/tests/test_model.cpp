#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "bevloc/loss.hpp"
#include "bevloc/model.hpp"
#include "bevloc/trainer.hpp"

using namespace bevloc;

namespace {

ModelConfig tiny_config(uint64_t seed = 0) {
  ModelConfig cfg;
  cfg.input_h = cfg.input_w = 16;
  cfg.d_p = 2;
  cfg.landmark_count = 3;
  cfg.base_channels = 4;
  cfg.max_channels = 8;
  cfg.depth = 2;
  cfg.seed = seed;
  return cfg;
}

BevImage zero_image(const BevConfig& bev) {
  BevImage img;
  img.config = bev;
  img.density = Eigen::MatrixXd::Zero(bev.height_px, bev.width_px);
  img.count = Eigen::MatrixXi::Zero(bev.height_px, bev.width_px);
  return img;
}

}  // namespace

TEST_CASE("forward output shapes and finiteness") {
  const ModelConfig cfg = ModelConfig::desk(12, 3);
  Model model(cfg);
  BevConfig bev = BevConfig::desk();
  const ForwardOutput out = model.forward(zero_image(bev));
  CHECK(out.heatmap.rows() == 64);
  CHECK(out.heatmap.cols() == 64);
  CHECK(out.corr.rows() == 16);  // d_p^2 patches
  CHECK(out.corr.cols() == 12);
  CHECK(out.heatmap.allFinite());
  CHECK(out.corr.allFinite());
}

TEST_CASE("forward is deterministic and seed-stable") {
  const ModelConfig cfg = ModelConfig::desk(5, 77);
  Model a(cfg), b(cfg);
  // identical initialization
  for (size_t i = 0; i < a.params().entries.size(); ++i) {
    CHECK(*a.params().entries[i].value == *b.params().entries[i].value);
  }
  BevConfig bev = BevConfig::desk();
  BevImage img = zero_image(bev);
  img.density(10, 20) = 1.0;
  img.count(10, 20) = 3;
  const ForwardOutput oa = a.forward(img);
  const ForwardOutput ob = b.forward(img);
  CHECK(oa.heatmap == ob.heatmap);
  CHECK(oa.corr == ob.corr);
  // different seed, different weights
  Model c(ModelConfig::desk(5, 78));
  CHECK(*c.params().entries[0].value != *a.params().entries[0].value);
}

TEST_CASE("shape mismatch is a configuration error") {
  Model model(ModelConfig::desk(4, 0));
  BevConfig small;
  small.width_px = small.height_px = 32;
  small.pixel_size = 0.25;
  CHECK_THROWS(model.forward(zero_image(small)));
}

TEST_CASE("param_count: frozen desk constant, window for the large preset, linear in L") {
  CHECK(param_count(ModelConfig::desk(30)) == 107771);
  const int64_t large = param_count(ModelConfig::full(600));
  CHECK(large >= 4000000);
  CHECK(large <= 5500000);
  // adding one landmark costs 2 embedding entries plus one head column
  const int64_t base = param_count(ModelConfig::desk(30));
  const int64_t plus = param_count(ModelConfig::desk(31));
  const ModelConfig d = ModelConfig::desk(30);
  CHECK(plus - base == 2 + d.channels_at(d.depth) + 1);
}

TEST_CASE("bad configurations are rejected") {
  ModelConfig cfg = tiny_config();
  cfg.d_p = 5;  // does not divide 16
  CHECK_THROWS(Model{cfg});
  cfg = tiny_config();
  cfg.depth = 5;  // 16 / 32 < 1
  CHECK_THROWS(Model{cfg});
  cfg = tiny_config();
  cfg.d_p = 16;  // deepest feature (4) smaller than the patch grid
  CHECK_THROWS(Model{cfg});
}

TEST_CASE("zero upstream gradients produce zero parameter gradients") {
  const ModelConfig cfg = tiny_config(5);
  Model model(cfg);
  BevConfig bev{16, 16, 0.25, 0.1};
  BevImage img = zero_image(bev);
  img.density(3, 3) = 1.0;
  img.count(3, 3) = 1;
  model.forward_train(img);
  model.zero_grads();
  model.backward(Eigen::MatrixXd::Zero(16, 16), Eigen::MatrixXd::Zero(4, 3));
  for (const auto& e : model.params().entries) {
    CHECK(e.grad->cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("landmark embedding does not affect the forward pass") {
  const ModelConfig cfg = tiny_config(6);
  Model model(cfg);
  BevConfig bev{16, 16, 0.25, 0.1};
  BevImage img = zero_image(bev);
  img.density(8, 4) = 0.7;
  img.count(8, 4) = 2;
  const ForwardOutput before = model.forward(img);
  model.landmarks().setConstant(123.0);
  const ForwardOutput after = model.forward(img);
  CHECK(before.heatmap == after.heatmap);
  CHECK(before.corr == after.corr);
}

TEST_CASE("spot finite-difference check through model and loss") {
  // the acceptance suite sweeps every parameter; this covers a sample
  const ModelConfig cfg = tiny_config(11);
  Model model(cfg);
  BevConfig bev{16, 16, 0.25, 0.1};
  Rng rng(12);
  BevImage img = zero_image(bev);
  for (int i = 0; i < 60; ++i) {
    const int u = static_cast<int>(rng.uniform_int(16));
    const int v = static_cast<int>(rng.uniform_int(16));
    img.count(v, u) += 1;
  }
  img.density = img.count.cast<double>() / img.count.maxCoeff();
  const CoordinateMap map = build_coordinate_map(Pose2(1.0, -0.5, 0.4), bev);
  Eigen::MatrixXd& lambda = model.landmarks();
  lambda << 0.9, -0.6, 1.8, 0.4, -0.2, -1.4;

  LossConfig lc;
  lc.d_p = 2;
  lc.beta = 5.0;

  auto loss_value = [&] {
    const ForwardOutput out = model.forward(img);
    return total_loss(out.heatmap, out.corr, map, img.count, model.landmarks(), lc).value;
  };

  const ForwardOutput out = model.forward_train(img);
  const TotalLoss tl = total_loss(out.heatmap, out.corr, map, img.count, model.landmarks(), lc);
  model.zero_grads();
  model.backward(tl.g_heatmap, tl.g_corr);
  model.landmarks_grad() += tl.g_lambda;

  const double eps = 1e-4;
  int checked = 0;
  for (const auto& entry : model.params().entries) {
    for (Eigen::Index r = 0; r < entry.value->rows() && checked < 400; r += 3) {
      for (Eigen::Index c = 0; c < entry.value->cols() && checked < 400; c += 2) {
        double* slot = &(*entry.value)(r, c);
        const double saved = *slot;
        *slot = saved + eps;
        const double hi = loss_value();
        *slot = saved - eps;
        const double lo = loss_value();
        *slot = saved;
        const double want = (hi - lo) / (2 * eps);
        const double got = (*entry.grad)(r, c);
        const double err = std::abs(got - want);
        CHECK(err <= std::max(1e-3 * std::max(std::abs(got), std::abs(want)), 1e-7));
        checked++;
      }
    }
  }
  CHECK(checked == 400);
}

TEST_CASE("trained single-blob model tracks input translation") {
  // toy detector: one landmark on a blob, translation-only augmentation
  ModelConfig cfg;
  cfg.input_h = cfg.input_w = 32;
  cfg.d_p = 2;
  cfg.landmark_count = 1;
  cfg.base_channels = 8;
  cfg.max_channels = 16;
  cfg.depth = 2;
  cfg.seed = 3;
  Model model(cfg);
  BevConfig bev{32, 32, 0.25, 0.1};

  PointCloud blob;
  for (int dx = -1; dx <= 1; ++dx)
    for (int dy = -1; dy <= 1; ++dy) blob.push_back({1.5 + 0.25 * dx, 0.75 + 0.25 * dy, 0.0});
  const BevImage img = project_bev(blob, bev);
  const CoordinateMap map = build_coordinate_map(Pose2::identity(), bev);
  model.landmarks() << 1.5, 0.75;

  LossConfig lc;
  lc.d_p = 2;
  lc.beta = 0.0;  // single landmark: the correspondence term is trivial

  Rng rng(9);
  std::vector<Eigen::MatrixXd> velocity;
  for (const auto& e : model.params().entries)
    velocity.emplace_back(Eigen::MatrixXd::Zero(e.value->rows(), e.value->cols()));
  for (int step = 0; step < 200; ++step) {
    const AugmentParams params = AugmentParams::sample(rng, 0.25, 0.0, 0.0, 1.0, 1.0);
    const auto [aug_img, aug_map] = augment(img, map, params);
    const ForwardOutput out = model.forward_train(aug_img);
    const TotalLoss tl =
        total_loss(out.heatmap, out.corr, aug_map, aug_img.count, model.landmarks(), lc);
    model.zero_grads();
    model.backward(tl.g_heatmap, tl.g_corr);
    model.landmarks_grad() += tl.g_lambda;
    auto& entries = model.params().entries;
    for (size_t i = 0; i < entries.size(); ++i) {
      if (entries[i].name == "landmarks") continue;  // keep the target fixed
      sgd_step(*entries[i].value, *entries[i].grad, velocity[i], 4e-3, 0.9);
    }
  }

  auto argmax_of = [&](const BevImage& query) {
    const ForwardOutput out = model.forward(query);
    int bu = 0, bv = 0;
    double best = -1e300;
    for (int v = 0; v < 32; ++v)
      for (int u = 0; u < 32; ++u)
        if (out.heatmap(v, u) > best) {
          best = out.heatmap(v, u);
          bu = u;
          bv = v;
        }
    return std::make_pair(bu, bv);
  };

  const auto [u0, v0] = argmax_of(img);
  AugmentParams shift;
  shift.translation_frac_x = 8.0 / 32.0;
  const auto [shifted_img, shifted_map] = augment(img, map, shift);
  const auto [u1, v1] = argmax_of(shifted_img);
  CHECK(std::abs(u1 - u0 - 8) <= 2);
  CHECK(std::abs(v1 - v0) <= 2);
}
