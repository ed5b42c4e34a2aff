#include "bevloc/loss.hpp"

#include <cmath>
#include <stdexcept>

#include "bevloc/landmarks.hpp"

namespace bevloc {

namespace {

// Max-subtracted softmax over a whole patch slice.
Eigen::MatrixXd patch_softmax(const Eigen::MatrixXd& heat) {
  const double m = heat.maxCoeff();
  Eigen::MatrixXd p = (heat.array() - m).exp();
  p /= p.sum();
  return p;
}

}  // namespace

double patch_diagonal_m(const BevConfig& bev, int d_p) {
  const double l_patch = bev.width_px * bev.pixel_size / d_p;
  return l_patch * std::sqrt(2.0);
}

std::vector<PatchView> partition_patches(const Eigen::MatrixXd& heatmap, const Eigen::MatrixXd& gx,
                                         const Eigen::MatrixXd& gy, const Eigen::MatrixXi& occupancy,
                                         int d_p) {
  const int h = static_cast<int>(heatmap.rows());
  const int w = static_cast<int>(heatmap.cols());
  if (d_p <= 0 || h % d_p != 0 || w % d_p != 0)
    throw std::invalid_argument("partition_patches: d_p must divide the raster dimensions");
  if (gx.rows() != h || gx.cols() != w || gy.rows() != h || gy.cols() != w ||
      occupancy.rows() != h || occupancy.cols() != w)
    throw std::invalid_argument("partition_patches: shape mismatch");

  const int ph = h / d_p, pw = w / d_p;
  std::vector<PatchView> patches;
  patches.reserve(static_cast<size_t>(d_p) * d_p);
  for (int pv = 0; pv < d_p; ++pv) {
    for (int pu = 0; pu < d_p; ++pu) {
      PatchView patch;
      patch.index = pv * d_p + pu;
      patch.v0 = pv * ph;
      patch.u0 = pu * pw;
      patch.heat = heatmap.block(patch.v0, patch.u0, ph, pw);
      patch.gx = gx.block(patch.v0, patch.u0, ph, pw);
      patch.gy = gy.block(patch.v0, patch.u0, ph, pw);
      patch.occupied = (occupancy.block(patch.v0, patch.u0, ph, pw).array() > 0).any();
      patches.push_back(std::move(patch));
    }
  }
  return patches;
}

PatchEstimate soft_argmax_coords(const PatchView& patch) {
  const Eigen::MatrixXd p = patch_softmax(patch.heat);
  PatchEstimate est;
  est.patch_index = patch.index;
  est.coords.x() = (p.array() * patch.gx.array()).sum();
  est.coords.y() = (p.array() * patch.gy.array()).sum();
  return est;
}

DistanceLoss distance_loss(const std::vector<PatchView>& patches, const Eigen::MatrixXd& lambda,
                           double gamma, int image_h, int image_w) {
  DistanceLoss out;
  out.g_heatmap = Eigen::MatrixXd::Zero(image_h, image_w);
  out.g_lambda = Eigen::MatrixXd::Zero(lambda.rows(), 2);
  if (patches.empty()) {
    out.empty = true;
    return out;
  }
  for (const PatchView& patch : patches) {
    const Eigen::MatrixXd p = patch_softmax(patch.heat);
    Vec2 s;
    s.x() = (p.array() * patch.gx.array()).sum();
    s.y() = (p.array() * patch.gy.array()).sum();
    const auto [j, d] = nearest_point(lambda, s);
    out.value += std::log1p(gamma * d);
    if (d < 1e-12) continue;  // flat spot of the distance; subgradient 0
    const Vec2 gs = (gamma / (1.0 + gamma * d) / d) * (s - lambda.row(j).transpose());
    out.g_lambda.row(j) -= gs.transpose();
    // chain through the soft-argmax: d s / d h_uv = p_uv * (y_uv - s)
    out.g_heatmap.block(patch.v0, patch.u0, patch.heat.rows(), patch.heat.cols()) +=
        (p.array() * ((patch.gx.array() - s.x()) * gs.x() + (patch.gy.array() - s.y()) * gs.y()))
            .matrix();
  }
  return out;
}

std::vector<CorrespondenceLabel> correspondence_labels(const std::vector<PatchView>& patches,
                                                       const Eigen::MatrixXd& lambda,
                                                       double patch_diagonal_m) {
  if (lambda.rows() < 1) throw std::invalid_argument("correspondence_labels: empty landmark set");
  std::vector<CorrespondenceLabel> labels;
  labels.reserve(patches.size());
  for (const PatchView& patch : patches) {
    CorrespondenceLabel label;
    label.patch_index = patch.index;
    if (!patch.occupied) {
      label.reason = CorrespondenceLabel::Reason::EmptyPatch;
      labels.push_back(label);
      continue;
    }
    const PatchEstimate est = soft_argmax_coords(patch);
    const auto [j, d] = nearest_point(lambda, est.coords);
    label.distance = d;
    if (d > patch_diagonal_m / 2.0) {  // strict: the exact boundary stays labeled
      label.reason = CorrespondenceLabel::Reason::TooFar;
    } else {
      label.reason = CorrespondenceLabel::Reason::Labeled;
      label.landmark = j;
    }
    labels.push_back(label);
  }
  return labels;
}

CorrLoss correspondence_loss(const Eigen::MatrixXd& corr, const std::vector<CorrespondenceLabel>& labels,
                             bool mean_over_labeled) {
  CorrLoss out;
  out.g_corr = Eigen::MatrixXd::Zero(corr.rows(), corr.cols());
  for (const CorrespondenceLabel& label : labels) {
    if (label.ignored()) continue;
    if (label.patch_index < 0 || label.patch_index >= corr.rows())
      throw std::invalid_argument("correspondence_loss: label patch index out of range");
    const auto logits = corr.row(label.patch_index);
    const double m = logits.maxCoeff();
    const Eigen::ArrayXd shifted = logits.transpose().array() - m;
    const double lse = m + std::log(shifted.exp().sum());
    out.value += lse - logits(label.landmark);
    Eigen::ArrayXd p = (logits.transpose().array() - lse).exp();
    p(label.landmark) -= 1.0;
    out.g_corr.row(label.patch_index) = p.transpose();
    out.labeled++;
  }
  if (out.labeled == 0) {
    out.all_ignored = true;
    return out;
  }
  if (mean_over_labeled) {
    out.value /= out.labeled;
    out.g_corr /= out.labeled;
  }
  return out;
}

TotalLoss total_loss(const Eigen::MatrixXd& heatmap, const Eigen::MatrixXd& corr,
                     const CoordinateMap& map, const Eigen::MatrixXi& occupancy,
                     const Eigen::MatrixXd& lambda, const LossConfig& cfg) {
  const int h = static_cast<int>(heatmap.rows());
  const int w = static_cast<int>(heatmap.cols());
  if (corr.rows() != int64_t(cfg.d_p) * cfg.d_p || corr.cols() != lambda.rows())
    throw std::invalid_argument("total_loss: correspondence shape mismatch");
  const auto patches = partition_patches(heatmap, map.gx, map.gy, occupancy, cfg.d_p);

  std::vector<PatchView> dist_patches;
  dist_patches.reserve(patches.size());
  for (const PatchView& patch : patches) {
    if (patch.occupied || !cfg.dist_skip_empty) dist_patches.push_back(patch);
  }
  const DistanceLoss dist = distance_loss(dist_patches, lambda, cfg.gamma, h, w);
  const auto labels = correspondence_labels(patches, lambda, patch_diagonal_m(map.config, cfg.d_p));
  const CorrLoss corr_loss = correspondence_loss(corr, labels, cfg.corr_mean);

  TotalLoss out;
  out.dist_value = dist.value;
  out.corr_value = corr_loss.value;
  out.value = cfg.alpha * dist.value + cfg.beta * corr_loss.value;
  out.g_heatmap = cfg.alpha * dist.g_heatmap;
  out.g_corr = cfg.beta * corr_loss.g_corr;
  out.g_lambda = cfg.alpha * dist.g_lambda;
  for (const PatchView& patch : patches) out.occupied_patches += patch.occupied ? 1 : 0;
  out.labeled_patches = corr_loss.labeled;
  return out;
}

}  // namespace bevloc
