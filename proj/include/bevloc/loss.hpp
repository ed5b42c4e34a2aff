#pragma once

#include <Eigen/Core>
#include <vector>

#include "bevloc/bev.hpp"
#include "bevloc/geometry.hpp"

namespace bevloc {

struct LossConfig {
  double alpha = 1.0;
  double beta = 30.0;
  double gamma = 3.0;
  int d_p = 16;
  /// Correspondence term averaged over labeled patches, which keeps beta
  /// comparable across patch-grid sizes. Set false for a plain sum.
  bool corr_mean = true;
  /// Patches without LiDAR points are excluded from the distance term as
  /// well as from the correspondence labels.
  bool dist_skip_empty = true;
};

/// One cell of the d_p x d_p partition of the heatmap and coordinate map.
/// Slices are copies; reassembling all patches reproduces the inputs.
struct PatchView {
  int index = 0;  // row-major: pv * d_p + pu
  int v0 = 0;     // origin pixel of the slice
  int u0 = 0;
  Eigen::MatrixXd heat;  // (H/d_p) x (W/d_p)
  Eigen::MatrixXd gx;
  Eigen::MatrixXd gy;
  bool occupied = false;
};

/// Soft-argmax global coordinate estimate of one patch.
struct PatchEstimate {
  int patch_index = 0;
  Vec2 coords = Vec2::Zero();
};

struct CorrespondenceLabel {
  enum class Reason { Labeled, EmptyPatch, TooFar };
  int patch_index = 0;
  int landmark = -1;  // -1 == IGNORE
  Reason reason = Reason::EmptyPatch;
  double distance = 0.0;  // estimate to nearest landmark (meters)

  bool ignored() const { return landmark < 0; }
};

struct DistanceLoss {
  double value = 0.0;
  Eigen::MatrixXd g_heatmap;  // H x W
  Eigen::MatrixXd g_lambda;   // L x 2, nonzero only at arg-min rows
  bool empty = false;         // no patches contributed
};

struct CorrLoss {
  double value = 0.0;
  Eigen::MatrixXd g_corr;  // (d_p * d_p) x L
  int labeled = 0;
  bool all_ignored = false;
};

struct TotalLoss {
  double value = 0.0;
  double dist_value = 0.0;
  double corr_value = 0.0;
  Eigen::MatrixXd g_heatmap;
  Eigen::MatrixXd g_corr;
  Eigen::MatrixXd g_lambda;
  int occupied_patches = 0;
  int labeled_patches = 0;
};

/// Split heatmap and coordinate grids into d_p x d_p patches, row-major.
/// A patch is occupied iff any of its pixels has a nonzero occupancy count.
std::vector<PatchView> partition_patches(const Eigen::MatrixXd& heatmap, const Eigen::MatrixXd& gx,
                                         const Eigen::MatrixXd& gy, const Eigen::MatrixXi& occupancy,
                                         int d_p);

/// softmax(heat)-weighted mean of the patch's global coordinates.
/// Max-subtracted softmax; the result always lies inside the patch's
/// coordinate bounding box.
PatchEstimate soft_argmax_coords(const PatchView& patch);

/// sum_i log(1 + gamma * min_j ||s_i - Lambda_j||). Gradients flow into
/// the heatmap (through the soft-argmax) and into the arg-min landmark of
/// each patch only. Pass only the patches that should contribute.
DistanceLoss distance_loss(const std::vector<PatchView>& patches, const Eigen::MatrixXd& lambda,
                           double gamma, int image_h, int image_w);

/// Nearest-landmark labels with the two filtering rules: empty patches are
/// ignored, and so are patches whose estimate is farther than half the
/// patch diagonal from every landmark (strict >).
std::vector<CorrespondenceLabel> correspondence_labels(const std::vector<PatchView>& patches,
                                                       const Eigen::MatrixXd& lambda,
                                                       double patch_diagonal_m);

/// Categorical cross-entropy between each labeled patch's logits and its
/// one-hot label; ignored patches contribute nothing.
CorrLoss correspondence_loss(const Eigen::MatrixXd& corr, const std::vector<CorrespondenceLabel>& labels,
                             bool mean_over_labeled);

/// alpha * L_dist + beta * L_corr with the filtering rules applied, plus
/// all gradients. Pure function of its inputs.
TotalLoss total_loss(const Eigen::MatrixXd& heatmap, const Eigen::MatrixXd& corr,
                     const CoordinateMap& map, const Eigen::MatrixXi& occupancy,
                     const Eigen::MatrixXd& lambda, const LossConfig& cfg);

/// Nominal metric patch diagonal for the too-far filter.
double patch_diagonal_m(const BevConfig& bev, int d_p);

}  // namespace bevloc
