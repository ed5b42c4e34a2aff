#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "bevloc/bev.hpp"
#include "bevloc/landmarks.hpp"
#include "bevloc/loss.hpp"
#include "bevloc/model.hpp"

namespace bevloc {

struct TrainConfig {
  int epochs = 200;
  int batch_size = 1;  // one frame per optimization step
  double lr_initial = 4e-4;
  double lr_final = 4e-5;
  double lr_step_factor = 0.1;
  double momentum = 0.9;
  double val_fraction = 0.03;
  bool freeze_landmarks = false;
  bool augment = true;
  double aug_translation_max = 0.25;
  double aug_rotation_min = 0.0;
  double aug_rotation_max = 2.0 * kPi;
  double aug_scale_min = 0.5;
  double aug_scale_max = 1.5;
  uint64_t seed = 0;
  LossConfig loss;

  void validate() const;
};

/// One reference keyframe with its precomputed rasters.
struct TrainFrame {
  int64_t frame_id = 0;
  Pose2 pose;
  BevImage image;
  CoordinateMap map;
};

TrainFrame make_train_frame(int64_t frame_id, const Pose2& pose, const PointCloud& cloud,
                            const BevConfig& bev);

/// Deterministic shuffled split; at least one validation frame. Returns
/// (train indices, validation indices), each sorted ascending.
std::pair<std::vector<int>, std::vector<int>> split_train_val(int frame_count, double val_fraction,
                                                              uint64_t seed);

/// Step decay: factor applied every round(2*epochs/3) epochs, clamped at
/// lr_final (which the last third of training runs at).
double lr_schedule(int epoch, const TrainConfig& cfg);

/// v <- momentum * v + g; p <- p - lr * v.
void sgd_step(Eigen::MatrixXd& param, const Eigen::MatrixXd& grad, Eigen::MatrixXd& velocity,
              double lr, double momentum);

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double lr = 0.0;
  double lambda_mean_disp = 0.0;
};

struct TrainReport {
  std::vector<EpochLog> epochs;
  int best_epoch = -1;
  double best_val = 0.0;
  int landmark_count = 0;
  Eigen::MatrixXd lambda_initial;  // L x 2
  Eigen::MatrixXd lambda_final;    // released (best-validation) landmarks
  double lambda_mean_displacement = 0.0;
  double lambda_max_displacement = 0.0;
  double lambda_min_pairwise = 0.0;  // diagnostic: collapse indicator
  double lambda_moved_fraction = 0.0;  // fraction displaced by > 0.1 m
  bool diverged = false;
  int empty_loss_steps = 0;
};

/// Mutable optimization state, exposed so checkpoints can capture and
/// restore it exactly (parameters, momentum, rng stream, best snapshot).
struct TrainerState {
  int next_epoch = 0;
  std::vector<Eigen::MatrixXd> velocity;  // per registry entry
  double best_val = 0.0;
  int best_epoch = -1;
  std::vector<Eigen::MatrixXd> best_params;
  Eigen::MatrixXd lambda_initial;
  std::string rng_state;
  std::vector<EpochLog> epoch_logs;
  int empty_loss_steps = 0;
};

/// Joint optimization of the network parameters and the landmark set over
/// the reference frames. Single optimizer owner; deterministic given the
/// seed.
class Trainer {
 public:
  Trainer(Model& model, std::vector<TrainFrame> frames, const TrainConfig& cfg);

  /// Train from the current state up to cfg.epochs (or `until_epoch` when
  /// non-negative, for checkpoint-and-resume workflows). Writes one line
  /// per epoch to `log` if given:
  /// "epoch train_loss val_loss lr lambda_mean_disp".
  TrainReport run(std::ostream* log = nullptr, int until_epoch = -1);

  TrainerState capture_state() const;
  void restore_state(const TrainerState& state);

  const std::vector<Eigen::MatrixXd>& best_params() const { return state_best_params_; }
  Model& model() { return model_; }
  const TrainConfig& config() const { return cfg_; }

 private:
  double validation_loss() const;
  void snapshot_best(int epoch, double val_loss);
  TrainReport make_report() const;

  Model& model_;
  std::vector<TrainFrame> frames_;
  TrainConfig cfg_;
  std::vector<int> train_indices_;
  std::vector<int> val_indices_;
  Rng rng_;
  int next_epoch_ = 0;
  std::vector<Eigen::MatrixXd> velocity_;
  double state_best_val_ = 0.0;
  int state_best_epoch_ = -1;
  std::vector<Eigen::MatrixXd> state_best_params_;
  Eigen::MatrixXd lambda_initial_;
  std::vector<EpochLog> epoch_logs_;
  int empty_loss_steps_ = 0;
  bool diverged_ = false;
};

/// Copy a parameter snapshot (registry order) into a model.
void load_param_snapshot(const std::vector<Eigen::MatrixXd>& snapshot, Model& model);

struct TrainResult {
  Bundle bundle;
  TrainReport report;
};

/// End-to-end training entry point: seeds the model with the initial
/// landmark set, trains, and returns the best-validation bundle.
TrainResult train_model(const std::vector<TrainFrame>& frames, const LandmarkSet& initial_landmarks,
                        const BevConfig& bev, ModelConfig arch, const TrainConfig& cfg,
                        std::ostream* log = nullptr);

}  // namespace bevloc
