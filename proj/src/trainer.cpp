#include "bevloc/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace bevloc {

void TrainConfig::validate() const {
  if (epochs < 0) throw std::invalid_argument("TrainConfig: negative epoch count");
  if (batch_size != 1) throw std::invalid_argument("TrainConfig: only batch_size 1 is supported");
  if (!(val_fraction > 0.0) || !(val_fraction < 1.0))
    throw std::invalid_argument("TrainConfig: val_fraction must be in (0, 1)");
  if (lr_final > lr_initial) throw std::invalid_argument("TrainConfig: lr_final must not exceed lr_initial");
  if (!(momentum >= 0.0) || momentum >= 1.0) throw std::invalid_argument("TrainConfig: bad momentum");
}

TrainFrame make_train_frame(int64_t frame_id, const Pose2& pose, const PointCloud& cloud,
                            const BevConfig& bev) {
  TrainFrame frame;
  frame.frame_id = frame_id;
  frame.pose = pose;
  frame.image = project_bev(voxel_downsample(cloud, bev.voxel_size), bev);
  frame.map = build_coordinate_map(pose, bev);
  return frame;
}

std::pair<std::vector<int>, std::vector<int>> split_train_val(int frame_count, double val_fraction,
                                                              uint64_t seed) {
  if (frame_count < 2) throw std::invalid_argument("split_train_val: need at least 2 frames");
  const int n_val = std::clamp(static_cast<int>(std::floor(val_fraction * frame_count)), 1,
                               frame_count - 1);
  std::vector<int> indices(frame_count);
  std::iota(indices.begin(), indices.end(), 0);
  Rng rng(seed);
  rng.shuffle(indices);
  std::vector<int> val(indices.begin(), indices.begin() + n_val);
  std::vector<int> train(indices.begin() + n_val, indices.end());
  std::sort(val.begin(), val.end());
  std::sort(train.begin(), train.end());
  return {train, val};
}

double lr_schedule(int epoch, const TrainConfig& cfg) {
  if (epoch < 0 || epoch >= std::max(cfg.epochs, 1))
    throw std::invalid_argument("lr_schedule: epoch out of range");
  const int milestone = std::max<int>(1, static_cast<int>(std::llround(2.0 * cfg.epochs / 3.0)));
  const double lr = cfg.lr_initial * std::pow(cfg.lr_step_factor, epoch / milestone);
  // snap onto the configured floor once the decay reaches it
  return lr <= cfg.lr_final * (1.0 + 1e-9) ? cfg.lr_final : lr;
}

void sgd_step(Eigen::MatrixXd& param, const Eigen::MatrixXd& grad, Eigen::MatrixXd& velocity,
              double lr, double momentum) {
  if (grad.rows() != param.rows() || grad.cols() != param.cols())
    throw std::invalid_argument("sgd_step: gradient shape mismatch");
  velocity = momentum * velocity + grad;
  param -= lr * velocity;
}

Trainer::Trainer(Model& model, std::vector<TrainFrame> frames, const TrainConfig& cfg)
    : model_(model), frames_(std::move(frames)), cfg_(cfg), rng_(cfg.seed) {
  cfg_.validate();
  if (frames_.size() < 2) throw std::invalid_argument("Trainer: need at least 2 frames");
  std::tie(train_indices_, val_indices_) =
      split_train_val(static_cast<int>(frames_.size()), cfg_.val_fraction, cfg_.seed);
  for (const auto& e : model_.params().entries) velocity_.emplace_back(Eigen::MatrixXd::Zero(e.value->rows(), e.value->cols()));
  lambda_initial_ = model_.landmarks();
  // zero-epoch training must hand back the initialization
  state_best_val_ = std::numeric_limits<double>::infinity();
  for (const auto& e : model_.params().entries) state_best_params_.push_back(*e.value);
}

double Trainer::validation_loss() const {
  double sum = 0.0;
  for (int idx : val_indices_) {
    const TrainFrame& frame = frames_[idx];
    const ForwardOutput out = model_.forward(frame.image);
    const TotalLoss tl = total_loss(out.heatmap, out.corr, frame.map, frame.image.count,
                                    model_.landmarks(), cfg_.loss);
    sum += tl.value;
  }
  return sum / static_cast<double>(val_indices_.size());
}

void Trainer::snapshot_best(int epoch, double val_loss) {
  if (val_loss < state_best_val_) {
    state_best_val_ = val_loss;
    state_best_epoch_ = epoch;
    state_best_params_.clear();
    for (const auto& e : model_.params().entries) state_best_params_.push_back(*e.value);
  }
}

TrainReport Trainer::run(std::ostream* log, int until_epoch) {
  const Eigen::Index lambda_entry = [this] {
    for (size_t i = 0; i < model_.params().entries.size(); ++i)
      if (model_.params().entries[i].name == "landmarks") return static_cast<Eigen::Index>(i);
    throw std::logic_error("Trainer: model has no landmark embedding");
  }();

  const int last = until_epoch < 0 ? cfg_.epochs : std::min(cfg_.epochs, until_epoch);
  for (int epoch = next_epoch_; epoch < last && !diverged_; ++epoch) {
    const double lr = lr_schedule(epoch, cfg_);
    std::vector<int> order = train_indices_;
    rng_.shuffle(order);

    double loss_sum = 0.0;
    int steps = 0;
    for (int idx : order) {
      const TrainFrame& frame = frames_[idx];
      model_.zero_grads();

      TotalLoss tl;
      if (cfg_.augment) {
        const AugmentParams params =
            AugmentParams::sample(rng_, cfg_.aug_translation_max, cfg_.aug_rotation_min,
                                  cfg_.aug_rotation_max, cfg_.aug_scale_min, cfg_.aug_scale_max);
        const auto [img, map] = augment(frame.image, frame.map, params);
        const ForwardOutput out = model_.forward_train(img);
        tl = total_loss(out.heatmap, out.corr, map, img.count, model_.landmarks(), cfg_.loss);
        if (std::isfinite(tl.value)) model_.backward(tl.g_heatmap, tl.g_corr);
      } else {
        const ForwardOutput out = model_.forward_train(frame.image);
        tl = total_loss(out.heatmap, out.corr, frame.map, frame.image.count, model_.landmarks(),
                        cfg_.loss);
        if (std::isfinite(tl.value)) model_.backward(tl.g_heatmap, tl.g_corr);
      }
      if (!std::isfinite(tl.value)) {
        diverged_ = true;  // the best snapshot so far stands as last-good
        break;
      }
      if (tl.occupied_patches == 0) empty_loss_steps_++;
      model_.landmarks_grad() += tl.g_lambda;

      auto& entries = model_.params().entries;
      for (size_t i = 0; i < entries.size(); ++i) {
        if (cfg_.freeze_landmarks && static_cast<Eigen::Index>(i) == lambda_entry) continue;
        if (!entries[i].grad->allFinite())
          throw std::runtime_error("Trainer: non-finite gradient in tensor '" + entries[i].name + "'");
        sgd_step(*entries[i].value, *entries[i].grad, velocity_[i], lr, cfg_.momentum);
      }
      loss_sum += tl.value;
      steps++;
    }
    if (diverged_) break;

    EpochLog entry;
    entry.epoch = epoch;
    entry.train_loss = steps > 0 ? loss_sum / steps : 0.0;
    entry.val_loss = validation_loss();
    entry.lr = lr;
    entry.lambda_mean_disp = (model_.landmarks() - lambda_initial_).rowwise().norm().mean();
    epoch_logs_.push_back(entry);
    if (log) {
      (*log) << entry.epoch << ' ' << entry.train_loss << ' ' << entry.val_loss << ' ' << entry.lr
             << ' ' << entry.lambda_mean_disp << '\n';
      log->flush();
    }
    snapshot_best(epoch, entry.val_loss);
    next_epoch_ = epoch + 1;
  }
  return make_report();
}

TrainReport Trainer::make_report() const {
  TrainReport report;
  report.epochs = epoch_logs_;
  report.best_epoch = state_best_epoch_;
  report.best_val = state_best_val_;
  report.landmark_count = static_cast<int>(lambda_initial_.rows());
  report.lambda_initial = lambda_initial_;
  report.diverged = diverged_;
  report.empty_loss_steps = empty_loss_steps_;

  // released landmarks come from the best snapshot
  const auto& entries = model_.params().entries;
  report.lambda_final = lambda_initial_;
  for (size_t i = 0; i < entries.size(); ++i) {
    if (entries[i].name == "landmarks") report.lambda_final = state_best_params_[i];
  }
  const Eigen::VectorXd disp = (report.lambda_final - report.lambda_initial).rowwise().norm();
  report.lambda_mean_displacement = disp.mean();
  report.lambda_max_displacement = disp.maxCoeff();
  report.lambda_moved_fraction =
      (disp.array() > 0.1).count() / static_cast<double>(std::max<Eigen::Index>(disp.size(), 1));
  double min_pair = std::numeric_limits<double>::infinity();
  for (Eigen::Index a = 0; a < report.lambda_final.rows(); ++a)
    for (Eigen::Index b = a + 1; b < report.lambda_final.rows(); ++b)
      min_pair = std::min(min_pair,
                          (report.lambda_final.row(a) - report.lambda_final.row(b)).norm());
  report.lambda_min_pairwise = std::isfinite(min_pair) ? min_pair : 0.0;
  return report;
}

TrainerState Trainer::capture_state() const {
  TrainerState s;
  s.next_epoch = next_epoch_;
  s.velocity = velocity_;
  s.best_val = state_best_val_;
  s.best_epoch = state_best_epoch_;
  s.best_params = state_best_params_;
  s.lambda_initial = lambda_initial_;
  std::ostringstream os;
  os << rng_;
  s.rng_state = os.str();
  s.epoch_logs = epoch_logs_;
  s.empty_loss_steps = empty_loss_steps_;
  return s;
}

void Trainer::restore_state(const TrainerState& s) {
  if (s.velocity.size() != velocity_.size())
    throw std::invalid_argument("Trainer::restore_state: velocity count mismatch");
  next_epoch_ = s.next_epoch;
  velocity_ = s.velocity;
  state_best_val_ = s.best_val;
  state_best_epoch_ = s.best_epoch;
  state_best_params_ = s.best_params;
  lambda_initial_ = s.lambda_initial;
  std::istringstream is(s.rng_state);
  is >> rng_;
  epoch_logs_ = s.epoch_logs;
  empty_loss_steps_ = s.empty_loss_steps;
}

void load_param_snapshot(const std::vector<Eigen::MatrixXd>& snapshot, Model& model) {
  auto& entries = model.params().entries;
  if (snapshot.size() != entries.size())
    throw std::invalid_argument("load_param_snapshot: entry count mismatch");
  for (size_t i = 0; i < entries.size(); ++i) {
    if (snapshot[i].rows() != entries[i].value->rows() || snapshot[i].cols() != entries[i].value->cols())
      throw std::invalid_argument("load_param_snapshot: shape mismatch at " + entries[i].name);
    *entries[i].value = snapshot[i];
  }
}

TrainResult train_model(const std::vector<TrainFrame>& frames, const LandmarkSet& initial_landmarks,
                        const BevConfig& bev, ModelConfig arch, const TrainConfig& cfg,
                        std::ostream* log) {
  arch.landmark_count = initial_landmarks.size();
  Model model(arch);
  model.landmarks() = initial_landmarks.coords;

  Trainer trainer(model, frames, cfg);
  TrainReport report = trainer.run(log);

  TrainResult result{Bundle(bev, arch), std::move(report)};
  load_param_snapshot(trainer.best_params(), result.bundle.model);
  return result;
}

}  // namespace bevloc
