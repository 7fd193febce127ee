#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

#include "backmix/augment.hpp"
#include "backmix/data.hpp"
#include "backmix/model.hpp"
#include "backmix/objective.hpp"

namespace backmix {

struct TrainConfig {
  int epochs = 100;
  int batch_size = 64;
  double learning_rate = 1e-3;
  std::vector<std::uint64_t> seeds{0, 1, 2};

  void validate() const;
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

/// Adam with bias correction; state is kept per parameter.
class Adam {
 public:
  Adam(std::vector<nn::Param*> params, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  void step();
  double learning_rate() const { return lr_; }

 private:
  std::vector<nn::Param*> params_;
  std::vector<std::vector<float>> m_, v_;
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
};

struct EpochRecord {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_accuracy = 0.0;  // fraction in [0,1]
};

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainResult {
  ResNet model;  // parameters from the best validation epoch
  std::vector<EpochRecord> history;
  int best_epoch = 0;
};

/// 1-based epoch with the highest validation accuracy; ties go to the earlier epoch.
int select_best_epoch(std::span<const double> val_accuracy);

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Trains `model` with per-epoch augmentation from `plan` and the weighted
/// cross-entropy objective; returns the best-validation-accuracy parameters.
/// `seed` drives batch order (augmentation randomness comes from the plan).
TrainResult train(ResNet model, const AugmentationPlan& plan, const WeightingConfig& weighting,
                  const TrainConfig& config, std::uint64_t seed, const std::vector<Frame>& train_frames,
                  const std::vector<Frame>& val_frames, const EpochCallback& on_epoch = {});

struct Prediction {
  int num_classes = 0;
  std::vector<int> labels;
  std::vector<double> logits;  // row-major frames x classes

  std::vector<double> probabilities() const;
};

/// Inference on images only; masks are never consulted.
Prediction predict(const ResNet& model, std::span<const Image> images, int batch_size = 128);
std::vector<Image> images_of(const std::vector<Frame>& frames);

/// Row-wise softmax of a row-major logits matrix.
std::vector<double> softmax_rows(std::span<const double> logits, int num_classes);

void write_history_csv(const std::filesystem::path& path, const std::vector<EpochRecord>& history);

struct Checkpoint {
  ModelSpec spec;
  TrainConfig train;
  std::uint64_t seed = 0;
  int best_epoch = 0;
};

void save_checkpoint(const std::filesystem::path& path, const ResNet& model, const Checkpoint& meta);
/// Restores the model and its metadata; throws std::runtime_error on a malformed file.
std::pair<ResNet, Checkpoint> load_checkpoint(const std::filesystem::path& path);

}  // namespace backmix
