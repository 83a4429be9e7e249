#ifndef MLVC_TRAINER_HPP
#define MLVC_TRAINER_HPP

#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "mlvc/metrics.hpp"
#include "mlvc/tensor.hpp"

namespace mlvc {

class TrainError : public std::runtime_error {
 public:
  explicit TrainError(const std::string& msg) : std::runtime_error(msg) {}
};

enum class SchedulerKind { step, plateau };
enum class Finetune { full, partial };
enum class OptimizerKind { sgd, adam };

struct SchedulerConfig {
  SchedulerKind kind = SchedulerKind::step;
  // step
  int64_t step_size = 20;
  double gamma = 0.1;
  // plateau, mode=min
  double factor = 0.1;
  int64_t patience = 10;
};

struct TrainConfig {
  double lr = 0.001;
  double momentum = 0.9;
  int64_t batch_size = 16;
  int64_t epochs = 10;
  SchedulerConfig scheduler;
  Finetune finetune = Finetune::full;
  OptimizerKind optimizer = OptimizerKind::sgd;
  double weight_decay = 0.0;  // only meaningful for the adam ablation preset
  uint64_t seed = 0;
  double binarize_threshold = 0.5;

  void validate() const;
};

// lr0 * gamma^floor(epoch / step_size)
double step_lr(int64_t epoch, double lr0, int64_t step_size, double gamma);

// Reduce-on-plateau, mode=min: after `patience` consecutive epochs without an
// improvement beyond 1e-8, the rate is multiplied by `factor`. The bad-epoch
// counter resets on improvement and on reduction.
class PlateauScheduler {
 public:
  PlateauScheduler(double lr0, double factor, int64_t patience)
      : lr_(lr0), factor_(factor), patience_(patience) {}

  // feed one epoch's validation loss; returns the rate for the next epoch
  double observe(double val_loss);
  double lr() const { return lr_; }

 private:
  double lr_;
  double factor_;
  int64_t patience_;
  double best_ = std::numeric_limits<double>::infinity();
  int64_t bad_epochs_ = 0;
  static constexpr double kThreshold = 1e-8;
};

// v <- momentum * v + g ; w <- w - lr * v  (no dampening, no Nesterov)
void sgd_update(float* w, const float* g, float* v, int64_t n, float lr, float momentum);

class Optimizer {
 public:
  Optimizer(std::vector<Tensor<float>> params, const TrainConfig& cfg);

  void set_lr(double lr) { lr_ = lr; }
  double lr() const { return lr_; }

  // applies one update from the accumulated gradients; parameters without a
  // gradient (never touched by backward) are left alone
  void step();
  void zero_grad();

 private:
  std::vector<Tensor<float>> params_;
  std::vector<std::vector<float>> velocity_;  // sgd
  std::vector<std::vector<float>> m_, v2_;    // adam moments
  OptimizerKind kind_;
  double lr_;
  double momentum_;
  double weight_decay_;
  int64_t adam_t_ = 0;
};

// ---- generic training loop ----

struct TrainSample {
  std::vector<Tensor<float>> frames;  // 1 for image models, 7 for video
  LabelSet labels;
};

class TrainDataset {
 public:
  virtual ~TrainDataset() = default;
  virtual size_t size() const = 0;
  // epoch >= 0 during training (augmentation may depend on it);
  // epoch < 0 for deterministic evaluation passes
  virtual TrainSample get(size_t index, int64_t epoch) = 0;
};

class VectorDataset : public TrainDataset {
 public:
  explicit VectorDataset(std::vector<TrainSample> samples) : samples_(std::move(samples)) {}
  size_t size() const override { return samples_.size(); }
  TrainSample get(size_t index, int64_t) override { return samples_.at(index); }

 private:
  std::vector<TrainSample> samples_;
};

class TrainableModel {
 public:
  virtual ~TrainableModel() = default;
  // global_index: [0, train_size) for train samples,
  // [train_size, train_size + val_size) for validation samples
  virtual Tensor<float> logits(const TrainSample& sample, size_t global_index) = 0;
  virtual std::vector<std::pair<std::string, Tensor<float>>> named_parameters() = 0;
};

struct EpochRecord {
  int64_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double lr_used = 0.0;
  MetricsReport metrics;  // validation split
};

using WeightSnapshot = std::vector<std::pair<std::string, std::vector<float>>>;

struct TrainResult {
  std::vector<EpochRecord> records;
  WeightSnapshot best_weights;
  int64_t best_epoch = -1;
  bool aborted_nan = false;
};

WeightSnapshot snapshot_weights(const std::vector<std::pair<std::string, Tensor<float>>>& params);
void restore_weights(std::vector<std::pair<std::string, Tensor<float>>>& params,
                     const WeightSnapshot& snapshot);

// Seeded-shuffle mini-batch optimization with per-epoch validation. Partial
// finetune freezes everything except head parameters. A NaN training loss
// aborts the run, keeping the best checkpoint seen so far.
TrainResult train_model(TrainableModel& model, TrainDataset& train_set, TrainDataset& val_set,
                        const TrainConfig& cfg);

std::string epoch_record_json(const EpochRecord& rec);

}  // namespace mlvc

#endif  // MLVC_TRAINER_HPP
