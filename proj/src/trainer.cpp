#include "mlvc/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <json.hpp>

namespace mlvc {

void TrainConfig::validate() const {
  if (lr <= 0.0) throw TrainError("lr must be positive");
  if (momentum < 0.0 || momentum >= 1.0) throw TrainError("momentum must lie in [0,1)");
  if (batch_size < 1) throw TrainError("batch_size must be >= 1");
  if (epochs < 0) throw TrainError("epochs must be non-negative");
  if (scheduler.kind == SchedulerKind::step && scheduler.step_size < 1)
    throw TrainError("scheduler step_size must be >= 1");
  if (scheduler.kind == SchedulerKind::plateau &&
      (scheduler.factor <= 0.0 || scheduler.factor >= 1.0))
    throw TrainError("plateau factor must lie in (0,1)");
  if (scheduler.patience < 0) throw TrainError("plateau patience must be >= 0");
  if (weight_decay < 0.0) throw TrainError("weight_decay must be >= 0");
  if (binarize_threshold < 0.0 || binarize_threshold > 1.0)
    throw TrainError("binarize_threshold must lie in [0,1]");
}

double step_lr(int64_t epoch, double lr0, int64_t step_size, double gamma) {
  if (step_size < 1) throw TrainError("step_lr: step_size must be >= 1");
  return lr0 * std::pow(gamma, static_cast<double>(epoch / step_size));
}

double PlateauScheduler::observe(double val_loss) {
  if (val_loss < best_ - kThreshold) {
    best_ = val_loss;
    bad_epochs_ = 0;
  } else {
    ++bad_epochs_;
    if (bad_epochs_ > patience_) {
      lr_ *= factor_;
      bad_epochs_ = 0;
    }
  }
  return lr_;
}

void sgd_update(float* w, const float* g, float* v, int64_t n, float lr, float momentum) {
  for (int64_t i = 0; i < n; ++i) {
    v[i] = momentum * v[i] + g[i];
    w[i] -= lr * v[i];
  }
}

Optimizer::Optimizer(std::vector<Tensor<float>> params, const TrainConfig& cfg)
    : params_(std::move(params)),
      kind_(cfg.optimizer),
      lr_(cfg.lr),
      momentum_(cfg.momentum),
      weight_decay_(cfg.weight_decay) {
  for (const auto& p : params_) {
    velocity_.emplace_back(static_cast<size_t>(p.size()), 0.0f);
    if (kind_ == OptimizerKind::adam) {
      m_.emplace_back(static_cast<size_t>(p.size()), 0.0f);
      v2_.emplace_back(static_cast<size_t>(p.size()), 0.0f);
    }
  }
}

void Optimizer::step() {
  if (kind_ == OptimizerKind::adam) ++adam_t_;
  for (size_t k = 0; k < params_.size(); ++k) {
    auto& p = params_[k];
    if (!p.requires_grad() || !p.has_grad()) continue;
    const auto& g = p.grad();
    for (float gv : g)
      if (std::isnan(gv))
        throw TrainError("NaN gradient encountered on a parameter of size " +
                         std::to_string(p.size()) + "; aborting the update");
    if (kind_ == OptimizerKind::sgd) {
      sgd_update(p.data(), g.data(), velocity_[k].data(), p.size(), static_cast<float>(lr_),
                 static_cast<float>(momentum_));
    } else {
      constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
      const double bc1 = 1.0 - std::pow(b1, static_cast<double>(adam_t_));
      const double bc2 = 1.0 - std::pow(b2, static_cast<double>(adam_t_));
      for (int64_t i = 0; i < p.size(); ++i) {
        const double grad = g[i] + weight_decay_ * p.data()[i];
        m_[k][i] = static_cast<float>(b1 * m_[k][i] + (1.0 - b1) * grad);
        v2_[k][i] = static_cast<float>(b2 * v2_[k][i] + (1.0 - b2) * grad * grad);
        const double mhat = m_[k][i] / bc1;
        const double vhat = v2_[k][i] / bc2;
        p.data()[i] -= static_cast<float>(lr_ * mhat / (std::sqrt(vhat) + eps));
      }
    }
  }
}

void Optimizer::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

WeightSnapshot snapshot_weights(const std::vector<std::pair<std::string, Tensor<float>>>& params) {
  WeightSnapshot snap;
  snap.reserve(params.size());
  for (const auto& [name, t] : params) snap.emplace_back(name, t.values());
  return snap;
}

void restore_weights(std::vector<std::pair<std::string, Tensor<float>>>& params,
                     const WeightSnapshot& snapshot) {
  if (params.size() != snapshot.size()) throw TrainError("weight snapshot layout mismatch");
  for (size_t i = 0; i < params.size(); ++i) {
    if (params[i].first != snapshot[i].first || params[i].second.values().size() != snapshot[i].second.size())
      throw TrainError("weight snapshot entry mismatch at " + snapshot[i].first);
    params[i].second.values() = snapshot[i].second;
  }
}

namespace {

Tensor<float> targets_of(const LabelSet& labels) {
  Tensor<float> t = Tensor<float>::zeros({kNumClasses});
  for (int c = 0; c < kNumClasses; ++c) t.data()[c] = labels.bits[c] ? 1.0f : 0.0f;
  return t;
}

struct ValOutcome {
  double loss = 0.0;
  MetricsReport metrics;
};

ValOutcome run_validation(TrainableModel& model, TrainDataset& val_set, size_t train_size,
                          double threshold) {
  ValOutcome out;
  std::vector<LabelSet> truths, preds;
  double total = 0.0;
  const size_t n = val_set.size();
  for (size_t j = 0; j < n; ++j) {
    const TrainSample sample = val_set.get(j, -1);
    auto logits = model.logits(sample, train_size + j);
    auto loss = bce_with_logits(logits, targets_of(sample.labels));
    total += static_cast<double>(loss.item());
    auto scores = sigmoid(logits);
    std::array<float, kNumClasses> arr{};
    for (int c = 0; c < kNumClasses; ++c) arr[c] = scores.values()[c];
    truths.push_back(sample.labels);
    preds.push_back(binarize(arr, threshold));
  }
  out.loss = total / static_cast<double>(n);
  out.metrics = evaluate(truths, preds);
  return out;
}

}  // namespace

TrainResult train_model(TrainableModel& model, TrainDataset& train_set, TrainDataset& val_set,
                        const TrainConfig& cfg) {
  cfg.validate();
  if (train_set.size() == 0) throw TrainError("training dataset is empty");
  if (val_set.size() == 0) throw TrainError("validation dataset is empty");

  auto params = model.named_parameters();
  if (cfg.finetune == Finetune::partial) {
    // classification part only; every backbone tensor is frozen
    for (auto& [name, t] : params) t.set_requires_grad(name.starts_with("head."));
  }

  std::vector<Tensor<float>> trainable;
  for (auto& [name, t] : params)
    if (t.requires_grad()) trainable.push_back(t);
  if (trainable.empty()) throw TrainError("no trainable parameters");

  Optimizer optimizer(trainable, cfg);
  PlateauScheduler plateau(cfg.lr, cfg.scheduler.factor, cfg.scheduler.patience);

  TrainResult result;
  double best_val = std::numeric_limits<double>::infinity();
  result.best_weights = snapshot_weights(params);  // epoch -1 fallback

  std::vector<size_t> order(train_set.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  double lr = cfg.lr;
  for (int64_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (cfg.scheduler.kind == SchedulerKind::step)
      lr = step_lr(epoch, cfg.lr, cfg.scheduler.step_size, cfg.scheduler.gamma);
    else
      lr = plateau.lr();
    optimizer.set_lr(lr);

    std::mt19937_64 shuffle_rng(cfg.seed * 0x100000001b3ull + static_cast<uint64_t>(epoch));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double epoch_loss = 0.0;
    bool nan_hit = false;
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.batch_size)) {
      const size_t end = std::min(order.size(), start + static_cast<size_t>(cfg.batch_size));
      Tape<float> tape;
      Tape<float>::Scope scope(tape);
      Tensor<float> batch_loss;
      for (size_t i = start; i < end; ++i) {
        const TrainSample sample = train_set.get(order[i], epoch);
        auto loss = bce_with_logits(model.logits(sample, order[i]), targets_of(sample.labels));
        batch_loss = (i == start) ? loss : add(batch_loss, loss);
      }
      // short final batches keep per-element averaging
      batch_loss = scale(batch_loss, 1.0f / static_cast<float>(end - start));
      const double loss_value = static_cast<double>(batch_loss.item());
      if (std::isnan(loss_value)) {
        nan_hit = true;
        break;
      }
      epoch_loss += loss_value * static_cast<double>(end - start);
      tape.backward(batch_loss);
      optimizer.step();
      optimizer.zero_grad();
    }
    if (nan_hit) {
      result.aborted_nan = true;
      break;
    }
    epoch_loss /= static_cast<double>(order.size());

    const ValOutcome val = run_validation(model, val_set, train_set.size(), cfg.binarize_threshold);

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = epoch_loss;
    rec.val_loss = val.loss;
    rec.lr_used = lr;
    rec.metrics = val.metrics;
    result.records.push_back(rec);

    if (val.loss < best_val) {
      best_val = val.loss;
      result.best_epoch = epoch;
      result.best_weights = snapshot_weights(params);
    }
    if (cfg.scheduler.kind == SchedulerKind::plateau) plateau.observe(val.loss);
  }
  return result;
}

std::string epoch_record_json(const EpochRecord& rec) {
  nlohmann::json j;
  j["epoch"] = rec.epoch;
  j["train_loss"] = rec.train_loss;
  j["val_loss"] = rec.val_loss;
  j["lr"] = rec.lr_used;
  j["val_accuracy"] = rec.metrics.accuracy;
  j["val_precision"] = rec.metrics.precision;
  j["val_recall"] = rec.metrics.recall;
  j["val_f1"] = rec.metrics.f1;
  return j.dump();
}

}  // namespace mlvc
