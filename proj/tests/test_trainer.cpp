#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "mlvc/trainer.hpp"

using mlvc::TrainConfig;
using mlvc::TrainSample;
using mlvc::Tensor;

namespace {

// Two-layer toy: logits = (x . backbone) . head + bias, input [1x4].
class ToyModel : public mlvc::TrainableModel {
 public:
  explicit ToyModel(uint64_t seed) {
    std::mt19937_64 rng(seed);
    backbone_ = Tensor<float>::zeros({4, 6}, true);
    head_w_ = Tensor<float>::zeros({6, 9}, true);
    head_b_ = Tensor<float>::zeros({9}, true);
    mlvc::fill_trunc_normal(backbone_, 0.5f, rng);
    mlvc::fill_trunc_normal(head_w_, 0.5f, rng);
  }

  Tensor<float> logits(const TrainSample& sample, size_t) override {
    auto hidden = mlvc::matmul(sample.frames.at(0), backbone_);
    auto out = mlvc::add_rowvec(mlvc::matmul(hidden, head_w_), head_b_);
    return mlvc::reshape(out, {9});
  }

  std::vector<std::pair<std::string, Tensor<float>>> named_parameters() override {
    return {{"backbone.proj", backbone_}, {"head.weight", head_w_}, {"head.bias", head_b_}};
  }

  Tensor<float> backbone_, head_w_, head_b_;
};

TrainSample make_sample(uint64_t seed, std::initializer_list<int> on) {
  TrainSample s;
  Tensor<float> x = Tensor<float>::zeros({1, 4});
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> uni(-1.0f, 1.0f);
  for (int64_t i = 0; i < 4; ++i) x.data()[i] = uni(rng);
  s.frames.push_back(x);
  s.labels = mlvc::make_labels(on);
  return s;
}

std::vector<TrainSample> toy_dataset() {
  return {make_sample(1, {0, 2}), make_sample(2, {1}), make_sample(3, {0, 8}),
          make_sample(4, {}), make_sample(5, {4, 5, 6})};
}

TrainConfig quick_config(int64_t epochs) {
  TrainConfig cfg;
  cfg.lr = 0.3;
  cfg.batch_size = 2;
  cfg.epochs = epochs;
  cfg.seed = 99;
  cfg.scheduler.step_size = 1000;  // no decay inside these short runs
  return cfg;
}

}  // namespace

TEST_CASE("sgd first step is plain gradient descent") {
  float w[2] = {1.0f, -2.0f};
  float g[2] = {0.5f, 0.25f};
  float v[2] = {0.0f, 0.0f};
  mlvc::sgd_update(w, g, v, 2, 0.1f, 0.9f);
  CHECK(w[0] == doctest::Approx(1.0f - 0.1f * 0.5f));
  CHECK(w[1] == doctest::Approx(-2.0f - 0.1f * 0.25f));
  CHECK(v[0] == 0.5f);
}

TEST_CASE("velocity decays geometrically once gradients stop") {
  float w = 0.0f, v = 0.0f;
  float g1 = 1.0f, g0 = 0.0f;
  mlvc::sgd_update(&w, &g1, &v, 1, 0.0f, 0.9f);  // inject velocity, lr 0 keeps w
  CHECK(v == 1.0f);
  CHECK(w == 0.0f);
  for (int k = 1; k <= 5; ++k) {
    mlvc::sgd_update(&w, &g0, &v, 1, 0.0f, 0.9f);
    CHECK(v == doctest::Approx(std::pow(0.9f, k)).epsilon(1e-6));
  }
}

TEST_CASE("two steps with unit gradient reach -0.29") {
  float w = 0.0f, v = 0.0f, g = 1.0f;
  mlvc::sgd_update(&w, &g, &v, 1, 0.1f, 0.9f);
  CHECK(w == doctest::Approx(-0.1f).epsilon(1e-7));
  mlvc::sgd_update(&w, &g, &v, 1, 0.1f, 0.9f);
  CHECK(w == doctest::Approx(-0.29f).epsilon(1e-6));
}

TEST_CASE("step_lr matches the closed form for all preset step sizes") {
  for (int64_t s : {int64_t(5), int64_t(20), int64_t(50)}) {
    for (int64_t e = 0; e <= 100; ++e) {
      double expected = 0.001;
      for (int64_t k = 0; k < e / s; ++k) expected *= 0.1;  // independent route
      CHECK(mlvc::step_lr(e, 0.001, s, 0.1) == doctest::Approx(expected).epsilon(1e-12));
    }
  }
  CHECK(mlvc::step_lr(19, 0.001, 20, 0.1) == 0.001);
  CHECK(mlvc::step_lr(20, 0.001, 20, 0.1) == doctest::Approx(0.0001));
  CHECK(mlvc::step_lr(40, 0.001, 20, 0.1) == doctest::Approx(0.00001));
}

TEST_CASE("plateau scheduler: improvement blocks reduction") {
  mlvc::PlateauScheduler sched(0.001, 0.1, 2);
  for (double loss : {1.0, 0.9, 0.8, 0.7, 0.6, 0.5})
    CHECK(sched.observe(loss) == 0.001);
}

TEST_CASE("plateau scheduler hand-traced fixture") {
  mlvc::PlateauScheduler sched(0.001, 0.1, 2);
  const double losses[5] = {1.0, 0.9, 0.9, 0.9, 0.9};
  std::vector<double> lrs;
  for (double l : losses) lrs.push_back(sched.observe(l));
  CHECK(lrs[0] == 0.001);
  CHECK(lrs[1] == 0.001);
  CHECK(lrs[2] == 0.001);
  CHECK(lrs[3] == 0.001);
  CHECK(lrs[4] == doctest::Approx(0.0001));  // reduction lands at index 4
}

TEST_CASE("plateau scheduler on constant losses reduces after the patience window") {
  mlvc::PlateauScheduler sched(0.001, 0.1, 2);
  CHECK(sched.observe(0.5) == 0.001);  // first value counts as improvement over inf
  CHECK(sched.observe(0.5) == 0.001);
  CHECK(sched.observe(0.5) == 0.001);
  CHECK(sched.observe(0.5) == doctest::Approx(0.0001));
}

TEST_CASE("optimizer with lr=0 leaves parameters bitwise unchanged") {
  ToyModel model(3);
  const auto before = model.backbone_.values();
  TrainConfig cfg = quick_config(1);
  mlvc::Optimizer opt({model.backbone_}, cfg);
  opt.set_lr(0.0);
  model.backbone_.grad_buffer().assign(model.backbone_.values().size(), 2.0f);
  for (int i = 0; i < 10; ++i) opt.step();
  CHECK(model.backbone_.values() == before);
}

TEST_CASE("optimizer aborts on NaN gradients with diagnostics") {
  ToyModel model(4);
  TrainConfig cfg = quick_config(1);
  mlvc::Optimizer opt({model.head_b_}, cfg);
  model.head_b_.grad_buffer()[2] = std::nanf("");
  CHECK_THROWS_AS(opt.step(), mlvc::TrainError);
}

TEST_CASE("adam first step moves by roughly lr, weight decay included") {
  Tensor<float> w({1}, {1.0f}, true);
  TrainConfig cfg;
  cfg.optimizer = mlvc::OptimizerKind::adam;
  cfg.lr = 0.01;
  mlvc::Optimizer opt({w}, cfg);
  w.grad_buffer()[0] = 1.0f;
  opt.step();
  CHECK(w.values()[0] == doctest::Approx(1.0f - 0.01f).epsilon(1e-4));
}

TEST_CASE("training is deterministic given seed, data and config") {
  auto run = [] {
    ToyModel model(7);
    mlvc::VectorDataset train(toy_dataset());
    mlvc::VectorDataset val(toy_dataset());
    return mlvc::train_model(model, train, val, quick_config(6));
  };
  auto a = run();
  auto b = run();
  REQUIRE(a.records.size() == b.records.size());
  for (size_t i = 0; i < a.records.size(); ++i) {
    CHECK(a.records[i].train_loss == b.records[i].train_loss);
    CHECK(a.records[i].val_loss == b.records[i].val_loss);
    CHECK(a.records[i].lr_used == b.records[i].lr_used);
  }
  REQUIRE(a.best_weights.size() == b.best_weights.size());
  for (size_t i = 0; i < a.best_weights.size(); ++i)
    CHECK(a.best_weights[i].second == b.best_weights[i].second);
}

TEST_CASE("partial finetune changes only head parameters") {
  ToyModel model(9);
  const auto backbone_before = model.backbone_.values();
  const auto head_before = model.head_w_.values();
  mlvc::VectorDataset train(toy_dataset());
  mlvc::VectorDataset val(toy_dataset());
  TrainConfig cfg = quick_config(4);
  cfg.finetune = mlvc::Finetune::partial;
  auto result = mlvc::train_model(model, train, val, cfg);
  CHECK(result.records.size() == 4);
  CHECK(model.backbone_.values() == backbone_before);  // bitwise frozen
  CHECK(model.head_w_.values() != head_before);
}

TEST_CASE("training reduces the loss on a small fixed problem") {
  ToyModel model(11);
  auto samples = toy_dataset();
  samples.pop_back();  // 4 points stay affinely interpolable from R^4
  mlvc::VectorDataset train(samples);
  mlvc::VectorDataset val(samples);
  auto result = mlvc::train_model(model, train, val, quick_config(60));
  REQUIRE(result.records.size() == 60);
  CHECK(result.records.back().train_loss < result.records.front().train_loss);
  CHECK(result.records.back().train_loss < 0.2);
  CHECK(result.best_epoch >= 0);

  // mostly monotone after warmup: few increases allowed
  int increases = 0;
  for (size_t i = 11; i < result.records.size(); ++i)
    if (result.records[i].train_loss > result.records[i - 1].train_loss) ++increases;
  CHECK(increases <= 3);
}

TEST_CASE("NaN loss aborts with the last good checkpoint") {
  ToyModel model(13);
  auto samples = toy_dataset();
  samples[0].frames[0].data()[0] = std::nanf("");
  mlvc::VectorDataset train(samples);
  mlvc::VectorDataset val(toy_dataset());
  auto result = mlvc::train_model(model, train, val, quick_config(5));
  CHECK(result.aborted_nan);
  CHECK(result.records.size() < 5);
  CHECK_FALSE(result.best_weights.empty());
}

TEST_CASE("epoch records serialize as json lines") {
  mlvc::EpochRecord rec;
  rec.epoch = 3;
  rec.train_loss = 0.5;
  rec.val_loss = 0.4;
  rec.lr_used = 0.001;
  const auto j = mlvc::epoch_record_json(rec);
  CHECK(j.find("\"epoch\":3") != std::string::npos);
  CHECK(j.find("\"val_loss\"") != std::string::npos);
  CHECK(j.find('\n') == std::string::npos);
}

TEST_CASE("config validation rejects bad hyperparameters") {
  TrainConfig cfg;
  cfg.lr = 0.0;
  CHECK_THROWS_AS(cfg.validate(), mlvc::TrainError);
  cfg = TrainConfig{};
  cfg.momentum = 1.0;
  CHECK_THROWS_AS(cfg.validate(), mlvc::TrainError);
  cfg = TrainConfig{};
  cfg.batch_size = 0;
  CHECK_THROWS_AS(cfg.validate(), mlvc::TrainError);
}
