#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "mlvc/tensor.hpp"

using mlvc::Tensor;
using mlvc::Tape;

namespace {

// Central finite differences on a scalar-valued function of one leaf tensor.
// Double precision keeps the truncation error of step 1e-5 meaningful.
template <typename Fn>
double max_rel_grad_error(Tensor<double>& leaf, Fn forward) {
  leaf.zero_grad();
  Tape<double> tape;
  {
    Tape<double>::Scope scope(tape);
    Tensor<double> loss = forward();
    tape.backward(loss);
  }
  const std::vector<double> analytic = leaf.grad();

  const double step = 1e-5;
  double worst = 0.0;
  for (int64_t i = 0; i < leaf.size(); ++i) {
    const double saved = leaf.data()[i];
    leaf.data()[i] = saved + step;
    const double up = forward().item();
    leaf.data()[i] = saved - step;
    const double down = forward().item();
    leaf.data()[i] = saved;
    const double numeric = (up - down) / (2.0 * step);
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-8});
    worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
  }
  return worst;
}

Tensor<double> random_tensor(mlvc::Shape shape, std::mt19937_64& rng, bool requires_grad = true) {
  Tensor<double> t = Tensor<double>::zeros(std::move(shape), requires_grad);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  for (int64_t i = 0; i < t.size(); ++i) t.data()[i] = uni(rng);
  return t;
}

}  // namespace

TEST_CASE("matmul identity and annihilator") {
  Tensor<float> a({2, 2}, {1, 2, 3, 4});
  Tensor<float> eye({2, 2}, {1, 0, 0, 1});
  Tensor<float> zero = Tensor<float>::zeros({2, 2});

  auto r = mlvc::matmul(a, eye);
  CHECK(r.values() == std::vector<float>{1, 2, 3, 4});

  auto z = mlvc::matmul(a, zero);
  for (float v : z.values()) CHECK(v == 0.0f);
}

TEST_CASE("matmul matches naive triple-loop oracle") {
  std::mt19937_64 rng(7);
  Tensor<double> a = random_tensor({5, 7}, rng, false);
  Tensor<double> b = random_tensor({7, 3}, rng, false);
  auto c = mlvc::matmul(a, b);

  for (int64_t i = 0; i < 5; ++i)
    for (int64_t j = 0; j < 3; ++j) {
      double acc = 0.0;
      for (int64_t k = 0; k < 7; ++k) acc += a.at({i, k}) * b.at({k, j});
      CHECK(c.at({i, j}) == doctest::Approx(acc).epsilon(1e-6));
    }
}

TEST_CASE("matmul rejects mismatched inner dimensions") {
  Tensor<float> a = Tensor<float>::zeros({2, 3});
  Tensor<float> b = Tensor<float>::zeros({4, 2});
  CHECK_THROWS_WITH_AS(mlvc::matmul(a, b),
                       doctest::Contains("[2x3]"), mlvc::ShapeError);
}

TEST_CASE("softmax uniform, forced ratio, shift invariance") {
  Tensor<float> z({3}, {0, 0, 0});
  auto s = mlvc::softmax(z, 0);
  for (float v : s.values()) CHECK(v == doctest::Approx(1.0f / 3.0f));

  Tensor<float> two({2}, {0.0f, std::log(2.0f)});
  auto s2 = mlvc::softmax(two, 0);
  CHECK(s2.values()[0] == doctest::Approx(1.0f / 3.0f));
  CHECK(s2.values()[1] == doctest::Approx(2.0f / 3.0f));

  std::mt19937_64 rng(3);
  Tensor<double> x = random_tensor({4, 5}, rng, false);
  Tensor<double> shifted = x.clone();
  for (int64_t i = 0; i < shifted.size(); ++i) shifted.data()[i] += 17.25;
  auto sa = mlvc::softmax(x, 1);
  auto sb = mlvc::softmax(shifted, 1);
  for (int64_t i = 0; i < sa.size(); ++i)
    CHECK(sa.data()[i] == doctest::Approx(sb.data()[i]).epsilon(1e-6));
}

TEST_CASE("softmax rows sum to one and lie in (0,1)") {
  std::mt19937_64 rng(11);
  Tensor<double> x = random_tensor({6, 9}, rng, false);
  for (int64_t i = 0; i < x.size(); ++i) x.data()[i] *= 10.0;
  auto s = mlvc::softmax(x, 1);
  for (int64_t r = 0; r < 6; ++r) {
    double total = 0.0;
    for (int64_t c = 0; c < 9; ++c) {
      const double v = s.at({r, c});
      CHECK(v > 0.0);
      CHECK(v < 1.0);
      total += v;
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("layer_norm constant slice and two-point slice") {
  Tensor<float> gamma({3}, {1, 1, 1});
  Tensor<float> beta({3}, {0, 0, 0});
  Tensor<float> constant({3}, {5, 5, 5});
  auto out = mlvc::layer_norm(constant, gamma, beta, 1e-5f);
  for (float v : out.values()) CHECK(v == doctest::Approx(0.0f));

  Tensor<float> g2({2}, {1, 1});
  Tensor<float> b2({2}, {0, 0});
  Tensor<float> pair({2}, {1, 3});
  auto o2 = mlvc::layer_norm(pair, g2, b2, 1e-12f);
  CHECK(o2.values()[0] == doctest::Approx(-1.0f).epsilon(1e-4));
  CHECK(o2.values()[1] == doctest::Approx(1.0f).epsilon(1e-4));
}

TEST_CASE("layer_norm normalizes random slices") {
  std::mt19937_64 rng(5);
  Tensor<double> x = random_tensor({4, 16}, rng, false);
  Tensor<double> gamma = Tensor<double>::full({16}, 1.0);
  Tensor<double> beta = Tensor<double>::zeros({16});
  auto out = mlvc::layer_norm(x, gamma, beta, 1e-10);
  for (int64_t r = 0; r < 4; ++r) {
    double mean = 0.0, var = 0.0;
    for (int64_t c = 0; c < 16; ++c) mean += out.at({r, c});
    mean /= 16.0;
    for (int64_t c = 0; c < 16; ++c) var += (out.at({r, c}) - mean) * (out.at({r, c}) - mean);
    var /= 16.0;
    CHECK(std::abs(mean) < 1e-6);
    CHECK(var == doctest::Approx(1.0).epsilon(1e-4));
  }
}

TEST_CASE("layer_norm rejects non-positive eps") {
  Tensor<float> x({2}, {1, 2});
  Tensor<float> g({2}, {1, 1});
  Tensor<float> b({2}, {0, 0});
  CHECK_THROWS_AS(mlvc::layer_norm(x, g, b, 0.0f), mlvc::ValueError);
}

TEST_CASE("gelu fixed points and erf oracle") {
  Tensor<double> x({3}, {0.0, 10.0, 1.0});
  auto y = mlvc::gelu(x);
  CHECK(y.values()[0] == 0.0);
  CHECK(y.values()[1] == doctest::Approx(10.0).epsilon(1e-4));

  // erf-based reference: x * Phi(x)
  const double exact = 1.0 * 0.5 * (1.0 + std::erf(1.0 / std::sqrt(2.0)));
  CHECK(std::abs(y.values()[2] - exact) < 2e-3);
  CHECK(y.values()[2] == doctest::Approx(0.8412).epsilon(2e-3));
}

TEST_CASE("sigmoid midpoint, symmetry, saturation") {
  Tensor<double> z({1}, {0.0});
  CHECK(mlvc::sigmoid(z).values()[0] == 0.5);

  std::mt19937_64 rng(19);
  Tensor<double> x = random_tensor({32}, rng, false);
  Tensor<double> nx = x.clone();
  for (int64_t i = 0; i < nx.size(); ++i) nx.data()[i] = -nx.data()[i];
  auto s = mlvc::sigmoid(x);
  auto sn = mlvc::sigmoid(nx);
  for (int64_t i = 0; i < x.size(); ++i)
    CHECK(std::abs(sn.values()[i] - (1.0 - s.values()[i])) < 1e-7);

  Tensor<double> extreme({2}, {-1000.0, 1000.0});
  auto se = mlvc::sigmoid(extreme);
  CHECK(std::isfinite(se.values()[0]));
  CHECK(std::isfinite(se.values()[1]));
  CHECK(se.values()[0] == doctest::Approx(0.0));
  CHECK(se.values()[1] == doctest::Approx(1.0));
}

TEST_CASE("conv3d identity kernel and zero kernel") {
  std::mt19937_64 rng(23);
  Tensor<double> x = random_tensor({1, 2, 3, 3}, rng, false);
  Tensor<double> one({1, 1, 1, 1, 1}, {1.0});
  Tensor<double> bias({1}, {0.0});
  auto y = mlvc::conv3d(x, one, bias, 1, 1, 1);
  CHECK(y.shape() == mlvc::Shape{1, 2, 3, 3});
  for (int64_t i = 0; i < x.size(); ++i) CHECK(y.values()[i] == x.values()[i]);

  Tensor<double> zero = Tensor<double>::zeros({2, 1, 1, 2, 2});
  Tensor<double> zb = Tensor<double>::zeros({2});
  auto yz = mlvc::conv3d(x, zero, zb, 1, 1, 1);
  for (double v : yz.values()) CHECK(v == 0.0);
}

TEST_CASE("conv3d matches naive nested-loop oracle") {
  std::mt19937_64 rng(29);
  Tensor<double> x = random_tensor({3, 7, 16, 16}, rng, false);
  Tensor<double> k = random_tensor({4, 3, 3, 4, 4}, rng, false);
  Tensor<double> b = random_tensor({4}, rng, false);
  const int64_t st = 7, sh = 4, sw = 4;
  auto y = mlvc::conv3d(x, k, b, st, sh, sw);
  CHECK(y.shape() == mlvc::Shape{4, 1, 4, 4});

  // independent naive evaluation
  for (int64_t kk = 0; kk < 4; ++kk)
    for (int64_t to = 0; to < 1; ++to)
      for (int64_t ho = 0; ho < 4; ++ho)
        for (int64_t wo = 0; wo < 4; ++wo) {
          double acc = b.at({kk});
          for (int64_t c = 0; c < 3; ++c)
            for (int64_t dt = 0; dt < 3; ++dt)
              for (int64_t dh = 0; dh < 4; ++dh)
                for (int64_t dw = 0; dw < 4; ++dw)
                  acc += k.at({kk, c, dt, dh, dw}) *
                         x.at({c, to * st + dt, ho * sh + dh, wo * sw + dw});
          const double got = y.at({kk, to, ho, wo});
          CHECK(std::abs(got - acc) <= 1e-5 * std::max(1.0, std::abs(acc)));
        }
}

TEST_CASE("conv3d rejects kernels larger than the input") {
  Tensor<float> x = Tensor<float>::zeros({1, 2, 4, 4});
  Tensor<float> k = Tensor<float>::zeros({1, 1, 3, 4, 4});
  Tensor<float> b = Tensor<float>::zeros({1});
  CHECK_THROWS_AS(mlvc::conv3d(x, k, b, 1, 1, 1), mlvc::ShapeError);
}

TEST_CASE("bce_with_logits fixed values and stability") {
  Tensor<double> z({1}, {0.0});
  Tensor<double> y0({1}, {0.0});
  Tensor<double> y1({1}, {1.0});
  CHECK(mlvc::bce_with_logits(z, y0).item() == doctest::Approx(std::log(2.0)).epsilon(1e-9));
  CHECK(mlvc::bce_with_logits(z, y1).item() == doctest::Approx(std::log(2.0)).epsilon(1e-9));

  Tensor<double> big({1}, {-1000.0});
  auto loss = mlvc::bce_with_logits(big, y0);
  CHECK(std::isfinite(loss.item()));
  CHECK(loss.item() == doctest::Approx(0.0).epsilon(1e-12));

  Tensor<double> bad({1}, {0.5});
  CHECK_THROWS_AS(mlvc::bce_with_logits(z, bad), mlvc::ValueError);
}

TEST_CASE("backward on sum gives ones; on sum of squares gives 2x") {
  Tensor<float> x({3}, {1, 2, 3}, true);
  {
    Tape<float> tape;
    Tape<float>::Scope scope(tape);
    auto loss = mlvc::sum(x);
    tape.backward(loss);
  }
  CHECK(x.grad() == std::vector<float>{1, 1, 1});

  x.zero_grad();
  {
    Tape<float> tape;
    Tape<float>::Scope scope(tape);
    auto loss = mlvc::sum(mlvc::mul(x, x));
    tape.backward(loss);
  }
  CHECK(x.grad() == std::vector<float>{2, 4, 6});
}

TEST_CASE("backward rejects non-scalar loss") {
  Tensor<float> x({2}, {1, 2}, true);
  Tape<float> tape;
  Tape<float>::Scope scope(tape);
  auto y = mlvc::mul(x, x);
  CHECK_THROWS_AS(tape.backward(y), mlvc::ValueError);
}

TEST_CASE("backward without reset accumulates") {
  Tensor<float> x({2}, {1, 2}, true);
  Tape<float> tape;
  {
    Tape<float>::Scope scope(tape);
    auto loss = mlvc::sum(x);
    tape.backward(loss);
    tape.backward(loss);
  }
  CHECK(x.grad() == std::vector<float>{2, 2});
}

TEST_CASE("non-participating tensors never accumulate gradient") {
  Tensor<float> x({2}, {1, 2}, true);
  Tensor<float> frozen({2}, {3, 4}, false);
  Tape<float> tape;
  {
    Tape<float>::Scope scope(tape);
    auto loss = mlvc::sum(mlvc::mul(x, frozen));
    tape.backward(loss);
  }
  CHECK(x.grad() == std::vector<float>{3, 4});
  CHECK_FALSE(frozen.has_grad());
}

TEST_CASE("finite differences: every differentiable op") {
  std::mt19937_64 rng(101);

  SUBCASE("matmul") {
    Tensor<double> a = random_tensor({3, 4}, rng);
    Tensor<double> b = random_tensor({4, 2}, rng, false);
    CHECK(max_rel_grad_error(a, [&] { return mlvc::sum(mlvc::matmul(a, b)); }) < 1e-4);
  }
  SUBCASE("softmax") {
    Tensor<double> x = random_tensor({2, 5}, rng);
    Tensor<double> w = random_tensor({2, 5}, rng, false);
    CHECK(max_rel_grad_error(x, [&] { return mlvc::sum(mlvc::mul(mlvc::softmax(x, 1), w)); }) < 1e-4);
  }
  SUBCASE("layer_norm") {
    Tensor<double> x = random_tensor({3, 6}, rng);
    Tensor<double> gamma = random_tensor({6}, rng);
    Tensor<double> beta = random_tensor({6}, rng);
    Tensor<double> w = random_tensor({3, 6}, rng, false);
    auto loss = [&] { return mlvc::sum(mlvc::mul(mlvc::layer_norm(x, gamma, beta, 1e-5), w)); };
    CHECK(max_rel_grad_error(x, loss) < 1e-4);
    CHECK(max_rel_grad_error(gamma, loss) < 1e-4);
    CHECK(max_rel_grad_error(beta, loss) < 1e-4);
  }
  SUBCASE("gelu") {
    Tensor<double> x = random_tensor({12}, rng);
    CHECK(max_rel_grad_error(x, [&] { return mlvc::sum(mlvc::gelu(x)); }) < 1e-4);
  }
  SUBCASE("sigmoid") {
    Tensor<double> x = random_tensor({12}, rng);
    CHECK(max_rel_grad_error(x, [&] { return mlvc::sum(mlvc::sigmoid(x)); }) < 1e-4);
  }
  SUBCASE("conv3d") {
    Tensor<double> x = random_tensor({2, 3, 5, 5}, rng);
    Tensor<double> k = random_tensor({2, 2, 2, 3, 3}, rng);
    Tensor<double> b = random_tensor({2}, rng);
    auto loss = [&] { return mlvc::sum(mlvc::conv3d(x, k, b, 1, 2, 2)); };
    CHECK(max_rel_grad_error(x, loss) < 1e-4);
    CHECK(max_rel_grad_error(k, loss) < 1e-4);
    CHECK(max_rel_grad_error(b, loss) < 1e-4);
  }
  SUBCASE("bce_with_logits") {
    Tensor<double> z = random_tensor({9}, rng);
    Tensor<double> y = Tensor<double>::zeros({9});
    for (int64_t i = 0; i < 9; ++i) y.data()[i] = (i % 2 == 0) ? 1.0 : 0.0;
    CHECK(max_rel_grad_error(z, [&] { return mlvc::bce_with_logits(z, y); }) < 1e-4);
  }
  SUBCASE("add sub scale rowvec slicing concat reductions") {
    Tensor<double> x = random_tensor({4, 6}, rng);
    Tensor<double> v = random_tensor({6}, rng);
    auto loss = [&] {
      auto m = mlvc::add_rowvec(x, v);
      auto top = mlvc::slice_rows(m, 0, 2);
      auto bottom = mlvc::slice_rows(m, 2, 4);
      auto joined = mlvc::concat_cols(std::vector<Tensor<double>>{top, bottom});
      auto left = mlvc::slice_cols(joined, 0, 5);
      auto pooled = mlvc::mean_rows(left);
      auto t = mlvc::transpose2d(mlvc::reshape(pooled, {1, 5}));
      return mlvc::mean_all(mlvc::sub(mlvc::scale(t, 3.0), mlvc::mul(t, t)));
    };
    CHECK(max_rel_grad_error(x, loss) < 1e-4);
    CHECK(max_rel_grad_error(v, loss) < 1e-4);
  }
}

TEST_CASE("finite differences: three-layer composite graph") {
  std::mt19937_64 rng(404);
  Tensor<double> x = random_tensor({2, 8}, rng, false);
  Tensor<double> w1 = random_tensor({8, 8}, rng);
  Tensor<double> b1 = random_tensor({8}, rng);
  Tensor<double> gamma = Tensor<double>::full({8}, 1.0, true);
  Tensor<double> beta = Tensor<double>::zeros({8}, true);
  Tensor<double> w2 = random_tensor({8, 4}, rng);
  Tensor<double> b2 = random_tensor({4}, rng);
  Tensor<double> w3 = random_tensor({4, 3}, rng);
  Tensor<double> targets({2, 3}, {1, 0, 1, 0, 1, 0});

  auto loss = [&] {
    auto h1 = mlvc::gelu(mlvc::add_rowvec(mlvc::matmul(x, w1), b1));
    auto h2 = mlvc::layer_norm(h1, gamma, beta, 1e-6);
    auto h3 = mlvc::gelu(mlvc::add_rowvec(mlvc::matmul(h2, w2), b2));
    auto logits = mlvc::matmul(h3, w3);
    auto att = mlvc::softmax(logits, 1);
    auto mixed = mlvc::add(logits, att);
    return mlvc::bce_with_logits(mixed, targets);
  };

  CHECK(max_rel_grad_error(w1, loss) < 1e-4);
  CHECK(max_rel_grad_error(b1, loss) < 1e-4);
  CHECK(max_rel_grad_error(gamma, loss) < 1e-4);
  CHECK(max_rel_grad_error(beta, loss) < 1e-4);
  CHECK(max_rel_grad_error(w2, loss) < 1e-4);
  CHECK(max_rel_grad_error(b2, loss) < 1e-4);
  CHECK(max_rel_grad_error(w3, loss) < 1e-4);
}

TEST_CASE("forward results are bit-identical across runs") {
  std::mt19937_64 rng(55);
  Tensor<float> x = Tensor<float>::zeros({7, 7});
  std::uniform_real_distribution<double> uni(-2.0, 2.0);
  for (int64_t i = 0; i < x.size(); ++i) x.data()[i] = static_cast<float>(uni(rng));
  Tensor<float> g = Tensor<float>::full({7}, 1.0f);
  Tensor<float> b = Tensor<float>::zeros({7});

  auto run = [&] { return mlvc::softmax(mlvc::gelu(mlvc::layer_norm(x, g, b, 1e-5f)), 1); };
  auto r1 = run();
  auto r2 = run();
  CHECK(r1.values() == r2.values());
}

TEST_CASE("dropout p=0 is an exact identity") {
  std::mt19937_64 rng(1);
  Tensor<float> x({4}, {1, 2, 3, 4});
  auto y = mlvc::dropout(x, 0.0f, rng);
  CHECK(y.values() == x.values());
  CHECK(y.same_storage(x));
}
