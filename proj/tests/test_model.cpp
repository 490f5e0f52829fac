#include <doctest.h>

#include <cmath>
#include <random>

#include "bfa/dataset.hpp"
#include "bfa/evaluation.hpp"
#include "bfa/model.hpp"
#include "bfa/train.hpp"
#include "helpers.hpp"

using namespace bfa;
using bfa::test::random_tensor;
using bfa::test::relative_error;

TEST_CASE("identity dense layer passes the input through") {
  ModelGraph m({3}, {LayerSpec::dense(3, 3)});
  Tensor w({3, 3});
  for (std::size_t i = 0; i < 3; ++i) w[i * 3 + i] = 1.0;
  m.set_weight(0, w);
  const Tensor out = forward(m, Tensor({1, 3}, {1, 2, 3}));
  CHECK(out.shape() == Shape{1, 3});
  CHECK(out == Tensor({1, 3}, {1, 2, 3}));
}

TEST_CASE("relu clamps negatives") {
  ModelGraph m({3}, {LayerSpec::relu()});
  CHECK(forward(m, Tensor({1, 3}, {-1, 0, 2})) == Tensor({1, 3}, {0, 0, 2}));
}

TEST_CASE("conv + dense logits match a scalar loop") {
  std::mt19937_64 rng(11);
  ModelGraph m({1, 3, 3}, {LayerSpec::conv2d(1, 2, 2), LayerSpec::relu(), LayerSpec::flatten(),
                           LayerSpec::dense(8, 3)});
  test::randomize(m, rng);
  const Tensor x = random_tensor({2, 1, 3, 3}, rng);
  const Tensor got = forward(m, x);

  const Tensor& cw = m.weight(0);
  const Tensor& cb = m.bias(0);
  const Tensor& dw = m.weight(1);
  const Tensor& db = m.bias(1);
  for (std::size_t n = 0; n < 2; ++n) {
    double h[8];
    for (std::size_t c = 0; c < 2; ++c) {
      for (std::size_t y = 0; y < 2; ++y) {
        for (std::size_t xx = 0; xx < 2; ++xx) {
          double s = cb[c];
          for (std::size_t ky = 0; ky < 2; ++ky) {
            for (std::size_t kx = 0; kx < 2; ++kx) s += cw[c * 4 + ky * 2 + kx] * x[n * 9 + (y + ky) * 3 + xx + kx];
          }
          h[c * 4 + y * 2 + xx] = s > 0 ? s : 0;
        }
      }
    }
    for (std::size_t o = 0; o < 3; ++o) {
      double s = db[o];
      for (std::size_t i = 0; i < 8; ++i) s += dw[o * 8 + i] * h[i];
      CHECK(relative_error(got[n * 3 + o], s) < 1e-12);
    }
  }
}

TEST_CASE("shape mismatch names the layer") {
  ModelGraph m({4}, {LayerSpec::dense(4, 2)});
  try {
    forward(m, Tensor({1, 5}));
    FAIL("expected a shape error");
  } catch (const ShapeError& e) {
    CHECK(std::string(e.what()).find("layer 0") != std::string::npos);
  }
  CHECK_THROWS_AS(ModelGraph({4}, {LayerSpec::dense(4, 3), LayerSpec::dense(4, 2)}), ModelError);
}

TEST_CASE("cross entropy") {
  SUBCASE("uniform logits give ln 10") {
    const Tensor logits({1, 10}, 0.3);
    const int t[] = {4};
    CHECK(cross_entropy(logits, t) == doctest::Approx(std::log(10.0)).epsilon(1e-12));
  }
  SUBCASE("saturated softmax") {
    const int t[] = {0};
    CHECK(cross_entropy(Tensor({1, 2}, {1000, 0}), t) < 1e-6);
  }
  SUBCASE("matches a scalar softmax") {
    std::mt19937_64 rng(3);
    const Tensor logits = random_tensor({5, 7}, rng, -4, 4);
    const std::vector<int> t = test::random_targets(5, 7, rng);
    double want = 0.0;
    for (std::size_t n = 0; n < 5; ++n) {
      double z = 0.0;
      for (std::size_t c = 0; c < 7; ++c) z += std::exp(logits[n * 7 + c]);
      want += -std::log(std::exp(logits[n * 7 + static_cast<std::size_t>(t[n])]) / z);
    }
    CHECK(relative_error(cross_entropy(logits, t), want / 5) < 1e-12);
  }
  SUBCASE("non-finite logits give a non-finite loss") {
    const int t[] = {0};
    CHECK_FALSE(std::isfinite(cross_entropy(Tensor({1, 2}, {NAN, 0}), t)));
  }
}

TEST_CASE("zero-weight dense layer: gradient rows cancel") {
  ModelGraph m({2}, {LayerSpec::dense(2, 2)});
  const Tensor x({2, 2}, {1, 2, 1, 2});
  const int t[] = {0, 1};
  const GradientMap g = backward(m, x, t);
  for (std::size_t i = 0; i < 2; ++i) CHECK(g.weight[0][i] + g.weight[0][2 + i] == doctest::Approx(0.0));
}

namespace {

// Central differences on 20 random weights of every weighted layer.
void check_finite_differences(ModelGraph m, const Tensor& x, const std::vector<int>& t, std::uint64_t seed) {
  const GradientMap g = backward(m, x, t);
  REQUIRE(g.finite);
  std::mt19937_64 rng(seed);
  const double h = 1e-5;
  for (std::size_t w = 0; w < m.num_weighted(); ++w) {
    CHECK(g.weight[w].shape() == m.weight(w).shape());
    std::uniform_int_distribution<std::size_t> pick(0, m.weight(w).size() - 1);
    for (int trial = 0; trial < 20; ++trial) {
      const std::size_t k = pick(rng);
      const double orig = m.weight(w)[k];
      m.mutable_weight(w)[k] = orig + h;
      const double up = cross_entropy(forward(m, x), t);
      m.mutable_weight(w)[k] = orig - h;
      const double down = cross_entropy(forward(m, x), t);
      m.mutable_weight(w)[k] = orig;
      const double numeric = (up - down) / (2 * h);
      INFO("weighted layer " << w << " weight " << k << " analytic " << g.weight[w][k] << " numeric " << numeric);
      CHECK(relative_error(g.weight[w][k], numeric, 1e-6) < 1e-4);
    }
  }
}

}  // namespace

TEST_CASE("gradients match finite differences on every layer kind") {
  std::mt19937_64 rng(5);
  SUBCASE("dense + relu") {
    ModelGraph m({6}, {LayerSpec::dense(6, 5), LayerSpec::relu(), LayerSpec::dense(5, 3)});
    test::randomize(m, rng);
    check_finite_differences(m, random_tensor({4, 6}, rng), test::random_targets(4, 3, rng), 1);
  }
  SUBCASE("strided padded conv + max-pool + flatten") {
    ModelGraph m({2, 7, 7}, {LayerSpec::conv2d(2, 3, 3, 2, 1), LayerSpec::relu(), LayerSpec::max_pool(2),
                             LayerSpec::flatten(), LayerSpec::dense(12, 4)});
    test::randomize(m, rng);
    check_finite_differences(m, random_tensor({3, 2, 7, 7}, rng), test::random_targets(3, 4, rng), 2);
  }
  SUBCASE("desk CNN") {
    ModelGraph m = desk_cnn();
    initialize_weights(m, 9);
    check_finite_differences(m, random_tensor({2, 1, 28, 28}, rng, 0, 1), test::random_targets(2, 10, rng), 3);
  }
}

TEST_CASE("1x1 conv equals dense on the flattened input") {
  std::mt19937_64 rng(8);
  ModelGraph conv({4, 1, 1}, {LayerSpec::conv2d(4, 3, 1), LayerSpec::flatten()});
  ModelGraph fc({4}, {LayerSpec::dense(4, 3)});
  const Tensor w = random_tensor({3, 4}, rng);
  const Tensor b = random_tensor({3}, rng);
  conv.set_weight(0, w.reshaped({3, 4, 1, 1}));
  conv.set_bias(0, b);
  fc.set_weight(0, w);
  fc.set_bias(0, b);
  const Tensor x = random_tensor({5, 4}, rng);
  const std::vector<int> t = test::random_targets(5, 3, rng);
  const GradientMap gc = backward(conv, x.reshaped({5, 4, 1, 1}), t);
  const GradientMap gf = backward(fc, x, t);
  CHECK(relative_error(gc.loss, gf.loss) < 1e-12);
  for (std::size_t i = 0; i < 12; ++i) CHECK(relative_error(gc.weight[0][i], gf.weight[0][i], 1e-300) < 1e-12);
}

TEST_CASE("forward and backward are pure and deterministic") {
  std::mt19937_64 rng(4);
  ModelGraph m = desk_cnn();
  initialize_weights(m, 1);
  const Tensor x = random_tensor({3, 1, 28, 28}, rng, 0, 1);
  const std::vector<int> t = {1, 2, 3};
  const ModelGraph before = m;
  const GradientMap a = backward(m, x, t);
  const GradientMap b = backward(m, x, t);
  CHECK(a.loss == b.loss);
  for (std::size_t w = 0; w < m.num_weighted(); ++w) {
    CHECK(a.weight[w] == b.weight[w]);
    CHECK(m.weight(w) == before.weight(w));
    CHECK(m.revision(w) == before.revision(w));
  }
  CHECK(forward(m, x) == forward(m, x));
}

TEST_CASE("forward_from resumes from a taped activation") {
  std::mt19937_64 rng(6);
  ModelGraph m = desk_cnn();
  initialize_weights(m, 2);
  const Tensor x = random_tensor({2, 1, 28, 28}, rng, 0, 1);
  const ForwardTape tape = forward_tape(m, x);
  for (std::size_t i = 0; i < m.num_layers(); ++i) CHECK(forward_from(m, i, tape.inputs[i]) == tape.logits);
}

TEST_CASE("training") {
  SUBCASE("separable blobs, one dense layer") {
    std::mt19937_64 rng(1);
    std::normal_distribution<double> noise(0.0, 0.5);
    auto blobs = [&](std::size_t n) {
      Tensor x({n, 2});
      std::vector<int> y(n);
      for (std::size_t i = 0; i < n; ++i) {
        y[i] = static_cast<int>(i % 2);
        const double c = y[i] ? 2.0 : -2.0;
        x[i * 2] = c + noise(rng);
        x[i * 2 + 1] = c + noise(rng);
      }
      return Dataset(std::move(x), std::move(y), 2);
    };
    const Dataset train = blobs(400), test = blobs(200);
    ModelGraph m({2}, {LayerSpec::dense(2, 2)});
    initialize_weights(m, 0);
    TrainHyperParams hp;
    hp.epochs = 10;
    hp.learning_rate = 0.01;
    const TrainResult r = train_victim(m, train, &test, hp);
    CHECK(r.test_accuracy >= 0.99);
  }
  SUBCASE("zero epochs is a no-op") {
    ModelGraph m = desk_cnn();
    initialize_weights(m, 3);
    const ModelGraph before = m;
    std::mt19937_64 rng(2);
    const Dataset d(random_tensor({8, 28, 28}, rng, 0, 1), std::vector<int>(8, 1), 10);
    TrainHyperParams hp;
    hp.epochs = 0;
    train_victim(m, d, nullptr, hp);
    for (std::size_t w = 0; w < m.num_weighted(); ++w) {
      CHECK(m.weight(w) == before.weight(w));
      CHECK(m.bias(w) == before.bias(w));
    }
  }
  SUBCASE("same seed, same model") {
    std::mt19937_64 rng(2);
    const Dataset d(random_tensor({64, 28, 28}, rng, 0, 1), test::random_targets(64, 10, rng), 10);
    TrainHyperParams hp;
    hp.epochs = 1;
    ModelGraph a = desk_cnn(), b = desk_cnn();
    initialize_weights(a, 5);
    initialize_weights(b, 5);
    train_victim(a, d, nullptr, hp);
    train_victim(b, d, nullptr, hp);
    for (std::size_t w = 0; w < a.num_weighted(); ++w) CHECK(a.weight(w) == b.weight(w));
  }
  SUBCASE("quantized model is rejected") {
    ModelGraph m({2}, {LayerSpec::dense(2, 2)});
    initialize_weights(m, 0);
    m.quantize(8);
    const Dataset d(Tensor({2, 2}, 1.0), {0, 1}, 2);
    CHECK_THROWS_AS(train_victim(m, d, nullptr, {}), TrainingError);
  }
}

TEST_CASE("desk CNN has about 100K weights") {
  CHECK(desk_cnn().num_weights() == 105544);
}

TEST_CASE("evaluator cache agrees with a fresh evaluation after edits") {
  std::mt19937_64 rng(12);
  ModelGraph m = desk_cnn();
  initialize_weights(m, 4);
  m.quantize(8);
  const Dataset d(random_tensor({30, 28, 28}, rng, 0, 1), test::random_targets(30, 10, rng), 10);
  Evaluator ev(d, 7);
  ev.evaluate(m);
  for (std::size_t w : {3u, 1u, 0u}) {
    m.flip_bit({w, 5, 7});
    const ValidationMetrics cached = ev.evaluate(m);
    const ValidationMetrics fresh = evaluate(m, d);
    CHECK(cached.top1 == fresh.top1);
    CHECK(cached.top5 == fresh.top5);
    CHECK(cached.loss == fresh.loss);
  }
}

TEST_CASE("top-k ties go to the lower class") {
  const Tensor logits({2, 3}, {1, 1, 0, 0, 2, 2});
  CHECK(argmax_rows(logits) == std::vector<int>{0, 1});
  const int labels[] = {1, 2};
  CHECK(top_k_accuracy(logits, labels, 1) == 0.0);
  CHECK(top_k_accuracy(logits, labels, 2) == 1.0);
}
