#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <limits>

#include "seiznet/binary_io.hpp"
#include "seiznet/error.hpp"
#include "seiznet/nn.hpp"
#include "seiznet/random.hpp"

using namespace seiznet;
using namespace seiznet::nn;
using signal::Label;
using signal::SampleWindow;

namespace {

// Scalar reference for the loss, written out independently of the library.
double focal_reference(double p, int y, double alpha, double gamma) {
  p = std::clamp(p, 1e-7, 1.0 - 1e-7);
  return y == 1 ? -alpha * std::pow(1.0 - p, gamma) * std::log(p)
                : -(1.0 - alpha) * std::pow(p, gamma) * std::log(1.0 - p);
}

ModelSpec miniature() {
  ModelSpec s;
  s.input_channels = 1;
  s.input_length = 8;
  s.conv_blocks = {{3, 3, 2}, {4, 3, 2}};
  s.dense_widths = {5, 3, 1};
  return s;
}

SampleWindow random_window(std::uint32_t channels, std::uint32_t length, Rng& rng, Label label) {
  SampleWindow w;
  w.sample_rate_hz = length / 4 == 0 ? 1 : length / 4;
  w.channels.assign(channels, std::vector<float>(length));
  for (auto& ch : w.channels) {
    for (auto& v : ch) v = static_cast<float>(standard_normal(rng));
  }
  w.label = label;
  return w;
}

// Random parameters with nontrivial batch norm so every tensor matters.
BasicModelParams<double> random_params(const ModelSpec& spec, std::uint64_t seed) {
  auto p = init_params<double>(spec, seed);
  Rng rng(seed ^ 0x5eed);
  const auto layout = p.layout();
  for (std::size_t i = 0; i < layout.trainable; ++i) p.values[i] += 0.3 * standard_normal(rng);
  for (auto& v : p.slice(layout.bn_running_mean)) v = 0.2 * standard_normal(rng);
  for (auto& v : p.slice(layout.bn_running_var)) v = 0.5 + uniform01(rng);
  return p;
}

double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6});
}

std::vector<SampleWindow> toy_dataset(std::size_t n, std::uint32_t length, std::uint64_t seed) {
  // Preictal windows carry a positive offset: trivially learnable.
  Rng rng(seed);
  std::vector<SampleWindow> out;
  for (std::size_t i = 0; i < n; ++i) {
    const bool pre = i % 4 == 0;
    auto w = random_window(1, length, rng, pre ? Label::Preictal : Label::Interictal);
    if (pre) {
      for (auto& v : w.channels[0]) v += 1.5f;
    }
    out.push_back(std::move(w));
  }
  return out;
}

}  // namespace

TEST_CASE("focal loss point values and reductions") {
  const FocalLossConfig def;
  CHECK(def.alpha == 0.2);
  CHECK(def.gamma == 2.0);
  CHECK(focal_loss(0.5, 1, def) == doctest::Approx(0.2 * 0.25 * std::log(2.0)).epsilon(1e-12));
  CHECK(std::abs(focal_loss(0.5, 1, def) - 0.0346574) < 1e-6);
  CHECK(focal_loss(1.0 - 1e-9, 1, def) < 1e-12);

  const FocalLossConfig ce{0.5, 0.0};
  for (int i = 1; i <= 99; ++i) {
    const double p = i / 100.0;
    CHECK(std::abs(focal_loss(p, 1, ce) - 0.5 * -std::log(p)) <= 1e-12);
    CHECK(std::abs(focal_loss(p, 0, ce) - 0.5 * -std::log(1.0 - p)) <= 1e-12);
  }
}

TEST_CASE("focal loss matches an independent scalar evaluation") {
  Rng rng(1);
  for (int i = 0; i < 500; ++i) {
    const double p = uniform01(rng);
    const double a = uniform(rng, 0.01, 0.99);
    const double g = uniform(rng, 0.0, 5.0);
    const int y = static_cast<int>(i % 2);
    CHECK(focal_loss(p, y, {a, g}) == doctest::Approx(focal_reference(p, y, a, g)).epsilon(1e-12));
  }
}

TEST_CASE("gamma down-weights every probability") {
  for (int i = 1; i < 1000; ++i) {
    const double p = i / 1000.0;
    CHECK(focal_loss(p, 1, {0.2, 2.0}) <= focal_loss(p, 1, {0.2, 0.0}));
    CHECK(focal_loss(p, 0, {0.2, 2.0}) <= focal_loss(p, 0, {0.2, 0.0}));
    if (i > 1) CHECK(focal_loss(p, 1, {0.2, 2.0}) < focal_loss((i - 1) / 1000.0, 1, {0.2, 2.0}));
  }
}

TEST_CASE("focal loss rejects NaN and bad configs") {
  CHECK_THROWS_AS(focal_loss(std::nan(""), 1), NumericError);
  CHECK_THROWS_AS(focal_loss_grad(std::nan(""), 0), NumericError);
  CHECK_THROWS_AS(focal_loss(0.5, 1, {-0.1, 2.0}), ConfigError);
  CHECK_THROWS_AS(focal_loss(0.5, 1, {1.5, 2.0}), ConfigError);
  CHECK_THROWS_AS(FocalLossConfig({0.0, 2.0}).validate(), ConfigError);
  CHECK_THROWS_AS(focal_loss(0.5, 1, {0.5, -1.0}), ConfigError);
  // Clamping keeps the extremes finite.
  CHECK(std::isfinite(focal_loss(0.0, 1)));
  CHECK(std::isfinite(focal_loss(1.0, 0)));
}

TEST_CASE("focal loss gradient against finite differences") {
  CHECK(focal_loss_grad(0.3, 1, {1.0, 0.0}) == doctest::Approx(-1.0 / 0.3).epsilon(1e-12));
  const double h = 1e-5;
  auto fd = [&](double p, int y, FocalLossConfig c) {
    return (focal_reference(p + h, y, c.alpha, c.gamma) - focal_reference(p - h, y, c.alpha, c.gamma)) / (2 * h);
  };
  CHECK(rel_err(focal_loss_grad(0.5, 1), fd(0.5, 1, {})) <= 1e-5);
  CHECK(rel_err(focal_loss_grad(0.3, 0), fd(0.3, 0, {})) <= 1e-5);
  Rng rng(3);
  for (int i = 0; i < 200; ++i) {
    const double p = uniform(rng, 0.01, 0.99);
    const FocalLossConfig c{uniform(rng, 0.05, 0.95), uniform(rng, 0.0, 4.0)};
    for (int y : {0, 1}) CHECK(rel_err(focal_loss_grad(p, y, c), fd(p, y, c)) <= 1e-5);
  }
}

TEST_CASE("logit gradient is the chain rule through the sigmoid") {
  Rng rng(4);
  for (int i = 0; i < 200; ++i) {
    const double z = uniform(rng, -8.0, 8.0);
    const FocalLossConfig c{uniform(rng, 0.05, 0.95), uniform(rng, 0.0, 4.0)};
    const double h = 1e-5;
    for (int y : {0, 1}) {
      auto f = [&](double zz) { return focal_reference(1.0 / (1.0 + std::exp(-zz)), y, c.alpha, c.gamma); };
      CHECK(rel_err(focal_loss_logit_grad(z, y, c), (f(z + h) - f(z - h)) / (2 * h)) <= 1e-5);
    }
  }
  // Saturated logits stay finite.
  CHECK(std::isfinite(focal_loss_logit_grad(500.0, 0)));
  CHECK(std::isfinite(focal_loss_logit_grad(-500.0, 1)));
}

TEST_CASE("logit-space loss agrees with the probability form and keeps precision") {
  Rng rng(5);
  for (int i = 0; i < 200; ++i) {
    const double z = uniform(rng, -12.0, 12.0);
    const FocalLossConfig c{uniform(rng, 0.05, 0.95), uniform(rng, 0.0, 4.0)};
    for (int y : {0, 1}) {
      const double p = 1.0 / (1.0 + std::exp(-z));
      CHECK(focal_loss_from_logit(z, y, c) == doctest::Approx(focal_reference(p, y, c.alpha, c.gamma)).epsilon(1e-9));
    }
  }
  // Deep in saturation the exact value is alpha-weighted softplus: -log(1 - p) = z + log1p(e^-z).
  const double z = 40.0;
  CHECK(focal_loss_from_logit(z, 0, {0.5, 0.0}) == doctest::Approx(0.5 * (z + std::log1p(std::exp(-z)))));
  CHECK(focal_loss_from_logit(-z, 1, {0.5, 0.0}) == doctest::Approx(0.5 * z));
  // Its derivative is the logit gradient, with no clamp-induced flat region.
  for (double zz : {-30.0, -3.0, 0.0, 2.5, 30.0}) {
    for (int y : {0, 1}) {
      const double h = 1e-5;
      const double fd = (focal_loss_from_logit(zz + h, y) - focal_loss_from_logit(zz - h, y)) / (2 * h);
      CHECK(rel_err(focal_loss_logit_grad(zz, y), fd) <= 1e-6);
    }
  }
  CHECK_THROWS_AS(focal_loss_from_logit(std::nan(""), 1), NumericError);
}

TEST_CASE("reference topology and shape conservation") {
  const auto spec = ModelSpec::reference();
  CHECK(spec.is_reference_topology());
  CHECK(spec.conv_blocks.size() == 5);
  CHECK(spec.dense_widths == std::vector<std::uint32_t>{256, 64, 16, 1});
  for (std::size_t k = 0; k <= 5; ++k) CHECK(spec.length_after(k) == 1024u >> k);
  CHECK(spec.flatten_size() == 64 * 32);
  CHECK_FALSE(miniature().is_reference_topology());

  auto bad = spec;
  bad.input_length = 1000;  // not divisible by 32
  CHECK_THROWS_AS(bad.validate(), ShapeError);
  bad = spec;
  bad.dense_widths.back() = 2;
  CHECK_THROWS_AS(bad.validate(), ShapeError);
  bad = spec;
  bad.conv_blocks[1].kernel_size = 4;
  CHECK_THROWS_AS(bad.validate(), ShapeError);
}

TEST_CASE("forward: range, zero model, determinism, shape errors") {
  const auto spec = ModelSpec::reference(1, 256);
  Rng rng(9);
  const auto w = random_window(1, 256, rng, Label::Interictal);

  const BasicModelParams<float> zeros(spec);
  CHECK(forward(zeros, w) == 0.5f);

  const auto p = init_params<float>(spec, 42);
  const float a = forward(p, w);
  CHECK(a > 0.0f);
  CHECK(a < 1.0f);
  CHECK(forward(p, w) == a);

  auto big = w;
  for (auto& v : big.channels[0]) v *= 1e4f;
  const float b = forward(p, big);
  CHECK(b >= 0.0f);
  CHECK(b <= 1.0f);

  const auto wrong = random_window(1, 128, rng, Label::Interictal);
  try {
    forward(p, wrong);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("256") != std::string::npos);
    CHECK(msg.find("128") != std::string::npos);
  }
  CHECK_THROWS_AS(forward(p, random_window(2, 256, rng, Label::Interictal)), ShapeError);
}

TEST_CASE("backward matches central finite differences on the miniature network") {
  const auto spec = miniature();
  const FocalLossConfig fl;
  for (std::uint64_t draw = 0; draw < 20; ++draw) {
    const auto params = random_params(spec, 100 + draw);
    Rng rng(draw);
    const std::vector<SampleWindow> batch{random_window(1, 8, rng, draw % 2 ? Label::Preictal : Label::Interictal)};
    const auto g = backward(params, batch, fl);
    const auto layout = params.layout();
    CHECK(g.loss == doctest::Approx(batch_loss(params, batch, fl)).epsilon(1e-12));
    for (std::size_t i = layout.trainable; i < layout.total; ++i) CHECK(g.values[i] == 0.0);
    const double h = 1e-6;
    for (std::size_t i = 0; i < layout.trainable; ++i) {
      auto plus = params, minus = params;
      plus.values[i] += h;
      minus.values[i] -= h;
      const double numeric = (batch_loss(plus, batch, fl) - batch_loss(minus, batch, fl)) / (2 * h);
      INFO("draw " << draw << " param " << layout.name_of(i));
      CHECK(rel_err(g.values[i], numeric) <= 1e-4);
    }
  }
}

TEST_CASE("batch gradient is the sum of per-sample gradients") {
  const auto spec = miniature();
  const auto params = random_params(spec, 7);
  Rng rng(7);
  std::vector<SampleWindow> batch;
  for (int i = 0; i < 5; ++i) batch.push_back(random_window(1, 8, rng, i % 2 ? Label::Preictal : Label::Interictal));
  const auto whole = backward(params, batch, {});
  std::vector<double> sum(whole.values.size(), 0.0);
  double loss = 0.0;
  for (const auto& w : batch) {
    const auto g = backward(params, std::vector<SampleWindow>{w}, {});
    for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += g.values[i];
    loss += g.loss;
  }
  for (std::size_t i = 0; i < sum.size(); ++i) CHECK(whole.values[i] == doctest::Approx(sum[i]).epsilon(1e-10));
  CHECK(whole.loss == doctest::Approx(loss).epsilon(1e-12));
}

TEST_CASE("balanced symmetric batch at p = 0.5 is a stationary point") {
  const auto spec = miniature();
  auto params = random_params(spec, 3);
  // Zero the output layer so p = 0.5 for every input.
  const auto layout = params.layout();
  for (auto& v : params.slice(layout.dense_weight.back())) v = 0.0;
  for (auto& v : params.slice(layout.dense_bias.back())) v = 0.0;
  Rng rng(3);
  auto pos = random_window(1, 8, rng, Label::Preictal);
  auto neg = pos;
  neg.label = Label::Interictal;
  const auto g = backward(params, std::vector<SampleWindow>{pos, neg}, FocalLossConfig::cross_entropy());
  for (double v : g.values) CHECK(v == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("predict_proba consistency") {
  const auto spec = ModelSpec::reference(1, 256);
  const auto p = init_params<float>(spec, 5);
  Rng rng(5);
  const auto w = random_window(1, 256, rng, Label::Interictal);
  CHECK(predict_proba(p, {}).empty());
  const auto single = predict_proba(p, std::vector<SampleWindow>{w});
  REQUIRE(single.size() == 1);
  CHECK(single[0] == static_cast<double>(forward(p, w)));
  const auto many = predict_proba(p, std::vector<SampleWindow>(6, w));
  for (double v : many) CHECK(v == single[0]);

  auto multi = w;
  multi.channels.push_back(w.channels[0]);
  const auto per_channel = predict_channels(p, multi);
  REQUIRE(per_channel.size() == 2);
  CHECK(per_channel[0] == single[0]);
  CHECK(per_channel[1] == single[0]);
}

TEST_CASE("training: zero epochs, determinism, convergence on an easy task") {
  auto spec = miniature();
  spec.input_length = 32;
  signal::DatasetSplit split;
  split.train = toy_dataset(160, 32, 1);
  split.validation = toy_dataset(40, 32, 2);
  split.test = toy_dataset(80, 32, 3);

  TrainConfig tc;
  tc.seed = 11;
  tc.max_epochs = 0;
  const auto none = train(spec, split, {}, tc);
  CHECK(none.params == init_params<float>(spec, 11));
  CHECK(none.curve.empty());

  tc.max_epochs = 25;
  tc.batch_size = 16;
  tc.learning_rate = 3e-3;
  const auto a = train(spec, split, {}, tc);
  const auto b = train(spec, split, {}, tc);
  CHECK(a.params == b.params);
  CHECK(a.curve.size() >= 1);
  CHECK(a.best_epoch >= 1);
  double best = std::numeric_limits<double>::infinity();
  for (const auto& e : a.curve) best = std::min(best, e.val_loss);
  CHECK(a.curve[a.best_epoch - 1].val_loss == best);

  std::size_t correct = 0;
  const auto probs = predict_proba(a.params, split.test);
  for (std::size_t i = 0; i < probs.size(); ++i)
    correct += (probs[i] >= 0.5) == (split.test[i].label == Label::Preictal);
  CHECK(static_cast<double>(correct) / static_cast<double>(probs.size()) >= 0.95);

  const auto csv = curve_csv(a.curve);
  CHECK(csv.rfind("epoch,train_loss,val_loss,val_auc\n", 0) == 0);
}

TEST_CASE("every optimizer reduces the training loss") {
  auto spec = miniature();
  spec.input_length = 32;
  signal::DatasetSplit split;
  split.train = toy_dataset(96, 32, 4);
  split.validation = toy_dataset(32, 32, 5);
  for (auto opt : {Optimizer::Sgd, Optimizer::Momentum, Optimizer::Adam}) {
    TrainConfig tc;
    tc.optimizer = opt;
    tc.max_epochs = 10;
    tc.batch_size = 16;
    tc.learning_rate = opt == Optimizer::Adam ? 3e-3 : 0.05;
    tc.patience = 100;
    const auto r = train(spec, split, {}, tc);
    CHECK(r.curve.back().train_loss < r.curve.front().train_loss);
  }
  CHECK(parse_optimizer("adam") == Optimizer::Adam);
  CHECK_THROWS_AS(parse_optimizer("rmsprop"), ConfigError);
}

TEST_CASE("divergence raises a training error with the epoch") {
  auto spec = miniature();
  spec.input_length = 32;
  signal::DatasetSplit split;
  split.train = toy_dataset(64, 32, 6);
  split.validation = toy_dataset(16, 32, 7);
  TrainConfig tc;
  tc.optimizer = Optimizer::Sgd;
  tc.learning_rate = 1e30;
  tc.max_epochs = 5;
  try {
    train(spec, split, {}, tc);
    FAIL("expected TrainingError");
  } catch (const TrainingError& e) {
    CHECK(e.epoch() >= 1);
  }
}

TEST_CASE("training configuration validation") {
  TrainConfig tc;
  tc.learning_rate = 0.0;
  CHECK_THROWS_AS(tc.validate(), ConfigError);
  tc = {};
  tc.batch_size = 0;
  CHECK_THROWS_AS(tc.validate(), ConfigError);
  signal::DatasetSplit empty;
  CHECK_THROWS_AS(train(miniature(), empty, {}, TrainConfig{}), InsufficientDataError);
}

TEST_CASE("checkpoint round trip and corruption") {
  const auto p = init_params<float>(ModelSpec::reference(1, 256), 77);
  const auto bytes = encode_checkpoint(p);
  CHECK(decode_checkpoint(bytes) == p);

  const auto dir = std::filesystem::temp_directory_path() / "seiznet_test_nn";
  save_checkpoint(p, dir / "m.sznm");
  CHECK(load_checkpoint(dir / "m.sznm") == p);
  std::filesystem::remove_all(dir);

  auto bad = bytes;
  bad[0] = 'Q';
  CHECK_THROWS_AS(decode_checkpoint(bad), FormatError);
  bad = bytes;
  bad[bytes.size() / 2] ^= 1;
  CHECK_THROWS_AS(decode_checkpoint(bad), FormatError);
  std::vector<std::uint8_t> cut(bytes.begin(), bytes.begin() + 40);
  CHECK_THROWS_AS(decode_checkpoint(cut), FormatError);
}

TEST_CASE("parameter validation catches non-finite values and bad variances") {
  auto p = init_params<float>(miniature(), 1);
  CHECK_NOTHROW(p.validate());
  auto q = p;
  q.values[0] = std::numeric_limits<float>::quiet_NaN();
  CHECK_THROWS_AS(q.validate(), NumericError);
  q = p;
  q.slice(q.layout().bn_running_var)[0] = 0.0f;
  CHECK_THROWS_AS(q.validate(), NumericError);
  q = p;
  q.values.pop_back();
  CHECK_THROWS_AS(q.validate(), ShapeError);
}
