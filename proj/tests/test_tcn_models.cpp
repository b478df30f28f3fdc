#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "earlycast/error.hpp"
#include "earlycast/tcn_model.hpp"
#include "gradcheck.hpp"
#include "probes.hpp"

using namespace earlycast;

namespace {

Tensor random_tensor(Rng& rng, Shape shape, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = rng.normal(0.0, scale);
  return t;
}

TcnModel random_tcn(const TcnConfig& cfg, std::uint64_t seed) {
  Rng rng(seed);
  TcnModel m = build_tcn(cfg, rng);
  for (auto& b : m.blocks)
    for (Tensor* p : {&b.conv1_b, &b.conv2_b}) for (double& v : p->data()) v = rng.normal(0.0, 0.1);
  return m;
}

}  // namespace

TEST_CASE("presets, parameter counts and receptive fields") {
  Rng rng(1);
  const TcnConfig c10 = TcnConfig::tcn10(), c30 = TcnConfig::tcn30(), c60 = TcnConfig::tcn60();
  CHECK(build_tcn(c10, rng).parameter_count() == 8257);
  CHECK(build_tcn(c30, rng).parameter_count() == 9861);
  CHECK(build_tcn(c60, rng).parameter_count() == 13141);
  CHECK(c10.nominal_receptive_field() == 10);
  CHECK(c30.nominal_receptive_field() == 30);
  CHECK(c60.nominal_receptive_field() == 60);
  CHECK(c10.receptive_field() == 13);
  CHECK(c30.receptive_field() == 37);
  CHECK(c60.receptive_field() == 125);
  CHECK(c10.dropout == 0.2);
  CHECK(c30.batch_size == 64);
  CHECK(TcnConfig::preset("TCN60")->dilations == std::vector<std::size_t>{1, 5, 10, 15});
  CHECK_FALSE(TcnConfig::preset("TCN20").has_value());

  for (const auto& cfg : {c10, c30, c60}) {
    std::size_t expected = tcn_block_parameter_count(cfg.input_features, cfg.kernel_size, cfg.filters);
    expected += (cfg.stacks * cfg.dilations.size() - 1) * tcn_block_parameter_count(cfg.filters, cfg.kernel_size, cfg.filters);
    expected += cfg.filters + 1;
    CHECK(build_tcn(cfg, rng).parameter_count() == expected);
  }
  CHECK(tcn_block_parameter_count(3, 2, 3) == 2 * (3 * 2 * 3 + 3));
  CHECK(tcn_block_parameter_count(2, 3, 4) == (2 * 3 * 4 + 4) + (4 * 3 * 4 + 4) + (2 * 4 + 4));

  TcnConfig bad = c10;
  bad.dilations = {};
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = c10;
  bad.dropout = 1.0;
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("downsample only on channel change") {
  Rng rng(2);
  const TcnModel t10 = build_tcn(TcnConfig::tcn10(), rng);
  CHECK(t10.blocks[0].has_downsample());
  CHECK(t10.blocks[0].down_w.shape() == Shape{20, 1, 32});
  CHECK_FALSE(t10.blocks[1].has_downsample());
  const TcnModel m = build_tcn(TcnConfig::tcn30(), rng);
  REQUIRE(m.blocks.size() == 6);
  for (std::size_t i = 0; i < 6; ++i) CHECK_FALSE(m.blocks[i].has_downsample());
  CHECK(m.blocks[3].dilation == 5);
  CHECK(m.blocks[4].dilation == 1);
}

TEST_CASE("he normal kernels") {
  Rng rng(3);
  const TcnModel m = build_tcn(TcnConfig::tcn10(), rng);
  const Tensor& w = m.blocks[1].conv2_w;  // fan_in 32 * 2
  double sq = 0.0;
  for (double v : w.data()) sq += v * v;
  CHECK(sq / static_cast<double>(w.size()) == doctest::Approx(2.0 / 64.0).epsilon(0.1));
  for (double v : m.blocks[0].conv1_b.data()) CHECK(v == 0.0);
}

TEST_CASE("zero-weight network outputs one half") {
  Rng rng(4);
  TcnModel m = build_tcn(TcnConfig::tcn10(), rng);
  for (Tensor* p : m.parameters()) std::fill(p->data().begin(), p->data().end(), 0.0);
  const auto out = tcn_forward(m, random_tensor(rng, {3, 15, 20}));
  CHECK(out.size() == 45);
  for (double y : out) CHECK(y == 0.5);
  CHECK_THROWS_AS(tcn_forward(m, Tensor(Shape{2, 15, 19})), ShapeError);
}

TEST_CASE("causality is exact") {
  Rng rng(5);
  for (const auto& cfg : {TcnConfig::tcn10(), TcnConfig::tcn30(), TcnConfig::tcn60()}) {
    const TcnModel m = random_tcn(cfg, 50);
    const Tensor x = random_tensor(rng, {4, 60, 20});
    const auto base = tcn_forward(m, x);
    for (int trial = 0; trial < 20; ++trial) {
      const std::size_t row = rng.below(4), t = rng.below(59);
      Tensor y = x;
      for (std::size_t s = t + 1; s < 60; ++s)
        for (std::size_t f = 0; f < 20; ++f) y[(row * 60 + s) * 20 + f] += rng.normal(0.0, 3.0);
      const auto out = tcn_forward(m, y);
      for (std::size_t s = 0; s <= t; ++s) REQUIRE(out[row * 60 + s] == base[row * 60 + s]);
      bool later_changed = false;
      for (std::size_t s = t + 1; s < 60; ++s) later_changed |= out[row * 60 + s] != base[row * 60 + s];
      CHECK(later_changed);
    }
  }
}

TEST_CASE("measured receptive fields") {
  CHECK(testing::probe_receptive_field(TcnConfig::tcn10()) == 13);
  CHECK(testing::probe_receptive_field(TcnConfig::tcn30()) == 37);
  CHECK(testing::probe_receptive_field(TcnConfig::tcn60()) == 125);
}

TEST_CASE("prefix and batch invariance") {
  Rng rng(6);
  const TcnModel m = random_tcn(TcnConfig::tcn60(), 60);
  const Tensor x = random_tensor(rng, {5, 60, 20});
  const auto full = tcn_forward(m, x);
  CHECK(tcn_forward(m, x) == full);
  for (std::size_t len : {1, 17, 59}) {
    Tensor prefix(Shape{5, len, 20});
    for (std::size_t r = 0; r < 5; ++r)
      std::copy_n(x.raw() + r * 60 * 20, len * 20, prefix.raw() + r * len * 20);
    const auto out = tcn_forward(m, prefix);
    for (std::size_t r = 0; r < 5; ++r)
      for (std::size_t t = 0; t < len; ++t) CHECK(out[r * len + t] == full[r * 60 + t]);
  }
  const Tensor one(Shape{60, 20}, std::vector<double>(x.raw() + 3 * 1200, x.raw() + 4 * 1200));
  const auto single = tcn_forward(m, one);
  for (std::size_t t = 0; t < 60; ++t) CHECK(single[t] == full[3 * 60 + t]);
}

TEST_CASE("residual block and network gradients match finite differences") {
  Rng rng(7);
  TcnConfig cfg;
  cfg.name = "small";
  cfg.input_features = 3;
  cfg.filters = 4;
  cfg.dilations = {2};
  cfg.dropout = 0.3;
  TcnModel block = random_tcn(cfg, 70);
  REQUIRE(block.blocks.front().has_downsample());
  SequenceBatch batch;
  batch.features = random_tensor(rng, {2, 7, 3});
  batch.labels = {1.0, 0.0};
  Rng mrng(8);
  const auto masks = sample_tcn_masks(block, 2, 7, mrng);
  CHECK(masks.size() == 2);
  auto res = testing::check_gradients([&](Graph& g) { return tcn_training_loss(g, block, batch, &masks); },
                                      block.parameters());
  CHECK(res.checked == block.parameter_count());
  CHECK(res.max_relative_error < 1e-4);

  cfg.dilations = {1, 3};
  cfg.stacks = 2;
  TcnModel net = random_tcn(cfg, 71);
  const auto masks2 = sample_tcn_masks(net, 2, 7, mrng);
  res = testing::check_gradients([&](Graph& g) { return tcn_training_loss(g, net, batch, &masks2); }, net.parameters());
  CHECK(res.max_relative_error < 1e-4);
}

TEST_CASE("training: constant labels, history length, determinism") {
  Rng rng(9);
  SequenceBatch train;
  train.features = random_tensor(rng, {40, 60, 20});
  train.labels.assign(40, 1.0);
  SequenceBatch val;
  val.features = random_tensor(rng, {8, 60, 20});
  val.labels.assign(8, 1.0);
  TcnConfig cfg = TcnConfig::tcn10();
  cfg.epochs = 50;
  Rng a(10), b(10);
  std::size_t calls = 0;
  const auto r1 = train_tcn(cfg, train, val, a, [&](std::size_t, double, double) { ++calls; });
  const auto r2 = train_tcn(cfg, train, val, b);
  CHECK(calls == 50);
  CHECK(r1.history.train.size() == 50);
  CHECK(r1.history.train.back() < 0.05);
  CHECK(r1.model.info.epochs_run == 50);
  const auto p1 = r1.model.parameters(), p2 = r2.model.parameters();
  for (std::size_t i = 0; i < p1.size(); ++i) CHECK(*p1[i] == *p2[i]);

  SequenceBatch bad = train;
  bad.features[5] = std::nan("");
  cfg.epochs = 2;
  Rng c(1);
  try {
    train_tcn(cfg, bad, val, c);
    FAIL("expected a training error");
  } catch (const TrainingError& e) {
    CHECK(std::string(e.what()).find("TCN10: non-finite training loss at epoch 1") != std::string::npos);
  }
}
