#include <Eigen/Dense>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "earlycast/error.hpp"
#include "earlycast/graph.hpp"
#include "earlycast/init.hpp"
#include "earlycast/kernels.hpp"
#include "earlycast/loss.hpp"
#include "earlycast/optim.hpp"
#include "earlycast/rng.hpp"
#include "gradcheck.hpp"

using namespace earlycast;
using earlycast::testing::check_gradients;

namespace {

Tensor random_tensor(Rng& rng, Shape shape, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = rng.normal(0.0, scale);
  return t;
}

Tensor random_mask(Rng& rng, Shape shape, double rate) {
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = rng.bernoulli(rate) ? 0.0 : 1.0 / (1.0 - rate);
  return t;
}

}  // namespace

TEST_CASE("rng streams are reproducible and split independently") {
  Rng a(42), b(42), c(43);
  bool differs = false;
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next_u64();
    CHECK(x == b.next_u64());
    differs |= x != c.next_u64();
  }
  CHECK(differs);

  Rng base(7);
  CHECK(base.split(1).next_u64() == Rng(7).split(1).next_u64());
  CHECK(base.split(1).next_u64() != base.split(2).next_u64());

  Rng u(3);
  for (int i = 0; i < 10000; ++i) {
    const double x = u.uniform();
    REQUIRE(x >= 0.0);
    REQUIRE(x < 1.0);
    REQUIRE(u.below(7) < 7);
  }
  CHECK(stable_hash("MTM") == stable_hash("MTM"));
  CHECK(stable_hash("MTM") != stable_hash("MTO"));
}

TEST_CASE("gemm kernel matches a naive product for ragged sizes") {
  Rng rng(11);
  for (std::size_t m : {1, 3, 4, 9}) {
    for (std::size_t n : {1, 7, 16, 33}) {
      for (std::size_t k : {1, 5, 20}) {
        Tensor a = random_tensor(rng, {m, k});
        Tensor b = random_tensor(rng, {k, n});
        Tensor c = random_tensor(rng, {m, n});
        Tensor expect = c;
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j)
            for (std::size_t p = 0; p < k; ++p) expect.at(i, j) += a.at(i, p) * b.at(p, j);
        kernels::gemm_acc(m, n, k, a.raw(), k, b.raw(), n, c.raw(), n);
        for (std::size_t i = 0; i < c.size(); ++i) REQUIRE(c[i] == expect[i]);
      }
    }
  }
}

TEST_CASE("gemm rows do not depend on batch composition") {
  Rng rng(5);
  Tensor a = random_tensor(rng, {13, 20});
  Tensor b = random_tensor(rng, {20, 256});
  Tensor full(Shape{13, 256});
  kernels::gemm_acc(13, 256, 20, a.raw(), 20, b.raw(), 256, full.raw(), 256);
  for (std::size_t r = 0; r < 13; ++r) {
    Tensor one(Shape{1, 256});
    kernels::gemm_acc(1, 256, 20, a.raw() + r * 20, 20, b.raw(), 256, one.raw(), 256);
    for (std::size_t j = 0; j < 256; ++j) REQUIRE(one[j] == full.at(r, j));
  }
}

TEST_CASE("forward primitives") {
  Graph g;
  SUBCASE("sigmoid of zero") {
    const auto s = g.sigmoid(g.constant(Tensor::scalar(0.0)));
    CHECK(g.value(s)[0] == 0.5);
  }
  SUBCASE("identity matmul") {
    Rng rng(1);
    Tensor a = random_tensor(rng, {3, 3});
    const auto out = g.matmul(g.constant(Tensor::matrix(3, 3, {1, 0, 0, 0, 1, 0, 0, 0, 1})), g.constant(a));
    CHECK(g.value(out) == a);
  }
  SUBCASE("tanh against a high-precision reference") {
    const auto out = g.tanh(g.constant(Tensor::vector({0.0, 1.0})));
    CHECK(g.value(out)[0] == 0.0);
    // tanh(1) = 0.761594155955764888119... (30-digit evaluation)
    CHECK(g.value(out)[1] == doctest::Approx(0.761594155955764888).epsilon(1e-15));
  }
  SUBCASE("shape mismatch names node and shapes") {
    const auto a = g.constant(Tensor(Shape{2, 3}));
    const auto b = g.constant(Tensor(Shape{4, 5}));
    try {
      g.matmul(a, b);
      FAIL("expected a shape error");
    } catch (const ShapeError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("node 2") != std::string::npos);
      CHECK(msg.find("matmul") != std::string::npos);
      CHECK(msg.find("[4x5]") != std::string::npos);
    }
  }
  SUBCASE("causal convolution with zero left padding") {
    const auto in = g.constant(Tensor(Shape{1, 4, 1}, {1, 2, 3, 4}));
    const auto kernel = g.constant(Tensor(Shape{1, 2, 1}, {1, 1}));
    const auto bias = g.constant(Tensor(Shape{1}, {0.0}));
    const auto out = g.causal_conv(in, kernel, bias, 2);
    CHECK(g.value(out) == Tensor(Shape{1, 4, 1}, {1, 2, 4, 6}));
  }
  SUBCASE("nodes reference only earlier nodes") {
    Rng rng(2);
    Tensor w = random_tensor(rng, {3, 2});
    const auto x = g.constant(random_tensor(rng, {4, 3}));
    const auto y = g.sigmoid(g.matmul(x, g.parameter(w)));
    g.sum(g.mul(y, y));
    for (NodeId i = 0; i < g.size(); ++i)
      for (NodeId in : g.inputs(i)) CHECK(in < i);
  }
}

TEST_CASE("backward analytic cases") {
  SUBCASE("sum of squares") {
    Tensor w = Tensor::vector({1.0, 2.0});
    Graph g;
    const auto p = g.parameter(w);
    g.backward(g.sum(g.mul(p, p)));
    CHECK(w.grad()[0] == 2.0);
    CHECK(w.grad()[1] == 4.0);
  }
  SUBCASE("loss independent of a parameter") {
    Tensor w = Tensor::vector({1.0, 2.0});
    Tensor v = Tensor::vector({3.0});
    Graph g;
    g.parameter(w);
    const auto pv = g.parameter(v);
    g.backward(g.sum(g.mul(pv, pv)));
    CHECK(w.grad()[0] == 0.0);
    CHECK(w.grad()[1] == 0.0);
    CHECK(v.grad()[0] == 6.0);
  }
  SUBCASE("non-scalar loss is rejected") {
    Tensor w = Tensor::vector({1.0, 2.0});
    Graph g;
    const auto p = g.parameter(w);
    CHECK_THROWS_AS(g.backward(g.mul(p, p)), ShapeError);
  }
  SUBCASE("gradients reset between backward calls") {
    Tensor w = Tensor::vector({1.0});
    for (int i = 0; i < 2; ++i) {
      Graph g;
      const auto p = g.parameter(w);
      g.backward(g.sum(g.mul(p, p)));
    }
    CHECK(w.grad()[0] == 2.0);
  }
}

TEST_CASE("three-layer sigmoid network matches finite differences") {
  Rng rng(2024);
  Tensor x = random_tensor(rng, {5, 4});
  Tensor w1 = random_tensor(rng, {4, 6}, 0.7), b1 = random_tensor(rng, {6}, 0.1);
  Tensor w2 = random_tensor(rng, {6, 5}, 0.7), b2 = random_tensor(rng, {5}, 0.1);
  Tensor w3 = random_tensor(rng, {5, 1}, 0.7), b3 = random_tensor(rng, {1}, 0.1);
  Tensor target(Shape{5, 1});
  for (std::size_t i = 0; i < 5; ++i) target[i] = static_cast<double>(i % 2);
  auto build = [&](Graph& g) {
    auto layer = [&](NodeId in, Tensor& w, Tensor& b) { return g.sigmoid(g.add(g.matmul(in, g.parameter(w)), g.parameter(b))); };
    const auto h1 = layer(g.constant(x), w1, b1);
    const auto h2 = layer(h1, w2, b2);
    return g.bce(layer(h2, w3, b3), target);
  };
  const auto r = check_gradients(build, {&w1, &b1, &w2, &b2, &w3, &b3});
  CHECK(r.checked == 24 + 6 + 30 + 5 + 5 + 1);
  CHECK(r.max_relative_error < 1e-4);
}

TEST_CASE("gradient property: random compositions of every primitive") {
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    CAPTURE(seed);
    Rng rng(100 + seed);
    const std::size_t batch = 2 + rng.below(2), steps = 3 + rng.below(3), feat = 2 + rng.below(2), hid = 2 + rng.below(2);
    Tensor seq = random_tensor(rng, {batch, steps, feat});
    Tensor w = random_tensor(rng, {feat, 4 * hid}, 0.5), u = random_tensor(rng, {hid, 4 * hid}, 0.5);
    Tensor b = random_tensor(rng, {4 * hid}, 0.1);
    Tensor kernel = random_tensor(rng, {feat, 2, hid}, 0.5), kbias = random_tensor(rng, {hid}, 0.1);
    Tensor head = random_tensor(rng, {2 * hid, feat}, 0.5), hbias = random_tensor(rng, {feat}, 0.1);
    Tensor rec_mask = random_mask(rng, {batch, 4 * hid}, 0.3);
    std::vector<Tensor> drop_masks;
    for (std::size_t t = 0; t < steps; ++t) drop_masks.push_back(random_mask(rng, {batch, hid}, 0.3));
    Tensor mse_target = random_tensor(rng, {batch, steps, feat});
    Tensor bce_target(Shape{batch, steps, feat});
    for (double& v : bce_target.data()) v = rng.bernoulli(0.5) ? 1.0 : 0.0;
    const std::size_t dilation = 1 + rng.below(2);

    auto build = [&](Graph& g) {
      const auto in = g.constant(seq);
      const auto conv = g.relu(g.causal_conv(in, g.parameter(kernel), g.parameter(kbias), dilation));
      NodeId state = g.constant(Tensor(Shape{batch, 2 * hid}));
      std::vector<NodeId> outs;
      for (std::size_t t = 0; t < steps; ++t) {
        state = g.lstm_cell(g.time_slice(in, t), state, g.parameter(w), g.parameter(u), g.parameter(b), &rec_mask);
        const auto h = g.dropout(g.slice_cols(state, 0, hid), drop_masks[t]);
        const auto conv_t = g.reshape(g.time_slice(conv, t), Shape{batch, hid});
        const auto joined = g.concat(h, g.tanh(conv_t));
        outs.push_back(g.add(g.matmul(joined, g.parameter(head)), g.parameter(hbias)));
      }
      const auto stacked = g.stack_time(outs);
      const auto reg = g.mse(stacked, mse_target);
      const auto cls = g.bce(g.sigmoid(stacked), bce_target);
      return g.add(reg, g.sum(g.mul(cls, cls)));
    };
    const auto r = check_gradients(build, {&w, &u, &b, &kernel, &kbias, &head, &hbias});
    CHECK(r.max_relative_error < 1e-4);
  }
}

TEST_CASE("forward and backward are deterministic") {
  auto run = [] {
    Rng rng(9);
    Tensor w = init_xavier_uniform(rng, 3, 8), u = init_orthogonal(rng, 2, 8);
    Tensor b(Shape{8});
    Tensor x = random_tensor(rng, {4, 3});
    Graph g;
    const auto s = g.lstm_cell(g.constant(x), g.constant(Tensor(Shape{4, 4})), g.parameter(w), g.parameter(u), g.parameter(b), nullptr);
    g.backward(g.sum(s));
    std::vector<double> out(g.value(s).data().begin(), g.value(s).data().end());
    out.insert(out.end(), w.grad().begin(), w.grad().end());
    out.insert(out.end(), u.grad().begin(), u.grad().end());
    return out;
  };
  CHECK(run() == run());
}

TEST_CASE("adam update") {
  SUBCASE("first step moves by the learning rate against the gradient sign") {
    Tensor w = Tensor::vector({0.0, 1.0, -2.0});
    auto g = w.grad();
    g[0] = 3.5;
    g[1] = -0.02;
    g[2] = 1e-3;
    AdamState state;
    Tensor* params[] = {&w};
    adam_step(state, params);
    CHECK(std::abs(w[0] + 0.001) < 1e-6);
    CHECK(std::abs(w[1] - (1.0 + 0.001)) < 1e-6);
    CHECK(std::abs(w[2] - (-2.0 - 0.001)) < 1e-6);
    CHECK(state.step_count == 1);
  }
  SUBCASE("zero gradient leaves the parameter unchanged") {
    Tensor w = Tensor::vector({0.25});
    w.zero_grad();
    AdamState state;
    Tensor* params[] = {&w};
    adam_step(state, params);
    CHECK(w[0] == 0.25);
  }
  SUBCASE("two steps with constant unit gradient") {
    Tensor w = Tensor::vector({0.0});
    AdamState state;
    Tensor* params[] = {&w};
    for (int i = 0; i < 2; ++i) {
      w.grad()[0] = 1.0;
      adam_step(state, params);
    }
    // Hand-executed recurrence: both bias-corrected steps equal 0.001 / (1 + 1e-7).
    CHECK(w[0] == doctest::Approx(-0.001999999800000013).epsilon(1e-14));
    CHECK(state.step_count == 2);
  }
  SUBCASE("length mismatch") {
    Tensor w = Tensor::vector({0.0, 1.0});
    std::vector<double> grad{1.0};
    std::span<double> values[] = {w.data()};
    std::span<const double> grads[] = {grad};
    AdamState state;
    CHECK_THROWS_AS(adam_step(state, values, grads), ShapeError);
  }
}

TEST_CASE("binary cross-entropy") {
  const std::vector<double> half{0.5}, one{1.0}, t1{1.0};
  CHECK(bce_value(half, t1) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(bce_value(one, t1) == doctest::Approx(1e-7).epsilon(1e-6));
  const std::vector<double> p{0.9, 0.2}, t{1.0, 0.0};
  CHECK(bce_value(p, t) == doctest::Approx(0.164252033486018).epsilon(1e-13));
  CHECK_THROWS_AS(bce_value(std::vector<double>{}, std::vector<double>{}), ShapeError);

  Graph g;
  Tensor pred = Tensor::vector({0.9, 0.2});
  const auto loss = g.bce(g.constant(pred), Tensor::vector({1.0, 0.0}));
  CHECK(g.value(loss)[0] == bce_value(p, t));
}

TEST_CASE("mean squared error") {
  const std::vector<double> a{1.0, 2.0}, zeros{0.0, 0.0};
  CHECK(mse_value(a, a) == 0.0);
  CHECK(mse_value(a, zeros) == 2.5);
  Rng rng(77);
  std::vector<double> x(50), y(50);
  for (auto& v : x) v = rng.normal();
  for (auto& v : y) v = rng.normal();
  long double ref = 0.0L;
  for (std::size_t i = 0; i < x.size(); ++i) ref += (static_cast<long double>(x[i]) - y[i]) * (static_cast<long double>(x[i]) - y[i]);
  ref /= x.size();
  CHECK(std::abs(mse_value(x, y) - static_cast<double>(ref)) < 1e-12);

  Graph g;
  CHECK_THROWS_AS(g.mse(g.constant(Tensor(Shape{2, 2})), Tensor(Shape{4})), ShapeError);
}

TEST_CASE("xavier uniform initializer") {
  Rng rng(1);
  Tensor w = init_xavier_uniform(rng, 20, 256);
  CHECK(w.shape() == Shape{20, 256});
  const double limit = 0.147441956154897133;
  for (double v : w.data()) REQUIRE(std::abs(v) <= limit);

  Rng big(2);
  double sum = 0.0;
  for (int i = 0; i < 11112; ++i) {
    Tensor s = init_xavier_uniform(big, 3, 3);
    for (double v : s.data()) sum += v;
  }
  CHECK(std::abs(sum / (11112.0 * 9.0)) < 0.01);

  Rng r1(5), r2(5);
  CHECK(init_xavier_uniform(r1, 7, 9) == init_xavier_uniform(r2, 7, 9));
}

TEST_CASE("orthogonal initializer") {
  Rng rng(3);
  Tensor q = init_orthogonal(rng, 64, 64);
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> m(q.raw(), 64, 64);
  const Eigen::MatrixXd gram = m.transpose() * m;
  CHECK((gram - Eigen::MatrixXd::Identity(64, 64)).cwiseAbs().maxCoeff() < 1e-10);
  CHECK(std::abs(std::abs(Eigen::MatrixXd(m).determinant()) - 1.0) < 1e-8);

  Tensor one = init_orthogonal(rng, 1, 1);
  CHECK(std::abs(one[0]) == doctest::Approx(1.0).epsilon(1e-15));

  Tensor wide = init_orthogonal(rng, 16, 64);
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> mw(wide.raw(), 16, 64);
  CHECK((mw * mw.transpose() - Eigen::MatrixXd::Identity(16, 16)).cwiseAbs().maxCoeff() < 1e-10);

  Tensor tall = init_orthogonal(rng, 64, 16);
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> mt(tall.raw(), 64, 16);
  CHECK((mt.transpose() * mt - Eigen::MatrixXd::Identity(16, 16)).cwiseAbs().maxCoeff() < 1e-10);

  Rng r1(8), r2(8);
  CHECK(init_orthogonal(r1, 8, 32) == init_orthogonal(r2, 8, 32));
}

TEST_CASE("he normal initializer") {
  Rng rng(4);
  Tensor w = init_he_normal(rng, 2, Shape{1000, 1000});
  double mean = 0.0;
  for (double v : w.data()) mean += v;
  mean /= static_cast<double>(w.size());
  double var = 0.0;
  for (double v : w.data()) var += (v - mean) * (v - mean);
  const double stddev = std::sqrt(var / static_cast<double>(w.size() - 1));
  CHECK(std::abs(mean) < 0.005);
  CHECK(std::abs(stddev - 1.0) < 0.005);

  Rng r1(6), r2(6);
  CHECK(init_he_normal(r1, 40, Shape{20, 2, 20}) == init_he_normal(r2, 40, Shape{20, 2, 20}));
}
