#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "handfield/nn/adam.hpp"
#include "handfield/nn/mlp.hpp"

using namespace handfield;

namespace {

MlpSpec small_spec() {
  MlpSpec spec;
  spec.input_dim = 5;
  spec.hidden = {8, 8};
  spec.output_dim = 3;
  spec.hidden_activation = Activation::kSilu;
  spec.output_activation = Activation::kIdentity;
  spec.skip_layers = {1};
  return spec;
}

}  // namespace

TEST_CASE("zero-initialized output layer emits zeros") {
  MlpSpec spec = small_spec();
  spec.zero_init_output = true;
  spec.hidden = {8};
  spec.skip_layers = {};
  Mlp mlp(spec);
  ParameterStore store;
  HashRng rng(1);
  mlp.register_params(store, "net", rng);

  HashRng in_rng(2);
  for (int it = 0; it < 10; ++it) {
    std::vector<Real> in(5), out(3);
    for (Real& v : in) v = in_rng.next_real(-2, 2);
    mlp.forward(store, in, out);
    for (Real v : out) CHECK(v == 0.0);
  }
}

TEST_CASE("single linear layer with identity weights is the identity") {
  MlpSpec spec;
  spec.input_dim = 4;
  spec.output_dim = 4;
  Mlp mlp(spec);
  ParameterStore store;
  HashRng rng(1);
  mlp.register_params(store, "net", rng);
  auto w = store.values("net.w0");
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) w[size_t(r * 4 + c)] = r == c ? 1 : 0;

  std::vector<Real> in{Real(0.5), Real(-1.25), Real(2), Real(0)};
  std::vector<Real> out(4);
  mlp.forward(store, in, out);
  for (int i = 0; i < 4; ++i) CHECK(out[size_t(i)] == in[size_t(i)]);
}

TEST_CASE("forward is deterministic") {
  Mlp mlp(small_spec());
  ParameterStore store;
  HashRng rng(3);
  mlp.register_params(store, "net", rng);
  std::vector<Real> in{1, -1, 2, 0, Real(0.5)};
  std::vector<Real> a(3), b(3);
  mlp.forward(store, in, a);
  mlp.forward(store, in, b);
  for (int i = 0; i < 3; ++i) CHECK(a[size_t(i)] == b[size_t(i)]);
}

TEST_CASE("gradients match central finite differences") {
  Mlp mlp(small_spec());
  ParameterStore store;
  HashRng rng(5);
  mlp.register_params(store, "net", rng);

  std::vector<Real> in{Real(0.4), Real(-0.8), Real(1.1), Real(0.2), Real(-0.3)};
  std::vector<Real> upstream{Real(0.7), Real(-1.2), Real(0.4)};

  MlpTape tape;
  std::vector<Real> out(3);
  mlp.forward(store, in, out, &tape);
  std::vector<Real> grad(store.size(), 0);
  std::vector<Real> d_in(5, 0);
  mlp.backward(store, tape, upstream, grad.data(), d_in);

  // loss = upstream . output
  auto loss_at = [&]() {
    std::vector<Real> o(3);
    mlp.forward(store, in, o);
    return upstream[0] * o[0] + upstream[1] * o[1] + upstream[2] * o[2];
  };

  HashRng pick(9);
  const Real h = 1e-5;
  for (int k = 0; k < 40; ++k) {
    const size_t i = size_t(pick.next_below(store.size()));
    const Real saved = store.data()[i];
    store.data()[i] = saved + h;
    const Real lp = loss_at();
    store.data()[i] = saved - h;
    const Real lm = loss_at();
    store.data()[i] = saved;
    const Real fd = (lp - lm) / (2 * h);
    const Real rel = std::abs(fd - grad[i]) / std::max({std::abs(fd), std::abs(grad[i]), Real(1e-8)});
    CHECK(rel < 1e-6);
  }

  // input gradient too
  for (int axis = 0; axis < 5; ++axis) {
    const Real saved = in[size_t(axis)];
    in[size_t(axis)] = saved + h;
    const Real lp = loss_at();
    in[size_t(axis)] = saved - h;
    const Real lm = loss_at();
    in[size_t(axis)] = saved;
    const Real fd = (lp - lm) / (2 * h);
    CHECK(std::abs(fd - d_in[size_t(axis)]) /
              std::max({std::abs(fd), std::abs(d_in[size_t(axis)]), Real(1e-8)}) <
          1e-6);
  }
}

TEST_CASE("zero upstream accumulates zero gradient") {
  Mlp mlp(small_spec());
  ParameterStore store;
  HashRng rng(5);
  mlp.register_params(store, "net", rng);
  std::vector<Real> in{1, 2, 3, 4, 5}, out(3);
  MlpTape tape;
  mlp.forward(store, in, out, &tape);
  std::vector<Real> grad(store.size(), 0);
  mlp.backward(store, tape, std::vector<Real>{0, 0, 0}, grad.data());
  for (Real g : grad) CHECK(g == 0.0);
}

TEST_CASE("linear layer gradient is the outer product") {
  MlpSpec spec;
  spec.input_dim = 3;
  spec.output_dim = 2;
  Mlp mlp(spec);
  ParameterStore store;
  HashRng rng(7);
  mlp.register_params(store, "net", rng);

  std::vector<Real> in{Real(0.5), Real(-2), Real(3)}, out(2);
  MlpTape tape;
  mlp.forward(store, in, out, &tape);
  std::vector<Real> grad(store.size(), 0);
  mlp.backward(store, tape, std::vector<Real>{1, 1}, grad.data());
  const auto& we = store.entry("net.w0");
  for (int o = 0; o < 2; ++o)
    for (int i = 0; i < 3; ++i)
      CHECK(grad[we.offset + size_t(o * 3 + i)] == doctest::Approx(in[size_t(i)]));
}

TEST_CASE("backward accumulation is linear in the upstream") {
  Mlp mlp(small_spec());
  ParameterStore store;
  HashRng rng(13);
  mlp.register_params(store, "net", rng);
  std::vector<Real> in{Real(0.1), Real(0.7), Real(-0.4), Real(1.3), Real(-1)}, out(3);
  MlpTape tape;
  mlp.forward(store, in, out, &tape);

  std::vector<Real> a{Real(0.3), Real(-0.5), Real(1.1)};
  std::vector<Real> b{Real(-0.9), Real(0.2), Real(0.6)};
  std::vector<Real> ab(3);
  for (int i = 0; i < 3; ++i) ab[size_t(i)] = a[size_t(i)] + b[size_t(i)];

  std::vector<Real> g1(store.size(), 0), g2(store.size(), 0);
  mlp.backward(store, tape, a, g1.data());
  mlp.backward(store, tape, b, g1.data());  // accumulates
  mlp.backward(store, tape, ab, g2.data());
  for (size_t i = 0; i < store.size(); ++i) CHECK(std::abs(g1[i] - g2[i]) < 1e-10);

  // two identical calls accumulate exactly double
  std::vector<Real> g3(store.size(), 0);
  mlp.backward(store, tape, a, g3.data());
  mlp.backward(store, tape, a, g3.data());
  std::vector<Real> g4(store.size(), 0);
  mlp.backward(store, tape, a, g4.data());
  for (size_t i = 0; i < store.size(); ++i) CHECK(g3[i] == 2 * g4[i]);
}

TEST_CASE("adam leaves parameters bitwise unchanged on zero gradient or zero lr") {
  ParameterStore store;
  store.add("p", {8});
  HashRng rng(1);
  for (Real& v : store.values("p")) v = rng.next_real(-1, 1);
  const std::vector<Real> before(store.data(), store.data() + store.size());

  AdamConfig cfg;
  cfg.lr = Real(1e-3);
  cfg.lr_final = Real(1e-3);
  AdamOptimizer opt(cfg, store.size());
  store.zero_grad();
  CHECK(!opt.step(store).has_value());
  for (size_t i = 0; i < store.size(); ++i) CHECK(store.data()[i] == before[i]);

  AdamConfig zero_lr;
  zero_lr.lr = 0;
  zero_lr.lr_final = 0;
  AdamOptimizer opt2(zero_lr, store.size());
  for (Real& g : store.grads("p")) g = Real(0.5);
  CHECK(!opt2.step(store).has_value());
  for (size_t i = 0; i < store.size(); ++i) CHECK(store.data()[i] == before[i]);
}

TEST_CASE("adam converges on a scalar quadratic") {
  ParameterStore store;
  store.add("theta", {1});
  store.values("theta")[0] = 0;
  AdamConfig cfg;
  cfg.lr = Real(0.1);
  cfg.lr_final = Real(0.1);
  AdamOptimizer opt(cfg, store.size());
  for (int it = 0; it < 500; ++it) {
    store.zero_grad();
    const Real theta = store.values("theta")[0];
    store.grads("theta")[0] = 2 * (theta - 3);  // d/dtheta (theta-3)^2
    REQUIRE(!opt.step(store).has_value());
  }
  CHECK(std::abs(store.values("theta")[0] - 3) < 1e-3);
}

TEST_CASE("adam rejects non-finite gradients with diagnostics") {
  ParameterStore store;
  store.add("w", {4});
  AdamOptimizer opt({}, store.size());
  const std::vector<Real> before(store.data(), store.data() + store.size());
  store.grads("w")[2] = std::numeric_limits<Real>::quiet_NaN();
  const auto err = opt.step(store);
  REQUIRE(err.has_value());
  CHECK(err->find("w[2]") != std::string::npos);
  for (size_t i = 0; i < store.size(); ++i) CHECK(store.data()[i] == before[i]);
}

TEST_CASE("parameter store rejects duplicates and reports shapes") {
  ParameterStore store;
  store.add("a", {2, 3});
  CHECK_THROWS(store.add("a", {1}));
  CHECK(store.entry("a").size == 6);
  CHECK_THROWS(store.entry("missing"));
}
