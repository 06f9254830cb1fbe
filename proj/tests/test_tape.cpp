#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "groundrank/loss.hpp"
#include "groundrank/rng.hpp"
#include "groundrank/tape.hpp"
#include "groundrank/tensor.hpp"
#include "oracles.hpp"

using groundrank::LossConfig;
using groundrank::LossVariant;
using groundrank::RandomStream;
using groundrank::ShapeError;
using groundrank::Tape;
using groundrank::Tensor;

namespace {

Tensor<double> random_tensor(std::size_t r, std::size_t c, RandomStream& rng,
                             double lo = -1.0, double hi = 1.0) {
  Tensor<double> t(r, c);
  for (auto& v : t.data) v = rng.uniform(lo, hi);
  return t;
}

}  // namespace

TEST_CASE("forward primitive examples") {
  Tape<double> tape;

  SECTION("sigmoid(0) = 0.5") {
    auto x = tape.leaf(Tensor<double>(1, 1, 0.0));
    CHECK(tape.value(tape.sigmoid(x)).data[0] == Catch::Approx(0.5));
  }

  SECTION("l2 normalize of [3, 4] is [0.6, 0.8]") {
    auto x = tape.leaf(Tensor<double>(1, 2, {3.0, 4.0}));
    auto y = tape.value(tape.l2_normalize_rows(x));
    CHECK(y.data[0] == Catch::Approx(0.6));
    CHECK(y.data[1] == Catch::Approx(0.8));
  }

  SECTION("2x2 times 2x1") {
    auto a = tape.leaf(Tensor<double>(2, 2, {1, 2, 3, 4}));
    auto b = tape.leaf(Tensor<double>(2, 1, {1, 1}));
    auto c = tape.value(tape.matmul(a, b));
    CHECK(c.rows == 2);
    CHECK(c.cols == 1);
    CHECK(c.data[0] == Catch::Approx(3.0));
    CHECK(c.data[1] == Catch::Approx(7.0));
  }

  SECTION("matmul against naive triple loop") {
    RandomStream rng(7);
    auto a = random_tensor(5, 4, rng);
    auto b = random_tensor(4, 6, rng);
    auto got = tape.value(tape.matmul(tape.leaf(a), tape.leaf(b)));
    auto want = oracles::naive_matmul(a, b);
    for (std::size_t i = 0; i < want.size(); ++i)
      CHECK(got.data[i] == Catch::Approx(want.data[i]).margin(1e-12));
  }

  SECTION("row max picks first index on ties") {
    auto x = tape.leaf(Tensor<double>(1, 3, {2.0, 2.0, 1.0}));
    Tensor<double> grad_probe = tape.value(tape.row_max(x));
    CHECK(grad_probe.data[0] == 2.0);
  }

  SECTION("shape mismatch names the operation and both shapes") {
    auto a = tape.leaf(Tensor<double>(2, 3));
    auto b = tape.leaf(Tensor<double>(2, 3));
    try {
      tape.matmul(a, b);
      FAIL("expected ShapeError");
    } catch (const ShapeError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("matmul") != std::string::npos);
      CHECK(msg.find("2x3") != std::string::npos);
    }
  }

  SECTION("add broadcast accepts only row vectors") {
    auto a = tape.leaf(Tensor<double>(3, 2));
    auto col = tape.leaf(Tensor<double>(3, 1));
    CHECK_THROWS_AS(tape.add(a, col), ShapeError);
  }
}

TEST_CASE("backward basics") {
  SECTION("grad of sum is all ones") {
    Tape<double> tape;
    Tensor<double> x(3, 2, {1, 2, 3, 4, 5, 6});
    auto xr = tape.parameter(x);
    tape.backward(tape.sum(xr));
    const auto& g = tape.grad(xr);
    for (double v : g.data) CHECK(v == 1.0);
  }

  SECTION("grad of 0 * x is zero") {
    Tape<double> tape;
    auto xr = tape.parameter(Tensor<double>(2, 2, {1, 2, 3, 4}));
    tape.backward(tape.sum(tape.scalar_mul(xr, 0.0)));
    for (double v : tape.grad(xr).data) CHECK(v == 0.0);
  }

  SECTION("non-scalar loss is rejected") {
    Tape<double> tape;
    auto xr = tape.parameter(Tensor<double>(2, 2, {1, 2, 3, 4}));
    auto y = tape.scalar_mul(xr, 2.0);
    CHECK_THROWS_AS(tape.backward(y), ShapeError);
  }

  SECTION("backward on an empty tape is rejected") {
    Tape<double> tape;
    auto c = tape.constant(Tensor<double>(1, 1, 3.0));
    CHECK_THROWS(tape.backward(c));
  }

  SECTION("hinge subgradient at exactly zero is zero") {
    Tape<double> tape;
    auto xr = tape.parameter(Tensor<double>(1, 3, {-1.0, 0.0, 2.0}));
    tape.backward(tape.sum(tape.relu_hinge(xr)));
    const auto& g = tape.grad(xr);
    CHECK(g.data[0] == 0.0);
    CHECK(g.data[1] == 0.0);  // the kink
    CHECK(g.data[2] == 1.0);
  }

  SECTION("two backward passes are bit-identical") {
    RandomStream rng(11);
    Tape<double> tape;
    auto a = tape.parameter(random_tensor(4, 3, rng));
    auto b = tape.parameter(random_tensor(3, 4, rng));
    auto loss = tape.sum(tape.tanh(tape.matmul(a, b)));
    tape.backward(loss);
    const auto first_a = tape.grad(a).data;
    const auto first_b = tape.grad(b).data;
    tape.backward(loss);
    CHECK(tape.grad(a).data == first_a);
    CHECK(tape.grad(b).data == first_b);
  }
}

TEST_CASE("finite differences for every primitive") {
  RandomStream rng(2024);
  const double tol = 1e-5;

  auto run = [&](std::vector<Tensor<double>> leaves,
                 const oracles::LossBuilder<double>& build) {
    auto res = oracles::check_gradients(std::move(leaves), build);
    CAPTURE(res.checked);
    CHECK(res.max_rel_error <= tol);
  };

  SECTION("matmul") {
    run({random_tensor(3, 4, rng), random_tensor(4, 2, rng)},
        [](Tape<double>& t, const auto& r) {
          return t.sum(t.tanh(t.matmul(r[0], r[1])));
        });
  }
  SECTION("add same shape") {
    run({random_tensor(3, 3, rng), random_tensor(3, 3, rng)},
        [](Tape<double>& t, const auto& r) {
          return t.sum(t.sigmoid(t.add(r[0], r[1])));
        });
  }
  SECTION("add row-vector broadcast") {
    run({random_tensor(4, 3, rng), random_tensor(1, 3, rng)},
        [](Tape<double>& t, const auto& r) {
          return t.sum(t.tanh(t.add(r[0], r[1])));
        });
  }
  SECTION("elementwise multiply") {
    run({random_tensor(3, 3, rng), random_tensor(3, 3, rng)},
        [](Tape<double>& t, const auto& r) {
          return t.sum(t.mul(r[0], r[1]));
        });
  }
  SECTION("sigmoid") {
    run({random_tensor(3, 3, rng, -2, 2)},
        [](Tape<double>& t, const auto& r) { return t.sum(t.sigmoid(r[0])); });
  }
  SECTION("tanh") {
    run({random_tensor(3, 3, rng, -2, 2)},
        [](Tape<double>& t, const auto& r) { return t.sum(t.tanh(r[0])); });
  }
  SECTION("concat rows") {
    run({random_tensor(2, 3, rng), random_tensor(3, 3, rng)},
        [](Tape<double>& t, const auto& r) {
          return t.sum(t.tanh(t.concat_rows(r[0], r[1])));
        });
  }
  SECTION("embedding lookup") {
    run({random_tensor(5, 3, rng)}, [](Tape<double>& t, const auto& r) {
      return t.sum(t.tanh(t.embedding_lookup(r[0], {1, 4, 1, 0})));
    });
  }
  SECTION("l2 normalize rows") {
    run({random_tensor(3, 4, rng, 0.5, 1.5)},
        [](Tape<double>& t, const auto& r) {
          auto saw = t.mul(t.l2_normalize_rows(r[0]),
                           t.constant(Tensor<double>(3, 4, 0.3)));
          return t.sum(saw);
        });
  }
  SECTION("relu hinge away from the kink") {
    run({random_tensor(4, 4, rng, 0.2, 1.0)},
        [](Tape<double>& t, const auto& r) {
          // half the entries pushed negative, none near zero
          auto shifted = t.add(
              r[0], t.constant(Tensor<double>(
                        4, 4, {-2, 0, -2, 0, 0, -2, 0, -2, -2, 0, -2, 0, 0, -2,
                               0, -2})));
          return t.sum(t.relu_hinge(shifted));
        });
  }
  SECTION("row max") {
    run({random_tensor(4, 5, rng)}, [](Tape<double>& t, const auto& r) {
      return t.sum(t.row_max(r[0]));
    });
  }
  SECTION("mean") {
    run({random_tensor(3, 5, rng)},
        [](Tape<double>& t, const auto& r) { return t.mean(t.tanh(r[0])); });
  }
  SECTION("scalar multiply") {
    run({random_tensor(3, 5, rng)}, [](Tape<double>& t, const auto& r) {
      return t.sum(t.scalar_mul(r[0], -1.7));
    });
  }
  SECTION("transpose") {
    run({random_tensor(3, 5, rng)}, [](Tape<double>& t, const auto& r) {
      return t.sum(t.sigmoid(t.transpose(r[0])));
    });
  }
}

TEST_CASE("finite differences through the ranking losses") {
  RandomStream rng(555);
  LossConfig max_cfg;
  max_cfg.variant = LossVariant::max_violation;
  LossConfig sum_cfg;
  sum_cfg.variant = LossVariant::sum_violation;

  // Random 4x4 similarity input; margins well away from hinge kinks.
  Tensor<double> s(4, 4);
  for (auto& v : s.data) v = rng.uniform(-0.8, 0.8);

  for (const auto* cfg : {&max_cfg, &sum_cfg}) {
    auto res = oracles::check_gradients(
        {s}, [cfg](Tape<double>& t, const auto& r) {
          return groundrank::ranking_loss_on_tape(t, r[0], *cfg);
        });
    CHECK(res.max_rel_error <= 1e-5);
  }
}
