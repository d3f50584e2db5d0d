#include <doctest.h>

#include <cmath>
#include <numbers>

#include "blurcast/ops.hpp"
#include "blurcast/rng.hpp"
#include "gradcheck.hpp"
#include "primitive_cases.hpp"

using namespace blurcast;
using blurcast::testing::gradcheck;
using namespace blurcast::testing;

namespace {

// Gauss-Jordan with partial pivoting.
Tensor dense_inverse(Tensor a) {
  const std::size_t n = a.rows();
  Tensor inv = Tensor::identity(n);
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t p = c;
    for (std::size_t r = c + 1; r < n; ++r)
      if (std::abs(a.at(r, c)) > std::abs(a.at(p, c))) p = r;
    for (std::size_t j = 0; j < n; ++j) {
      std::swap(a.at(c, j), a.at(p, j));
      std::swap(inv.at(c, j), inv.at(p, j));
    }
    const double d = a.at(c, c);
    for (std::size_t j = 0; j < n; ++j) a.at(c, j) /= d, inv.at(c, j) /= d;
    for (std::size_t r = 0; r < n; ++r) {
      if (r == c) continue;
      const double f = a.at(r, c);
      for (std::size_t j = 0; j < n; ++j) a.at(r, j) -= f * a.at(c, j), inv.at(r, j) -= f * inv.at(c, j);
    }
  }
  return inv;
}

Tensor eval(const std::function<Var(Tape&)>& f) {
  Tape tape;
  return f(tape).value();
}

}  // namespace

TEST_CASE("tensor construction checks size") {
  CHECK_THROWS_AS(Tensor({2, 2}, std::vector<double>{1, 2, 3}), ShapeError);
  Tensor t({2, 3}, 1.5);
  CHECK(t.numel() == 6);
  CHECK(shape_numel(t.shape()) == t.values().size());
}

TEST_CASE("matmul examples") {
  const Tensor a = Tensor::matrix({{1, 2, 3}, {4, 5, 6}, {7, 8, 10}});
  auto prod = [](const Tensor& x, const Tensor& y) {
    return eval([&](Tape& t) { return ad::matmul(t.constant(x), t.constant(y)); });
  };
  CHECK(prod(Tensor::identity(3), a) == a);
  CHECK(prod(Tensor::matrix({{1, 2}, {3, 4}}), Tensor::matrix({{0}, {1}})) == Tensor::matrix({{2}, {4}}));
  Tape tape;
  CHECK_THROWS_AS(ad::matmul(tape.constant(Tensor({2, 3})), tape.constant(Tensor({2, 3}))), ShapeError);
}

TEST_CASE("matmul gradient of sum matches finite differences") {
  Rng rng(3);
  const auto r = gradcheck([](Tape&, const std::vector<Var>& v) { return ad::sum(ad::matmul(v[0], v[1])); },
                           {rand_t({3, 4}, rng), rand_t({4, 2}, rng)});
  CHECK(r.max_rel < 1e-6);
}

TEST_CASE("elementwise examples") {
  Rng rng(4);
  const Tensor x = rand_t({3, 2}, rng);
  CHECK(eval([&](Tape& t) { return ad::add(t.constant(x), t.constant(Tensor::scalar(0.0))); }) == x);
  CHECK(eval([&](Tape& t) { return ad::mean(t.constant(Tensor::vector({2, 4, 6}))); }).item() == 4.0);

  Tape tape;
  Var v = tape.leaf(Tensor::vector({1, 2, 3, 4, 5}));
  tape.backward(ad::mean(v));
  const Tensor gv = tape.grad(v);
  for (double g : gv.values()) CHECK(g == doctest::Approx(0.2).epsilon(1e-15));

  Tape t2;
  CHECK_THROWS_AS(ad::log(t2.constant(Tensor::vector({1.0, 0.0}))), DomainError);
  CHECK_THROWS_AS(ad::log(t2.constant(Tensor::vector({-1.0}))), DomainError);
  CHECK_THROWS_AS(ad::add(t2.constant(Tensor({2, 3})), t2.constant(Tensor({2, 2}))), ShapeError);
  CHECK_THROWS_AS(ad::exp(t2.constant(Tensor::vector({1000.0}))), NonFiniteError);
}

TEST_CASE("broadcasting over trailing dimensions") {
  const Tensor a = Tensor::matrix({{1, 2}, {3, 4}});
  const Tensor row = Tensor::vector({10, 20});
  const Tensor col = Tensor::matrix({{100}, {200}});
  CHECK(eval([&](Tape& t) { return ad::add(t.constant(a), t.constant(row)); }) ==
        Tensor::matrix({{11, 22}, {13, 24}}));
  CHECK(eval([&](Tape& t) { return ad::mul(t.constant(a), t.constant(col)); }) ==
        Tensor::matrix({{100, 200}, {600, 800}}));
  CHECK(eval([&](Tape& t) { return ad::sub(t.constant(row), t.constant(a)); }) ==
        Tensor::matrix({{9, 18}, {7, 16}}));
}

TEST_CASE("softmax examples") {
  const auto u = eval([](Tape& t) { return ad::softmax(t.constant(Tensor::vector({0.3, 0.3, 0.3, 0.3})), 0); });
  for (double p : u.values()) CHECK(p == doctest::Approx(0.25).epsilon(1e-15));
  const auto s = eval([](Tape& t) { return ad::softmax(t.constant(Tensor::vector({0.0, std::log(3.0)})), 0); });
  CHECK(s[0] == doctest::Approx(0.25).epsilon(1e-14));
  CHECK(s[1] == doctest::Approx(0.75).epsilon(1e-14));

  Rng rng(5);
  const Tensor x = rand_t({7, 9}, rng, -30.0, 30.0);
  const auto p = eval([&](Tape& t) { return ad::softmax(t.constant(x), 1); });
  for (std::size_t r = 0; r < 7; ++r) {
    double sum = 0.0;
    for (std::size_t c = 0; c < 9; ++c) sum += p.at(r, c);
    CHECK(std::abs(sum - 1.0) < 1e-12);
  }
}

TEST_CASE("layer norm examples") {
  const Tensor gain = Tensor::vector({1, 1, 1, 1});
  const Tensor zero = Tensor::vector({0, 0, 0, 0});
  const auto c = eval([&](Tape& t) {
    return ad::layer_norm(t.constant(Tensor({2, 4}, 3.0)), t.constant(gain), t.constant(zero));
  });
  for (double v : c.values()) CHECK(std::abs(v) < 1e-12);

  Rng rng(6);
  const Tensor x = rand_t({5, 4}, rng, -3.0, 3.0);
  const Tensor bias = Tensor::vector({0.5, -1.0, 2.0, 0.1});
  const auto y = eval([&](Tape& t) { return ad::layer_norm(t.constant(x), t.constant(gain), t.constant(bias)); });
  const double bias_mean = (0.5 - 1.0 + 2.0 + 0.1) / 4.0;
  for (std::size_t r = 0; r < 5; ++r) {
    double m = 0.0;
    for (std::size_t c2 = 0; c2 < 4; ++c2) m += y.at(r, c2) / 4.0;
    CHECK(m == doctest::Approx(bias_mean).epsilon(1e-9));
  }
  Tape tape;
  CHECK_THROWS_AS(ad::layer_norm(tape.constant(Tensor({2, 1})), tape.constant(Tensor::vector({1})),
                                 tape.constant(Tensor::vector({0}))),
                  ShapeError);

  const auto r = gradcheck(
      [](Tape&, const std::vector<Var>& v) { return ad::layer_norm(v[0], v[1], v[2]); },
      {x, rand_t({4}, rng), rand_t({4}, rng)});
  CHECK(r.max_rel < 1e-5);
}

TEST_CASE("cholesky examples") {
  CHECK(linalg::cholesky_lower(Tensor::identity(4)) == Tensor::identity(4));
  const auto l = eval([](Tape& t) { return ad::cholesky(t.constant(Tensor::matrix({{4, 2}, {2, 3}}))); });
  CHECK(l.at(0, 0) == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(l.at(0, 1) == 0.0);
  CHECK(l.at(1, 0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(l.at(1, 1) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));

  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor a = random_spd(6, rng);
    const Tensor f = linalg::cholesky_lower(a);
    CHECK(max_abs_diff(linalg::matmul(f, f.transposed()), a) < 1e-10);
  }
}

TEST_CASE("cholesky reproduces a lower factor with positive diagonal") {
  Rng rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor l = random_lower(6, rng);
    CHECK(max_abs_diff(linalg::cholesky_lower(linalg::matmul(l, l.transposed())), l) < 1e-8);
  }
}

TEST_CASE("cholesky reports the failing pivot") {
  const Tensor a = Tensor::matrix({{1, 0, 0}, {0, 1, 2}, {0, 2, 1}});
  try {
    linalg::cholesky_lower(a);
    FAIL("expected NotPositiveDefinite");
  } catch (const NotPositiveDefinite& e) {
    CHECK(e.pivot == 2);
    CHECK(e.value < 0.0);
  }
  Tape tape;
  CHECK_THROWS_AS(ad::cholesky(tape.constant(Tensor::matrix({{-1}}))), NotPositiveDefinite);
}

TEST_CASE("cholesky gradient on random SPD 5x5") {
  Rng rng(9);
  const auto r = gradcheck([](Tape&, const std::vector<Var>& v) { return ad::sum(ad::cholesky(v[0])); },
                           {random_spd(5, rng)});
  CHECK(r.max_rel < 1e-5);
}

TEST_CASE("triangular solve examples") {
  Rng rng(10);
  const Tensor b = rand_t({3, 2}, rng);
  CHECK(linalg::solve_lower(Tensor::identity(3), b) == b);
  const auto x = eval([](Tape& t) {
    return ad::triangular_solve(t.constant(Tensor::matrix({{2, 0}, {1, 1}})), t.constant(Tensor::matrix({{2}, {3}})));
  });
  CHECK(x == Tensor::matrix({{1}, {2}}));
  CHECK_THROWS_AS(linalg::solve_lower(Tensor::matrix({{1, 0}, {1, 0}}), Tensor::matrix({{1}, {1}})), DomainError);

  const Tensor a = random_spd(4, rng);
  const Tensor rhs = rand_t({4, 1}, rng);
  const auto y = eval([&](Tape& t) {
    Var l = ad::cholesky(t.constant(a));
    return ad::triangular_solve(l, ad::triangular_solve(l, t.constant(rhs)), true);
  });
  CHECK(max_abs_diff(y, linalg::matmul(dense_inverse(a), rhs)) < 1e-8);

  const Tensor l = random_lower(4, rng);
  CHECK(max_abs_diff(linalg::matmul(l, linalg::solve_lower(l, rhs)), rhs) < 1e-10);
}

TEST_CASE("backward basics") {
  Tape t1;
  Var x = t1.leaf(Tensor::scalar(3.0));
  t1.backward(x);
  CHECK(t1.grad(x).item() == 1.0);

  Tape t2;
  Var v = t2.leaf(Tensor::vector({1, -2, 3}));
  t2.backward(ad::sum(ad::mul(v, v)));
  CHECK(t2.grad(v) == Tensor::vector({2, -4, 6}));

  Tape t3;
  Var a = t3.leaf(Tensor::scalar(5.0));
  t3.backward(ad::add(a, a));
  CHECK(t3.grad(a).item() == 2.0);

  Tape t4;
  Var used = t4.leaf(Tensor::vector({1, 2}));
  Var unused = t4.leaf(Tensor::matrix({{1, 2}, {3, 4}}));
  t4.backward(ad::sum(used));
  CHECK(t4.grad(unused) == Tensor({2, 2}));

  Tape t5;
  Var m = t5.leaf(Tensor::vector({1, 2}));
  CHECK_THROWS_AS(t5.backward(ad::exp(m)), ShapeError);
}

TEST_CASE("node ids are topological and each node is visited once") {
  Tape tape;
  Var x = tape.leaf(Tensor::vector({0.5, 1.5}));
  Var y = ad::exp(x);
  Var z = ad::mul(y, x);
  Var loss = ad::sum(ad::add(z, y));
  CHECK(x.id < y.id);
  CHECK(y.id < z.id);
  CHECK(z.id < loss.id);
  tape.backward(loss);
  CHECK(tape.visited() == 4);
}

TEST_CASE("every primitive matches finite differences on 20 seeds") {
  for (const auto& pc : primitive_cases()) {
    double worst = 0.0;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
      Rng rng(derive_seed({seed, 77}));
      const auto r = gradcheck(pc.build, pc.inputs(rng), 1e-5, {}, seed);
      worst = std::max(worst, r.max_rel);
    }
    INFO(pc.name << " worst relative error " << worst);
    CHECK(worst < 1e-4);
  }
}

TEST_CASE("no primitive modifies its inputs") {
  for (const auto& pc : primitive_cases()) {
    Rng rng(11);
    const auto inputs = pc.inputs(rng);
    Tape tape;
    std::vector<Var> vs;
    for (const auto& x : inputs) vs.push_back(tape.leaf(x));
    Var y = blurcast::testing::to_scalar(tape, pc.build(tape, vs), 1);
    tape.backward(y);
    INFO(pc.name);
    for (std::size_t i = 0; i < vs.size(); ++i) CHECK(vs[i].value() == inputs[i]);
  }
}

TEST_CASE("attention rejects bad shapes") {
  Tape tape;
  CHECK_THROWS_AS(ad::multi_head_attention(tape.constant(Tensor({2, 6})), tape.constant(Tensor({3, 6})),
                                           tape.constant(Tensor({3, 6})), 4),
                  ShapeError);
  CHECK_THROWS_AS(ad::multi_head_attention(tape.constant(Tensor({2, 4})), tape.constant(Tensor({3, 4})),
                                           tape.constant(Tensor({2, 4})), 2),
                  ShapeError);
}
