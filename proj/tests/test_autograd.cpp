#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "otv/autograd.hpp"

using namespace otv;

namespace {
Matrix randm(int r, int c, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix m(r, c);
  for (int j = 0; j < c; ++j)
    for (int i = 0; i < r; ++i) m(i, j) = n(rng);
  return m;
}
}  // namespace

TEST_CASE("matmul basics") {
  std::mt19937_64 rng(1);
  Matrix a = randm(3, 3, rng);
  Tape tape;
  // identity case
  Matrix i3 = Matrix::Identity(3, 3);
  CHECK((i3 * a - a).norm() == 0.0);
  // hand arithmetic oracle: [[1,2],[3,4]] * [[1],[1]] = [[3],[7]]
  Matrix m(2, 2);
  m << 1, 2, 3, 4;
  Matrix v(2, 1);
  v << 1, 1;
  Matrix prod = tape.val(tape.matmul(tape.constant(m), tape.constant(v)));
  CHECK(prod(0, 0) == 3.0);
  CHECK(prod(1, 0) == 7.0);
  // zero annihilates
  CHECK((Matrix::Zero(3, 3) * a).norm() == 0.0);
  // shape mismatch
  Tape t2;
  CHECK_THROWS(t2.matmul(t2.constant(Matrix::Zero(2, 3)),
                         t2.constant(Matrix::Zero(2, 3))));
}

TEST_CASE("softmax_cols") {
  Matrix z(2, 1);
  z << 0, 0;
  Matrix p = softmax_cols(z, Matrix::Zero(2, 1), 1.0);
  CHECK(p(0, 0) == doctest::Approx(0.5));
  CHECK(p(1, 0) == doctest::Approx(0.5));

  // masked entry contributes exactly zero
  Matrix z2(2, 1);
  z2 << 3.7, 0;
  Matrix mask(2, 1);
  mask << 0.0, kMaskSentinel;
  Matrix p2 = softmax_cols(z2, mask, 1.0);
  CHECK(p2(0, 0) == 1.0);
  CHECK(p2(1, 0) == 0.0);

  // closed form: [ln 2, 0] -> [2/3, 1/3]
  Matrix z3(2, 1);
  z3 << std::log(2.0), 0.0;
  Matrix p3 = softmax_cols(z3, Matrix::Zero(2, 1), 1.0);
  CHECK(p3(0, 0) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  CHECK(p3(1, 0) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));

  // fully masked column is an error
  Matrix all_masked = Matrix::Constant(2, 1, kMaskSentinel);
  CHECK_THROWS(softmax_cols(z3, all_masked, 1.0));

  // property: columns sum to 1 within 1e-12 over unmasked entries
  std::mt19937_64 rng(7);
  for (int rep = 0; rep < 20; ++rep) {
    Matrix logits = randm(6, 4, rng);
    Matrix m = Matrix::Zero(6, 4);
    std::uniform_int_distribution<int> coin(0, 2);
    for (int j = 0; j < 4; ++j)
      for (int i = 1; i < 6; ++i)
        if (coin(rng) == 0) m(i, j) = kMaskSentinel;
    Matrix sp = softmax_cols(logits, m, 2.0);
    for (int j = 0; j < 4; ++j) {
      CHECK(sp.col(j).sum() == doctest::Approx(1.0).epsilon(1e-12));
      for (int i = 0; i < 6; ++i)
        if (m(i, j) != 0.0) CHECK(sp(i, j) == 0.0);
    }
  }
}

TEST_CASE("backward: simple analytic gradients") {
  std::mt19937_64 rng(2);
  Param p(randm(4, 3, rng), "p");

  SUBCASE("sum -> all ones") {
    Tape tape;
    tape.backward(tape.sum(tape.param(p)));
    CHECK((p.grad - Matrix::Ones(4, 3)).norm() == 0.0);
  }
  SUBCASE("dot -> 2p") {
    Tape tape;
    Tape::NodeId node = tape.param(p);
    tape.backward(tape.sum(tape.cmul(node, node)));
    CHECK((p.grad - 2.0 * p.value).norm() < 1e-14);
  }
  SUBCASE("accumulation across two backward calls") {
    Tape tape;
    Tape::NodeId loss = tape.sum(tape.param(p));
    tape.backward(loss);
    Tape tape2;
    tape2.backward(tape2.sum(tape2.param(p)));
    CHECK((p.grad - 2.0 * Matrix::Ones(4, 3)).norm() == 0.0);
  }
}

TEST_CASE("finite differences across composed ops") {
  std::mt19937_64 rng(3);
  Param a(randm(5, 4, rng), "a");
  Param b(randm(4, 6, rng), "b");
  Param gain(Matrix::Ones(5, 1), "gain");

  auto loss = [&]() {
    Tape tape;
    Tape::NodeId x = tape.matmul(tape.param(a), tape.param(b));
    Tape::NodeId nrm = tape.rmsnorm_cols(x, tape.param(gain));
    Matrix mask = Matrix::Zero(5, 6);
    mask(0, 0) = kMaskSentinel;
    Tape::NodeId sm = tape.softmax_cols(nrm, mask, 1.7);
    Tape::NodeId act = tape.silu(tape.add(sm, x));
    Tape::NodeId sq = tape.tanh(tape.cmul(act, act));
    return tape.sum(tape.cmul(sq, sq));
  };
  {
    Tape tape;
    Tape::NodeId x = tape.matmul(tape.param(a), tape.param(b));
    Tape::NodeId nrm = tape.rmsnorm_cols(x, tape.param(gain));
    Matrix mask = Matrix::Zero(5, 6);
    mask(0, 0) = kMaskSentinel;
    Tape::NodeId sm = tape.softmax_cols(nrm, mask, 1.7);
    Tape::NodeId act = tape.silu(tape.add(sm, x));
    Tape::NodeId sq = tape.tanh(tape.cmul(act, act));
    tape.backward(tape.sum(tape.cmul(sq, sq)));
  }
  std::vector<Param*> params{&a, &b, &gain};
  auto eval = [&]() {
    Tape tape;
    Tape::NodeId x = tape.matmul(tape.param(a), tape.param(b));
    Tape::NodeId nrm = tape.rmsnorm_cols(x, tape.param(gain));
    Matrix mask = Matrix::Zero(5, 6);
    mask(0, 0) = kMaskSentinel;
    Tape::NodeId sm = tape.softmax_cols(nrm, mask, 1.7);
    Tape::NodeId act = tape.silu(tape.add(sm, x));
    Tape::NodeId sq = tape.tanh(tape.cmul(act, act));
    Tape::NodeId l = tape.sum(tape.cmul(sq, sq));
    return tape.val(l)(0, 0);
  };
  (void)loss;
  // grads were populated above without re-zeroing; the closure re-evaluates
  double err = finite_difference_check(eval, params, 1e-5);
  CHECK(err < 1e-6);
}

TEST_CASE("finite differences: structural ops") {
  std::mt19937_64 rng(4);
  Param k(randm(6, 5, rng), "k");
  Param q(randm(6, 5, rng), "q");
  Param v(randm(6, 5, rng), "v");

  auto build = [&](Tape& tape) {
    Tape::NodeId kn = tape.param(k);
    Tape::NodeId qn = tape.param(q);
    Tape::NodeId vn = tape.param(v);
    Tape::NodeId self = tape.colwise_dot(kn, qn);  // 1 x 5
    Tape::NodeId ctp = tape.matmul(tape.transpose(kn), qn);
    Tape::NodeId stacked = tape.vstack({ctp, self});
    Matrix mask = Matrix::Zero(6, 5);
    mask(2, 1) = kMaskSentinel;
    Tape::NodeId p = tape.softmax_cols(stacked, mask, 2.3);
    Tape::NodeId p_self = tape.rows(p, 5, 1);
    Tape::NodeId out = tape.add(tape.matmul(vn, tape.rows(p, 0, 5)),
                                tape.scale_cols(vn, p_self));
    Matrix target = Matrix::Constant(1, 5, 0.3);
    std::vector<bool> msk{true, false, true, true, true};
    Tape::NodeId pred = tape.sigmoid(tape.colwise_dot(out, vn));
    return tape.mse_masked(pred, target, msk);
  };
  {
    Tape tape;
    tape.backward(build(tape));
  }
  std::vector<Param*> params{&k, &q, &v};
  auto eval = [&] {
    Tape tape;
    return tape.val(build(tape))(0, 0);
  };
  CHECK(finite_difference_check(eval, params, 1e-5) < 1e-6);
}

TEST_CASE("cross entropy gradient") {
  std::mt19937_64 rng(5);
  Param z(randm(7, 4, rng), "z");
  std::vector<int> targets{1, 3, 0, 6};
  std::vector<bool> mask{true, true, false, true};
  {
    Tape tape;
    tape.backward(tape.cross_entropy_cols(tape.param(z), targets, mask));
  }
  std::vector<Param*> params{&z};
  auto eval = [&] {
    Tape tape;
    return tape.val(tape.cross_entropy_cols(tape.param(z), targets, mask))(0, 0);
  };
  CHECK(finite_difference_check(eval, params, 1e-5) < 1e-6);
}

TEST_CASE("masked mse ignores masked positions") {
  Param p(Matrix::Constant(1, 3, 0.5), "p");
  Matrix target(1, 3);
  target << 1.0, 0.0, 0.25;
  std::vector<bool> mask{true, false, true};
  Tape tape;
  Tape::NodeId l = tape.mse_masked(tape.param(p), target, mask);
  CHECK(tape.val(l)(0, 0) ==
        doctest::Approx((0.25 + 0.0625) / 2.0).epsilon(1e-15));
  // altering the masked prediction leaves the loss unchanged
  p.value(0, 1) = 99.0;
  Tape tape2;
  CHECK(tape2.val(tape2.mse_masked(tape2.param(p), target, mask))(0, 0) ==
        doctest::Approx((0.25 + 0.0625) / 2.0).epsilon(1e-15));
  CHECK_THROWS(tape2.mse_masked(tape2.constant(target), target,
                                std::vector<bool>{false, false, false}));
}

TEST_CASE("determinism: identical graphs give bit-identical values") {
  std::mt19937_64 rng(6);
  Matrix a = randm(8, 8, rng), b = randm(8, 8, rng);
  auto run = [&] {
    Tape tape;
    Tape::NodeId x = tape.matmul(tape.constant(a), tape.constant(b));
    Tape::NodeId s = tape.softmax_cols(x, Matrix::Zero(8, 8), 3.0);
    return Matrix(tape.val(s));
  };
  Matrix r1 = run(), r2 = run();
  CHECK((r1 - r2).norm() == 0.0);
}
