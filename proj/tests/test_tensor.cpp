#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <limits>
#include <vector>

#include <gagsl/matrix.hpp>
#include <gagsl/rng.hpp>
#include <gagsl/tensor.hpp>

using namespace gagsl;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, RngStream& rng, double lo = -2.0,
                     double hi = 2.0) {
  Matrix m(r, c);
  for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(lo, hi);
  return m;
}

// Values bounded away from zero so relu kinks cannot sit inside the
// finite-difference step.
Matrix random_offzero(std::size_t r, std::size_t c, RngStream& rng) {
  Matrix m(r, c);
  for (std::size_t i = 0; i < m.size(); ++i) {
    const double u = rng.uniform(0.1, 2.0);
    m.data()[i] = rng.uniform() < 0.5 ? -u : u;
  }
  return m;
}

}  // namespace

TEST_CASE("primitive forward oracles") {
  Tape t;

  Matrix r(1, 2);
  r(0, 0) = -1.0;
  r(0, 1) = 2.0;
  const Matrix& relu_out = t.value(t.relu(t.constant(r)));
  REQUIRE(relu_out(0, 0) == 0.0);
  REQUIRE(relu_out(0, 1) == 2.0);

  const Matrix& soft = t.value(t.row_softmax(t.constant(Matrix(1, 3))));
  for (std::size_t j = 0; j < 3; ++j) REQUIRE(soft(0, j) == Catch::Approx(1.0 / 3.0).margin(1e-12));

  RngStream rng(1);
  const Matrix a = random_matrix(2, 3, rng);
  const Matrix b = random_matrix(3, 4, rng);
  const Matrix& prod = t.value(t.matmul(t.constant(a), t.constant(b)));
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 4; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < 3; ++k) s += a(i, k) * b(k, j);
      REQUIRE(prod(i, j) == Catch::Approx(s).margin(1e-12));
    }

  const Matrix c = random_matrix(2, 2, rng);
  const Matrix& cat = t.value(t.concat_cols(t.constant(a), t.constant(c)));
  REQUIRE(cat.cols() == 5);
  REQUIRE(cat(1, 0) == a(1, 0));
  REQUIRE(cat(1, 3) == c(1, 0));

  const Matrix& gathered = t.value(t.gather_rows(t.constant(a), {1, 0, 1}));
  REQUIRE(gathered.rows() == 3);
  REQUIRE(gathered(0, 2) == a(1, 2));
  REQUIRE(gathered(2, 0) == a(1, 0));

  const Matrix& tr = t.value(t.transpose(t.constant(a)));
  REQUIRE(tr.rows() == 3);
  REQUIRE(tr(2, 1) == a(1, 2));

  const Matrix& norm = t.value(t.l2_normalize_rows(t.constant(a)));
  for (std::size_t i = 0; i < 2; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < 3; ++j) s += norm(i, j) * norm(i, j);
    REQUIRE(std::sqrt(s) == Catch::Approx(1.0).margin(1e-12));
  }

  Matrix pos(1, 2);
  pos(0, 0) = 4.0;
  pos(0, 1) = 0.25;
  const Matrix& rs = t.value(t.rsqrt(t.constant(pos)));
  REQUIRE(rs(0, 0) == Catch::Approx(0.5).margin(1e-15));
  REQUIRE(rs(0, 1) == Catch::Approx(2.0).margin(1e-15));

  Matrix col(2, 1);
  col(0, 0) = 3.0;
  col(1, 0) = 7.0;
  const Matrix& scat = t.value(t.scatter_pairs(t.constant(col), {{0, 2}, {1, 1}}, 3));
  REQUIRE(scat(0, 2) == 3.0);
  REQUIRE(scat(1, 1) == 7.0);
  REQUIRE(scat(0, 0) == 0.0);
  REQUIRE(scat(2, 2) == 0.0);
}

TEST_CASE("row softmax rows are positive and sum to one") {
  RngStream rng(2);
  Tape t;
  const Matrix x = random_matrix(6, 5, rng, -30.0, 30.0);
  const Matrix& s = t.value(t.row_softmax(t.constant(x)));
  for (std::size_t i = 0; i < 6; ++i) {
    double sum = 0.0;
    for (std::size_t j = 0; j < 5; ++j) {
      REQUIRE(s(i, j) > 0.0);
      sum += s(i, j);
    }
    REQUIRE(sum == Catch::Approx(1.0).margin(1e-9));
  }
}

TEST_CASE("mean backward spreads the gradient uniformly") {
  Param x("x", Matrix(2, 2, 1.0));
  x.requires_grad = true;
  Tape t;
  t.backward(t.reduce_mean(t.leaf(x)));
  for (std::size_t i = 0; i < 4; ++i) REQUIRE(x.grad.data()[i] == Catch::Approx(0.25).margin(1e-15));
}

TEST_CASE("relu backward zeroes the negative side") {
  Param x("x", Matrix(1, 2));
  x.value(0, 0) = -1.0;
  x.value(0, 1) = 3.0;
  x.requires_grad = true;
  Tape t;
  // sum = 2 * mean on a 2-entry tensor
  t.backward(t.scale(t.reduce_mean(t.relu(t.leaf(x))), 2.0));
  REQUIRE(x.grad(0, 0) == 0.0);
  REQUIRE(x.grad(0, 1) == Catch::Approx(1.0).margin(1e-15));
}

TEST_CASE("gradients accumulate across backward calls until zero_grad") {
  Param x("x", Matrix(2, 2, 2.0));
  x.requires_grad = true;
  {
    Tape t;
    t.backward(t.reduce_mean(t.leaf(x)));
  }
  {
    Tape t;
    t.backward(t.reduce_mean(t.leaf(x)));
  }
  REQUIRE(x.grad(0, 0) == Catch::Approx(0.5).margin(1e-15));
  x.zero_grad();
  REQUIRE(x.grad(0, 0) == 0.0);
}

TEST_CASE("shared subexpressions accumulate additively") {
  Param x("x", Matrix(1, 3, 1.5));
  x.requires_grad = true;
  Tape t;
  Tensor y = t.leaf(x);
  t.backward(t.reduce_mean(t.add(y, y)));  // d/dx mean(2x) = 2/3 per entry
  for (std::size_t i = 0; i < 3; ++i)
    REQUIRE(x.grad.data()[i] == Catch::Approx(2.0 / 3.0).margin(1e-15));

  Param x2("x2", Matrix(1, 3, 1.5));
  x2.requires_grad = true;
  Tape t2;
  t2.backward(t2.reduce_mean(t2.add(t2.leaf(x2), t2.leaf(x2))));
  for (std::size_t i = 0; i < 3; ++i) REQUIRE(x2.grad.data()[i] == x.grad.data()[i]);
}

TEST_CASE("shape mismatches and non-scalar losses are contract violations") {
  Tape t;
  Tensor a = t.constant(Matrix(2, 2));
  Tensor b = t.constant(Matrix(2, 3));
  REQUIRE_THROWS_AS(t.add(a, b), ContractViolation);
  REQUIRE_THROWS_AS(t.elementwise_mul(a, b), ContractViolation);
  REQUIRE_THROWS_AS(t.matmul(b, b), ContractViolation);
  REQUIRE_THROWS_AS(t.backward(b), ContractViolation);
  REQUIRE_THROWS_AS(t.dropout(a, 1.0, DropoutKey{}, true), ContractViolation);
}

TEST_CASE("non-finite values are rejected at the primitive boundary") {
  Tape t;
  Matrix bad(1, 1);
  bad(0, 0) = std::numeric_limits<double>::infinity();
  REQUIRE_THROWS_AS(t.constant(bad), NumericError);
  Matrix neg(1, 1);
  neg(0, 0) = -1.0;
  REQUIRE_THROWS_AS(t.log(t.constant(neg)), ContractViolation);
}

TEST_CASE("every primitive passes finite-difference checks on 20 instances") {
  RngStream rng(42);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 2 + static_cast<std::size_t>(rng.next_below(3));
    const std::size_t m = 2 + static_cast<std::size_t>(rng.next_below(3));

    Param a("a", random_offzero(n, m, rng));
    Param b("b", random_offzero(n, m, rng));
    Param w("w", random_offzero(m, n, rng));
    const Matrix cmask = random_matrix(n, m, rng);
    const Matrix cmask_t = cmask.transpose();
    const Matrix cmask_nn = random_matrix(n, n, rng);

    auto check = [&](const char* name, const std::function<Tensor(Tape&)>& builder,
                     std::vector<Param*> params, double tol = 1e-4) {
      const double err = gradient_check(builder, params);
      INFO(name);
      REQUIRE(err <= tol);
    };

    check("matmul", [&](Tape& t) { return t.reduce_mean(t.matmul(t.leaf(a), t.leaf(w))); },
          {&a, &w});
    check("add", [&](Tape& t) { return t.reduce_mean(t.add(t.leaf(a), t.leaf(b))); }, {&a, &b});
    check("scale", [&](Tape& t) { return t.reduce_mean(t.scale(t.leaf(a), -1.7)); }, {&a});
    check("relu", [&](Tape& t) { return t.reduce_mean(t.relu(t.leaf(a))); }, {&a});
    check("row_softmax",
          [&](Tape& t) {
            return t.reduce_mean(t.elementwise_mul(t.row_softmax(t.leaf(a)), t.constant(cmask)));
          },
          {&a});
    check("row_log_softmax",
          [&](Tape& t) {
            return t.reduce_mean(
                t.elementwise_mul(t.row_log_softmax(t.leaf(a)), t.constant(cmask)));
          },
          {&a});
    check("log",
          [&](Tape& t) {
            Tensor sq = t.add(t.elementwise_mul(t.leaf(a), t.leaf(a)),
                              t.constant(Matrix(n, m, 0.5)));
            return t.reduce_mean(t.log(sq));
          },
          {&a});
    check("dropout",
          [&](Tape& t) {
            return t.reduce_mean(t.dropout(t.leaf(a), 0.4, DropoutKey{7, 1, 2}, true));
          },
          {&a});
    check("concat_cols",
          [&](Tape& t) {
            Tensor cat = t.concat_cols(t.leaf(a), t.leaf(b));
            return t.reduce_mean(t.elementwise_mul(cat, t.constant(Matrix(n, 2 * m, 0.7))));
          },
          {&a, &b});
    check("gather_rows",
          [&](Tape& t) {
            Tensor g = t.gather_rows(t.leaf(a), {0, n - 1, 0});
            return t.reduce_mean(t.elementwise_mul(g, t.constant(Matrix(3, m, 1.3))));
          },
          {&a});
    check("l2_normalize_rows",
          [&](Tape& t) {
            return t.reduce_mean(
                t.elementwise_mul(t.l2_normalize_rows(t.leaf(a)), t.constant(cmask)));
          },
          {&a});
    check("transpose",
          [&](Tape& t) {
            return t.reduce_mean(t.elementwise_mul(t.transpose(t.leaf(a)), t.constant(cmask_t)));
          },
          {&a});
    check("elementwise_mul",
          [&](Tape& t) { return t.reduce_mean(t.elementwise_mul(t.leaf(a), t.leaf(b))); },
          {&a, &b});
    check("reduce_mean", [&](Tape& t) { return t.reduce_mean(t.leaf(a)); }, {&a});
    check("rsqrt",
          [&](Tape& t) {
            Tensor sq = t.add(t.elementwise_mul(t.leaf(a), t.leaf(a)),
                              t.constant(Matrix(n, m, 0.3)));
            return t.reduce_mean(t.rsqrt(sq));
          },
          {&a});
    check("scatter_pairs",
          [&](Tape& t) {
            Param* col = &a;  // reuse a's first column worth of entries via gather
            Tensor flat = t.gather_rows(t.leaf(*col), {0, 1});
            Tensor first = t.matmul(flat, t.constant([&] {
                             Matrix pick(m, 1);
                             pick(0, 0) = 1.0;
                             return pick;
                           }()));
            Tensor scat = t.scatter_pairs(first, {{0, 1}, {1, 0}}, n);
            return t.reduce_mean(t.elementwise_mul(scat, t.constant(cmask_nn)));
          },
          {&a});
  }
}

TEST_CASE("quadratic losses are exact under finite differences") {
  RngStream rng(9);
  Param x("x", random_matrix(3, 3, rng));
  const double err = gradient_check(
      [&](Tape& t) {
        Tensor sq = t.elementwise_mul(t.leaf(x), t.leaf(x));
        return t.scale(t.reduce_mean(sq), 9.0);
      },
      {&x});
  REQUIRE(err <= 1e-8);
}

TEST_CASE("cross-entropy head gradient matches finite differences") {
  RngStream rng(13);
  Param w("w", random_matrix(4, 3, rng, -0.5, 0.5));
  const Matrix x = random_matrix(6, 4, rng);
  Matrix pick(6, 3);  // one-hot labels
  for (std::size_t i = 0; i < 6; ++i) pick(i, rng.next_below(3)) = 1.0;
  const double err = gradient_check(
      [&](Tape& t) {
        Tensor logits = t.matmul(t.constant(x), t.leaf(w));
        Tensor logp = t.row_log_softmax(logits);
        return t.scale(t.reduce_mean(t.elementwise_mul(logp, t.constant(pick))), -3.0);
      },
      {&w});
  REQUIRE(err <= 1e-4);
}

TEST_CASE("composite gcn-layer loss matches finite differences") {
  RngStream rng(21);
  const Matrix adj = random_matrix(5, 5, rng, 0.0, 1.0);
  const Matrix x = random_matrix(5, 3, rng);
  Param w0("w0", random_matrix(3, 4, rng, -0.7, 0.7));
  Param w1("w1", random_matrix(4, 2, rng, -0.7, 0.7));
  const Matrix mask = random_matrix(5, 2, rng);
  const double err = gradient_check(
      [&](Tape& t) {
        Tensor an = t.constant(adj);
        Tensor h = t.relu(t.matmul(t.matmul(an, t.constant(x)), t.leaf(w0)));
        Tensor z = t.matmul(t.matmul(an, h), t.leaf(w1));
        return t.reduce_mean(t.elementwise_mul(t.row_log_softmax(z), t.constant(mask)));
      },
      {&w0, &w1});
  REQUIRE(err <= 1e-4);
}

TEST_CASE("dropout is the identity in eval mode and unbiased in train mode") {
  RngStream rng(31);
  const Matrix x = random_matrix(4, 4, rng);
  Tape t;
  Tensor in = t.constant(x);
  Tensor eval_out = t.dropout(in, 0.5, DropoutKey{1, 2, 3}, false);
  const Matrix& ev = t.value(eval_out);
  for (std::size_t i = 0; i < x.size(); ++i) REQUIRE(ev.data()[i] == x.data()[i]);

  // Expected value of the inverted-scaling mask is 1: mean over 10^4 kept
  // cells stays inside a 3 sigma band.
  const double p = 0.3;
  Tape t2;
  Tensor ones = t2.constant(Matrix(100, 100, 1.0));
  const Matrix& dropped = t2.value(t2.dropout(ones, p, DropoutKey{11, 1, 1}, true));
  double mean = 0.0;
  for (std::size_t i = 0; i < dropped.size(); ++i) mean += dropped.data()[i];
  mean /= static_cast<double>(dropped.size());
  const double sigma = std::sqrt(p / (1.0 - p) / static_cast<double>(dropped.size()));
  REQUIRE(std::abs(mean - 1.0) <= 3.0 * sigma);
}

TEST_CASE("dropout masks replay exactly per key and differ across steps") {
  const Matrix x(8, 8, 1.0);
  auto draw = [&](std::uint64_t step) {
    Tape t;
    return t.value(t.dropout(t.constant(x), 0.5, DropoutKey{5, 9, step}, true));
  };
  const Matrix m1 = draw(3);
  const Matrix m2 = draw(3);
  const Matrix m3 = draw(4);
  bool same_key_equal = true, diff_step_equal = true;
  for (std::size_t i = 0; i < x.size(); ++i) {
    same_key_equal = same_key_equal && m1.data()[i] == m2.data()[i];
    diff_step_equal = diff_step_equal && m1.data()[i] == m3.data()[i];
  }
  REQUIRE(same_key_equal);
  REQUIRE_FALSE(diff_step_equal);
}

TEST_CASE("glorot init respects the fan bound and replays by stream") {
  const Matrix w1 = glorot_uniform(30, 20, RngStream(4).derive("w"));
  const Matrix w2 = glorot_uniform(30, 20, RngStream(4).derive("w"));
  const double limit = std::sqrt(6.0 / 50.0);
  for (std::size_t i = 0; i < w1.size(); ++i) {
    REQUIRE(std::abs(w1.data()[i]) <= limit);
    REQUIRE(w1.data()[i] == w2.data()[i]);
  }
}

TEST_CASE("adam fixed point, first step, and convex descent") {
  Param p("p", Matrix(1, 1, 1.0));
  AdamConfig cfg;
  cfg.lr = 0.01;
  Adam opt({&p}, cfg);
  opt.step();  // zero gradient
  REQUIRE(p.value(0, 0) == 1.0);

  Param q("q", Matrix(1, 1, 1.0));
  q.grad(0, 0) = 1.0;
  Adam opt2({&q}, cfg);
  opt2.step();
  REQUIRE(q.value(0, 0) == Catch::Approx(1.0 - cfg.lr * 1.0 / (1.0 + cfg.eps)).margin(1e-12));

  // f(x) = x^2 from x=2: every step must reduce f.
  Param x("x", Matrix(1, 1, 2.0));
  x.requires_grad = true;
  Adam opt3({&x}, cfg);
  double prev = 4.0;
  for (int i = 0; i < 2; ++i) {
    opt3.zero_grad();
    Tape t;
    t.backward(t.elementwise_mul(t.leaf(x), t.leaf(x)));
    opt3.step();
    const double f = x.value(0, 0) * x.value(0, 0);
    REQUIRE(f < prev);
    prev = f;
  }
}

TEST_CASE("adam moments track the configured decay rates") {
  Param p("p", Matrix(1, 1, 0.0));
  p.grad(0, 0) = 2.0;
  AdamConfig cfg;
  Adam opt({&p}, cfg);
  opt.step();
  REQUIRE(opt.step_count() == 1);
  REQUIRE(opt.first_moment(0)(0, 0) == Catch::Approx((1.0 - cfg.beta1) * 2.0).margin(1e-15));
  REQUIRE(opt.second_moment(0)(0, 0) == Catch::Approx((1.0 - cfg.beta2) * 4.0).margin(1e-15));
}
