#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include <gagsl/augmentation.hpp>
#include <gagsl/estimator.hpp>
#include <gagsl/graph.hpp>
#include <gagsl/rng.hpp>
#include <gagsl/tensor.hpp>

using namespace gagsl;

namespace {

Matrix path_adjacency(std::size_t n) {
  Matrix a(n, n);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    a(i, i + 1) = 1.0;
    a(i + 1, i) = 1.0;
  }
  return a;
}

Matrix random_matrix(std::size_t r, std::size_t c, RngStream& rng, double lo = -1.0,
                     double hi = 1.0) {
  Matrix m(r, c);
  for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(lo, hi);
  return m;
}

EstimatorViewParams make_view(std::size_t fdim, const EstimatorConfig& cfg, std::uint64_t seed) {
  EstimatorViewParams v;
  const RngStream rng(seed);
  v.gcn_weight = Param("v.gcn", glorot_uniform(fdim, cfg.hidden, rng.derive("gcn")));
  v.mlp_w1 =
      Param("v.mlp1", glorot_uniform(2 * cfg.hidden + 1, cfg.mlp_hidden, rng.derive("mlp1")));
  v.mlp_w2 = Param("v.mlp2", glorot_uniform(cfg.mlp_hidden + 1, 1, rng.derive("mlp2")));
  return v;
}

}  // namespace

TEST_CASE("gcn normalization of a single edge is the half matrix") {
  const Matrix a = path_adjacency(2);
  const Matrix n = gcn_norm(a);
  for (std::size_t i = 0; i < 4; ++i) REQUIRE(n.data()[i] == Catch::Approx(0.5).margin(1e-12));
}

TEST_CASE("hop candidates grow with the hop radius and exclude self") {
  const Matrix a = path_adjacency(4);
  const CandidateEdgeSet one = build_hop_candidates(a, 1);
  REQUIRE(one.lists[0] == std::vector<std::size_t>{1});
  REQUIRE(one.lists[1] == std::vector<std::size_t>{0, 2});
  const CandidateEdgeSet two = build_hop_candidates(a, 2);
  REQUIRE(two.lists[0] == std::vector<std::size_t>{1, 2});
  REQUIRE(two.lists[1] == std::vector<std::size_t>{0, 2, 3});
  REQUIRE(two.lists[3] == std::vector<std::size_t>{1, 2});
  REQUIRE(two.pairs.size() == 2 + 3 + 3 + 2);
}

TEST_CASE("isolated nodes get empty candidate lists and zero softmax rows") {
  Matrix a(3, 3);
  a(0, 1) = 1.0;
  a(1, 0) = 1.0;
  const CandidateEdgeSet set = build_hop_candidates(a, 2);
  REQUIRE(set.lists[2].empty());

  Matrix logits(set.pairs.size(), 1);
  for (std::size_t i = 0; i < logits.size(); ++i) logits.data()[i] = 0.7;
  Tape t;
  const Matrix& s = t.value(normalize_candidates(t, t.constant(logits), set, 3));
  for (std::size_t j = 0; j < 3; ++j) REQUIRE(s(2, j) == 0.0);
  REQUIRE(s(0, 1) == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("diffusion candidates take the top-k entries with low-index ties") {
  Matrix diff(3, 3);
  diff(0, 1) = 0.4;
  diff(0, 2) = 0.4;
  diff(1, 0) = 0.1;
  diff(1, 2) = 0.9;
  // row 2 has no positive entries; original adjacency provides the fallback
  Matrix orig(3, 3);
  orig(2, 0) = 1.0;
  orig(0, 2) = 1.0;
  const CandidateEdgeSet set = build_diffusion_candidates(diff, orig, 1);
  REQUIRE(set.lists[0] == std::vector<std::size_t>{1});  // tie 0.4/0.4 -> lower index
  REQUIRE(set.lists[1] == std::vector<std::size_t>{2});
  REQUIRE(set.lists[2] == std::vector<std::size_t>{0});  // fallback to 1-hop
}

TEST_CASE("zero estimator weights produce zero embeddings and logits") {
  EstimatorConfig cfg;
  cfg.hidden = 4;
  cfg.mlp_hidden = 3;
  EstimatorViewParams v;
  v.gcn_weight = Param("gcn", Matrix(2, 4));
  v.mlp_w1 = Param("mlp1", Matrix(9, 3));
  v.mlp_w2 = Param("mlp2", Matrix(4, 1));

  const Matrix a = path_adjacency(3);
  RngStream rng(2);
  const Matrix x = random_matrix(3, 2, rng);
  const CandidateEdgeSet set = build_hop_candidates(a, 1);

  Tape t;
  Tensor h = estimator_embed(t, a, x, v);
  const Matrix& hv = t.value(h);
  for (std::size_t i = 0; i < hv.size(); ++i) REQUIRE(hv.data()[i] == 0.0);
  const Matrix& lv = t.value(pairwise_logits(t, h, set, v));
  REQUIRE(lv.rows() == set.pairs.size());
  for (std::size_t i = 0; i < lv.size(); ++i) REQUIRE(lv.data()[i] == 0.0);
}

TEST_CASE("identity view with identity weights embeds each node separately") {
  EstimatorViewParams v;
  v.gcn_weight = Param("gcn", Matrix::identity(3));
  v.mlp_w1 = Param("mlp1", Matrix(7, 2));
  v.mlp_w2 = Param("mlp2", Matrix(3, 1));
  Tape t;
  Tensor h = estimator_embed(t, Matrix::identity(3), Matrix::identity(3), v);
  const Matrix& hv = t.value(h);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j)
      REQUIRE(hv(i, j) == Catch::Approx(i == j ? 1.0 : 0.0).margin(1e-12));
}

TEST_CASE("estimator embedding matches a dense recomputation") {
  EstimatorConfig cfg;
  cfg.hidden = 5;
  EstimatorViewParams v = make_view(3, cfg, 11);
  const Matrix a = path_adjacency(4);
  RngStream rng(12);
  const Matrix x = random_matrix(4, 3, rng);

  Tape t;
  const Matrix& h = t.value(estimator_embed(t, a, x, v));

  const Matrix an = gcn_norm(a);
  const Matrix oracle = matmul(an, matmul(x, v.gcn_weight.value));
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 5; ++j)
      REQUIRE(h(i, j) == Catch::Approx(std::max(oracle(i, j), 0.0)).margin(1e-12));
}

TEST_CASE("identical node embeddings produce identical pair logits") {
  EstimatorConfig cfg;
  cfg.hidden = 3;
  cfg.mlp_hidden = 4;
  EstimatorViewParams v = make_view(3, cfg, 21);
  // identity weights make H rows equal whenever input rows are equal
  v.gcn_weight.value = Matrix::identity(3);

  Matrix a(3, 3);  // triangle: every pair is a candidate
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j)
      if (i != j) a(i, j) = 1.0;
  Matrix x(3, 3, 1.0);  // all rows identical

  const CandidateEdgeSet set = build_hop_candidates(a, 1);
  Tape t;
  Tensor h = estimator_embed(t, a, x, v);
  const Matrix& lv = t.value(pairwise_logits(t, h, set, v));
  for (std::size_t p = 1; p < set.pairs.size(); ++p)
    REQUIRE(lv(p, 0) == Catch::Approx(lv(0, 0)).margin(1e-12));
}

TEST_CASE("hand-set single-hidden-unit scorer matches scalar arithmetic") {
  EstimatorViewParams v;
  v.gcn_weight = Param("gcn", Matrix::identity(1));
  v.mlp_w1 = Param("mlp1", Matrix(3, 1));  // [a, b, bias]^T
  v.mlp_w1.value(0, 0) = 2.0;
  v.mlp_w1.value(1, 0) = -1.0;
  v.mlp_w1.value(2, 0) = 0.5;
  v.mlp_w2 = Param("mlp2", Matrix(2, 1));  // [d, bias]^T
  v.mlp_w2.value(0, 0) = 3.0;
  v.mlp_w2.value(1, 0) = -0.25;

  CandidateEdgeSet set;
  set.lists = {{1, 2}, {}, {}};
  set.finalize(3);

  Matrix h(3, 1);
  h(0, 0) = 1.0;
  h(1, 0) = 2.0;
  h(2, 0) = 4.0;
  Tape t;
  const Matrix& lv = t.value(pairwise_logits(t, t.constant(h), set, v));
  // pair (0,1): relu(2*1 - 1*2 + 0.5) = 0.5 -> 3*0.5 - 0.25 = 1.25
  REQUIRE(lv(0, 0) == Catch::Approx(1.25).margin(1e-12));
  // pair (0,2): relu(2*1 - 1*4 + 0.5) = 0 -> -0.25
  REQUIRE(lv(1, 0) == Catch::Approx(-0.25).margin(1e-12));
}

TEST_CASE("candidate softmax oracles") {
  CandidateEdgeSet set;
  set.lists = {{1, 2}, {0}, {0, 1, 3, 4}, {}, {2}};
  set.finalize(5);

  Matrix logits(set.pairs.size(), 1);
  // node 0 pair logits (1, 2); node 1 single candidate; node 2 four equal
  logits(0, 0) = 1.0;
  logits(1, 0) = 2.0;
  logits(2, 0) = 5.5;
  for (std::size_t p = 3; p < 7; ++p) logits(p, 0) = -0.3;
  logits(7, 0) = 9.0;

  Tape t;
  const Matrix& s = t.value(normalize_candidates(t, t.constant(logits), set, 5));
  const double z = std::exp(1.0) + std::exp(2.0);
  REQUIRE(s(0, 1) == Catch::Approx(std::exp(1.0) / z).margin(1e-9));
  REQUIRE(s(0, 2) == Catch::Approx(std::exp(2.0) / z).margin(1e-9));
  REQUIRE(s(0, 1) == Catch::Approx(0.2689).margin(5e-4));
  REQUIRE(s(0, 2) == Catch::Approx(0.7311).margin(5e-4));
  REQUIRE(s(1, 0) == Catch::Approx(1.0).margin(1e-12));
  for (std::size_t j : {std::size_t{0}, std::size_t{1}, std::size_t{3}, std::size_t{4}})
    REQUIRE(s(2, j) == Catch::Approx(0.25).margin(1e-12));
  for (std::size_t j = 0; j < 5; ++j) REQUIRE(s(3, j) == 0.0);
  REQUIRE(s(4, 2) == Catch::Approx(1.0).margin(1e-12));
  // zero support off the candidate sets
  REQUIRE(s(0, 0) == 0.0);
  REQUIRE(s(0, 3) == 0.0);
  REQUIRE(s(2, 2) == 0.0);
}

TEST_CASE("candidate softmax rows sum to one on random instances") {
  RngStream rng(31);
  for (int trial = 0; trial < 5; ++trial) {
    const std::size_t n = 4 + static_cast<std::size_t>(rng.next_below(6));
    Matrix a(n, n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j)
        if (rng.uniform() < 0.45) {
          a(i, j) = 1.0;
          a(j, i) = 1.0;
        }
    const CandidateEdgeSet set = build_hop_candidates(a, 2);
    if (set.pairs.empty()) continue;
    Matrix logits = random_matrix(set.pairs.size(), 1, rng, -4.0, 4.0);
    Tape t;
    const Matrix& s = t.value(normalize_candidates(t, t.constant(logits), set, n));
    for (std::size_t i = 0; i < n; ++i) {
      double row = 0.0;
      for (std::size_t j = 0; j < n; ++j) row += s(i, j);
      if (set.lists[i].empty())
        REQUIRE(row == 0.0);
      else
        REQUIRE(row == Catch::Approx(1.0).margin(1e-9));
    }
  }
}

TEST_CASE("redefinition degenerates correctly at the coefficient corners") {
  RngStream rng(41);
  const std::size_t n = 4;
  const Matrix a = path_adjacency(n);
  const Matrix a_hat = random_matrix(n, n, rng, 0.0, 1.0);
  const Matrix s1 = random_matrix(n, n, rng, 0.0, 1.0);
  const Matrix s2 = random_matrix(n, n, rng, 0.0, 1.0);

  Tape t;
  const RedefinedStructure zero_gamma =
      redefine(t, t.constant(a), t.constant(a_hat), t.constant(s1), t.constant(s2), 0.0, 0.0, 1.0);
  const Matrix& r1 = t.value(zero_gamma.a_r1);
  const Matrix& r2 = t.value(zero_gamma.a_r2);
  for (std::size_t i = 0; i < n * n; ++i) {
    REQUIRE(r1.data()[i] == Catch::Approx(a.data()[i]).margin(1e-15));
    REQUIRE(r2.data()[i] == Catch::Approx(a.data()[i]).margin(1e-15));
  }
}

TEST_CASE("redefinition matches direct arithmetic on a 2-node instance") {
  Matrix a(2, 2);
  Matrix s1(2, 2);
  s1(0, 1) = 1.0;
  s1(1, 0) = 1.0;
  Tape t;
  const RedefinedStructure red = redefine(t, t.constant(a), t.constant(a), t.constant(s1),
                                          t.constant(Matrix(2, 2)), 0.5, 0.0, 1.0);
  const Matrix& r1 = t.value(red.a_r1);
  REQUIRE(r1(0, 0) == 0.0);
  REQUIRE(r1(0, 1) == Catch::Approx(0.5).margin(1e-15));
  REQUIRE(r1(1, 0) == Catch::Approx(0.5).margin(1e-15));
}

TEST_CASE("redefinition rejects coefficients outside the unit interval") {
  Tape t;
  Tensor z = t.constant(Matrix(2, 2));
  REQUIRE_THROWS_AS(redefine(t, z, z, z, z, -0.1, 0.5, 0.5), ContractViolation);
  REQUIRE_THROWS_AS(redefine(t, z, z, z, z, 0.5, 1.5, 0.5), ContractViolation);
  REQUIRE_THROWS_AS(redefine(t, z, z, z, z, 0.5, 0.5, 2.0), ContractViolation);
}

TEST_CASE("redefined structures symmetrize asymmetric softmax input") {
  RngStream rng(43);
  const std::size_t n = 5;
  const Matrix a = path_adjacency(n);
  const Matrix a_hat = random_matrix(n, n, rng, 0.0, 1.0);
  Matrix s1 = random_matrix(n, n, rng, 0.0, 1.0);  // deliberately asymmetric
  Matrix s2 = random_matrix(n, n, rng, 0.0, 1.0);

  Tape t;
  const RedefinedStructure red = redefine(t, t.constant(a), t.constant(gcn_norm(a_hat)),
                                          t.constant(s1), t.constant(s2), 0.7, 0.3, 0.4);
  Tensor star = fuse(t, red.a_r1, red.a_r2);
  for (const Matrix* m : {&t.value(red.a_r1), &t.value(red.a_r2), &t.value(star)}) {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        REQUIRE((*m)(i, j) == Catch::Approx((*m)(j, i)).margin(1e-9));
        REQUIRE((*m)(i, j) >= 0.0);
      }
  }
  // A_r1 check against hand formula: (A + g1 S1 sym)
  const Matrix& r1 = t.value(red.a_r1);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const double expect = a(i, j) + 0.7 * (s1(i, j) + s1(j, i)) / 2.0;
      REQUIRE(r1(i, j) == Catch::Approx(expect).margin(1e-12));
    }
}

TEST_CASE("fusion is the elementwise mean") {
  RngStream rng(47);
  const Matrix x = random_matrix(3, 3, rng, 0.0, 2.0);
  const Matrix y = random_matrix(3, 3, rng, 0.0, 2.0);
  Tape t;
  const Matrix& same = t.value(fuse(t, t.constant(x), t.constant(x)));
  for (std::size_t i = 0; i < 9; ++i) REQUIRE(same.data()[i] == Catch::Approx(x.data()[i]).margin(1e-15));
  const Matrix& half = t.value(fuse(t, t.constant(Matrix(3, 3, 1.0)), t.constant(Matrix(3, 3))));
  for (std::size_t i = 0; i < 9; ++i) REQUIRE(half.data()[i] == 0.5);
  const Matrix& mean = t.value(fuse(t, t.constant(x), t.constant(y)));
  for (std::size_t i = 0; i < 9; ++i)
    REQUIRE(mean.data()[i] == Catch::Approx((x.data()[i] + y.data()[i]) / 2.0).margin(1e-15));
}

TEST_CASE("structure path gradients match finite differences") {
  EstimatorConfig cfg;
  cfg.hidden = 3;
  cfg.mlp_hidden = 3;
  cfg.gamma1 = 0.6;
  cfg.gamma2 = 0.4;
  cfg.mu = 0.3;

  const std::size_t n = 6;
  RngStream rng(53);
  Matrix a(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (rng.uniform() < 0.5) {
        a(i, j) = 1.0;
        a(j, i) = 1.0;
      }
  const Matrix x_hat = random_matrix(n, 4, rng);
  const Matrix x = random_matrix(n, 3, rng);
  Matrix a_hat = random_matrix(n, n, rng, 0.0, 1.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < i; ++j) a_hat(j, i) = a_hat(i, j);

  EstimatorViewParams v1 = make_view(4, cfg, 61);
  EstimatorViewParams v2 = make_view(3, cfg, 62);
  const CandidateEdgeSet c1 = build_hop_candidates(a, 2);
  const CandidateEdgeSet c2 = build_diffusion_candidates(a_hat, a, 3);
  const Matrix probe = random_matrix(n, n, rng);

  std::vector<Param*> params = v1.params();
  for (Param* p : v2.params()) params.push_back(p);
  for (Param* p : params) p->requires_grad = true;

  const double err = gradient_check(
      [&](Tape& t) {
        Tensor h1 = estimator_embed(t, a, x_hat, v1);
        Tensor h2 = estimator_embed(t, a_hat, x, v2);
        Tensor s1 = normalize_candidates(t, pairwise_logits(t, h1, c1, v1), c1, n);
        Tensor s2 = normalize_candidates(t, pairwise_logits(t, h2, c2, v2), c2, n);
        const RedefinedStructure red =
            redefine(t, t.constant(a), t.constant(a_hat), s1, s2, cfg.gamma1, cfg.gamma2, cfg.mu);
        Tensor star = fuse(t, red.a_r1, red.a_r2);
        return t.reduce_mean(t.elementwise_mul(star, t.constant(probe)));
      },
      params);
  REQUIRE(err <= 1e-4);
}

TEST_CASE("zero gammas cut the estimator out of the gradient exactly") {
  EstimatorConfig cfg;
  cfg.hidden = 3;
  cfg.mlp_hidden = 3;
  const std::size_t n = 5;
  RngStream rng(59);
  const Matrix a = path_adjacency(n);
  const Matrix x_hat = random_matrix(n, 3, rng);
  const Matrix x = random_matrix(n, 2, rng);
  const Matrix a_hat = gcn_norm(a);

  EstimatorViewParams v1 = make_view(3, cfg, 71);
  EstimatorViewParams v2 = make_view(2, cfg, 72);
  const CandidateEdgeSet c1 = build_hop_candidates(a, 2);
  const CandidateEdgeSet c2 = build_diffusion_candidates(a_hat, a, 2);
  const Matrix probe = random_matrix(n, n, rng);

  for (Param* p : v1.params()) p->requires_grad = true;
  for (Param* p : v2.params()) p->requires_grad = true;

  Tape t;
  Tensor h1 = estimator_embed(t, a, x_hat, v1);
  Tensor h2 = estimator_embed(t, a_hat, x, v2);
  Tensor s1 = normalize_candidates(t, pairwise_logits(t, h1, c1, v1), c1, n);
  Tensor s2 = normalize_candidates(t, pairwise_logits(t, h2, c2, v2), c2, n);
  const RedefinedStructure red =
      redefine(t, t.constant(a), t.constant(a_hat), s1, s2, 0.0, 0.0, 0.8);
  Tensor star = fuse(t, red.a_r1, red.a_r2);
  t.backward(t.reduce_mean(t.elementwise_mul(star, t.constant(probe))));

  for (Param* p : v1.params())
    for (std::size_t i = 0; i < p->grad.size(); ++i) REQUIRE(p->grad.data()[i] == 0.0);
  for (Param* p : v2.params())
    for (std::size_t i = 0; i < p->grad.size(); ++i) REQUIRE(p->grad.data()[i] == 0.0);
}
