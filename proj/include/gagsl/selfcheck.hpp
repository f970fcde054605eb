#pragma once

// Fast invariant battery behind `gagsl check`. Each probe recomputes a known
// quantity through an independent route (closed form, power series, or hand
// count) and compares against the library path. One line per probe; the
// battery as a whole passes only if every probe does.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "augmentation.hpp"
#include "eigen.hpp"
#include "estimator.hpp"
#include "graph.hpp"
#include "harness.hpp"
#include "matrix.hpp"
#include "metrics.hpp"
#include "rng.hpp"
#include "tensor.hpp"
#include "trainer.hpp"

namespace gagsl {
namespace selfcheck {

struct Probe {
  std::string name;
  bool ok = false;
  std::string detail;  // empty when ok
};

inline Probe pass(std::string name) { return Probe{std::move(name), true, ""}; }
inline Probe fail(std::string name, std::string detail) {
  return Probe{std::move(name), false, std::move(detail)};
}

inline std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

// Same seed reproduces the draw sequence; sibling streams differ; drawing
// from a child never advances the parent.
inline Probe check_rng_streams() {
  const std::string name = "rng-streams";
  RngStream a(42), b(42);
  for (int i = 0; i < 8; ++i)
    if (a.next_u64() != b.next_u64()) return fail(name, "same seed diverged");
  RngStream parent(7);
  RngStream left = parent.derive("left");
  RngStream right = parent.derive("right");
  if (left.next_u64() == right.next_u64()) return fail(name, "sibling streams collided");
  RngStream p1(9), p2(9);
  RngStream child = p1.derive("c");
  for (int i = 0; i < 4; ++i) child.next_u64();
  if (p1.next_u64() != p2.next_u64()) return fail(name, "child draw advanced the parent");
  return pass(name);
}

// U diag(lambda) U^T must rebuild the input and U^T U must be the identity.
inline Probe check_eigen_reconstruction() {
  const std::string name = "eigen-reconstruction";
  const std::size_t n = 8;
  RngStream rng(11);
  Matrix a(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j) {
      const double v = rng.uniform(-1.0, 1.0);
      a(i, j) = v;
      a(j, i) = v;
    }
  const EigenDecomposition eig = eigendecompose_sym(a);
  double recon = 0.0, ortho = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double r = 0.0, o = 0.0;
      for (std::size_t k = 0; k < n; ++k) {
        r += eig.vectors(i, k) * eig.values[k] * eig.vectors(j, k);
        o += eig.vectors(k, i) * eig.vectors(k, j);
      }
      recon = std::max(recon, std::abs(r - a(i, j)));
      ortho = std::max(ortho, std::abs(o - (i == j ? 1.0 : 0.0)));
    }
  if (recon > 1e-8) return fail(name, "reconstruction residual " + fmt(recon));
  if (ortho > 1e-8) return fail(name, "orthonormality residual " + fmt(ortho));
  return pass(name);
}

inline Graph path_graph(std::size_t n) {
  Graph g;
  g.node_count = n;
  g.adjacency = Matrix(n, n);
  g.features = Matrix(n, 1);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    g.adjacency(i, i + 1) = 1.0;
    g.adjacency(i + 1, i) = 1.0;
  }
  return g;
}

// Single edge at alpha = 1/2 has the closed form [[2/3, 1/3], [1/3, 2/3]],
// and alpha = 1 keeps every graph at the identity.
inline Probe check_diffusion_closed_form() {
  const std::string name = "diffusion-closed-form";
  Graph g = path_graph(2);
  const DiffusionMatrix d = ppr_diffusion(g, 0.5);
  const double expect[2][2] = {{2.0 / 3.0, 1.0 / 3.0}, {1.0 / 3.0, 2.0 / 3.0}};
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 2; ++j)
      if (std::abs(d.values(i, j) - expect[i][j]) > 1e-12)
        return fail(name, "2-node entry off by " +
                              fmt(std::abs(d.values(i, j) - expect[i][j])));
  Graph g5 = path_graph(5);
  const DiffusionMatrix id = ppr_diffusion(g5, 1.0);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 5; ++j)
      if (std::abs(id.values(i, j) - (i == j ? 1.0 : 0.0)) > 1e-12)
        return fail(name, "alpha=1 is not the identity");
  return pass(name);
}

// The resolvent form must agree with the power series
// alpha sum_k (1-alpha)^k T^k, T = I - L_sym.
inline Probe check_diffusion_series() {
  const std::string name = "diffusion-series";
  Graph g = path_graph(5);
  g.adjacency(1, 3) = 1.0;
  g.adjacency(3, 1) = 1.0;
  const double alpha = 0.15;
  const DiffusionMatrix d = ppr_diffusion(g, alpha);

  const NormalizedOperators ops = normalize(g);
  const std::size_t n = 5;
  Matrix t(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      t(i, j) = (i == j ? 1.0 : 0.0) - ops.laplacian(i, j);
  Matrix term = Matrix::identity(n);
  Matrix sum(n, n);
  double coeff = alpha;
  for (int k = 0; k < 300; ++k) {
    for (std::size_t i = 0; i < n * n; ++i) sum.data()[i] += coeff * term.data()[i];
    Matrix next(n, n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        double v = 0.0;
        for (std::size_t m = 0; m < n; ++m) v += term(i, m) * t(m, j);
        next(i, j) = v;
      }
    term = next;
    coeff *= 1.0 - alpha;
  }
  double err = 0.0;
  for (std::size_t i = 0; i < n * n; ++i)
    err = std::max(err, std::abs(sum.data()[i] - d.values.data()[i]));
  if (err > 1e-9) return fail(name, "series residual " + fmt(err));
  return pass(name);
}

// Scale 0 collapses the wavelet to the delta at its center node, and the
// characteristic function of anything at t = 0 is (1, 0).
inline Probe check_wavelet_identity() {
  const std::string name = "wavelet-identity";
  Graph g = path_graph(5);
  const NormalizedOperators ops = normalize(g);
  const EigenDecomposition eig = eigendecompose_sym(ops.laplacian);
  const std::vector<double> psi = heat_wavelet(eig, 0.0, 2);
  for (std::size_t r = 0; r < psi.size(); ++r)
    if (std::abs(psi[r] - (r == 2 ? 1.0 : 0.0)) > 1e-9)
      return fail(name, "scale-0 wavelet is not a delta");
  const auto [re, im] = characteristic_function(psi, 0.0);
  if (std::abs(re - 1.0) > 1e-15 || std::abs(im) > 1e-15)
    return fail(name, "char fn at t=0 is (" + fmt(re) + ", " + fmt(im) + ")");
  return pass(name);
}

// Central differences on two composite graphs of primitives.
inline Probe check_autodiff_gradients() {
  const std::string name = "autodiff-gradients";
  auto fill = [](Matrix& m, double phase) {
    for (std::size_t i = 0; i < m.size(); ++i)
      m.data()[i] = 0.9 * std::sin(1.7 * static_cast<double>(i) + phase);
  };
  Matrix x(5, 3), mask(5, 2), y(4, 3);
  fill(x, 0.3);
  fill(y, 1.1);
  for (std::size_t i = 0; i < mask.size(); ++i) mask.data()[i] = (i % 2 == 0) ? 1.0 : -0.5;

  Param w1("w1", Matrix(3, 4)), w2("w2", Matrix(4, 2));
  fill(w1.value, 2.2);
  fill(w2.value, 0.7);
  auto gcn_like = [&](Tape& t) {
    Tensor h = t.relu(t.matmul(t.constant(x), t.leaf(w1)));
    Tensor z = t.row_log_softmax(t.matmul(h, t.leaf(w2)));
    return t.reduce_mean(t.elementwise_mul(z, t.constant(mask)));
  };
  const double e1 = gradient_check(gcn_like, {&w1, &w2});
  if (e1 > 1e-4) return fail(name, "gcn-like max rel error " + fmt(e1));

  Param u("u", Matrix(3, 4)), v("v", Matrix(3, 4));
  fill(u.value, 1.9);
  fill(v.value, 0.4);
  Matrix cmask(5, 4);
  fill(cmask, 2.8);
  auto cosine_like = [&](Tape& t) {
    Tensor a = t.l2_normalize_rows(t.matmul(t.constant(x), t.leaf(u)));
    Tensor b = t.l2_normalize_rows(t.matmul(t.constant(y), t.leaf(v)));
    Tensor s = t.matmul(a, t.transpose(b));
    Tensor rows = t.gather_rows(s, {0, 1, 2, 3, 4});
    return t.reduce_mean(t.elementwise_mul(rows, t.constant(cmask)));
  };
  const double e2 = gradient_check(cosine_like, {&u, &v});
  if (e2 > 1e-4) return fail(name, "cosine-like max rel error " + fmt(e2));
  return pass(name);
}

// Orthonormal embeddings give the closed form
// loss = log(e^{1/tau} + B - 1) - 1/tau.
inline Probe check_infonce_closed_form() {
  const std::string name = "infonce-closed-form";
  const std::size_t b = 4;
  const double tau = 0.5;
  Tape t;
  Tensor eye_a = t.constant(Matrix::identity(b));
  Tensor eye_b = t.constant(Matrix::identity(b));
  Tensor loss = infonce(t, eye_a, eye_b, tau, {0, 1, 2, 3});
  const double got = t.value(loss)(0, 0);
  const double expect =
      std::log(std::exp(1.0 / tau) + static_cast<double>(b) - 1.0) - 1.0 / tau;
  if (std::abs(got - expect) > 1e-12)
    return fail(name, "got " + fmt(got) + ", closed form " + fmt(expect));
  return pass(name);
}

// First step has the closed form v - lr * g / (|g| + eps) after bias
// correction, plus lr * wd * v under decoupled weight decay.
inline Probe check_adam_first_step() {
  const std::string name = "adam-first-step";
  Param p("p", Matrix(1, 1));
  p.value(0, 0) = 0.5;
  p.grad = Matrix(1, 1);
  p.grad(0, 0) = 0.25;
  AdamConfig cfg;
  cfg.lr = 0.01;
  cfg.weight_decay = 0.1;
  Adam opt({&p}, cfg);
  opt.step();
  const double expect =
      0.5 - cfg.lr * 0.25 / (0.25 + cfg.eps) - cfg.lr * cfg.weight_decay * 0.5;
  if (std::abs(p.value(0, 0) - expect) > 1e-12)
    return fail(name, "got " + fmt(p.value(0, 0)) + ", expect " + fmt(expect));
  return pass(name);
}

// floor(ratio * |E|) edges move in each direction, symmetry survives, and
// features are untouched.
inline Probe check_attack_edge_counts() {
  const std::string name = "attack-edge-counts";
  const std::size_t n = 12;
  Dataset ds;
  ds.graph.node_count = n;
  ds.graph.adjacency = Matrix(n, n);
  ds.graph.features = Matrix(n, 2);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = (i + 1) % n;
    ds.graph.adjacency(i, j) = 1.0;
    ds.graph.adjacency(j, i) = 1.0;
    ds.graph.features(i, 0) = static_cast<double>(i);
  }
  ds.labels.assign(n, 0);
  ds.train_mask.assign(n, 1);
  ds.val_mask.assign(n, 0);
  ds.test_mask.assign(n, 0);
  ds.class_count = 1;

  const Dataset added = apply_attack(ds, AttackSpec{AttackKind::edge_add, 0.5, 3});
  if (added.graph.edge_count() != 18)
    return fail(name, "edge_add 0.5 on 12 edges gave " +
                          std::to_string(added.graph.edge_count()));
  const Dataset removed = apply_attack(ds, AttackSpec{AttackKind::edge_delete, 0.25, 3});
  if (removed.graph.edge_count() != 9)
    return fail(name, "edge_delete 0.25 on 12 edges gave " +
                          std::to_string(removed.graph.edge_count()));
  if (!added.graph.adjacency.is_symmetric(0.0) || !removed.graph.adjacency.is_symmetric(0.0))
    return fail(name, "attack broke adjacency symmetry");
  for (std::size_t i = 0; i < n; ++i)
    if (added.graph.features(i, 0) != static_cast<double>(i))
      return fail(name, "edge attack modified features");
  return pass(name);
}

// Hand-counted confusion: preds {0,1,1,1} vs labels {0,0,1,1} give
// micro 3/4 and macro (2/3 + 4/5)/2; the scores are tie-free and rank every
// positive above every negative, so AUC is exactly 1.
inline Probe check_metrics_oracle() {
  const std::string name = "metrics-oracle";
  Matrix logits(4, 2);
  logits(0, 0) = 2.0;
  logits(0, 1) = 0.0;
  logits(1, 0) = 0.0;
  logits(1, 1) = 2.0;
  logits(2, 0) = -1.0;
  logits(2, 1) = 2.0;
  logits(3, 0) = 0.0;
  logits(3, 1) = 4.0;
  const std::vector<int> labels = {0, 0, 1, 1};
  const std::vector<std::uint8_t> mask = {1, 1, 1, 1};
  const TrialMetrics m = evaluate(logits, labels, mask, 2);
  if (std::abs(m.f1_micro - 0.75) > 1e-12)
    return fail(name, "f1_micro " + fmt(m.f1_micro) + ", expect 0.75");
  if (std::abs(m.f1_macro - 11.0 / 15.0) > 1e-12)
    return fail(name, "f1_macro " + fmt(m.f1_macro) + ", expect " + fmt(11.0 / 15.0));
  if (std::abs(m.auc - 1.0) > 1e-12) return fail(name, "auc " + fmt(m.auc) + ", expect 1");
  return pass(name);
}

// Candidate rows are probability rows: each row with candidates sums to 1,
// rows without candidates stay zero, non-candidate entries stay zero.
inline Probe check_candidate_softmax() {
  const std::string name = "candidate-softmax";
  const std::size_t n = 5;
  Matrix a(n, n);
  for (std::size_t i = 0; i + 1 < 4; ++i) {
    a(i, i + 1) = 1.0;
    a(i + 1, i) = 1.0;
  }
  const CandidateEdgeSet cand = build_hop_candidates(a, 2);
  if (cand.pairs.empty()) return fail(name, "hop candidate set is empty");
  Matrix logits(cand.pairs.size(), 1);
  RngStream rng(5);
  for (std::size_t i = 0; i < logits.size(); ++i) logits.data()[i] = rng.uniform(-2.0, 2.0);
  Tape t;
  Tensor s = normalize_candidates(t, t.constant(logits), cand, n);
  const Matrix& sv = t.value(s);
  for (std::size_t i = 0; i < n; ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      row += sv(i, j);
      if (cand.mask01(i, j) == 0.0 && sv(i, j) != 0.0)
        return fail(name, "non-candidate entry is nonzero");
    }
    const bool has = !cand.lists[i].empty();
    if (has && std::abs(row - 1.0) > 1e-12)
      return fail(name, "row " + std::to_string(i) + " sums to " + fmt(row));
    if (!has && row != 0.0)
      return fail(name, "empty row " + std::to_string(i) + " sums to " + fmt(row));
  }
  return pass(name);
}

// Runs every probe, one line each; true only when all pass.
inline bool run_all(std::ostream& out) {
  const std::vector<Probe> probes = {
      check_rng_streams(),        check_eigen_reconstruction(), check_diffusion_closed_form(),
      check_diffusion_series(),   check_wavelet_identity(),     check_autodiff_gradients(),
      check_infonce_closed_form(), check_adam_first_step(),     check_attack_edge_counts(),
      check_metrics_oracle(),     check_candidate_softmax(),
  };
  bool all = true;
  for (const Probe& p : probes) {
    if (p.ok) {
      out << "ok   " << p.name << "\n";
    } else {
      out << "FAIL " << p.name << ": " << p.detail << "\n";
      all = false;
    }
  }
  out << (all ? "all checks passed" : "checks FAILED") << "\n";
  return all;
}

}  // namespace selfcheck
}  // namespace gagsl
