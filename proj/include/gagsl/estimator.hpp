#pragma once

#include <algorithm>
#include <cstdint>
#include <deque>
#include <string>
#include <utility>
#include <vector>

#include "gagsl/error.hpp"
#include "gagsl/matrix.hpp"
#include "gagsl/tensor.hpp"

namespace gagsl {

// Self-loop symmetric normalization D~^{-1/2} (A + I) D~^{-1/2} of a constant
// adjacency (plain matrix form; the tape form lives in trainer code).
inline Matrix gcn_norm(const Matrix& a) {
  if (a.rows() != a.cols()) throw ContractViolation("gcn_norm: matrix not square");
  const std::size_t n = a.rows();
  std::vector<double> dinv(n);
  for (std::size_t i = 0; i < n; ++i) {
    double d = 1.0;
    for (std::size_t j = 0; j < n; ++j) d += a(i, j);
    dinv[i] = 1.0 / std::sqrt(std::max(d, 1e-12));
  }
  Matrix out(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      out(i, j) = (a(i, j) + (i == j ? 1.0 : 0.0)) * (dinv[i] * dinv[j]);
  return out;
}

struct EstimatorConfig {
  std::size_t hop = 2;          // candidate order for the feature view
  std::size_t candidate_k = 5;  // diffusion-view candidates per node
  std::size_t hidden = 16;      // GCN output width
  std::size_t mlp_hidden = 16;  // pair-scorer hidden width
  double gamma1 = 0.5;          // learned-weight share, view 1
  double gamma2 = 0.5;          // learned-weight share, view 2
  double mu = 1.0;              // original-vs-diffused mix, view 2

  void validate() const {
    if (hop < 1) throw ValidationError("estimator: hop must be >= 1");
    if (candidate_k < 1) throw ValidationError("estimator: candidate_k must be >= 1");
    if (hidden < 1 || mlp_hidden < 1) throw ValidationError("estimator: widths must be >= 1");
    for (double c : {gamma1, gamma2, mu})
      if (c < 0.0 || c > 1.0)
        throw ValidationError("estimator: combination coefficients must be in [0, 1]");
  }
};

// Parameters of one view's estimator: a GCN layer and a pair-scoring MLP
// (two affine layers, ReLU between, scalar output). Biases are folded in as
// trailing weight rows against an appended ones column.
struct EstimatorViewParams {
  Param gcn_weight;  // F_view x hidden
  Param mlp_w1;      // (2*hidden + 1) x mlp_hidden
  Param mlp_w2;      // (mlp_hidden + 1) x 1

  std::vector<Param*> params() { return {&gcn_weight, &mlp_w1, &mlp_w2}; }
};

// The full estimator parameter group: the two views never share weights.
struct EstimatorParams {
  EstimatorViewParams view1;  // consumes (A, X^)
  EstimatorViewParams view2;  // consumes (A^, X)

  static EstimatorParams init(std::size_t feat_dim_view1, std::size_t feat_dim_view2,
                              const EstimatorConfig& cfg, const RngStream& rng) {
    EstimatorParams p;
    const auto make_view = [&](EstimatorViewParams& v, std::size_t fdim, const std::string& tag) {
      v.gcn_weight = Param(tag + ".gcn", glorot_uniform(fdim, cfg.hidden, rng.derive(tag + ".gcn")));
      v.mlp_w1 = Param(tag + ".mlp1",
                       glorot_uniform(2 * cfg.hidden + 1, cfg.mlp_hidden, rng.derive(tag + ".mlp1")));
      v.mlp_w2 = Param(tag + ".mlp2", glorot_uniform(cfg.mlp_hidden + 1, 1, rng.derive(tag + ".mlp2")));
    };
    make_view(p.view1, feat_dim_view1, "estimator1");
    make_view(p.view2, feat_dim_view2, "estimator2");
    return p;
  }

  std::vector<Param*> params() {
    std::vector<Param*> out = view1.params();
    for (Param* p : view2.params()) out.push_back(p);
    return out;
  }

  void set_requires_grad(bool on) {
    for (Param* p : params()) p->requires_grad = on;
  }
};

// Per-node candidate lists with the derived flattened pair list and the two
// masks the softmax path needs: mask01 (1 on candidates) and maskneg (-1e30
// off candidates, 0 on them).
struct CandidateEdgeSet {
  std::vector<std::vector<std::size_t>> lists;
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  Matrix mask01;
  Matrix maskneg;

  static constexpr double kNeg = -1e30;

  void finalize(std::size_t n) {
    pairs.clear();
    mask01 = Matrix(n, n);
    maskneg = Matrix(n, n, kNeg);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j : lists[i]) {
        pairs.emplace_back(i, j);
        mask01(i, j) = 1.0;
        maskneg(i, j) = 0.0;
      }
  }
};

// Nodes within `hop` hops of each node in the (weighted-as-binary) adjacency,
// self excluded, ascending index order.
inline CandidateEdgeSet build_hop_candidates(const Matrix& a, std::size_t hop) {
  const std::size_t n = a.rows();
  CandidateEdgeSet set;
  set.lists.resize(n);
  std::vector<int> dist(n);
  for (std::size_t src = 0; src < n; ++src) {
    std::fill(dist.begin(), dist.end(), -1);
    dist[src] = 0;
    std::deque<std::size_t> queue{src};
    while (!queue.empty()) {
      const std::size_t u = queue.front();
      queue.pop_front();
      if (static_cast<std::size_t>(dist[u]) == hop) continue;
      for (std::size_t v = 0; v < n; ++v)
        if (a(u, v) != 0.0 && dist[v] < 0) {
          dist[v] = dist[u] + 1;
          queue.push_back(v);
        }
    }
    for (std::size_t v = 0; v < n; ++v)
      if (v != src && dist[v] > 0) set.lists[src].push_back(v);
  }
  set.finalize(n);
  return set;
}

// Per node, the k largest strictly positive off-diagonal diffusion entries
// (ties keep the lower index). Empty rows fall back to 1-hop neighbors in the
// original adjacency; isolated nodes keep an empty list.
inline CandidateEdgeSet build_diffusion_candidates(const Matrix& diffused,
                                                   const Matrix& original, std::size_t k) {
  const std::size_t n = diffused.rows();
  CandidateEdgeSet set;
  set.lists.resize(n);
  std::vector<std::pair<double, std::size_t>> row;
  for (std::size_t i = 0; i < n; ++i) {
    row.clear();
    for (std::size_t j = 0; j < n; ++j)
      if (j != i && diffused(i, j) > 0.0) row.emplace_back(diffused(i, j), j);
    const std::size_t take = std::min(k, row.size());
    std::partial_sort(row.begin(), row.begin() + static_cast<std::ptrdiff_t>(take), row.end(),
                      [](const auto& x, const auto& y) {
                        if (x.first != y.first) return x.first > y.first;
                        return x.second < y.second;
                      });
    auto& list = set.lists[i];
    for (std::size_t r = 0; r < take; ++r) list.push_back(row[r].second);
    if (list.empty())
      for (std::size_t j = 0; j < n; ++j)
        if (j != i && original(i, j) != 0.0) list.push_back(j);
    std::sort(list.begin(), list.end());
  }
  set.finalize(n);
  return set;
}

inline Tensor append_ones_column(Tape& tape, Tensor x) {
  return tape.concat_cols(x, tape.constant(Matrix(tape.value(x).rows(), 1, 1.0)));
}

// One GCN layer over a fixed view: H = ReLU(gcn_norm(adjacency) X W).
inline Tensor estimator_embed(Tape& tape, const Matrix& view_adjacency,
                              const Matrix& view_features, EstimatorViewParams& params) {
  if (view_adjacency.rows() != view_features.rows())
    throw ContractViolation("estimator_embed: adjacency/feature row mismatch");
  if (view_features.cols() != params.gcn_weight.value.rows())
    throw ContractViolation("estimator_embed: feature dim does not match gcn weight");
  Tensor an = tape.constant(gcn_norm(view_adjacency));
  Tensor x = tape.constant(view_features);
  Tensor w = tape.leaf(params.gcn_weight);
  return tape.relu(tape.matmul(an, tape.matmul(x, w)));
}

// Pair scores w_ij = MLP(concat(h_i, h_j)) over the flattened candidate
// pairs; returns a K x 1 column aligned with candidates.pairs.
inline Tensor pairwise_logits(Tape& tape, Tensor h, const CandidateEdgeSet& candidates,
                              EstimatorViewParams& params) {
  std::vector<std::size_t> left, right;
  left.reserve(candidates.pairs.size());
  right.reserve(candidates.pairs.size());
  for (const auto& [i, j] : candidates.pairs) {
    left.push_back(i);
    right.push_back(j);
  }
  Tensor pair_embed = tape.concat_cols(tape.gather_rows(h, left), tape.gather_rows(h, right));
  Tensor hidden = tape.relu(
      tape.matmul(append_ones_column(tape, pair_embed), tape.leaf(params.mlp_w1)));
  return tape.matmul(append_ones_column(tape, hidden), tape.leaf(params.mlp_w2));
}

// Per-row softmax over each node's candidates, scattered into an N x N
// matrix. Non-candidate entries are exactly zero; empty candidate rows are
// all-zero. The -1e30 fill underflows to exact zeros through the stable
// softmax, and the 0/1 mask keeps the empty-row case clean.
inline Tensor normalize_candidates(Tape& tape, Tensor logits, const CandidateEdgeSet& candidates,
                                   std::size_t n) {
  Tensor scattered = tape.scatter_pairs(logits, candidates.pairs, n);
  Tensor shifted = tape.add(scattered, tape.constant(candidates.maskneg));
  Tensor soft = tape.row_softmax(shifted);
  return tape.elementwise_mul(soft, tape.constant(candidates.mask01));
}

inline Tensor symmetrize_mean(Tape& tape, Tensor m) {
  return tape.scale(tape.add(m, tape.transpose(m)), 0.5);
}

struct RedefinedStructure {
  Tensor a_r1;
  Tensor a_r2;
};

// View-wise structure redefinition:
//   A_r1 = A + gamma1 S1, A_r2 = mu A + (1 - mu) A^ + gamma2 S2,
// each symmetrized by the elementwise mean with its transpose.
inline RedefinedStructure redefine(Tape& tape, Tensor a, Tensor a_hat, Tensor s1, Tensor s2,
                                   double gamma1, double gamma2, double mu) {
  for (double c : {gamma1, gamma2, mu})
    if (c < 0.0 || c > 1.0) throw ContractViolation("redefine: coefficients must be in [0, 1]");
  RedefinedStructure out;
  out.a_r1 = symmetrize_mean(tape, tape.add(a, tape.scale(s1, gamma1)));
  out.a_r2 = symmetrize_mean(
      tape, tape.add(tape.add(tape.scale(a, mu), tape.scale(a_hat, 1.0 - mu)),
                     tape.scale(s2, gamma2)));
  return out;
}

// A* = (A_r1 + A_r2) / 2.
inline Tensor fuse(Tape& tape, Tensor a_r1, Tensor a_r2) {
  return tape.scale(tape.add(a_r1, a_r2), 0.5);
}

}  // namespace gagsl
