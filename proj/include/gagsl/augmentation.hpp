#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <utility>
#include <vector>

#include "gagsl/eigen.hpp"
#include "gagsl/error.hpp"
#include "gagsl/graph.hpp"
#include "gagsl/matrix.hpp"

namespace gagsl {

struct WaveletConfig {
  std::vector<double> scales;         // heat-kernel diffusion scales, ascending, > 0
  std::vector<double> sample_points;  // characteristic-function t grid, ascending

  void validate() const {
    if (scales.empty()) throw ValidationError("wavelet config: need at least one scale");
    if (sample_points.empty())
      throw ValidationError("wavelet config: need at least one sample point");
    for (std::size_t i = 0; i < scales.size(); ++i) {
      if (scales[i] <= 0.0) throw ValidationError("wavelet config: scales must be positive");
      if (i && scales[i] <= scales[i - 1])
        throw ValidationError("wavelet config: scales must be strictly ascending");
    }
    for (std::size_t i = 1; i < sample_points.size(); ++i)
      if (sample_points[i] <= sample_points[i - 1])
        throw ValidationError("wavelet config: sample points must be ascending");
  }
};

// Scale heuristic: anchor the diffusion scales to the inverse spectral gap
// (smallest nonzero Laplacian eigenvalue, floored at 1e-3).
inline WaveletConfig default_wavelet_config(const std::vector<double>& lap_eigenvalues,
                                            std::size_t d = 8) {
  double gap = 0.0;
  for (double v : lap_eigenvalues)
    if (v > 1e-8) {
      gap = v;
      break;
    }
  gap = std::max(gap, 1e-3);
  WaveletConfig cfg;
  cfg.scales = {0.5 / gap, 2.0 / gap};
  cfg.sample_points.resize(d);
  for (std::size_t j = 0; j < d; ++j)
    cfg.sample_points[j] = 20.0 * static_cast<double>(j) / static_cast<double>(d - 1 ? d - 1 : 1);
  return cfg;
}

struct StructuralEmbedding {
  Matrix values;  // N x (2 * d * m), scale-major, (re, im) interleaved per t
};

struct DiffusionMatrix {
  Matrix values;  // N x N
  double alpha = 0.15;
  std::size_t top_k = 0;  // 0 while dense; set by sparsify_topk
};

// Heat-kernel wavelet centered at node_i: U diag(e^{-lambda s}) U^T delta_i.
inline std::vector<double> heat_wavelet(const EigenDecomposition& eig, double s,
                                        std::size_t node_i) {
  const std::size_t n = eig.values.size();
  if (node_i >= n) throw ContractViolation("heat_wavelet: node index out of range");
  if (s == 0.0) {
    // g_0 is the identity filter: the wavelet is the impulse itself.
    std::vector<double> delta(n, 0.0);
    delta[node_i] = 1.0;
    return delta;
  }
  std::vector<double> coeff(n);
  for (std::size_t k = 0; k < n; ++k)
    coeff[k] = std::exp(-eig.values[k] * s) * eig.vectors(node_i, k);
  std::vector<double> psi(n, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    double v = 0.0;
    for (std::size_t k = 0; k < n; ++k) v += eig.vectors(r, k) * coeff[k];
    psi[r] = v;
  }
  return psi;
}

// Empirical characteristic function of the wavelet coefficients under the
// e^{-i psi t} convention: (mean cos(psi t), -mean sin(psi t)).
inline std::pair<double, double> characteristic_function(const std::vector<double>& psi,
                                                         double t) {
  double re = 0.0, im = 0.0;
  for (double p : psi) {
    re += std::cos(p * t);
    im -= std::sin(p * t);
  }
  const double n = static_cast<double>(psi.size());
  return {re / n, im / n};
}

// Structural role embedding: for each node, characteristic-function samples
// of its heat wavelet at every (scale, t) pair, concatenated scale-major with
// (re, im) adjacent per t. Output shape N x (2 * d * m).
inline StructuralEmbedding structural_embedding(const Graph& g, const WaveletConfig& cfg) {
  cfg.validate();
  const std::size_t n = g.node_count;
  const std::size_t m = cfg.scales.size();
  const std::size_t d = cfg.sample_points.size();

  const NormalizedOperators ops = normalize(g);
  const EigenDecomposition eig = eigendecompose_sym(ops.laplacian);

  StructuralEmbedding emb;
  emb.values = Matrix(n, 2 * d * m);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t si = 0; si < m; ++si) {
      const std::vector<double> psi = heat_wavelet(eig, cfg.scales[si], i);
      for (std::size_t tj = 0; tj < d; ++tj) {
        const auto [re, im] = characteristic_function(psi, cfg.sample_points[tj]);
        emb.values(i, 2 * (si * d + tj)) = re;
        emb.values(i, 2 * (si * d + tj) + 1) = im;
      }
    }
  }
  return emb;
}

// Personalized-PageRank diffusion, closed form:
// A_hat = alpha (I - (1-alpha) D^{-1/2} A D^{-1/2})^{-1}.
// Solved densely; the defining system's residual must be <= 1e-8.
inline DiffusionMatrix ppr_diffusion(const Graph& g, double alpha) {
  if (!(alpha > 0.0 && alpha <= 1.0))
    throw ContractViolation("ppr_diffusion: alpha must be in (0, 1]");
  const std::size_t n = g.node_count;
  const NormalizedOperators ops = normalize(g);

  // T = D^{-1/2} A D^{-1/2}; rebuild from the Laplacian's complement so the
  // same degree floor applies.
  Matrix system(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const double t = (i == j ? (ops.degree[i] > 0.0 ? 1.0 : 0.0) : 0.0) - ops.laplacian(i, j);
      system(i, j) = (i == j ? 1.0 : 0.0) - (1.0 - alpha) * t;
    }

  Matrix rhs(n, n);
  for (std::size_t i = 0; i < n; ++i) rhs(i, i) = alpha;
  DiffusionMatrix out;
  out.values = solve_linear(system, rhs);
  out.alpha = alpha;

  Matrix resid = matmul(system, out.values);
  for (std::size_t i = 0; i < n; ++i) resid(i, i) -= alpha;
  if (resid.max_abs() > 1e-8)
    throw NumericError("ppr_diffusion: linear-system residual " +
                       std::to_string(resid.max_abs()) + " exceeds 1e-8");
  return out;
}

// Keep each row's k largest off-diagonal entries plus the diagonal, then
// symmetrize by elementwise max. Ties at the k-th slot keep the lower column
// index. Weights are preserved, never renormalized.
inline DiffusionMatrix sparsify_topk(const DiffusionMatrix& diffusion, std::size_t k) {
  if (k < 1) throw ContractViolation("sparsify_topk: k must be >= 1");
  const Matrix& a = diffusion.values;
  const std::size_t n = a.rows();
  Matrix kept(n, n);
  std::vector<std::pair<double, std::size_t>> row;
  for (std::size_t i = 0; i < n; ++i) {
    kept(i, i) = a(i, i);
    row.clear();
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) row.emplace_back(a(i, j), j);
    const std::size_t take = std::min(k, row.size());
    std::partial_sort(row.begin(), row.begin() + static_cast<std::ptrdiff_t>(take), row.end(),
                      [](const auto& x, const auto& y) {
                        if (x.first != y.first) return x.first > y.first;
                        return x.second < y.second;
                      });
    for (std::size_t r = 0; r < take; ++r) kept(i, row[r].second) = row[r].first;
  }

  DiffusionMatrix out;
  out.values = Matrix(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      out.values(i, j) = std::max(kept(i, j), kept(j, i));
  out.alpha = diffusion.alpha;
  out.top_k = k;
  return out;
}

}  // namespace gagsl
