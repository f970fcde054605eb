#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "gagsl/error.hpp"
#include "gagsl/matrix.hpp"

namespace gagsl {

// Undirected weighted graph with node features. Raw input graphs are 0/1
// with a zero diagonal; learned structures reuse the same container.
struct Graph {
  Matrix adjacency;  // N x N, symmetric, nonnegative
  Matrix features;   // N x F
  std::size_t node_count = 0;

  void validate() const {
    if (adjacency.rows() != node_count || adjacency.cols() != node_count)
      throw ValidationError("adjacency shape does not match node_count");
    if (features.rows() != node_count)
      throw ValidationError("feature row count does not match node_count");
    if (!adjacency.all_finite()) throw ValidationError("non-finite adjacency entry");
    if (!features.all_finite()) throw ValidationError("non-finite feature entry");
    if (!adjacency.is_symmetric(1e-9)) throw ValidationError("adjacency not symmetric");
    for (std::size_t i = 0; i < node_count; ++i)
      for (std::size_t j = 0; j < node_count; ++j)
        if (adjacency(i, j) < 0.0) throw ValidationError("negative adjacency entry");
  }

  // Undirected edge count: unordered pairs i < j with nonzero weight.
  std::size_t edge_count() const {
    std::size_t e = 0;
    for (std::size_t i = 0; i < node_count; ++i)
      for (std::size_t j = i + 1; j < node_count; ++j)
        if (adjacency(i, j) != 0.0) ++e;
    return e;
  }
};

struct Dataset {
  Graph graph;
  std::vector<int> labels;              // class id per node, in [0, class_count)
  std::vector<std::uint8_t> train_mask;
  std::vector<std::uint8_t> val_mask;
  std::vector<std::uint8_t> test_mask;
  int class_count = 0;

  void validate() const {
    graph.validate();
    const std::size_t n = graph.node_count;
    if (labels.size() != n) throw ValidationError("label count does not match node count");
    if (train_mask.size() != n || val_mask.size() != n || test_mask.size() != n)
      throw ValidationError("mask length does not match node count");
    bool any_train = false;
    for (std::size_t i = 0; i < n; ++i) {
      if (train_mask[i] + val_mask[i] + test_mask[i] > 1)
        throw ValidationError("masks overlap at node " + std::to_string(i));
      if (train_mask[i]) any_train = true;
      if ((train_mask[i] || val_mask[i] || test_mask[i]) &&
          (labels[i] < 0 || labels[i] >= class_count))
        throw ValidationError("label " + std::to_string(labels[i]) + " at node " +
                              std::to_string(i) + " outside [0, " +
                              std::to_string(class_count) + ")");
    }
    if (!any_train) throw ValidationError("train mask is empty");
  }
};

inline std::vector<std::size_t> mask_indices(const std::vector<std::uint8_t>& mask) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i]) idx.push_back(i);
  return idx;
}

struct NormalizedOperators {
  Matrix sym_norm_adj;        // D̃^{-1/2} (A + I) D̃^{-1/2}
  Matrix laplacian;           // D^{-1/2} (D - A) D^{-1/2}, zero row for isolated nodes
  std::vector<double> degree;
};

// Degree floor used wherever D^{-1/2} meets an isolated node.
inline constexpr double kDegreeEps = 1e-12;

// Normalized operators for a raw graph. Self-loops exist only inside
// sym_norm_adj; the graph itself is never modified.
inline NormalizedOperators normalize(const Graph& g) {
  const std::size_t n = g.node_count;
  NormalizedOperators ops;
  ops.degree.resize(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double d = 0.0;
    for (std::size_t j = 0; j < n; ++j) d += g.adjacency(i, j);
    ops.degree[i] = d;
  }

  std::vector<double> dinv_sqrt(n), dtilde_inv_sqrt(n);
  for (std::size_t i = 0; i < n; ++i) {
    dinv_sqrt[i] = 1.0 / std::sqrt(std::max(ops.degree[i], kDegreeEps));
    dtilde_inv_sqrt[i] = 1.0 / std::sqrt(std::max(ops.degree[i] + 1.0, kDegreeEps));
  }

  ops.laplacian = Matrix(n, n);
  ops.sym_norm_adj = Matrix(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double a = g.adjacency(i, j);
      const double lhs = (i == j) ? ops.degree[i] : 0.0;
      ops.laplacian(i, j) = (lhs - a) * dinv_sqrt[i] * dinv_sqrt[j];
      const double at = a + (i == j ? 1.0 : 0.0);
      ops.sym_norm_adj(i, j) = at * dtilde_inv_sqrt[i] * dtilde_inv_sqrt[j];
    }
  }
  return ops;
}

enum class KnnMetric { cosine, euclidean };

inline KnnMetric knn_metric_from_string(const std::string& s) {
  if (s == "cosine") return KnnMetric::cosine;
  if (s == "euclidean") return KnnMetric::euclidean;
  throw ValidationError("unknown knn metric '" + s + "'");
}

// 0/1 kNN adjacency over feature rows: each node links to its k most similar
// others, union-symmetrized, no self-loops. Ties prefer the smaller index.
inline Matrix knn_graph(const Matrix& features, std::size_t k,
                        KnnMetric metric = KnnMetric::cosine) {
  const std::size_t n = features.rows();
  if (k < 1) throw ContractViolation("knn_graph: k must be >= 1");
  if (n < 2) throw ContractViolation("knn_graph: need at least 2 nodes");
  if (k >= n) {
    warn("knn_graph: k=" + std::to_string(k) + " >= N=" + std::to_string(n) +
         ", returning the complete graph");
    Matrix a(n, n, 1.0);
    for (std::size_t i = 0; i < n; ++i) a(i, i) = 0.0;
    return a;
  }

  std::vector<double> norms(n, 0.0);
  if (metric == KnnMetric::cosine) {
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t f = 0; f < features.cols(); ++f) s += features(i, f) * features(i, f);
      norms[i] = std::max(std::sqrt(s), 1e-12);
    }
  }

  Matrix adj(n, n);
  std::vector<std::pair<double, std::size_t>> cand;  // (similarity, index), larger is closer
  for (std::size_t i = 0; i < n; ++i) {
    cand.clear();
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      double sim;
      if (metric == KnnMetric::cosine) {
        double dot = 0.0;
        for (std::size_t f = 0; f < features.cols(); ++f) dot += features(i, f) * features(j, f);
        sim = dot / (norms[i] * norms[j]);
      } else {
        double d2 = 0.0;
        for (std::size_t f = 0; f < features.cols(); ++f) {
          const double d = features(i, f) - features(j, f);
          d2 += d * d;
        }
        sim = -d2;
      }
      cand.emplace_back(sim, j);
    }
    std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(k), cand.end(),
                      [](const auto& a, const auto& b) {
                        if (a.first != b.first) return a.first > b.first;
                        return a.second < b.second;
                      });
    for (std::size_t r = 0; r < k; ++r) {
      adj(i, cand[r].second) = 1.0;
      adj(cand[r].second, i) = 1.0;
    }
  }
  return adj;
}

namespace detail {

inline std::string strip_cr(std::string s) {
  if (!s.empty() && s.back() == '\r') s.pop_back();
  return s;
}

inline long parse_index(const std::string& tok, const std::string& path, long lineno) {
  try {
    std::size_t used = 0;
    const long v = std::stol(tok, &used);
    if (used != tok.size()) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw ParseError(path, lineno, "bad integer '" + tok + "'");
  }
}

}  // namespace detail

// Edge list: one "src<TAB>dst" pair per line, 0-indexed. Duplicates collapse
// to weight 1; self-loops are dropped.
inline Matrix load_edge_list(const std::string& path, std::size_t n) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open: " + path);
  Matrix adj(n, n);
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = detail::strip_cr(line);
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string a, b, extra;
    if (!(ss >> a >> b) || (ss >> extra))
      throw ParseError(path, lineno, "expected 'src<TAB>dst'");
    const long src = detail::parse_index(a, path, lineno);
    const long dst = detail::parse_index(b, path, lineno);
    if (src < 0 || dst < 0 || src >= static_cast<long>(n) || dst >= static_cast<long>(n))
      throw ValidationError(path + ":" + std::to_string(lineno) + ": node id out of range [0, " +
                            std::to_string(n) + ")");
    if (src == dst) continue;
    adj(static_cast<std::size_t>(src), static_cast<std::size_t>(dst)) = 1.0;
    adj(static_cast<std::size_t>(dst), static_cast<std::size_t>(src)) = 1.0;
  }
  return adj;
}

// Labels: one integer per line, one line per node.
inline std::vector<int> load_labels(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open: " + path);
  std::vector<int> labels;
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = detail::strip_cr(line);
    if (line.empty()) continue;
    labels.push_back(static_cast<int>(detail::parse_index(line, path, lineno)));
  }
  return labels;
}

struct SplitMasks {
  std::vector<std::uint8_t> train, val, test;
};

// Splits: one of {train, val, test, none} per line, one line per node.
inline SplitMasks load_splits(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open: " + path);
  SplitMasks m;
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = detail::strip_cr(line);
    if (line.empty()) continue;
    std::uint8_t tr = 0, va = 0, te = 0;
    if (line == "train")
      tr = 1;
    else if (line == "val")
      va = 1;
    else if (line == "test")
      te = 1;
    else if (line != "none")
      throw ParseError(path, lineno, "expected one of train/val/test/none, got '" + line + "'");
    m.train.push_back(tr);
    m.val.push_back(va);
    m.test.push_back(te);
  }
  return m;
}

inline Dataset load_dataset(const std::string& edge_path, const std::string& feature_path,
                            const std::string& label_path, const std::string& split_path) {
  Dataset ds;
  ds.graph.features = load_matrix_csv(feature_path);
  ds.graph.node_count = ds.graph.features.rows();
  if (ds.graph.node_count == 0) throw ValidationError(feature_path + ": no feature rows");
  ds.graph.adjacency = load_edge_list(edge_path, ds.graph.node_count);

  ds.labels = load_labels(label_path);
  if (ds.labels.size() != ds.graph.node_count)
    throw ValidationError(label_path + ": " + std::to_string(ds.labels.size()) +
                          " labels for " + std::to_string(ds.graph.node_count) + " nodes");
  int max_label = -1;
  for (std::size_t i = 0; i < ds.labels.size(); ++i) {
    if (ds.labels[i] < 0)
      throw ValidationError(label_path + ": negative label at node " + std::to_string(i));
    max_label = std::max(max_label, ds.labels[i]);
  }
  ds.class_count = max_label + 1;

  SplitMasks m = load_splits(split_path);
  if (m.train.size() != ds.graph.node_count)
    throw ValidationError(split_path + ": " + std::to_string(m.train.size()) +
                          " split entries for " + std::to_string(ds.graph.node_count) + " nodes");
  ds.train_mask = std::move(m.train);
  ds.val_mask = std::move(m.val);
  ds.test_mask = std::move(m.test);

  ds.validate();
  return ds;
}

}  // namespace gagsl
