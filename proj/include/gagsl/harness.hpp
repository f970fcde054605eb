#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "gagsl/error.hpp"
#include "gagsl/graph.hpp"
#include "gagsl/matrix.hpp"
#include "gagsl/metrics.hpp"
#include "gagsl/rng.hpp"

namespace gagsl {

enum class AttackKind { none, edge_add, edge_delete, feature_noise };

inline std::string attack_kind_name(AttackKind k) {
  switch (k) {
    case AttackKind::none: return "none";
    case AttackKind::edge_add: return "edge_add";
    case AttackKind::edge_delete: return "edge_delete";
    case AttackKind::feature_noise: return "feature_noise";
  }
  throw ContractViolation("unknown attack kind");
}

inline AttackKind attack_kind_from_string(const std::string& s) {
  if (s == "none") return AttackKind::none;
  if (s == "edge_add") return AttackKind::edge_add;
  if (s == "edge_delete") return AttackKind::edge_delete;
  if (s == "feature_noise") return AttackKind::feature_noise;
  throw ValidationError("unknown attack kind '" + s + "'");
}

struct AttackSpec {
  AttackKind kind = AttackKind::none;
  double rate = 0.0;  // edge ratio, or the noise factor for feature_noise
  std::uint64_t seed = 0;

  void validate() const {
    if (rate < 0.0) throw ValidationError("attack: rate must be >= 0");
    if (kind == AttackKind::edge_delete && rate > 1.0)
      throw ValidationError("attack: delete ratio must be <= 1");
  }
};

// Random structure poisoning. Adds floor(ratio * |E|) edges drawn uniformly
// from the non-edges, or deletes floor(ratio * |E|) existing edges uniformly.
// Symmetry is preserved; features are untouched.
inline Graph attack_edges(const Graph& g, AttackKind kind, double ratio, RngStream rng) {
  if (kind != AttackKind::edge_add && kind != AttackKind::edge_delete)
    throw ContractViolation("attack_edges: kind must be edge_add or edge_delete");
  if (ratio < 0.0) throw ContractViolation("attack_edges: ratio must be >= 0");
  if (kind == AttackKind::edge_delete && ratio > 1.0)
    throw ContractViolation("attack_edges: delete ratio must be <= 1");

  Graph out = g;
  const std::size_t n = g.node_count;
  const std::size_t edges = g.edge_count();
  const std::size_t count = static_cast<std::size_t>(
      std::floor(ratio * static_cast<double>(edges)));
  if (count == 0) return out;

  std::vector<std::pair<std::size_t, std::size_t>> pool;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const bool has = g.adjacency(i, j) != 0.0;
      if ((kind == AttackKind::edge_add) != has) pool.emplace_back(i, j);
    }

  if (kind == AttackKind::edge_add && count > pool.size())
    throw ValidationError("attack_edges: requested " + std::to_string(count) +
                          " additions but only " + std::to_string(pool.size()) +
                          " non-edges exist");

  const std::vector<std::size_t> picks = rng.sample_without_replacement(pool.size(), count);
  const double value = kind == AttackKind::edge_add ? 1.0 : 0.0;
  for (std::size_t p : picks) {
    const auto [i, j] = pool[p];
    out.adjacency(i, j) = value;
    out.adjacency(j, i) = value;
  }
  return out;
}

// Gaussian feature poisoning: every entry receives lambda * r * eps with
// eps ~ N(0,1) and r the mean over nodes of that node's maximum feature
// value. Noise is unclipped; adjacency is untouched.
inline Graph attack_features(const Graph& g, double lambda, RngStream rng) {
  if (lambda < 0.0) throw ContractViolation("attack_features: lambda must be >= 0");
  Graph out = g;
  if (lambda == 0.0 || g.features.size() == 0) return out;

  double r = 0.0;
  for (std::size_t i = 0; i < g.features.rows(); ++i) {
    double mx = g.features(i, 0);
    for (std::size_t j = 1; j < g.features.cols(); ++j) mx = std::max(mx, g.features(i, j));
    r += mx;
  }
  r /= static_cast<double>(g.features.rows());

  const double amp = lambda * r;
  for (std::size_t i = 0; i < out.features.rows(); ++i)
    for (std::size_t j = 0; j < out.features.cols(); ++j)
      out.features(i, j) += amp * rng.gaussian();
  return out;
}

// Attacks happen at the dataset level so the poisoning-before-training order
// is enforced by types: training consumes the Dataset an attack produced.
inline Dataset apply_attack(const Dataset& ds, const AttackSpec& spec) {
  spec.validate();
  Dataset out = ds;
  const RngStream rng = RngStream(spec.seed).derive("attack");
  switch (spec.kind) {
    case AttackKind::none:
      break;
    case AttackKind::edge_add:
    case AttackKind::edge_delete:
      out.graph = attack_edges(ds.graph, spec.kind, spec.rate, rng.derive("edges"));
      break;
    case AttackKind::feature_noise:
      out.graph = attack_features(ds.graph, spec.rate, rng.derive("features"));
      break;
  }
  return out;
}

struct TrialMetrics {
  double f1_micro = 0.0;
  double f1_macro = 0.0;
  double auc = 0.0;
};

// Metrics over the masked nodes: argmax predictions for the F1 pair and
// row-softmax scores for one-vs-rest AUC.
inline TrialMetrics evaluate(const Matrix& logits, const std::vector<int>& labels,
                             const std::vector<std::uint8_t>& mask, int class_count) {
  if (mask.size() != labels.size())
    throw ContractViolation("evaluate: mask length does not match labels");
  const std::vector<std::size_t> idx = mask_indices(mask);
  if (idx.empty()) throw ContractViolation("evaluate: empty mask");
  if (logits.rows() != labels.size())
    throw ContractViolation("evaluate: logit rows do not match labels");
  if (logits.cols() != static_cast<std::size_t>(class_count))
    throw ContractViolation("evaluate: logit columns do not match class count");

  Matrix probs(idx.size(), logits.cols());
  std::vector<int> y_true(idx.size()), y_pred(idx.size());
  for (std::size_t r = 0; r < idx.size(); ++r) {
    const std::size_t i = idx[r];
    y_true[r] = labels[i];
    double mx = logits(i, 0);
    for (std::size_t c = 1; c < logits.cols(); ++c) mx = std::max(mx, logits(i, c));
    double sum = 0.0;
    for (std::size_t c = 0; c < logits.cols(); ++c) sum += std::exp(logits(i, c) - mx);
    std::size_t arg = 0;
    for (std::size_t c = 0; c < logits.cols(); ++c) {
      probs(r, c) = std::exp(logits(i, c) - mx) / sum;
      if (logits(i, c) > logits(i, arg)) arg = c;
    }
    y_pred[r] = static_cast<int>(arg);
  }

  TrialMetrics m;
  m.f1_micro = f1_micro(y_true, y_pred);
  m.f1_macro = f1_macro(y_true, y_pred, class_count);
  m.auc = auc_ovr_macro(y_true, probs, class_count);
  return m;
}

struct MetricsReport {
  std::vector<TrialMetrics> trials;
  std::vector<std::uint64_t> trial_seeds;

  double mean(double TrialMetrics::* field) const {
    double s = 0.0;
    for (const TrialMetrics& t : trials) s += t.*field;
    return trials.empty() ? 0.0 : s / static_cast<double>(trials.size());
  }
  // Population standard deviation over trials.
  double stddev(double TrialMetrics::* field) const {
    if (trials.empty()) return 0.0;
    const double mu = mean(field);
    double s = 0.0;
    for (const TrialMetrics& t : trials) {
      const double d = t.*field - mu;
      s += d * d;
    }
    return std::sqrt(s / static_cast<double>(trials.size()));
  }
};

struct CommunityProbMatrix {
  Matrix values;  // C x C, empirical edge probabilities
};

// Empirical block edge probabilities: entry (a, b) counts the distinct node
// pairs across communities a and b that carry a nonzero weight, divided by
// the number of possible pairs (n_a (n_a - 1) / 2 on the diagonal).
inline CommunityProbMatrix community_prob_matrix(const Matrix& adjacency,
                                                 const std::vector<int>& communities) {
  if (adjacency.rows() != communities.size())
    throw ContractViolation("community_prob_matrix: label count mismatch");
  int c_max = -1;
  for (int c : communities) {
    if (c < 0) throw ContractViolation("community_prob_matrix: negative community id");
    c_max = std::max(c_max, c);
  }
  const std::size_t nc = static_cast<std::size_t>(c_max + 1);
  Matrix counts(nc, nc);
  Matrix possible(nc, nc);
  const std::size_t n = adjacency.rows();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const std::size_t a = static_cast<std::size_t>(communities[i]);
      const std::size_t b = static_cast<std::size_t>(communities[j]);
      possible(a, b) += 1.0;
      possible(b, a) = possible(a, b);
      if (adjacency(i, j) != 0.0) {
        counts(a, b) += 1.0;
        counts(b, a) = counts(a, b);
      }
    }
  CommunityProbMatrix out;
  out.values = Matrix(nc, nc);
  for (std::size_t a = 0; a < nc; ++a)
    for (std::size_t b = 0; b < nc; ++b)
      out.values(a, b) = possible(a, b) > 0.0 ? counts(a, b) / possible(a, b) : 0.0;
  return out;
}

struct WeightHistogram {
  std::vector<double> intra;  // frequency-normalized, bins on [0, 1]
  std::vector<double> inter;
  std::size_t intra_count = 0;
  std::size_t inter_count = 0;
  std::size_t intra_overflow = 0;  // entries above 1, clipped into the last bin
  std::size_t inter_overflow = 0;
  double intra_mean = 0.0;
  double inter_mean = 0.0;
  bool inter_empty = false;
  bool intra_empty = false;
};

// Histograms of the nonzero off-diagonal weights of a learned structure,
// split by whether the endpoints share a community. Bin k covers
// [k/bins, (k+1)/bins); weights above 1 are clipped into the last bin and
// counted separately.
inline WeightHistogram weight_histogram(const Matrix& a_star,
                                        const std::vector<int>& communities,
                                        std::size_t bins = 10) {
  if (bins < 1) throw ContractViolation("weight_histogram: bins must be >= 1");
  if (a_star.rows() != communities.size())
    throw ContractViolation("weight_histogram: label count mismatch");
  WeightHistogram h;
  h.intra.assign(bins, 0.0);
  h.inter.assign(bins, 0.0);
  const std::size_t n = a_star.rows();
  double intra_sum = 0.0, inter_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double w = a_star(i, j);
      if (w == 0.0) continue;
      if (w < 0.0) throw ContractViolation("weight_histogram: negative weight");
      std::size_t bin;
      bool overflow = false;
      if (w >= 1.0) {
        bin = bins - 1;
        overflow = w > 1.0;
      } else {
        bin = static_cast<std::size_t>(w * static_cast<double>(bins));
      }
      if (communities[i] == communities[j]) {
        h.intra[bin] += 1.0;
        ++h.intra_count;
        h.intra_overflow += overflow;
        intra_sum += w;
      } else {
        h.inter[bin] += 1.0;
        ++h.inter_count;
        h.inter_overflow += overflow;
        inter_sum += w;
      }
    }
  if (h.intra_count > 0) {
    for (double& v : h.intra) v /= static_cast<double>(h.intra_count);
    h.intra_mean = intra_sum / static_cast<double>(h.intra_count);
  } else {
    h.intra_empty = true;
    warn("weight_histogram: no intra-community weights");
  }
  if (h.inter_count > 0) {
    for (double& v : h.inter) v /= static_cast<double>(h.inter_count);
    h.inter_mean = inter_sum / static_cast<double>(h.inter_count);
  } else {
    h.inter_empty = true;
    warn("weight_histogram: no inter-community weights");
  }
  return h;
}

struct SbmConfig {
  std::size_t nodes = 200;
  std::size_t blocks = 2;
  double p_in = 0.1;
  double p_out = 0.01;
  std::size_t feat_dim = 8;
  double feat_shift = 1.0;
  double train_fraction = 0.1;
  double val_fraction = 0.2;

  void validate() const {
    if (blocks < 1) throw ValidationError("sbm: blocks must be >= 1");
    if (nodes / blocks < 2) throw ValidationError("sbm: block sizes must be >= 2");
    if (!(0.0 <= p_out && p_out <= p_in && p_in <= 1.0))
      throw ValidationError("sbm: need 0 <= p_out <= p_in <= 1");
    if (feat_dim < 1) throw ValidationError("sbm: feat_dim must be >= 1");
    if (train_fraction <= 0.0 || val_fraction < 0.0 ||
        train_fraction + val_fraction >= 1.0)
      throw ValidationError("sbm: split fractions invalid");
  }
};

// Stochastic block model with class-informative Gaussian features and a
// stratified train/val/test split. Blocks are contiguous index ranges; node
// labels are block ids. Feature j of a class-c node has mean +feat_shift if
// j mod blocks == c, else -feat_shift, plus unit Gaussian noise.
inline Dataset sbm_generate(const SbmConfig& cfg, RngStream rng) {
  cfg.validate();
  const std::size_t n = cfg.nodes;
  const std::size_t nb = cfg.blocks;

  Dataset ds;
  ds.class_count = static_cast<int>(nb);
  ds.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    ds.labels[i] = static_cast<int>(std::min(i * nb / n, nb - 1));

  RngStream adj_rng = rng.derive("adjacency");
  ds.graph.node_count = n;
  ds.graph.adjacency = Matrix(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double p = ds.labels[i] == ds.labels[j] ? cfg.p_in : cfg.p_out;
      if (adj_rng.uniform() < p) {
        ds.graph.adjacency(i, j) = 1.0;
        ds.graph.adjacency(j, i) = 1.0;
      }
    }

  RngStream feat_rng = rng.derive("features");
  ds.graph.features = Matrix(n, cfg.feat_dim);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t c = static_cast<std::size_t>(ds.labels[i]);
    for (std::size_t j = 0; j < cfg.feat_dim; ++j) {
      const double mean = (j % nb == c) ? cfg.feat_shift : -cfg.feat_shift;
      ds.graph.features(i, j) = mean + feat_rng.gaussian();
    }
  }

  ds.train_mask.assign(n, 0);
  ds.val_mask.assign(n, 0);
  ds.test_mask.assign(n, 0);
  RngStream split_rng = rng.derive("split");
  for (std::size_t c = 0; c < nb; ++c) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < n; ++i)
      if (ds.labels[i] == static_cast<int>(c)) members.push_back(i);
    const std::size_t m = members.size();
    const std::vector<std::size_t> perm =
        split_rng.derive(c).sample_without_replacement(m, m);
    const std::size_t n_train = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::floor(cfg.train_fraction * static_cast<double>(m))));
    const std::size_t n_val = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::floor(cfg.val_fraction * static_cast<double>(m))));
    for (std::size_t r = 0; r < m; ++r) {
      const std::size_t node = members[perm[r]];
      if (r < n_train)
        ds.train_mask[node] = 1;
      else if (r < n_train + n_val)
        ds.val_mask[node] = 1;
      else
        ds.test_mask[node] = 1;
    }
  }

  ds.validate();
  return ds;
}

}  // namespace gagsl
