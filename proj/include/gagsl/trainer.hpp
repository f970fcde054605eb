#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "gagsl/error.hpp"
#include "gagsl/estimator.hpp"
#include "gagsl/graph.hpp"
#include "gagsl/matrix.hpp"
#include "gagsl/metrics.hpp"
#include "gagsl/rng.hpp"
#include "gagsl/tensor.hpp"

namespace gagsl {

struct MIConfig {
  std::size_t hidden = 16;
  std::size_t projection = 16;

  void validate() const {
    if (hidden < 1 || projection < 1) throw ValidationError("mi config: widths must be >= 1");
  }
};

// MI calculator: one GCN weight per structure view (the three embeddings are
// never computed with shared convolution weights) plus a projection MLP that
// IS shared across views.
struct MICalculatorParams {
  Param gcn_star, gcn_r1, gcn_r2;  // F x hidden
  Param mlp_w1;                    // (hidden + 1) x hidden
  Param mlp_w2;                    // (hidden + 1) x projection

  static MICalculatorParams init(std::size_t feat_dim, const MIConfig& cfg,
                                 const RngStream& rng) {
    MICalculatorParams p;
    p.gcn_star = Param("mi.gcn_star", glorot_uniform(feat_dim, cfg.hidden, rng.derive("mi.gcn_star")));
    p.gcn_r1 = Param("mi.gcn_r1", glorot_uniform(feat_dim, cfg.hidden, rng.derive("mi.gcn_r1")));
    p.gcn_r2 = Param("mi.gcn_r2", glorot_uniform(feat_dim, cfg.hidden, rng.derive("mi.gcn_r2")));
    p.mlp_w1 = Param("mi.mlp1",
                     glorot_uniform(cfg.hidden + 1, cfg.hidden, rng.derive("mi.mlp1")));
    p.mlp_w2 = Param("mi.mlp2",
                     glorot_uniform(cfg.hidden + 1, cfg.projection, rng.derive("mi.mlp2")));
    return p;
  }

  std::vector<Param*> params() { return {&gcn_star, &gcn_r1, &gcn_r2, &mlp_w1, &mlp_w2}; }
  void set_requires_grad(bool on) {
    for (Param* p : params()) p->requires_grad = on;
  }
};

struct ClassifierParams {
  Param w0;  // F x hidden
  Param w1;  // hidden x C

  static ClassifierParams init(std::size_t feat_dim, std::size_t hidden, std::size_t classes,
                               const RngStream& rng) {
    ClassifierParams p;
    p.w0 = Param("classifier.w0", glorot_uniform(feat_dim, hidden, rng.derive("classifier.w0")));
    p.w1 = Param("classifier.w1", glorot_uniform(hidden, classes, rng.derive("classifier.w1")));
    return p;
  }

  std::vector<Param*> params() { return {&w0, &w1}; }
  void set_requires_grad(bool on) {
    for (Param* p : params()) p->requires_grad = on;
  }
};

struct TrainSchedule {
  std::size_t epochs = 10;            // outer rounds
  std::size_t theta_steps = 5;        // structure-estimator updates per round
  std::size_t mi_steps = 5;           // MI-calculator updates per round
  std::size_t classifier_steps = 5;   // classifier updates per round
  double lr_theta = 0.01;
  double lr_phi = 0.01;
  double lr_omega = 0.01;
  double beta = 0.1;                  // sufficiency/compression trade-off
  double tau = 0.5;                   // contrastive temperature
  std::size_t contrastive_samples = 0;  // 0 means min(N, 256)
  double classifier_dropout = 0.5;
  double mi_dropout = 0.2;
  double weight_decay = 0.0;
  std::uint64_t seed = 0;

  std::size_t effective_samples(std::size_t n) const {
    return contrastive_samples == 0 ? std::min<std::size_t>(n, 256) : contrastive_samples;
  }

  void validate(std::size_t n) const {
    if (epochs < 1 || theta_steps < 1 || mi_steps < 1 || classifier_steps < 1)
      throw ValidationError("schedule: all epoch counts must be >= 1");
    if (beta < 0.0) throw ValidationError("schedule: beta must be >= 0");
    if (tau <= 0.0) throw ValidationError("schedule: tau must be > 0");
    const std::size_t b = effective_samples(n);
    if (b < 2 || b > n)
      throw ValidationError("schedule: contrastive sample count must be in [2, N]");
    for (double r : {classifier_dropout, mi_dropout})
      if (r < 0.0 || r >= 1.0) throw ValidationError("schedule: dropout rates must be in [0, 1)");
    for (double lr : {lr_theta, lr_phi, lr_omega})
      if (lr <= 0.0) throw ValidationError("schedule: learning rates must be > 0");
  }
};

struct GibModelConfig {
  EstimatorConfig estimator;
  MIConfig mi;
  std::size_t classifier_hidden = 16;
};

struct LossReport {
  struct ThetaStep {
    double total, cls, mi;
  };
  std::vector<ThetaStep> theta_trace;   // one per estimator step
  std::vector<double> phi_trace;        // MI loss per calculator step
  std::vector<double> omega_trace;      // classification loss per classifier step
  std::vector<double> val_f1_trace;     // one per outer epoch
  std::size_t best_epoch = 0;
  double best_val_f1 = -1.0;
};

struct TrainResult {
  Matrix a_star;            // structure at the best-validation snapshot
  ClassifierParams omega;   // classifier at the best-validation snapshot
  LossReport report;
  // Final-state parameter groups (for checkpointing).
  EstimatorParams theta_final;
  MICalculatorParams phi_final;
  ClassifierParams omega_final;
};

// Differentiable self-loop symmetric normalization of a structure tensor:
// D~^{-1/2} (A + I) D~^{-1/2} built from tape primitives.
inline Tensor gcn_normalize_tape(Tape& t, Tensor a) {
  const std::size_t n = t.value(a).rows();
  Tensor a_self = t.add(a, t.constant(Matrix::identity(n)));
  Tensor d = t.matmul(a_self, t.constant(Matrix(n, 1, 1.0)));
  Tensor ds = t.rsqrt(d);
  return t.elementwise_mul(a_self, t.matmul(ds, t.transpose(ds)));
}

namespace detail {

inline const std::uint64_t kDropClassifier = hash_string64("dropout.classifier.hidden");
inline const std::uint64_t kDropMiStar = hash_string64("dropout.mi.star");
inline const std::uint64_t kDropMiR1 = hash_string64("dropout.mi.r1");
inline const std::uint64_t kDropMiR2 = hash_string64("dropout.mi.r2");

enum class Phase : std::uint64_t { theta = 1, phi = 2, omega = 3 };

inline std::uint64_t phase_step(Phase p, std::uint64_t step) {
  return (static_cast<std::uint64_t>(p) << 32) | step;
}

}  // namespace detail

// GCN embedding of one structure view followed by the shared projection MLP.
// Dropout sits between the convolution and the projection.
inline Tensor mi_embed(Tape& t, Tensor structure, const Matrix& features, Param& view_gcn_weight,
                       MICalculatorParams& phi, double dropout_rate, const DropoutKey& key,
                       bool train) {
  if (features.rows() != t.value(structure).rows())
    throw ContractViolation("mi_embed: adjacency/feature row mismatch");
  if (features.cols() != view_gcn_weight.value.rows())
    throw ContractViolation("mi_embed: feature dim does not match gcn weight");
  Tensor an = gcn_normalize_tape(t, structure);
  Tensor h = t.relu(t.matmul(an, t.matmul(t.constant(features), t.leaf(view_gcn_weight))));
  h = t.dropout(h, dropout_rate, key, train);
  Tensor m = t.relu(t.matmul(append_ones_column(t, h), t.leaf(phi.mlp_w1)));
  return t.matmul(append_ones_column(t, m), t.leaf(phi.mlp_w2));
}

// Symmetric InfoNCE over one sampled node subset. Similarities are cosines
// (rows L2-normalized with the 1e-12 floor) divided by tau; each side's
// denominator runs over the sampled cross-view nodes only.
inline Tensor infonce(Tape& t, Tensor proj_a, Tensor proj_b, double tau,
                      const std::vector<std::size_t>& sample_indices) {
  if (sample_indices.size() < 2) throw ContractViolation("infonce: need at least 2 samples");
  if (tau <= 0.0) throw ContractViolation("infonce: tau must be positive");
  const std::size_t b = sample_indices.size();
  Tensor u = t.l2_normalize_rows(t.gather_rows(proj_a, sample_indices));
  Tensor v = t.l2_normalize_rows(t.gather_rows(proj_b, sample_indices));
  Tensor s = t.scale(t.matmul(u, t.transpose(v)), 1.0 / tau);

  const Matrix& sv = t.value(s);
  double mn = sv(0, 0), mx = sv(0, 0);
  for (std::size_t i = 0; i < sv.size(); ++i) {
    mn = std::min(mn, sv.data()[i]);
    mx = std::max(mx, sv.data()[i]);
  }
  if (mn == mx)
    warn("infonce: all pairwise similarities equal (degenerate embeddings), loss is log B");

  Tensor p_uv = t.row_log_softmax(s);
  Tensor p_vu = t.row_log_softmax(t.transpose(s));
  Tensor eye = t.constant(Matrix::identity(b));
  Tensor diag_means = t.add(t.reduce_mean(t.elementwise_mul(p_uv, eye)),
                            t.reduce_mean(t.elementwise_mul(p_vu, eye)));
  return t.scale(diag_means, -static_cast<double>(b) / 2.0);
}

// L_MI = InfoNCE(G*, G_r1) + InfoNCE(G*, G_r2), one shared sample subset.
inline Tensor mi_loss(Tape& t, Tensor a_star, Tensor a_r1, Tensor a_r2, const Matrix& features,
                      MICalculatorParams& phi, double tau,
                      const std::vector<std::size_t>& sample_indices, double dropout_rate,
                      std::uint64_t dropout_seed, std::uint64_t step_key, bool train) {
  Tensor p_star = mi_embed(t, a_star, features, phi.gcn_star, phi, dropout_rate,
                           DropoutKey{dropout_seed, detail::kDropMiStar, step_key}, train);
  Tensor p_r1 = mi_embed(t, a_r1, features, phi.gcn_r1, phi, dropout_rate,
                         DropoutKey{dropout_seed, detail::kDropMiR1, step_key}, train);
  Tensor p_r2 = mi_embed(t, a_r2, features, phi.gcn_r2, phi, dropout_rate,
                         DropoutKey{dropout_seed, detail::kDropMiR2, step_key}, train);
  return t.add(infonce(t, p_star, p_r1, tau, sample_indices),
               infonce(t, p_star, p_r2, tau, sample_indices));
}

// Two-layer GCN on the fused structure:
// Z = An ReLU(An X W0) W1, dropout between the layers in train mode.
inline Tensor classify(Tape& t, Tensor structure, const Matrix& features,
                       ClassifierParams& omega, bool train, double dropout_rate,
                       const DropoutKey& key) {
  if (features.rows() != t.value(structure).rows())
    throw ContractViolation("classify: structure/feature row mismatch");
  if (features.cols() != omega.w0.value.rows())
    throw ContractViolation("classify: feature dim does not match w0");
  Tensor an = gcn_normalize_tape(t, structure);
  Tensor h = t.relu(t.matmul(an, t.matmul(t.constant(features), t.leaf(omega.w0))));
  h = t.dropout(h, dropout_rate, key, train);
  return t.matmul(an, t.matmul(h, t.leaf(omega.w1)));
}

// Mean cross-entropy over the masked nodes: -(1/|mask|) sum log softmax(z_i)[y_i].
inline Tensor classification_loss(Tape& t, Tensor logits, const std::vector<int>& labels,
                                  const std::vector<std::size_t>& mask_indices, int class_count) {
  if (mask_indices.empty()) throw ContractViolation("classification_loss: empty mask");
  Tensor sel = t.gather_rows(logits, mask_indices);
  Tensor ls = t.row_log_softmax(sel);
  Matrix onehot(mask_indices.size(), static_cast<std::size_t>(class_count));
  for (std::size_t i = 0; i < mask_indices.size(); ++i) {
    const int y = labels[mask_indices[i]];
    if (y < 0 || y >= class_count)
      throw ContractViolation("classification_loss: label out of range");
    onehot(i, static_cast<std::size_t>(y)) = 1.0;
  }
  Tensor picked = t.elementwise_mul(ls, t.constant(onehot));
  return t.scale(t.reduce_mean(picked), -static_cast<double>(class_count));
}

// L = L_cls - beta L_MI: the estimator is rewarded for structures whose
// extractable shared information stays low while classification stays good.
inline Tensor structure_loss(Tape& t, Tensor l_cls, Tensor l_mi, double beta) {
  if (beta < 0.0) throw ContractViolation("structure_loss: beta must be >= 0");
  return t.add(l_cls, t.scale(l_mi, -beta));
}

namespace detail {

inline void require_finite(double v, const char* phase, std::size_t epoch, std::size_t step,
                           const char* what) {
  if (!std::isfinite(v))
    throw NumericError(std::string("non-finite ") + what + " in " + phase + " phase, epoch " +
                       std::to_string(epoch) + ", step " + std::to_string(step));
}

}  // namespace detail

// Alternating optimization: per outer epoch, theta_steps structure-estimator
// updates on L_cls - beta L_MI (MI calculator and classifier frozen), then
// the fused structure is fixed and mi_steps MI-calculator updates minimize
// L_MI, then classifier_steps classifier updates minimize L_cls. Keeps the
// best validation-F1-macro snapshot of (A*, classifier).
//
// baseline_gcn = true trains the identical classifier directly on the raw
// adjacency: structure phases are skipped and A* stays A.
inline TrainResult train(const Dataset& dataset, const Matrix& x_hat, const Matrix& a_hat,
                         const GibModelConfig& model, const TrainSchedule& schedule,
                         bool baseline_gcn = false) {
  const Graph& g = dataset.graph;
  const std::size_t n = g.node_count;
  schedule.validate(n);
  model.estimator.validate();
  model.mi.validate();
  if (!baseline_gcn) {
    if (x_hat.rows() != n) throw ContractViolation("train: x_hat row count mismatch");
    if (a_hat.rows() != n || a_hat.cols() != n)
      throw ContractViolation("train: a_hat shape mismatch");
  }

  const Matrix& a_raw = g.adjacency;
  const Matrix& x = g.features;
  const std::vector<std::size_t> train_idx = mask_indices(dataset.train_mask);
  const std::vector<std::size_t> val_idx = mask_indices(dataset.val_mask);
  const int classes = dataset.class_count;
  const std::size_t b_count = schedule.effective_samples(n);

  const RngStream base(schedule.seed);
  EstimatorParams theta = EstimatorParams::init(
      x_hat.cols() ? x_hat.cols() : 1, x.cols(), model.estimator,
      base.derive("train.theta").derive("init"));
  MICalculatorParams phi =
      MICalculatorParams::init(x.cols(), model.mi, base.derive("train.phi").derive("init"));
  ClassifierParams omega = ClassifierParams::init(
      x.cols(), model.classifier_hidden, static_cast<std::size_t>(classes),
      base.derive("train.omega").derive("init"));

  Adam opt_theta(theta.params(), AdamConfig{.lr = schedule.lr_theta,
                                            .weight_decay = schedule.weight_decay});
  Adam opt_phi(phi.params(), AdamConfig{.lr = schedule.lr_phi,
                                        .weight_decay = schedule.weight_decay});
  Adam opt_omega(omega.params(), AdamConfig{.lr = schedule.lr_omega,
                                            .weight_decay = schedule.weight_decay});

  CandidateEdgeSet cand1, cand2;
  if (!baseline_gcn) {
    cand1 = build_hop_candidates(a_raw, model.estimator.hop);
    cand2 = build_diffusion_candidates(a_hat, a_raw, model.estimator.candidate_k);
  }

  RngStream sample_theta = base.derive("sampling").derive("theta");
  RngStream sample_phi = base.derive("sampling").derive("phi");
  std::uint64_t theta_evals = 0, phi_evals = 0;

  // Forward pass through the estimator path; returns (A_r1, A_r2, A*).
  const auto build_structures = [&](Tape& t) {
    Tensor h1 = estimator_embed(t, a_raw, x_hat, theta.view1);
    Tensor logits1 = pairwise_logits(t, h1, cand1, theta.view1);
    Tensor s1 = normalize_candidates(t, logits1, cand1, n);
    Tensor h2 = estimator_embed(t, a_hat, x, theta.view2);
    Tensor logits2 = pairwise_logits(t, h2, cand2, theta.view2);
    Tensor s2 = normalize_candidates(t, logits2, cand2, n);
    RedefinedStructure red =
        redefine(t, t.constant(a_raw), t.constant(a_hat), s1, s2, model.estimator.gamma1,
                 model.estimator.gamma2, model.estimator.mu);
    return std::make_tuple(red.a_r1, red.a_r2, fuse(t, red.a_r1, red.a_r2));
  };

  LossReport report;
  Matrix a_star_value = a_raw;  // current fused structure (updated per epoch)
  Matrix a_r1_value = a_raw, a_r2_value = a_raw;
  Matrix best_a_star = a_raw;
  ClassifierParams best_omega = omega;
  std::uint64_t theta_step_id = 0, phi_step_id = 0, omega_step_id = 0;

  for (std::size_t epoch = 0; epoch < schedule.epochs; ++epoch) {
    if (!baseline_gcn) {
      // Structure-estimator phase.
      theta.set_requires_grad(true);
      phi.set_requires_grad(false);
      omega.set_requires_grad(false);
      for (std::size_t step = 0; step < schedule.theta_steps; ++step) {
        Tape t;
        auto [a_r1, a_r2, a_star] = build_structures(t);
        Tensor z = classify(t, a_star, x, omega, true, schedule.classifier_dropout,
                            DropoutKey{schedule.seed, detail::kDropClassifier,
                                       detail::phase_step(detail::Phase::theta, theta_step_id)});
        Tensor l_cls = classification_loss(t, z, dataset.labels, train_idx, classes);
        const std::vector<std::size_t> sample =
            sample_theta.derive(theta_evals++).sample_without_replacement(n, b_count);
        Tensor l_mi = mi_loss(t, a_star, a_r1, a_r2, x, phi, schedule.tau, sample,
                              schedule.mi_dropout, schedule.seed,
                              detail::phase_step(detail::Phase::theta, theta_step_id), true);
        Tensor loss = structure_loss(t, l_cls, l_mi, schedule.beta);
        const double lv = t.value(loss)(0, 0);
        const double lc = t.value(l_cls)(0, 0);
        const double lm = t.value(l_mi)(0, 0);
        detail::require_finite(lv, "estimator", epoch, step, "total loss");
        report.theta_trace.push_back({lv, lc, lm});
        opt_theta.zero_grad();
        t.backward(loss);
        opt_theta.step();
        ++theta_step_id;
      }

      // Freeze the redefined structures for the rest of the epoch.
      {
        Tape t;
        auto [a_r1, a_r2, a_star] = build_structures(t);
        a_r1_value = t.value(a_r1);
        a_r2_value = t.value(a_r2);
        a_star_value = t.value(a_star);
      }

      // MI-calculator phase.
      theta.set_requires_grad(false);
      phi.set_requires_grad(true);
      for (std::size_t step = 0; step < schedule.mi_steps; ++step) {
        Tape t;
        const std::vector<std::size_t> sample =
            sample_phi.derive(phi_evals++).sample_without_replacement(n, b_count);
        Tensor l_mi = mi_loss(t, t.constant(a_star_value), t.constant(a_r1_value),
                              t.constant(a_r2_value), x, phi, schedule.tau, sample,
                              schedule.mi_dropout, schedule.seed,
                              detail::phase_step(detail::Phase::phi, phi_step_id), true);
        const double lv = t.value(l_mi)(0, 0);
        detail::require_finite(lv, "mi-calculator", epoch, step, "MI loss");
        report.phi_trace.push_back(lv);
        opt_phi.zero_grad();
        t.backward(l_mi);
        opt_phi.step();
        ++phi_step_id;
      }
      phi.set_requires_grad(false);
    }

    // Classifier phase.
    theta.set_requires_grad(false);
    phi.set_requires_grad(false);
    omega.set_requires_grad(true);
    for (std::size_t step = 0; step < schedule.classifier_steps; ++step) {
      Tape t;
      Tensor z = classify(t, t.constant(a_star_value), x, omega, true,
                          schedule.classifier_dropout,
                          DropoutKey{schedule.seed, detail::kDropClassifier,
                                     detail::phase_step(detail::Phase::omega, omega_step_id)});
      Tensor l_cls = classification_loss(t, z, dataset.labels, train_idx, classes);
      const double lv = t.value(l_cls)(0, 0);
      detail::require_finite(lv, "classifier", epoch, step, "classification loss");
      report.omega_trace.push_back(lv);
      opt_omega.zero_grad();
      t.backward(l_cls);
      opt_omega.step();
      ++omega_step_id;
    }
    omega.set_requires_grad(false);

    // End-of-epoch validation (eval mode, no dropout).
    double val_f1 = 0.0;
    if (!val_idx.empty()) {
      Tape t;
      Tensor z = classify(t, t.constant(a_star_value), x, omega, false, 0.0, DropoutKey{});
      const Matrix& zv = t.value(z);
      std::vector<int> y_true, y_pred;
      y_true.reserve(val_idx.size());
      y_pred.reserve(val_idx.size());
      for (std::size_t i : val_idx) {
        y_true.push_back(dataset.labels[i]);
        int arg = 0;
        for (int c = 1; c < classes; ++c)
          if (zv(i, static_cast<std::size_t>(c)) > zv(i, static_cast<std::size_t>(arg))) arg = c;
        y_pred.push_back(arg);
      }
      val_f1 = f1_macro(y_true, y_pred, classes, /*quiet=*/true);
    }
    report.val_f1_trace.push_back(val_f1);
    if (val_f1 > report.best_val_f1) {
      report.best_val_f1 = val_f1;
      report.best_epoch = epoch;
      best_a_star = a_star_value;
      best_omega = omega;
    }
  }

  TrainResult result;
  result.a_star = std::move(best_a_star);
  result.omega = std::move(best_omega);
  result.report = std::move(report);
  result.theta_final = std::move(theta);
  result.phi_final = std::move(phi);
  result.omega_final = std::move(omega);
  return result;
}

// Eval-mode class probabilities of a trained classifier on a fixed structure.
inline Matrix predict_logits(const Matrix& a_star, const Matrix& features,
                             ClassifierParams& omega) {
  Tape t;
  Tensor z = classify(t, t.constant(a_star), features, omega, false, 0.0, DropoutKey{});
  return t.value(z);
}

inline Matrix predict_probabilities(const Matrix& a_star, const Matrix& features,
                                    ClassifierParams& omega) {
  Tape t;
  Tensor z = classify(t, t.constant(a_star), features, omega, false, 0.0, DropoutKey{});
  Tensor p = t.row_softmax(z);
  return t.value(p);
}

inline std::vector<int> argmax_rows(const Matrix& scores) {
  std::vector<int> pred(scores.rows());
  for (std::size_t i = 0; i < scores.rows(); ++i) {
    std::size_t arg = 0;
    for (std::size_t c = 1; c < scores.cols(); ++c)
      if (scores(i, c) > scores(i, arg)) arg = c;
    pred[i] = static_cast<int>(arg);
  }
  return pred;
}

}  // namespace gagsl
