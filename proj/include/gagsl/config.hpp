#pragma once

#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "gagsl/augmentation.hpp"
#include "gagsl/estimator.hpp"
#include "gagsl/harness.hpp"
#include "gagsl/trainer.hpp"

namespace gagsl {

using json = nlohmann::json;

struct DiffusionConfig {
  double alpha = 0.05;
  bool use_top_k = false;  // sparsify the diffusion matrix before fusion
  std::size_t top_k = 5;

  void validate() const {
    if (!(alpha > 0.0 && alpha <= 1.0))
      throw ValidationError("diffusion: alpha must be in (0, 1]");
    if (use_top_k && top_k < 1) throw ValidationError("diffusion: top_k must be >= 1");
  }
};

// Either a synthetic block-model draw or four on-disk files.
struct DatasetSource {
  std::string kind = "sbm";  // "sbm" | "files"
  SbmConfig sbm;
  std::string edges, features, labels, splits;

  void validate() const {
    if (kind == "sbm") {
      sbm.validate();
      return;
    }
    if (kind != "files") throw ValidationError("dataset: kind must be \"sbm\" or \"files\"");
    for (const auto* p : {&edges, &features, &labels, &splits})
      if (p->empty()) throw ValidationError("dataset: files mode needs edges/features/labels/splits");
  }

  // Existence is checked when the dataset stage actually opens the files, so
  // a dangling path is reported against that stage rather than config parsing.
};

struct ExperimentConfig {
  DatasetSource dataset;
  // Empty scale/sample vectors mean: derive both from the Laplacian spectrum.
  std::vector<double> wavelet_scales;
  std::vector<double> wavelet_sample_points;
  DiffusionConfig diffusion;
  GibModelConfig model;
  TrainSchedule schedule;  // per-trial seed is filled by the runner
  std::string model_kind = "gagsl";  // "gagsl" | "gcn"
  std::vector<AttackSpec> attacks;   // applied in order; seeds filled per trial
  std::size_t trials = 1;
  std::uint64_t base_seed = 0;
  std::string out_dir = "out";

  void validate() const {
    dataset.validate();
    if (!wavelet_scales.empty() || !wavelet_sample_points.empty()) {
      WaveletConfig w{wavelet_scales, wavelet_sample_points};
      w.validate();
    }
    diffusion.validate();
    model.estimator.validate();
    model.mi.validate();
    if (model.classifier_hidden < 1)
      throw ValidationError("config: classifier_hidden must be >= 1");
    if (model_kind != "gagsl" && model_kind != "gcn")
      throw ValidationError("config: model must be \"gagsl\" or \"gcn\"");
    for (const auto& a : attacks) {
      if (a.kind == AttackKind::none) throw ValidationError("config: attack kind none is implicit");
      a.validate();
    }
    if (trials < 1) throw ValidationError("config: trials must be >= 1");
    if (out_dir.empty()) throw ValidationError("config: out_dir must be nonempty");
  }
};

namespace detail {

inline void check_keys(const json& j, const std::string& where,
                       std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ValidationError(where + ": expected an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!ok.count(it.key())) throw ValidationError(where + ": unknown key \"" + it.key() + "\"");
}

template <typename T>
inline void read_into(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace detail

inline ExperimentConfig config_from_json(const json& j) {
  using detail::check_keys;
  using detail::read_into;
  ExperimentConfig c;
  check_keys(j, "config",
             {"dataset", "wavelet", "diffusion", "estimator", "mi", "classifier_hidden",
              "schedule", "model", "attacks", "trials", "seed", "out_dir"});
  if (j.contains("dataset")) {
    const json& d = j.at("dataset");
    check_keys(d, "dataset", {"kind", "sbm", "edges", "features", "labels", "splits"});
    read_into(d, "kind", c.dataset.kind);
    if (d.contains("sbm")) {
      const json& s = d.at("sbm");
      check_keys(s, "dataset.sbm",
                 {"nodes", "blocks", "p_in", "p_out", "feat_dim", "feat_shift",
                  "train_fraction", "val_fraction"});
      read_into(s, "nodes", c.dataset.sbm.nodes);
      read_into(s, "blocks", c.dataset.sbm.blocks);
      read_into(s, "p_in", c.dataset.sbm.p_in);
      read_into(s, "p_out", c.dataset.sbm.p_out);
      read_into(s, "feat_dim", c.dataset.sbm.feat_dim);
      read_into(s, "feat_shift", c.dataset.sbm.feat_shift);
      read_into(s, "train_fraction", c.dataset.sbm.train_fraction);
      read_into(s, "val_fraction", c.dataset.sbm.val_fraction);
    }
    read_into(d, "edges", c.dataset.edges);
    read_into(d, "features", c.dataset.features);
    read_into(d, "labels", c.dataset.labels);
    read_into(d, "splits", c.dataset.splits);
  }
  if (j.contains("wavelet")) {
    const json& w = j.at("wavelet");
    check_keys(w, "wavelet", {"scales", "sample_points"});
    read_into(w, "scales", c.wavelet_scales);
    read_into(w, "sample_points", c.wavelet_sample_points);
  }
  if (j.contains("diffusion")) {
    const json& d = j.at("diffusion");
    check_keys(d, "diffusion", {"alpha", "use_top_k", "top_k"});
    read_into(d, "alpha", c.diffusion.alpha);
    read_into(d, "use_top_k", c.diffusion.use_top_k);
    read_into(d, "top_k", c.diffusion.top_k);
  }
  if (j.contains("estimator")) {
    const json& e = j.at("estimator");
    check_keys(e, "estimator",
               {"hop", "candidate_k", "hidden", "mlp_hidden", "gamma1", "gamma2", "mu"});
    read_into(e, "hop", c.model.estimator.hop);
    read_into(e, "candidate_k", c.model.estimator.candidate_k);
    read_into(e, "hidden", c.model.estimator.hidden);
    read_into(e, "mlp_hidden", c.model.estimator.mlp_hidden);
    read_into(e, "gamma1", c.model.estimator.gamma1);
    read_into(e, "gamma2", c.model.estimator.gamma2);
    read_into(e, "mu", c.model.estimator.mu);
  }
  if (j.contains("mi")) {
    const json& m = j.at("mi");
    check_keys(m, "mi", {"hidden", "projection"});
    read_into(m, "hidden", c.model.mi.hidden);
    read_into(m, "projection", c.model.mi.projection);
  }
  detail::read_into(j, "classifier_hidden", c.model.classifier_hidden);
  if (j.contains("schedule")) {
    const json& s = j.at("schedule");
    check_keys(s, "schedule",
               {"epochs", "theta_steps", "mi_steps", "classifier_steps", "lr_theta", "lr_phi",
                "lr_omega", "beta", "tau", "contrastive_samples", "classifier_dropout",
                "mi_dropout", "weight_decay"});
    read_into(s, "epochs", c.schedule.epochs);
    read_into(s, "theta_steps", c.schedule.theta_steps);
    read_into(s, "mi_steps", c.schedule.mi_steps);
    read_into(s, "classifier_steps", c.schedule.classifier_steps);
    read_into(s, "lr_theta", c.schedule.lr_theta);
    read_into(s, "lr_phi", c.schedule.lr_phi);
    read_into(s, "lr_omega", c.schedule.lr_omega);
    read_into(s, "beta", c.schedule.beta);
    read_into(s, "tau", c.schedule.tau);
    read_into(s, "contrastive_samples", c.schedule.contrastive_samples);
    read_into(s, "classifier_dropout", c.schedule.classifier_dropout);
    read_into(s, "mi_dropout", c.schedule.mi_dropout);
    read_into(s, "weight_decay", c.schedule.weight_decay);
  }
  detail::read_into(j, "model", c.model_kind);
  if (j.contains("attacks")) {
    if (!j.at("attacks").is_array()) throw ValidationError("config: attacks must be an array");
    for (const json& a : j.at("attacks")) {
      detail::check_keys(a, "attack", {"kind", "rate"});
      AttackSpec spec;
      spec.kind = attack_kind_from_string(a.at("kind").get<std::string>());
      read_into(a, "rate", spec.rate);
      c.attacks.push_back(spec);
    }
  }
  detail::read_into(j, "trials", c.trials);
  detail::read_into(j, "seed", c.base_seed);
  detail::read_into(j, "out_dir", c.out_dir);
  c.validate();
  return c;
}

// Canonical form: every field materialized, keys sorted by the serializer.
inline json config_to_json(const ExperimentConfig& c) {
  json j;
  j["dataset"]["kind"] = c.dataset.kind;
  if (c.dataset.kind == "sbm") {
    json& s = j["dataset"]["sbm"];
    s["nodes"] = c.dataset.sbm.nodes;
    s["blocks"] = c.dataset.sbm.blocks;
    s["p_in"] = c.dataset.sbm.p_in;
    s["p_out"] = c.dataset.sbm.p_out;
    s["feat_dim"] = c.dataset.sbm.feat_dim;
    s["feat_shift"] = c.dataset.sbm.feat_shift;
    s["train_fraction"] = c.dataset.sbm.train_fraction;
    s["val_fraction"] = c.dataset.sbm.val_fraction;
  } else {
    j["dataset"]["edges"] = c.dataset.edges;
    j["dataset"]["features"] = c.dataset.features;
    j["dataset"]["labels"] = c.dataset.labels;
    j["dataset"]["splits"] = c.dataset.splits;
  }
  j["wavelet"]["scales"] = c.wavelet_scales;
  j["wavelet"]["sample_points"] = c.wavelet_sample_points;
  j["diffusion"]["alpha"] = c.diffusion.alpha;
  j["diffusion"]["use_top_k"] = c.diffusion.use_top_k;
  j["diffusion"]["top_k"] = c.diffusion.top_k;
  j["estimator"]["hop"] = c.model.estimator.hop;
  j["estimator"]["candidate_k"] = c.model.estimator.candidate_k;
  j["estimator"]["hidden"] = c.model.estimator.hidden;
  j["estimator"]["mlp_hidden"] = c.model.estimator.mlp_hidden;
  j["estimator"]["gamma1"] = c.model.estimator.gamma1;
  j["estimator"]["gamma2"] = c.model.estimator.gamma2;
  j["estimator"]["mu"] = c.model.estimator.mu;
  j["mi"]["hidden"] = c.model.mi.hidden;
  j["mi"]["projection"] = c.model.mi.projection;
  j["classifier_hidden"] = c.model.classifier_hidden;
  j["schedule"]["epochs"] = c.schedule.epochs;
  j["schedule"]["theta_steps"] = c.schedule.theta_steps;
  j["schedule"]["mi_steps"] = c.schedule.mi_steps;
  j["schedule"]["classifier_steps"] = c.schedule.classifier_steps;
  j["schedule"]["lr_theta"] = c.schedule.lr_theta;
  j["schedule"]["lr_phi"] = c.schedule.lr_phi;
  j["schedule"]["lr_omega"] = c.schedule.lr_omega;
  j["schedule"]["beta"] = c.schedule.beta;
  j["schedule"]["tau"] = c.schedule.tau;
  j["schedule"]["contrastive_samples"] = c.schedule.contrastive_samples;
  j["schedule"]["classifier_dropout"] = c.schedule.classifier_dropout;
  j["schedule"]["mi_dropout"] = c.schedule.mi_dropout;
  j["schedule"]["weight_decay"] = c.schedule.weight_decay;
  j["model"] = c.model_kind;
  j["attacks"] = json::array();
  for (const auto& a : c.attacks)
    j["attacks"].push_back({{"kind", attack_kind_name(a.kind)}, {"rate", a.rate}});
  j["trials"] = c.trials;
  j["seed"] = c.base_seed;
  j["out_dir"] = c.out_dir;
  return j;
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("config: cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ParseError(path, 0, e.what());
  }
  return config_from_json(j);
}

// FNV-1a over the canonical dump; stable under input key reordering because
// the serializer emits object keys sorted.
inline std::uint64_t config_hash(const ExperimentConfig& c) {
  std::string dump = config_to_json(c).dump();
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char b : dump) {
    h ^= b;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace gagsl
