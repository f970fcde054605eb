#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "gagsl/config.hpp"
#include "gagsl/eigen.hpp"
#include "gagsl/harness.hpp"
#include "gagsl/metrics.hpp"

namespace gagsl {

// Error carrying the pipeline stage it surfaced in, for exit diagnostics.
struct StageError : Error {
  std::string stage;
  std::string message;
  StageError(std::string st, std::string msg)
      : Error(st + ": " + msg), stage(std::move(st)), message(std::move(msg)) {}
};

template <typename Fn>
inline auto run_stage(const char* stage, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const StageError&) {
    throw;
  } catch (const Error& e) {
    throw StageError(stage, e.what());
  } catch (const std::exception& e) {
    throw StageError(stage, e.what());
  }
}

inline std::string timestamp_utc() {
  std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline void write_text(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write " + path);
  out << content;
}

inline std::uint64_t trial_seed(const ExperimentConfig& cfg, std::size_t trial) {
  return cfg.base_seed + trial;
}

// One attacked, trained, evaluated run. The pre-attack dataset is kept so the
// caller can export both structures.
struct TrialOutcome {
  Dataset original;
  Dataset attacked;
  bool was_attacked = false;
  TrainResult trained;
  TrialMetrics metrics;
};

inline Dataset load_configured_dataset(const ExperimentConfig& cfg, std::uint64_t seed) {
  if (cfg.dataset.kind == "sbm")
    return sbm_generate(cfg.dataset.sbm, RngStream(seed).derive("dataset"));
  return load_dataset(cfg.dataset.edges, cfg.dataset.features, cfg.dataset.labels,
                      cfg.dataset.splits);
}

inline TrialOutcome run_trial(const ExperimentConfig& cfg, std::uint64_t seed) {
  TrialOutcome out;
  out.original = run_stage("load_dataset", [&] { return load_configured_dataset(cfg, seed); });

  out.attacked = run_stage("attack", [&] {
    Dataset ds = out.original;
    for (AttackSpec spec : cfg.attacks) {
      spec.seed = seed;
      ds = apply_attack(ds, spec);
      out.was_attacked = true;
    }
    return ds;
  });

  auto [x_hat, a_hat] = run_stage("augment", [&] {
    WaveletConfig w;
    if (cfg.wavelet_scales.empty() && cfg.wavelet_sample_points.empty()) {
      auto eig = eigendecompose_sym(normalize(out.attacked.graph).laplacian);
      w = default_wavelet_config(eig.values);
    } else {
      w = WaveletConfig{cfg.wavelet_scales, cfg.wavelet_sample_points};
    }
    StructuralEmbedding emb = structural_embedding(out.attacked.graph, w);
    DiffusionMatrix diff = ppr_diffusion(out.attacked.graph, cfg.diffusion.alpha);
    if (cfg.diffusion.use_top_k) diff = sparsify_topk(diff, cfg.diffusion.top_k);
    return std::make_pair(std::move(emb.values), std::move(diff.values));
  });

  out.trained = run_stage("train", [&] {
    TrainSchedule sch = cfg.schedule;
    sch.seed = seed;
    return train(out.attacked, x_hat, a_hat, cfg.model, sch, cfg.model_kind == "gcn");
  });

  out.metrics = run_stage("evaluate", [&] {
    Matrix logits =
        predict_logits(out.trained.a_star, out.attacked.graph.features, out.trained.omega);
    return evaluate(logits, out.attacked.labels, out.attacked.test_mask,
                    out.attacked.class_count);
  });
  return out;
}

inline json metrics_to_json(const MetricsReport& rep) {
  json j;
  j["trial_count"] = rep.trials.size();
  j["trial_seeds"] = rep.trial_seeds;
  json rows = json::array();
  for (const auto& t : rep.trials)
    rows.push_back({{"f1_micro", t.f1_micro}, {"f1_macro", t.f1_macro}, {"auc", t.auc}});
  j["trials"] = rows;
  j["mean"] = {{"f1_micro", rep.mean(&TrialMetrics::f1_micro)},
               {"f1_macro", rep.mean(&TrialMetrics::f1_macro)},
               {"auc", rep.mean(&TrialMetrics::auc)}};
  j["std"] = {{"f1_micro", rep.stddev(&TrialMetrics::f1_micro)},
              {"f1_macro", rep.stddev(&TrialMetrics::f1_macro)},
              {"auc", rep.stddev(&TrialMetrics::auc)}};
  return j;
}

inline json trace_to_json(const LossReport& rep) {
  json j;
  json theta = json::array();
  for (const auto& s : rep.theta_trace)
    theta.push_back({{"total", s.total}, {"cls", s.cls}, {"mi", s.mi}});
  j["theta"] = theta;
  j["phi"] = rep.phi_trace;
  j["omega"] = rep.omega_trace;
  j["val_f1"] = rep.val_f1_trace;
  j["best_epoch"] = rep.best_epoch;
  j["best_val_f1"] = rep.best_val_f1;
  return j;
}

inline json params_to_json(const std::vector<Param*>& params) {
  json j;
  for (const Param* p : params) {
    json m;
    m["rows"] = p->value.rows();
    m["cols"] = p->value.cols();
    std::vector<double> data;
    data.reserve(p->value.rows() * p->value.cols());
    for (std::size_t i = 0; i < p->value.rows(); ++i)
      for (std::size_t c = 0; c < p->value.cols(); ++c) data.push_back(p->value(i, c));
    m["data"] = data;
    j[p->name] = m;
  }
  return j;
}

inline json checkpoint_to_json(const ExperimentConfig& cfg, std::uint64_t seed,
                               TrainResult& result) {
  json j;
  j["schema_version"] = 1;
  j["seed"] = seed;
  j["schedule"] = config_to_json(cfg)["schedule"];
  j["estimator_params"] = params_to_json(result.theta_final.params());
  j["mi_params"] = params_to_json(result.phi_final.params());
  j["classifier_params"] = params_to_json(result.omega_final.params());
  j["classifier_best"] = params_to_json(result.omega.params());
  return j;
}

inline json histogram_to_json(const WeightHistogram& h) {
  auto group = [](const std::vector<double>& freq, double mean, std::size_t count,
                  std::size_t overflow, bool empty) {
    return json{{"frequencies", freq}, {"mean", mean},       {"count", count},
                {"overflow", overflow}, {"empty", empty}};
  };
  json j;
  j["bins"] = h.intra.size();
  std::vector<double> edges(h.intra.size() + 1);
  for (std::size_t b = 0; b < edges.size(); ++b)
    edges[b] = static_cast<double>(b) / static_cast<double>(h.intra.size());
  j["bin_edges"] = edges;
  j["intra"] = group(h.intra, h.intra_mean, h.intra_count, h.intra_overflow, h.intra_empty);
  j["inter"] = group(h.inter, h.inter_mean, h.inter_count, h.inter_overflow, h.inter_empty);
  return j;
}

struct RunManifest {
  json content;
  std::string path;

  void write() const { write_text(path, content.dump(2) + "\n"); }
};

inline RunManifest start_manifest(const ExperimentConfig& cfg, const std::string& out_dir) {
  RunManifest m;
  m.path = out_dir + "/manifest.json";
  m.content["artifact_version"] = 1;
  m.content["config"] = config_to_json(cfg);
  m.content["config_hash"] = hex64(config_hash(cfg));
  std::vector<std::uint64_t> seeds;
  for (std::size_t t = 0; t < cfg.trials; ++t) seeds.push_back(trial_seed(cfg, t));
  m.content["trial_seeds"] = seeds;
  m.content["started_at"] = timestamp_utc();
  m.content["status"] = "running";
  m.content["outputs"] = json::array();
  m.write();
  return m;
}

inline void finish_manifest(RunManifest& m, const std::string& status,
                            const std::vector<std::string>& outputs) {
  m.content["status"] = status;
  m.content["finished_at"] = timestamp_utc();
  m.content["outputs"] = outputs;
  m.write();
}

inline void export_structures(const TrialOutcome& t, const std::string& out_dir,
                              std::vector<std::string>& outputs) {
  auto emit = [&](const std::string& name, const Matrix& m) {
    save_matrix_csv(m, out_dir + "/" + name);
    outputs.push_back(name);
  };
  emit("original_adjacency.csv", t.original.graph.adjacency);
  if (t.was_attacked) emit("attacked_adjacency.csv", t.attacked.graph.adjacency);
  emit("a_star.csv", t.trained.a_star);

  std::string communities;
  for (int label : t.attacked.labels) communities += std::to_string(label) + "\n";
  write_text(out_dir + "/communities.txt", communities);
  outputs.push_back("communities.txt");

  emit("heatmap_original.csv",
       community_prob_matrix(t.original.graph.adjacency, t.original.labels).values);
  if (t.was_attacked)
    emit("heatmap_attacked.csv",
         community_prob_matrix(t.attacked.graph.adjacency, t.attacked.labels).values);
  emit("heatmap_learned.csv",
       community_prob_matrix(t.trained.a_star, t.attacked.labels).values);

  WeightHistogram h = weight_histogram(t.trained.a_star, t.attacked.labels);
  write_text(out_dir + "/weight_histogram.json", histogram_to_json(h).dump(2) + "\n");
  outputs.push_back("weight_histogram.json");
}

// Attack, augment, train, and evaluate each trial; export metrics, traces,
// structures, and parameter checkpoints under cfg.out_dir.
inline RunManifest run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  const std::string& dir = cfg.out_dir;
  std::filesystem::create_directories(dir);
  RunManifest manifest = start_manifest(cfg, dir);
  std::vector<std::string> outputs{"manifest.json"};

  try {
    MetricsReport report;
    json traces = json::array();
    for (std::size_t t = 0; t < cfg.trials; ++t) {
      const std::uint64_t seed = trial_seed(cfg, t);
      TrialOutcome outcome = run_trial(cfg, seed);
      report.trials.push_back(outcome.metrics);
      report.trial_seeds.push_back(seed);
      traces.push_back(trace_to_json(outcome.trained.report));

      const std::string ckpt = "checkpoint_trial" + std::to_string(t) + ".json";
      write_text(dir + "/" + ckpt,
                 checkpoint_to_json(cfg, seed, outcome.trained).dump() + "\n");
      outputs.push_back(ckpt);
      if (t == 0) export_structures(outcome, dir, outputs);
    }

    json metrics = metrics_to_json(report);
    metrics["model"] = cfg.model_kind;
    write_text(dir + "/metrics.json", metrics.dump(2) + "\n");
    outputs.push_back("metrics.json");
    write_text(dir + "/traces.json", traces.dump(2) + "\n");
    outputs.push_back("traces.json");

    finish_manifest(manifest, "complete", outputs);
    return manifest;
  } catch (const StageError& e) {
    finish_manifest(manifest, "failed:" + e.stage, outputs);
    throw;
  }
}

// Rate sweep for one attack kind. Both models see identical attacked graphs
// and splits at every (rate, trial) cell.
inline std::string run_attack_sweep(const ExperimentConfig& base, AttackKind kind,
                                    const std::vector<double>& rates) {
  base.validate();
  for (double r : rates) {
    AttackSpec probe{kind, r, 0};
    probe.validate();
  }
  const std::string& dir = base.out_dir;
  std::filesystem::create_directories(dir);

  ExperimentConfig cfg = base;
  cfg.attacks.clear();
  RunManifest manifest = start_manifest(cfg, dir);
  manifest.content["sweep"] = {{"kind", attack_kind_name(kind)}, {"rates", rates}};
  manifest.write();

  try {
    std::string csv =
        "model,rate,trials,f1_micro_mean,f1_micro_std,f1_macro_mean,f1_macro_std,"
        "auc_mean,auc_std\n";
    for (const std::string& model : {std::string("gagsl"), std::string("gcn")}) {
      for (double rate : rates) {
        ExperimentConfig point = cfg;
        point.model_kind = model;
        if (rate > 0.0) point.attacks.push_back(AttackSpec{kind, rate, 0});
        MetricsReport rep;
        for (std::size_t t = 0; t < point.trials; ++t) {
          TrialOutcome outcome = run_trial(point, trial_seed(point, t));
          rep.trials.push_back(outcome.metrics);
          rep.trial_seeds.push_back(trial_seed(point, t));
        }
        csv += model + "," + format_double(rate) + "," + std::to_string(rep.trials.size());
        for (auto field : {&TrialMetrics::f1_micro, &TrialMetrics::f1_macro,
                           &TrialMetrics::auc})
          csv += "," + format_double(rep.mean(field)) + "," + format_double(rep.stddev(field));
        csv += "\n";
      }
    }
    const std::string name = "sweep_" + attack_kind_name(kind) + ".csv";
    write_text(dir + "/" + name, csv);
    finish_manifest(manifest, "complete", {"manifest.json", name});
    return dir + "/" + name;
  } catch (const StageError& e) {
    finish_manifest(manifest, "failed:" + e.stage, {"manifest.json"});
    throw;
  }
}

inline std::vector<int> load_communities(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("missing artifacts: " + path);
  std::vector<int> labels;
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      labels.push_back(std::stoi(line));
    } catch (const std::exception&) {
      throw ParseError(path, lineno, "expected an integer label");
    }
  }
  if (labels.empty()) throw ValidationError(path + ": no labels");
  return labels;
}

// Rebuild heatmap CSVs and the weight histogram from a completed run
// directory. Missing inputs are listed; a malformed structure matrix is
// reported against its file.
inline std::vector<std::string> emit_plot_data(const std::string& run_dir) {
  return run_stage("plot_data", [&]() -> std::vector<std::string> {
    namespace fs = std::filesystem;
    std::vector<std::string> missing;
    auto need = [&](const std::string& name) {
      if (!fs::exists(run_dir + "/" + name)) missing.push_back(name);
    };
    need("original_adjacency.csv");
    need("a_star.csv");
    need("communities.txt");
    if (!missing.empty()) {
      std::string joined;
      for (const auto& m : missing) joined += (joined.empty() ? "" : ", ") + m;
      throw ValidationError("missing artifacts: " + joined);
    }

    std::vector<int> communities = load_communities(run_dir + "/communities.txt");
    auto load_structure = [&](const std::string& name) {
      Matrix m = load_matrix_csv(run_dir + "/" + name);
      if (m.rows() != m.cols() || m.rows() != communities.size())
        throw ValidationError(name + ": expected a " + std::to_string(communities.size()) +
                              "-node square matrix");
      if (!m.all_finite()) throw ValidationError(name + ": non-finite entries");
      for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j)
          if (m(i, j) < 0.0) throw ValidationError(name + ": negative weight");
      return m;
    };

    std::vector<std::string> written;
    auto emit = [&](const std::string& out_name, const Matrix& m) {
      save_matrix_csv(m, run_dir + "/" + out_name);
      written.push_back(out_name);
    };

    Matrix original = load_structure("original_adjacency.csv");
    emit("heatmap_original.csv", community_prob_matrix(original, communities).values);
    if (fs::exists(run_dir + "/attacked_adjacency.csv")) {
      Matrix attacked = load_structure("attacked_adjacency.csv");
      emit("heatmap_attacked.csv", community_prob_matrix(attacked, communities).values);
    }
    Matrix learned = load_structure("a_star.csv");
    emit("heatmap_learned.csv", community_prob_matrix(learned, communities).values);

    WeightHistogram h = weight_histogram(learned, communities);
    write_text(run_dir + "/weight_histogram.json", histogram_to_json(h).dump(2) + "\n");
    written.push_back("weight_histogram.json");
    return written;
  });
}

}  // namespace gagsl
