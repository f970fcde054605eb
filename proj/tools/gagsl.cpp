// Command-line front end: train one configuration, sweep attack rates against
// the GCN baseline, re-derive plotting data from a finished run, or run the
// invariant battery. GAGSL_LOG_LEVEL controls warning/info verbosity only.

#include <cstdint>
#include <exception>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include <gagsl/config.hpp>
#include <gagsl/experiment.hpp>
#include <gagsl/selfcheck.hpp>

namespace {

std::vector<double> parse_rates(const std::string& csv) {
  std::vector<double> rates;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) throw gagsl::ValidationError("rates: empty entry in \"" + csv + "\"");
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      throw gagsl::ValidationError("rates: \"" + item + "\" is not a number");
    }
    if (used != item.size())
      throw gagsl::ValidationError("rates: \"" + item + "\" is not a number");
    rates.push_back(v);
  }
  if (rates.empty()) throw gagsl::ValidationError("rates: empty list");
  return rates;
}

void print_metrics_summary(const std::string& out_dir) {
  std::ifstream in(out_dir + "/metrics.json");
  if (!in) return;
  gagsl::json m;
  in >> m;
  std::cout << "model " << m["model"].get<std::string>() << ", trials "
            << m["trial_count"].get<std::size_t>() << "\n";
  for (const char* k : {"f1_micro", "f1_macro", "auc"})
    std::cout << "  " << k << " " << m["mean"][k].get<double>() << " +/- "
              << m["std"][k].get<double>() << "\n";
}

int cmd_run(const std::string& config_path, const std::uint64_t* seed,
            const std::string* out_dir) {
  gagsl::ExperimentConfig cfg = gagsl::load_experiment_config(config_path);
  if (seed) cfg.base_seed = *seed;
  if (out_dir) cfg.out_dir = *out_dir;
  gagsl::RunManifest manifest = gagsl::run_experiment(cfg);
  std::cout << "run complete: " << cfg.out_dir << "\n";
  print_metrics_summary(cfg.out_dir);
  (void)manifest;
  return 0;
}

int cmd_sweep(const std::string& config_path, const std::string& attack,
              const std::string& rates_csv, const std::string* out_dir) {
  gagsl::ExperimentConfig cfg = gagsl::load_experiment_config(config_path);
  if (out_dir) cfg.out_dir = *out_dir;
  const gagsl::AttackKind kind = gagsl::attack_kind_from_string(attack);
  const std::vector<double> rates = parse_rates(rates_csv);
  const std::string csv = gagsl::run_attack_sweep(cfg, kind, rates);
  std::cout << "sweep complete: " << csv << "\n";
  return 0;
}

int cmd_plot_data(const std::string& run_dir) {
  const std::vector<std::string> written = gagsl::emit_plot_data(run_dir);
  for (const std::string& f : written) std::cout << "wrote " << f << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"graph structure learning trainer and robustness harness"};
  app.require_subcommand(1);

  std::string run_config, run_out;
  std::uint64_t run_seed = 0;
  CLI::App* run = app.add_subcommand("run", "train one configuration and export artifacts");
  run->add_option("--config", run_config, "experiment config JSON")->required();
  CLI::Option* seed_opt = run->add_option("--seed", run_seed, "override the base seed");
  CLI::Option* out_opt = run->add_option("--out", run_out, "override the output directory");

  std::string sweep_config, sweep_attack, sweep_rates, sweep_out;
  CLI::App* sweep =
      app.add_subcommand("sweep", "rate sweep for one attack kind, against the GCN baseline");
  sweep->add_option("--config", sweep_config, "experiment config JSON")->required();
  sweep->add_option("--attack", sweep_attack, "edge_add, edge_delete, or feature_noise")
      ->required();
  sweep->add_option("--rates", sweep_rates, "comma-separated rates, e.g. 0,0.25,0.5")
      ->required();
  CLI::Option* sweep_out_opt =
      sweep->add_option("--out", sweep_out, "override the output directory");

  std::string plot_dir;
  CLI::App* plot =
      app.add_subcommand("plot-data", "re-derive heatmap and histogram data from a run");
  plot->add_option("run_dir", plot_dir, "completed run directory")->required();

  CLI::App* check = app.add_subcommand("check", "run the invariant and oracle battery");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed())
      return cmd_run(run_config, seed_opt->count() ? &run_seed : nullptr,
                     out_opt->count() ? &run_out : nullptr);
    if (sweep->parsed())
      return cmd_sweep(sweep_config, sweep_attack, sweep_rates,
                       sweep_out_opt->count() ? &sweep_out : nullptr);
    if (plot->parsed()) return cmd_plot_data(plot_dir);
    if (check->parsed()) return gagsl::selfcheck::run_all(std::cout) ? 0 : 1;
  } catch (const gagsl::StageError& e) {
    std::cerr << "[gagsl] failed at stage " << e.stage << ": " << e.message << "\n";
    return 2;
  } catch (const gagsl::Error& e) {
    std::cerr << "[gagsl] " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "[gagsl] unexpected error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
