// Command-line surface: synthetic data generation, single-model training,
// checkpoint evaluation, and the multi-seed ablation harness.

#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "dpsw/checkpoint.hpp"
#include "dpsw/experiment.hpp"
#include "dpsw/metrics.hpp"

namespace {

using nlohmann::json;

json read_json_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw dpsw::ConfigError("cannot open config file " + path);
  try {
    json j;
    f >> j;
    return j;
  } catch (const json::exception& e) {
    throw dpsw::ConfigError("malformed JSON in " + path + ": " + e.what());
  }
}

// Train-command config: hyperparameters plus split ratios and split seed.
struct TrainConfig {
  dpsw::Hyperparams hp;
  std::array<double, 3> split{0.6, 0.2, 0.2};
  std::uint64_t split_seed = 0;
};

TrainConfig train_config_from_json(const json& j) {
  TrainConfig cfg;
  if (!j.is_object()) throw dpsw::ConfigError("train config: expected a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (key == "hyperparams") {
      cfg.hp = dpsw::hyperparams_from_json(value);
    } else if (key == "split") {
      const auto r = value.get<std::vector<double>>();
      if (r.size() != 3) throw dpsw::ConfigError("train config: split needs 3 ratios");
      cfg.split = {r[0], r[1], r[2]};
    } else if (key == "split_seed") {
      cfg.split_seed = value.get<std::uint64_t>();
    } else {
      throw dpsw::ConfigError("train config: unknown key '" + key + "'");
    }
  }
  return cfg;
}

void write_train_log(const dpsw::TrainLog& log, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw dpsw::DataError("cannot open training log " + path);
  for (const auto& rec : log.rounds) {
    json j{{"round", rec.round},
           {"outcome_loss", rec.outcome_loss},
           {"val_objective", rec.val_objective},
           {"degenerate_fallbacks", rec.degenerate_fallbacks},
           {"xi_count", rec.xi_count},
           {"xi_unreliable", rec.xi_unreliable},
           {"mmd_skipped", rec.mmd_skipped},
           {"clamp_hits", rec.clamp_hits}};
    j["prop_loss"] = std::isfinite(rec.prop_loss) ? json(rec.prop_loss) : json();
    j["xi_mean"] = rec.xi_count > 0 ? json(rec.xi_mean) : json();
    f << j.dump() << "\n";
  }
}

int run_gen(int d, int n, std::uint64_t seed, const std::string& out) {
  const dpsw::Dataset data = dpsw::gen_synthetic(d, n, seed);
  dpsw::save_csv(data, out);
  std::cout << "wrote " << data.n() << " rows (d=" << data.d() << ") to " << out << "\n";
  return 0;
}

int run_train(const std::string& config_path, const std::string& data_path,
              const std::string& mode_name, const std::string& out) {
  const TrainConfig cfg = train_config_from_json(read_json_file(config_path));
  const dpsw::Mode mode = dpsw::mode_from_string(mode_name);
  const dpsw::Dataset data = dpsw::load_csv(data_path);
  const auto splits = dpsw::split(data, cfg.split, cfg.split_seed);
  auto [model, log] = dpsw::train(splits[0], splits[1], cfg.hp, mode);
  dpsw::save_checkpoint(model, out);
  write_train_log(log, out + ".log.jsonl");
  std::cout << "trained " << mode_name << ": best round " << log.best_round
            << ", validation objective " << log.best_val << "\n";
  std::cout << "checkpoint: " << out << "\n";
  return 0;
}

int run_eval(const std::string& checkpoint_path, const std::string& data_path,
             const std::string& out) {
  const dpsw::DPSWModel model = dpsw::load_checkpoint(checkpoint_path);
  const dpsw::Dataset data = dpsw::load_csv(data_path);
  const dpsw::Vector tau = dpsw::predict_cate(model, data.x);
  const dpsw::Vector yhat = dpsw::predict_factual(model, data.x, data.a);

  json metrics;
  metrics["mode"] = dpsw::to_string(model.mode);
  metrics["n"] = data.n();
  metrics["mse_factual"] = (data.y - yhat).array().square().mean();
  if (data.y0 && data.y1) metrics["pehe"] = dpsw::pehe(*data.y0, *data.y1, tau);
  std::ofstream f(out);
  if (!f) throw dpsw::DataError("cannot open " + out);
  f << metrics.dump(2) << "\n";
  std::cout << metrics.dump(2) << "\n";
  return 0;
}

int run_ablate(const std::string& config_path, const std::string& out_dir) {
  const dpsw::ExperimentConfig cfg =
      dpsw::experiment_config_from_json(read_json_file(config_path));
  const dpsw::ExperimentResult result = dpsw::run_experiment(cfg);
  dpsw::write_experiment_files(result, cfg, out_dir);
  int failures = 0;
  for (const auto& r : result.rows) failures += r.ok ? 0 : 1;
  std::cout << "wrote " << result.rows.size() << " rows ("
            << failures << " failed) to " << out_dir << "\n";
  return failures == 0 ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Differentiable Pareto-smoothed weighting for CATE estimation"};
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("gen", "Generate a synthetic dataset CSV");
  int gen_d = 18, gen_n = 4000;
  std::uint64_t gen_seed = 0;
  std::string gen_out;
  gen->add_option("--d", gen_d, "Feature dimension (multiple of 3)")->required();
  gen->add_option("--n", gen_n, "Number of rows")->required();
  gen->add_option("--seed", gen_seed, "Generator seed")->required();
  gen->add_option("--out", gen_out, "Output CSV path")->required();

  auto* train = app.add_subcommand("train", "Train one model on a dataset CSV");
  std::string train_config, train_data, train_mode, train_out;
  train->add_option("--config", train_config, "JSON config path")->required();
  train->add_option("--data", train_data, "Dataset CSV path")->required();
  train->add_option("--mode", train_mode, "Estimator mode")->required();
  train->add_option("--out", train_out, "Checkpoint output path")->required();

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset CSV");
  std::string eval_ckpt, eval_data, eval_out;
  eval->add_option("--checkpoint", eval_ckpt, "Checkpoint path")->required();
  eval->add_option("--data", eval_data, "Dataset CSV path")->required();
  eval->add_option("--out", eval_out, "Metrics JSON output path")->required();

  auto* ablate = app.add_subcommand("ablate", "Run the multi-seed, multi-mode harness");
  std::string ablate_config, ablate_out;
  ablate->add_option("--config", ablate_config, "JSON config path")->required();
  ablate->add_option("--out-dir", ablate_out, "Output directory")->required();

  try {
    app.parse(argc, argv);
    if (gen->parsed()) return run_gen(gen_d, gen_n, gen_seed, gen_out);
    if (train->parsed()) return run_train(train_config, train_data, train_mode, train_out);
    if (eval->parsed()) return run_eval(eval_ckpt, eval_data, eval_out);
    if (ablate->parsed()) return run_ablate(ablate_config, ablate_out);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  } catch (const dpsw::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 1;
  } catch (const dpsw::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const dpsw::NumericError& e) {
    std::cerr << "numerical abort: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
