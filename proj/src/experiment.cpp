#include "dpsw/experiment.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include "dpsw/checkpoint.hpp"
#include "dpsw/metrics.hpp"

namespace dpsw {

using nlohmann::json;

ExperimentConfig experiment_config_from_json(const json& j) {
  ExperimentConfig cfg;
  if (!j.is_object()) throw ConfigError("experiment config: expected a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (key == "d") cfg.d = value.get<int>();
    else if (key == "n") cfg.n = value.get<int>();
    else if (key == "seeds") cfg.n_seeds = value.get<int>();
    else if (key == "master_seed") cfg.master_seed = value.get<std::uint64_t>();
    else if (key == "split") {
      const auto r = value.get<std::vector<double>>();
      if (r.size() != 3) throw ConfigError("experiment config: split needs 3 ratios");
      cfg.split_ratios = {r[0], r[1], r[2]};
    } else if (key == "modes") {
      cfg.modes.clear();
      for (const auto& m : value) cfg.modes.push_back(mode_from_string(m.get<std::string>()));
      if (cfg.modes.empty()) throw ConfigError("experiment config: empty mode list");
    } else if (key == "hyperparams") {
      cfg.hp = hyperparams_from_json(value);
    } else if (key == "threads") {
      cfg.threads = value.get<int>();
    } else {
      throw ConfigError("experiment config: unknown key '" + key + "'");
    }
  }
  if (cfg.d < 3 || cfg.d % 3 != 0)
    throw ConfigError("experiment config: d must be a positive multiple of 3");
  if (cfg.n < 10) throw ConfigError("experiment config: n too small");
  if (cfg.n_seeds < 1) throw ConfigError("experiment config: seeds must be >= 1");
  return cfg;
}

json experiment_config_to_json(const ExperimentConfig& cfg) {
  json modes = json::array();
  for (Mode m : cfg.modes) modes.push_back(to_string(m));
  return json{{"d", cfg.d},
              {"n", cfg.n},
              {"seeds", cfg.n_seeds},
              {"master_seed", cfg.master_seed},
              {"split", {cfg.split_ratios[0], cfg.split_ratios[1], cfg.split_ratios[2]}},
              {"modes", modes},
              {"hyperparams", hyperparams_to_json(cfg.hp)},
              {"threads", cfg.threads}};
}

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

SeedModeResult run_one(const ExperimentConfig& cfg, int seed_index, Mode mode,
                       const Dataset& train_split, const Dataset& val_split,
                       const Dataset& test_split) {
  SeedModeResult row;
  row.seed_index = seed_index;
  row.data_seed = cfg.master_seed + static_cast<std::uint64_t>(seed_index);
  row.mode = mode;
  row.pehe = row.att_gamma = row.att_delta = row.att_upsilon = kNaN;
  try {
    Hyperparams hp = cfg.hp;
    // Every mode trains from the same stream for a given replication, so
    // mode comparisons are paired: differences reflect the weighting scheme
    // rather than initialization luck.
    hp.seed = 1000 + row.data_seed;
    auto [model, log] = train(train_split, val_split, hp, mode);

    if (!test_split.y0 || !test_split.y1)
      throw DataError("run_experiment: test split lacks potential outcomes");
    row.pehe = pehe(*test_split.y0, *test_split.y1, predict_cate(model, test_split.x));

    const auto& blocks = train_split.blocks;
    if (blocks) {
      const int d = train_split.d();
      auto att = [&](const MLP& enc, int lo, int hi) {
        return attribution(enc.layers.front().W, lo, hi);
      };
      if (mode == Mode::single_encoder) {
        row.att_gamma = att(model.shared, 0, blocks->gamma_end);
        row.att_delta = att(model.shared, blocks->gamma_end, blocks->delta_end);
        row.att_upsilon = att(model.shared, blocks->delta_end, d);
      } else {
        if (mode != Mode::psw_separate)
          row.att_gamma = att(model.gamma, 0, blocks->gamma_end);
        row.att_delta = att(model.delta, blocks->gamma_end, blocks->delta_end);
        row.att_upsilon = att(model.upsilon, blocks->delta_end, d);
      }
    }
    row.best_round = log.best_round;
    row.best_val = log.best_val;
    for (const auto& rec : log.rounds) {
      row.degenerate_fallbacks += rec.degenerate_fallbacks;
      row.xi_trace.push_back(rec.xi_count > 0 ? rec.xi_mean : kNaN);
    }
    const bool any_fit = std::any_of(row.xi_trace.begin(), row.xi_trace.end(),
                                     [](double v) { return std::isfinite(v); });
    if (!any_fit) row.xi_trace.clear();
  } catch (const std::exception& e) {
    row.ok = false;
    row.error = e.what();
  }
  return row;
}

std::string format_g6(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

std::string sanitize(const std::string& s) {
  std::string out;
  for (char c : s) out.push_back((c == ',' || c == '"' || c == '\n') ? ';' : c);
  return out;
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  // One dataset per replication, shared across modes.
  std::vector<std::array<Dataset, 3>> splits(cfg.n_seeds);
  for (int s = 0; s < cfg.n_seeds; ++s) {
    const std::uint64_t seed = cfg.master_seed + static_cast<std::uint64_t>(s);
    const Dataset data = gen_synthetic(cfg.d, cfg.n, seed);
    splits[s] = split(data, cfg.split_ratios, seed);
  }

  struct Job {
    int seed_index;
    int mode_index;
  };
  std::vector<Job> jobs;
  for (int s = 0; s < cfg.n_seeds; ++s)
    for (int m = 0; m < static_cast<int>(cfg.modes.size()); ++m)
      jobs.push_back({s, m});

  ExperimentResult result;
  result.rows.resize(jobs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    while (true) {
      const std::size_t k = next.fetch_add(1);
      if (k >= jobs.size()) return;
      const Job& job = jobs[k];
      const auto& sp = splits[job.seed_index];
      result.rows[k] = run_one(cfg, job.seed_index, cfg.modes[job.mode_index], sp[0],
                               sp[1], sp[2]);
      log_info("finished seed " + std::to_string(job.seed_index) + " mode " +
               to_string(cfg.modes[job.mode_index]) +
               (result.rows[k].ok ? "" : " (failed: " + result.rows[k].error + ")"));
    }
  };
  int n_threads = cfg.threads > 0 ? cfg.threads
                                  : static_cast<int>(std::thread::hardware_concurrency());
  n_threads = std::max(1, std::min<int>(n_threads, static_cast<int>(jobs.size())));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  result.aggregates = aggregate(result.rows);
  return result;
}

std::vector<AggregateRow> aggregate(const std::vector<SeedModeResult>& rows) {
  std::vector<AggregateRow> out;
  for (Mode mode : all_modes()) {
    AggregateRow agg;
    agg.mode = mode;
    std::vector<const SeedModeResult*> ok_rows;
    bool mode_present = false;
    for (const auto& r : rows) {
      if (r.mode != mode) continue;
      mode_present = true;
      if (r.ok) ok_rows.push_back(&r);
    }
    if (!mode_present) continue;
    agg.count = static_cast<int>(ok_rows.size());
    if (agg.count == 0) {
      agg.pehe_mean = agg.pehe_std = kNaN;
      agg.att_gamma_mean = agg.att_delta_mean = agg.att_upsilon_mean = kNaN;
    } else {
      double sum = 0, sum_g = 0, sum_d = 0, sum_u = 0;
      for (const auto* r : ok_rows) {
        sum += r->pehe;
        sum_g += r->att_gamma;
        sum_d += r->att_delta;
        sum_u += r->att_upsilon;
      }
      agg.pehe_mean = sum / agg.count;
      agg.att_gamma_mean = sum_g / agg.count;
      agg.att_delta_mean = sum_d / agg.count;
      agg.att_upsilon_mean = sum_u / agg.count;
      if (agg.count > 1) {
        double ss = 0;
        for (const auto* r : ok_rows) ss += (r->pehe - agg.pehe_mean) * (r->pehe - agg.pehe_mean);
        agg.pehe_std = std::sqrt(ss / (agg.count - 1));
      } else {
        agg.pehe_std = 0.0;
      }
    }
    out.push_back(agg);
  }
  return out;
}

std::string results_csv_string(const std::vector<SeedModeResult>& rows) {
  std::string out =
      "seed_index,data_seed,mode,status,error,pehe,att_gamma,att_delta,att_upsilon,"
      "degenerate_fallbacks,best_round,best_val,xi_trace\n";
  for (const auto& r : rows) {
    out += std::to_string(r.seed_index);
    out += ',' + std::to_string(r.data_seed);
    out += ',' + to_string(r.mode);
    out += r.ok ? ",ok," : ",failed,";
    out += sanitize(r.error);
    out += ',' + format_g6(r.pehe);
    out += ',' + format_g6(r.att_gamma);
    out += ',' + format_g6(r.att_delta);
    out += ',' + format_g6(r.att_upsilon);
    out += ',' + std::to_string(r.degenerate_fallbacks);
    out += ',' + std::to_string(r.best_round);
    out += ',' + format_g6(r.best_val);
    out += ",\"";
    for (std::size_t i = 0; i < r.xi_trace.size(); ++i)
      out += (i ? ";" : "") + format_g6(r.xi_trace[i]);
    out += "\"\n";
  }
  return out;
}

std::string aggregate_csv_string(const std::vector<AggregateRow>& rows) {
  std::string out =
      "mode,count,pehe_mean,pehe_std,att_gamma_mean,att_delta_mean,att_upsilon_mean\n";
  for (const auto& r : rows) {
    out += to_string(r.mode);
    out += ',' + std::to_string(r.count);
    out += ',' + format_g6(r.pehe_mean);
    out += ',' + format_g6(r.pehe_std);
    out += ',' + format_g6(r.att_gamma_mean);
    out += ',' + format_g6(r.att_delta_mean);
    out += ',' + format_g6(r.att_upsilon_mean);
    out += '\n';
  }
  return out;
}

namespace {

json result_row_to_json(const SeedModeResult& r) {
  json out{{"seed_index", r.seed_index},
           {"data_seed", r.data_seed},
           {"mode", to_string(r.mode)},
           {"ok", r.ok},
           {"error", r.error},
           {"pehe", r.pehe},
           {"att_gamma", r.att_gamma},
           {"att_delta", r.att_delta},
           {"att_upsilon", r.att_upsilon},
           {"degenerate_fallbacks", r.degenerate_fallbacks},
           {"best_round", r.best_round},
           {"best_val", r.best_val}};
  out["xi_trace"] = r.xi_trace;
  return out;
}

}  // namespace

void write_experiment_files(const ExperimentResult& result,
                            const ExperimentConfig& cfg, const std::string& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  {
    std::ofstream f(fs::path(out_dir) / "results.csv");
    if (!f) throw DataError("write_experiment_files: cannot open results.csv");
    f << results_csv_string(result.rows);
  }
  {
    std::ofstream f(fs::path(out_dir) / "aggregate.csv");
    if (!f) throw DataError("write_experiment_files: cannot open aggregate.csv");
    f << aggregate_csv_string(result.aggregates);
  }
  {
    json out;
    out["config"] = experiment_config_to_json(cfg);
    json rows = json::array();
    for (const auto& r : result.rows) rows.push_back(result_row_to_json(r));
    out["results"] = std::move(rows);
    json aggs = json::array();
    for (const auto& a : result.aggregates)
      aggs.push_back(json{{"mode", to_string(a.mode)},
                          {"count", a.count},
                          {"pehe_mean", a.pehe_mean},
                          {"pehe_std", a.pehe_std},
                          {"att_gamma_mean", a.att_gamma_mean},
                          {"att_delta_mean", a.att_delta_mean},
                          {"att_upsilon_mean", a.att_upsilon_mean}});
    out["aggregates"] = std::move(aggs);
    std::ofstream f(fs::path(out_dir) / "results.json");
    if (!f) throw DataError("write_experiment_files: cannot open results.json");
    f << out.dump(2) << "\n";
  }
}

namespace {

std::vector<std::string> parse_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (char c : line) {
    if (c == '"') {
      quoted = !quoted;
    } else if (c == ',' && !quoted) {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

double parse_double(const std::string& s) {
  if (s.empty()) return kNaN;
  return std::strtod(s.c_str(), nullptr);
}

}  // namespace

std::vector<SeedModeResult> read_results_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw DataError("read_results_csv: cannot open " + path);
  std::string line;
  if (!std::getline(f, line)) throw DataError("read_results_csv: empty file");
  std::vector<SeedModeResult> rows;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    const auto cells = parse_csv_line(line);
    if (cells.size() != 13)
      throw DataError("read_results_csv: wrong field count in " + path);
    SeedModeResult r;
    r.seed_index = static_cast<int>(parse_double(cells[0]));
    r.data_seed = static_cast<std::uint64_t>(parse_double(cells[1]));
    r.mode = mode_from_string(cells[2]);
    r.ok = cells[3] == "ok";
    r.error = cells[4];
    r.pehe = parse_double(cells[5]);
    r.att_gamma = parse_double(cells[6]);
    r.att_delta = parse_double(cells[7]);
    r.att_upsilon = parse_double(cells[8]);
    r.degenerate_fallbacks = static_cast<int>(parse_double(cells[9]));
    r.best_round = static_cast<int>(parse_double(cells[10]));
    r.best_val = parse_double(cells[11]);
    if (!cells[12].empty()) {
      std::stringstream ss(cells[12]);
      std::string tok;
      while (std::getline(ss, tok, ';')) r.xi_trace.push_back(parse_double(tok));
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace dpsw
