#include "exolam/sweep.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <set>
#include <thread>

#include <json.hpp>

#include "exolam/evaluation.hpp"
#include "exolam/oracles.hpp"

namespace exolam {

using nlohmann::json;

std::string format_float(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

namespace {

std::map<std::string, double> run_linear(const ExperimentConfig& cfg,
                                         std::uint64_t master,
                                         std::uint64_t seed) {
  LinearEnvConfig env = cfg.env;
  env.seed = derive_seed(master, seed, 1);
  LinearTrainConfig model = cfg.model;
  model.seed = derive_seed(master, seed, 2);

  RngStream em_rng(env.seed, kStreamEmissions);
  auto em = std::make_shared<EmissionSet>(build_emissions(env, em_rng));
  RngStream data_rng(env.seed, kStreamData);
  TransitionBatch data = generate(env, em, data_rng);

  TrainResult trained = train(model, data);

  // Evaluation dataset from a disjoint stream, same environment.
  LinearEnvConfig eval_env = env;
  eval_env.n_traj = cfg.eval.eval_traj;
  RngStream eval_rng(derive_seed(master, seed, 3), kStreamEvalData);
  TransitionBatch eval_data = generate(eval_env, em, eval_rng);

  std::map<std::string, double> m;
  m["loss_lam"] = trained.final_full.lam;
  m["loss_xexo"] = model.lambda_xexo > 0.0 ? trained.final_full.xexo : 0.0;
  m["loss_robust"] =
      model.lambda_robust > 0.0 ? trained.final_full.robust : 0.0;
  m["loss_total"] = trained.final_full.total;
  m["baseline_do_nothing"] = do_nothing_baseline(data);
  m["steps_run"] = static_cast<double>(trained.steps_run);

  // Probe on the eval latents, 80/20 split.
  const std::size_t n_eval = eval_data.size();
  Matrix z(n_eval, model.d_z);
  Matrix act = eval_data.action_rows();
  {
    std::vector<double> o(env.d_o), on(env.d_o), zi(model.d_z),
        tmp(model.d_z);
    for (std::size_t i = 0; i < n_eval; ++i) {
      eval_data.o(i, o.data());
      eval_data.o_next(i, on.data());
      matvec(trained.params.C, o.data(), zi.data());
      matvec(trained.params.D, on.data(), tmp.data());
      for (std::size_t j = 0; j < model.d_z; ++j) z(i, j) = zi[j] + tmp[j];
    }
  }
  m["nmse"] = probe_nmse_split(z, act, cfg.eval.lambda_ridge);

  VarianceMetricConfig vm;
  vm.anchors = cfg.eval.anchors;
  vm.draws = cfg.eval.draws;
  vm.seed = derive_seed(master, seed, 4);
  m["var_xi_prime"] = var_xi_prime(trained.params, env, *em, vm).value;
  m["var_xi_pair"] = var_xi_pair(trained.params, env, *em, vm).value;
  m["consistency_z"] = env.n_xi > 1
                           ? consistency_loss(trained.params, eval_data)
                           : 0.0;

  NoiseEnergyReport ne = noise_energy_report(eval_data);
  m["noise_lhs"] = ne.lhs;
  m["noise_p_hat"] = ne.p_hat;
  m["noise_cond"] = ne.cond;
  m["noise_delta_h_hat"] = ne.delta_h_hat;
  return m;
}

std::map<std::string, double> run_grid(const ExperimentConfig& cfg,
                                       std::uint64_t master,
                                       std::uint64_t seed) {
  GridEnvConfig env = cfg.grid_env;
  env.seed = derive_seed(master, seed, 1);
  GridModelConfig model = cfg.grid_model;
  model.seed = derive_seed(master, seed, 2);

  RngStream data_rng(env.seed, kStreamData);
  GridBatch data = generate_grid(env, data_rng);

  GridTrainResult trained = train_grid(model, data);

  GridEnvConfig eval_env = env;
  eval_env.n_steps = cfg.eval.eval_steps;
  RngStream eval_rng(derive_seed(master, seed, 3), kStreamEvalData);
  GridBatch eval_data = generate_grid(eval_env, eval_rng);

  std::map<std::string, double> m;
  m["grid_recon"] = trained.final_losses.recon;
  m["grid_vq"] = trained.final_losses.vq;
  m["grid_xexo"] = trained.final_losses.xexo;
  m["grid_robust"] = trained.final_losses.robust;
  m["param_count"] = static_cast<double>(trained.param_count);
  m["steps_run"] = static_cast<double>(model.steps);

  GridConsistency gc = grid_consistency(model, trained.params, eval_data);
  m["grid_consistency_z"] = gc.z_mse;
  m["grid_code_disagreement"] = gc.code_disagreement;
  const double exo = exo_region_mse(model, trained.params, eval_data);
  m["grid_exo_region_mse"] = exo;
  const double floor = 0.25 * env.sigma * env.sigma;
  m["grid_exo_region_ratio"] = floor > 0.0 ? exo / floor : 0.0;
  m["grid_code_usage"] =
      static_cast<double>(grid_code_usage(model, trained.params, eval_data));
  return m;
}

}  // namespace

std::map<std::string, double> run_experiment(const ExperimentConfig& cfg,
                                             std::uint64_t master,
                                             std::uint64_t seed) {
  return cfg.is_linear() ? run_linear(cfg, master, seed)
                         : run_grid(cfg, master, seed);
}

namespace {

struct Job {
  ExperimentConfig cfg;
  std::string swept_json;
  std::string hash;
  std::uint64_t seed;
};

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out += c;
  }
  out += "\"";
  return out;
}

// Sorted swept-parameter columns shared by the whole sweep.
std::vector<std::string> swept_columns(const SweepSpec& spec) {
  std::vector<std::string> cols;
  for (const auto& a : spec.axes) cols.push_back(a.path);
  std::sort(cols.begin(), cols.end());
  return cols;
}

std::string swept_value(const std::string& swept_json,
                        const std::string& path) {
  const json j = json::parse(swept_json);
  if (!j.contains(path)) return "";
  const json& v = j.at(path);
  if (v.is_number()) return format_float(v.get<double>());
  if (v.is_string()) return v.get<std::string>();
  return v.dump();
}

}  // namespace

SweepResult run_sweep(const SweepSpec& spec, std::uint64_t master,
                      std::size_t jobs) {
  const auto expanded = spec.expand();
  std::vector<Job> job_list;
  for (const auto& [cfg, swept] : expanded) {
    const std::string hash = config_hash(cfg);
    for (std::uint64_t s : cfg.seeds)
      job_list.push_back({cfg, swept, hash, s});
  }

  std::vector<ResultRow> rows(job_list.size());
  std::atomic<std::size_t> next{0};
  const std::size_t workers =
      std::max<std::size_t>(1, std::min(jobs, job_list.size()));

  auto worker = [&]() {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= job_list.size()) return;
      const Job& job = job_list[i];
      ResultRow& row = rows[i];
      row.config_hash = job.hash;
      row.swept_json = job.swept_json;
      row.seed = job.seed;
      const auto t0 = std::chrono::steady_clock::now();
      try {
        row.metrics = run_experiment(job.cfg, master, job.seed);
      } catch (const std::exception& e) {
        row.failed = true;
        row.error = e.what();
      }
      row.wall_seconds =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
              .count();
    }
  };

  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  SweepResult res;
  res.rows = std::move(rows);
  std::stable_sort(res.rows.begin(), res.rows.end(),
                   [](const ResultRow& a, const ResultRow& b) {
                     if (a.config_hash != b.config_hash)
                       return a.config_hash < b.config_hash;
                     return a.seed < b.seed;
                   });
  for (const auto& r : res.rows)
    if (r.failed) ++res.failures;

  // Metric column set: union over successful rows, sorted.
  std::set<std::string> metric_set;
  for (const auto& r : res.rows)
    for (const auto& [k, v] : r.metrics) metric_set.insert(k);
  const std::vector<std::string> metrics(metric_set.begin(), metric_set.end());
  const std::vector<std::string> sw_cols = swept_columns(spec);

  // Per-run CSV.
  std::string csv = "config_hash,seed";
  for (const auto& c : sw_cols) csv += "," + csv_escape(c);
  for (const auto& m : metrics) csv += "," + m;
  csv += ",wall_seconds,status,error\n";
  for (const auto& r : res.rows) {
    csv += r.config_hash + "," + std::to_string(r.seed);
    for (const auto& c : sw_cols)
      csv += "," + csv_escape(swept_value(r.swept_json, c));
    for (const auto& m : metrics) {
      csv += ",";
      auto it = r.metrics.find(m);
      if (it != r.metrics.end()) csv += format_float(it->second);
    }
    csv += "," + format_float(r.wall_seconds);
    csv += r.failed ? ",failed," + csv_escape(r.error) : ",ok,";
    csv += "\n";
  }
  res.runs_csv = csv;

  // Aggregate CSV: one row per config hash, mean and stderr per metric.
  std::string agg = "config_hash";
  for (const auto& c : sw_cols) agg += "," + csv_escape(c);
  agg += ",n_seeds";
  for (const auto& m : metrics) agg += ",mean_" + m + ",stderr_" + m;
  agg += "\n";
  for (std::size_t i = 0; i < res.rows.size();) {
    std::size_t j = i;
    while (j < res.rows.size() &&
           res.rows[j].config_hash == res.rows[i].config_hash)
      ++j;
    std::vector<const ResultRow*> ok;
    for (std::size_t k = i; k < j; ++k)
      if (!res.rows[k].failed) ok.push_back(&res.rows[k]);
    agg += res.rows[i].config_hash;
    for (const auto& c : sw_cols)
      agg += "," + csv_escape(swept_value(res.rows[i].swept_json, c));
    agg += "," + std::to_string(ok.size());
    for (const auto& m : metrics) {
      double mean = 0.0, se = 0.0;
      std::size_t n = 0;
      for (const auto* r : ok) {
        auto it = r->metrics.find(m);
        if (it != r->metrics.end()) {
          mean += it->second;
          ++n;
        }
      }
      if (n > 0) mean /= static_cast<double>(n);
      if (n > 1) {
        double var = 0.0;
        for (const auto* r : ok) {
          auto it = r->metrics.find(m);
          if (it != r->metrics.end()) {
            const double d = it->second - mean;
            var += d * d;
          }
        }
        var /= static_cast<double>(n - 1);
        se = std::sqrt(var / static_cast<double>(n));
      }
      if (n > 0)
        agg += "," + format_float(mean) + "," + format_float(se);
      else
        agg += ",,";
    }
    agg += "\n";
    i = j;
  }
  res.aggregate_csv = agg;
  return res;
}

void write_sweep_store(const std::string& dir, const SweepSpec& spec,
                       const SweepResult& result) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(dir) / "configs");
  write_text_file((fs::path(dir) / "runs.csv").string(), result.runs_csv);
  write_text_file((fs::path(dir) / "aggregate.csv").string(),
                  result.aggregate_csv);
  std::set<std::string> seen;
  for (const auto& [cfg, swept] : spec.expand()) {
    const std::string h = config_hash(cfg);
    if (!seen.insert(h).second) continue;
    write_text_file((fs::path(dir) / "configs" / (h + ".json")).string(),
                    canonical_config_json(cfg));
  }
  if (!spec.figure.empty())
    write_text_file((fs::path(dir) / "figure.txt").string(), spec.figure + "\n");
}

}  // namespace exolam
