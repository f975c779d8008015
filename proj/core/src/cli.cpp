#include "exolam/cli.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <set>

#include <CLI11.hpp>
#include <json.hpp>

#include "exolam/config.hpp"
#include "exolam/container.hpp"
#include "exolam/evaluation.hpp"
#include "exolam/linalg.hpp"
#include "exolam/report.hpp"
#include "exolam/sweep.hpp"

namespace exolam {

using nlohmann::json;
namespace fs = std::filesystem;

std::uint64_t master_seed_from_env(std::uint64_t cli_value, bool cli_given) {
  if (cli_given) return cli_value;
  if (const char* env = std::getenv("EXOLAM_SEED"))
    return std::strtoull(env, nullptr, 10);
  return 0;
}

int cmd_gen(const std::string& config_path, const std::string& out_path,
            const std::string& csv_path, std::uint64_t master) {
  ExperimentConfig cfg;
  try {
    cfg = parse_experiment_config_file(config_path);
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitUsage;
  }
  try {
    const std::uint64_t seed0 = cfg.seeds.front();
    if (cfg.is_linear()) {
      LinearEnvConfig env = cfg.env;
      env.seed = derive_seed(master, seed0, 1);
      RngStream em_rng(env.seed, kStreamEmissions);
      auto em = std::make_shared<EmissionSet>(build_emissions(env, em_rng));
      RngStream data_rng(env.seed, kStreamData);
      TransitionBatch batch = generate(env, em, data_rng);
      save_dataset(out_path, canonical_config_json(cfg), batch);
      if (!csv_path.empty()) write_dataset_csv(csv_path, batch, batch.size());

      NoiseEnergyReport ne = noise_energy_report(batch);
      double q_sq = 0.0;
      std::vector<double> q(env.d_o);
      for (std::size_t i = 0; i < batch.size(); ++i) {
        batch.q(i, q.data());
        for (double v : q) q_sq += v * v;
      }
      q_sq /= static_cast<double>(batch.size());
      std::cout << "wrote " << out_path << ": rows=" << batch.size()
                << " mean_q_sq=" << format_float(q_sq)
                << " mean_eps_sq=" << format_float(ne.lhs)
                << " switch_rate=" << format_float(ne.p_hat) << "\n";
    } else {
      GridEnvConfig env = cfg.grid_env;
      env.seed = derive_seed(master, seed0, 1);
      RngStream data_rng(env.seed, kStreamData);
      GridBatch batch = generate_grid(env, data_rng);
      save_grid_dataset(out_path, canonical_config_json(cfg), batch);
      if (!csv_path.empty()) write_grid_csv(csv_path, batch, batch.n);
      double exo_mean = 0.0;
      for (std::size_t i = 0; i < batch.n; ++i)
        for (int p = kExoRowOffset; p < 16; ++p)
          exo_mean += batch.frame_obs(i)[p];
      exo_mean /= static_cast<double>(batch.n * 4);
      std::cout << "wrote " << out_path << ": rows=" << batch.n
                << " sigma=" << format_float(batch.sigma)
                << " exo_pixel_mean=" << format_float(exo_mean) << "\n";
    }
    return kExitOk;
  } catch (const std::exception& e) {
    std::cerr << "gen failed: " << e.what() << "\n";
    return kExitRunFailure;
  }
}

int cmd_train(const std::string& config_path, const std::string& out_dir,
              const std::string& resume_path, std::uint64_t master) {
  ExperimentConfig cfg;
  try {
    cfg = parse_experiment_config_file(config_path);
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitUsage;
  }
  try {
    fs::create_directories(out_dir);
    const std::string hash = config_hash(cfg);
    for (std::uint64_t seed : cfg.seeds) {
      if (cfg.is_linear()) {
        LinearEnvConfig env = cfg.env;
        env.seed = derive_seed(master, seed, 1);
        LinearTrainConfig model = cfg.model;
        model.seed = derive_seed(master, seed, 2);
        RngStream em_rng(env.seed, kStreamEmissions);
        auto em = std::make_shared<EmissionSet>(build_emissions(env, em_rng));
        RngStream data_rng(env.seed, kStreamData);
        TransitionBatch data = generate(env, em, data_rng);

        TrainResult res;
        if (!resume_path.empty()) {
          LoadedLinearCheckpoint loaded = load_linear_checkpoint(resume_path);
          res = train(model, data, &loaded.ckpt);
        } else {
          res = train(model, data);
        }
        const std::string ckpt =
            (fs::path(out_dir) / ("ckpt_" + hash + "_" + std::to_string(seed) +
                                  ".bin"))
                .string();
        save_linear_checkpoint(ckpt, canonical_config_json(cfg),
                               res.checkpoint);

        std::string hist = "step,loss_lam,loss_xexo,loss_robust,loss_total\n";
        for (const auto& h : res.history) {
          hist += std::to_string(h.step) + "," +
                  format_float(h.minibatch.lam) + "," +
                  format_float(h.minibatch.xexo) + "," +
                  format_float(h.minibatch.robust) + "," +
                  format_float(h.minibatch.total) + "\n";
        }
        write_text_file((fs::path(out_dir) /
                         ("train_" + hash + "_" + std::to_string(seed) + ".csv"))
                            .string(),
                        hist);
        std::cout << "seed " << seed << ": final loss_lam="
                  << format_float(res.final_full.lam)
                  << " total=" << format_float(res.final_full.total)
                  << " steps=" << res.steps_run << " -> " << ckpt << "\n";
      } else {
        GridEnvConfig env = cfg.grid_env;
        env.seed = derive_seed(master, seed, 1);
        GridModelConfig model = cfg.grid_model;
        model.seed = derive_seed(master, seed, 2);
        RngStream data_rng(env.seed, kStreamData);
        GridBatch data = generate_grid(env, data_rng);
        GridTrainResult res = train_grid(model, data);

        Container c;
        c.config_json = canonical_config_json(cfg);
        const auto specs = grid_param_specs(model);
        for (std::size_t i = 0; i < specs.size(); ++i)
          c.add_matrix(specs[i].name, res.params[i]);
        const std::string ckpt =
            (fs::path(out_dir) / ("grid_ckpt_" + hash + "_" +
                                  std::to_string(seed) + ".bin"))
                .string();
        c.write(ckpt);

        std::string hist = "step,recon,vq,xexo,robust\n";
        for (const auto& h : res.history)
          hist += std::to_string(h.step) + "," +
                  format_float(h.losses.recon) + "," +
                  format_float(h.losses.vq) + "," +
                  format_float(h.losses.xexo) + "," +
                  format_float(h.losses.robust) + "\n";
        write_text_file((fs::path(out_dir) /
                         ("train_" + hash + "_" + std::to_string(seed) + ".csv"))
                            .string(),
                        hist);
        std::cout << "seed " << seed
                  << ": final recon=" << format_float(res.final_losses.recon)
                  << " params=" << res.param_count << " -> " << ckpt << "\n";
      }
    }
    return kExitOk;
  } catch (const std::exception& e) {
    std::cerr << "train failed: " << e.what() << "\n";
    return kExitRunFailure;
  }
}

int cmd_sweep(const std::string& spec_path, const std::string& out_dir,
              std::size_t jobs, std::uint64_t master) {
  SweepSpec spec;
  try {
    spec = parse_sweep_spec_file(spec_path);
  } catch (const std::exception& e) {
    std::cerr << "sweep spec error: " << e.what() << "\n";
    return kExitUsage;
  }
  try {
    std::cout << "sweep: " << spec.total_runs << " runs ("
              << spec.axes.size() << " axes), jobs=" << jobs
              << ", master_seed=" << master << "\n";
    SweepResult res = run_sweep(spec, master, jobs);
    write_sweep_store(out_dir, spec, res);
    std::cout << "store written to " << out_dir << " ("
              << res.rows.size() - res.failures << " ok, " << res.failures
              << " failed)\n";
    return res.failures == 0 ? kExitOk : kExitRunFailure;
  } catch (const std::exception& e) {
    std::cerr << "sweep failed: " << e.what() << "\n";
    return kExitRunFailure;
  }
}

namespace {

void check_verify_keys(const json& j) {
  static const std::set<std::string> allowed = {
      "kind", "noise", "prop1", "prop2", "prop3"};
  for (const auto& [k, v] : j.items())
    if (!allowed.count(k))
      throw std::invalid_argument("verify config: unknown key /" + k);
}

LinearEnvConfig env_from_json(const json& j) {
  LinearEnvConfig env;
  if (j.contains("d_s")) j.at("d_s").get_to(env.d_s);
  if (j.contains("d_a")) j.at("d_a").get_to(env.d_a);
  if (j.contains("d_o")) j.at("d_o").get_to(env.d_o);
  if (j.contains("n_xi")) j.at("n_xi").get_to(env.n_xi);
  if (j.contains("p_switch")) j.at("p_switch").get_to(env.p_switch);
  if (j.contains("alpha")) j.at("alpha").get_to(env.alpha);
  if (j.contains("n_traj")) j.at("n_traj").get_to(env.n_traj);
  if (j.contains("traj_len")) j.at("traj_len").get_to(env.traj_len);
  env.validate();
  return env;
}

}  // namespace

std::string VerifyBundle::to_json() const {
  std::string out = "[";
  for (std::size_t i = 0; i < reports.size(); ++i) {
    if (i) out += ",";
    out += reports[i].to_json();
  }
  out += "]";
  return out;
}

VerifyBundle run_verify_config(const std::string& config_json,
                               std::uint64_t master) {
  json j = json::parse(config_json);
  check_verify_keys(j);
  VerifyBundle bundle;

  auto add = [&](PropReport rep) {
    const bool ok = rep.pass || rep.inconclusive;
    bundle.all_ok = bundle.all_ok && ok;
    std::cout << (rep.pass ? "[PASS] " : rep.inconclusive ? "[....] "
                                                          : "[FAIL] ")
              << rep.prop_id << ": " << rep.summary
              << " lhs=" << format_float(rep.lhs)
              << " rhs=" << format_float(rep.rhs)
              << (rep.degenerate ? " (degenerate)" : "") << "\n";
    bundle.reports.push_back(std::move(rep));
  };

  if (j.contains("noise")) {
    LinearEnvConfig env = env_from_json(j.at("noise"));
    env.seed = derive_seed(master, 0, 1);
    RngStream em_rng(env.seed, kStreamEmissions);
    auto em = std::make_shared<EmissionSet>(build_emissions(env, em_rng));
    RngStream data_rng(env.seed, kStreamData);
    TransitionBatch batch = generate(env, em, data_rng);
    add(verify_noise_decomposition(batch));
  }

  if (j.contains("prop2")) {
    const json& p2 = j.at("prop2");
    const std::size_t d = p2.value("d", std::size_t{16});
    const std::size_t n = p2.value("n", std::size_t{100000});
    const std::size_t d_z = p2.value("d_z", std::size_t{4});
    const std::size_t steps = p2.value("steps", std::size_t{4000});
    const double lr = p2.value("lr", 0.02);
    std::vector<double> rho;
    if (p2.contains("rho")) p2.at("rho").get_to(rho);
    if (rho.empty()) {
      rho = {0.95, 0.9, 0.85, 0.8};
      while (rho.size() < d) rho.push_back(0.4 * double(d - rho.size()) / d);
    }
    std::vector<std::uint64_t> seeds = p2.value(
        "seeds", std::vector<std::uint64_t>{1, 2, 3, 4});
    for (std::uint64_t s : seeds) {
      SyntheticCcaData data =
          make_cca_construction(d, n, rho, derive_seed(master, s, 21));
      Matrix uw = whiten(data.u).whitened;
      Matrix utw = whiten(data.u_tilde).whitened;
      PropReport rep =
          verify_prop2(uw, utw, d_z, steps, lr, derive_seed(master, s, 22));
      rep.summary += " [seed " + std::to_string(s) + "]";
      // Closed-form correlations must match the empirical ones.
      CcaResult oracle = cca_oracle(uw, utw, d_z);
      double worst = 0.0;
      for (std::size_t k = 0; k < d; ++k)
        worst = std::max(worst, std::fabs(oracle.correlations[k] -
                                          data.population_correlations[k]));
      rep.evidence["max_corr_dev"] = worst;
      rep.pass = rep.pass && worst <= 0.02;
      add(std::move(rep));
    }
  }

  if (j.contains("prop3")) {
    const json& p3 = j.at("prop3");
    LinearEnvConfig env = p3.contains("env") ? env_from_json(p3.at("env"))
                                             : LinearEnvConfig{};
    if (!p3.contains("env")) {
      env.n_traj = 500;
      env.p_switch = 0.3;
      env.alpha = 0.5;
    }
    env.seed = derive_seed(master, 0, 31);
    const std::size_t draws = p3.value("n_param_draws", std::size_t{100});
    RngStream em_rng(env.seed, kStreamEmissions);
    auto em = std::make_shared<EmissionSet>(build_emissions(env, em_rng));
    RngStream data_rng(env.seed, kStreamData);
    TransitionBatch batch = generate(env, em, data_rng);

    for (const std::string target : {"action", "q"}) {
      const RobustTarget rt = robust_target_from_name(target);
      const std::size_t d_y = rt == RobustTarget::action ? env.d_a : env.d_o;
      std::size_t violations = 0;
      double min_margin = 1e300, eta0 = 0.0;
      for (std::size_t i = 0; i < draws; ++i) {
        RngStream prng(derive_seed(master, i, 32), kStreamParamDraw);
        LinearLamParams p = init_params(env.d_o, 8, d_y, prng);
        PropReport r = verify_prop3(p, batch, rt);
        if (!r.pass) ++violations;
        min_margin = std::min(min_margin, r.margin);
        if (rt == RobustTarget::action) eta0 = r.evidence["eta_hat"];
      }
      PropReport rep;
      rep.prop_id = "prop3_robust_bound";
      rep.summary = "bound over " + std::to_string(draws) +
                    " random parameter draws (target " + target + ")";
      rep.margin = min_margin;
      rep.evidence["violations"] = static_cast<double>(violations);
      rep.evidence["min_margin"] = min_margin;
      if (rt == RobustTarget::action) rep.evidence["eta_hat"] = eta0;
      rep.pass = violations == 0;
      add(std::move(rep));
    }
  }

  if (j.contains("prop1")) {
    const json& p1 = j.at("prop1");
    LinearEnvConfig base = p1.contains("env") ? env_from_json(p1.at("env"))
                                              : LinearEnvConfig{};
    if (!p1.contains("env")) {
      base.d_s = base.d_a = 4;
      base.d_o = 32;
      base.n_traj = 1500;
      base.alpha = 0.5;
    }
    std::vector<double> sweep =
        p1.value("p_switch_sweep", std::vector<double>{0.0, 0.1, 0.3, 0.5});
    const int restarts = p1.value("restarts", 3);
    LinearTrainConfig tc;
    tc.d_z = p1.value("d_z", std::size_t{4});
    tc.lr = p1.value("lr", 1e-3);
    tc.steps = p1.value("max_steps", std::size_t{50000});
    tc.batch_size = p1.value("batch_size", std::size_t{128});
    tc.log_every = 0;
    tc.seed = derive_seed(master, 0, 41);

    std::vector<double> margins;
    bool all_ok = true, any_inconclusive = false;
    for (double p : sweep) {
      LinearEnvConfig env = base;
      env.p_switch = p;
      env.seed = derive_seed(master, 0, 42);
      Prop1Result r = verify_prop1(env, tc, restarts);
      margins.push_back(r.margin);
      all_ok = all_ok && (r.report.pass || r.report.inconclusive);
      any_inconclusive = any_inconclusive || r.report.inconclusive;
      add(r.report);
    }
    PropReport mono;
    mono.prop_id = "prop1_margin_monotone";
    mono.summary = "leakage margin non-decreasing over the p_switch sweep";
    mono.pass = true;
    for (std::size_t i = 0; i + 1 < margins.size(); ++i)
      if (margins[i + 1] < margins[i]) mono.pass = false;
    for (std::size_t i = 0; i < margins.size(); ++i)
      mono.evidence["margin_" + std::to_string(i)] = margins[i];
    mono.inconclusive = any_inconclusive;
    add(std::move(mono));
  }

  return bundle;
}

int cmd_verify(const std::string& config_path, const std::string& out_path,
               std::uint64_t master) {
  std::string text;
  try {
    text = read_text_file(config_path);
    json::parse(text);
  } catch (const std::exception& e) {
    std::cerr << "verify config error: " << e.what() << "\n";
    return kExitUsage;
  }
  try {
    VerifyBundle bundle = run_verify_config(text, master);
    if (!out_path.empty()) write_text_file(out_path, bundle.to_json());
    std::cout << (bundle.all_ok ? "verify: all checks passed\n"
                                : "verify: FAILURES present\n");
    return bundle.all_ok ? kExitOk : kExitVerifyFailure;
  } catch (const std::exception& e) {
    std::cerr << "verify failed: " << e.what() << "\n";
    return kExitRunFailure;
  }
}

int cmd_report(const std::string& store_dir, const std::string& figure_id,
               const std::string& out_dir) {
  try {
    StoreTable runs = load_store_runs(store_dir);
    FigureData fig = build_figure(figure_id, runs);
    write_figure(out_dir, fig);
    std::cout << "wrote " << out_dir << "/" << figure_id << ".csv and .svg\n";
    return kExitOk;
  } catch (const std::invalid_argument& e) {
    std::cerr << "report error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "report failed: " << e.what() << "\n";
    return kExitRunFailure;
  }
}

int cli_main(int argc, char** argv) {
  CLI::App app{"exolam: latent action models under exogenous noise"};
  app.require_subcommand(1);

  std::string config_path, out_path, csv_path, resume_path, store_dir,
      figure_id;
  std::uint64_t seed = 0;
  std::size_t jobs = 1;

  auto* gen = app.add_subcommand("gen", "generate a dataset");
  gen->add_option("--config", config_path, "experiment config JSON")
      ->required();
  gen->add_option("--out", out_path, "output dataset path")->required();
  gen->add_option("--csv", csv_path, "also write a CSV inspection dump");
  auto* gen_seed = gen->add_option("--seed", seed, "master seed");

  auto* train = app.add_subcommand("train", "train a model per config seed");
  train->add_option("--config", config_path, "experiment config JSON")
      ->required();
  train->add_option("--out", out_path, "output directory")->required();
  train->add_option("--resume", resume_path, "checkpoint to resume from");
  auto* train_seed = train->add_option("--seed", seed, "master seed");

  auto* sweep = app.add_subcommand("sweep", "run a sweep specification");
  sweep->add_option("--config", config_path, "sweep spec JSON")->required();
  sweep->add_option("--out", out_path, "store directory")->required();
  sweep->add_option("--jobs", jobs, "parallel jobs");
  auto* sweep_seed = sweep->add_option("--seed", seed, "master seed");

  auto* verify = app.add_subcommand("verify", "run proposition verifiers");
  verify->add_option("--config", config_path, "verify config JSON")
      ->required();
  verify->add_option("--out", out_path, "JSON report bundle path");
  auto* verify_seed = verify->add_option("--seed", seed, "master seed");

  auto* report = app.add_subcommand("report", "build figure CSV + SVG");
  report->add_option("--store", store_dir, "sweep store directory")
      ->required();
  report->add_option("--figure", figure_id,
                     "figure id: fig2c|fig3r|fig4a|fig4b|fig5b")
      ->required();
  report->add_option("--out", out_path, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  if (gen->parsed())
    return cmd_gen(config_path, out_path, csv_path,
                   master_seed_from_env(seed, !gen_seed->empty()));
  if (train->parsed())
    return cmd_train(config_path, out_path, resume_path,
                     master_seed_from_env(seed, !train_seed->empty()));
  if (sweep->parsed())
    return cmd_sweep(config_path, out_path, jobs,
                     master_seed_from_env(seed, !sweep_seed->empty()));
  if (verify->parsed())
    return cmd_verify(config_path, out_path,
                      master_seed_from_env(seed, !verify_seed->empty()));
  if (report->parsed()) return cmd_report(store_dir, figure_id, out_path);
  return kExitUsage;
}

}  // namespace exolam
