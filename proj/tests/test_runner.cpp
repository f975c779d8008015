#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>

#include "exolam/cli.hpp"
#include "exolam/config.hpp"
#include "exolam/container.hpp"
#include "exolam/evaluation.hpp"
#include "exolam/report.hpp"
#include "exolam/sweep.hpp"

using namespace exolam;
namespace fs = std::filesystem;

namespace {

const char* kTinyLinear = R"({
  "kind": "linear",
  "env": {"d_s": 4, "d_a": 4, "d_o": 16, "n_xi": 4, "p_switch": 0.2,
          "alpha": 0.5, "n_traj": 40, "traj_len": 4},
  "model": {"d_z": 4, "lr": 0.002, "steps": 120, "batch_size": 32,
            "objective": "baseline", "log_every": 60},
  "eval": {"lambda_ridge": 1e-6, "anchors": 32, "draws": 4, "eval_traj": 40},
  "seeds": [1, 2]
})";

std::string tmp_dir(const std::string& tag) {
  fs::path p = fs::temp_directory_path() / ("exolam_test_" + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p.string();
}

std::string tiny_sweep_json() {
  return std::string(R"({
  "base": )") + kTinyLinear + R"(,
  "axes": [{"path": "env.p_switch", "values": [0.0, 0.3]}],
  "figure": "fig2c"
})";
}

}  // namespace

TEST_CASE("config parsing: defaults, rejection, objectives") {
  ExperimentConfig cfg = parse_experiment_config(kTinyLinear);
  CHECK(cfg.is_linear());
  CHECK(cfg.env.d_o == 16);
  CHECK(cfg.seeds.size() == 2);
  CHECK(cfg.objective == Objective::baseline);
  CHECK(cfg.model.lambda_xexo == 0.0);

  CHECK_THROWS_WITH_AS(
      parse_experiment_config(R"({"kind":"linear","env":{"p_swich":0.1}})"),
      doctest::Contains("/env/p_swich"), std::invalid_argument);

  CHECK_THROWS_WITH_AS(
      parse_experiment_config(
          R"({"kind":"linear","env":{"n_xi":1,"p_switch":0.2}})"),
      doctest::Contains("no other"), std::invalid_argument);

  // Objective bundles set the lambdas.
  std::string xexo = kTinyLinear;
  xexo.replace(xexo.find("baseline"), 8, "xexo");
  ExperimentConfig cx = parse_experiment_config(xexo);
  CHECK(cx.model.lambda_xexo == 1.0);
  CHECK(cx.model.lambda_robust == 0.0);

  std::string act = kTinyLinear;
  act.replace(act.find("baseline"), 8, "action_pred");
  ExperimentConfig ca = parse_experiment_config(act);
  CHECK(ca.model.lambda_robust == 1.0);
  CHECK(ca.model.robust_target == RobustTarget::action);

  // q_pred is linear-only.
  CHECK_THROWS(parse_experiment_config(
      R"({"kind":"grid","model":{"objective":"q_pred"}})"));
}

TEST_CASE("config hash ignores seeds and tracks parameters") {
  ExperimentConfig a = parse_experiment_config(kTinyLinear);
  ExperimentConfig b = a;
  b.seeds = {7, 8, 9};
  CHECK(config_hash(a) == config_hash(b));
  ExperimentConfig c = a;
  c.env.p_switch = 0.4;
  CHECK(config_hash(a) != config_hash(c));
}

TEST_CASE("sweep expansion counts configs x seeds") {
  SweepSpec spec = parse_sweep_spec(tiny_sweep_json());
  CHECK(spec.total_runs == 4);  // 2 axis values x 2 seeds
  auto expanded = spec.expand();
  CHECK(expanded.size() == 2);
  CHECK(expanded[0].first.env.p_switch == 0.0);
  CHECK(expanded[1].first.env.p_switch == 0.3);
}

TEST_CASE("dataset container round-trips bit-exactly") {
  LinearEnvConfig env;
  env.d_s = env.d_a = 4;
  env.d_o = 8;
  env.n_xi = 3;
  env.p_switch = 0.25;
  env.alpha = 0.5;
  env.n_traj = 10;
  env.traj_len = 4;
  env.seed = 9;
  RngStream em_rng(env.seed, kStreamEmissions);
  auto em = std::make_shared<EmissionSet>(build_emissions(env, em_rng));
  RngStream data_rng(env.seed, kStreamData);
  TransitionBatch batch = generate(env, em, data_rng);

  const std::string dir = tmp_dir("ds");
  const std::string path = dir + "/data.bin";
  save_dataset(path, "{\"k\":1}", batch);
  LoadedDataset loaded = load_dataset(path);
  CHECK(loaded.config_json == "{\"k\":1}");
  CHECK(loaded.batch.size() == batch.size());
  CHECK(loaded.batch.xi == batch.xi);
  CHECK(loaded.batch.xi_tilde_next == batch.xi_tilde_next);
  for (std::size_t i = 0; i < batch.size(); ++i)
    for (std::size_t k = 0; k < env.d_s; ++k) {
      CHECK(loaded.batch.s(i)[k] == batch.s(i)[k]);
      CHECK(loaded.batch.s_next(i)[k] == batch.s_next(i)[k]);
    }
  CHECK(loaded.batch.emissions().H0 == em->H0);
  CHECK(loaded.batch.emissions().R[2] == em->R[2]);
  // Renders agree exactly after the round trip.
  std::vector<double> a(env.d_o), b(env.d_o);
  batch.o_next(3, a.data());
  loaded.batch.o_next(3, b.data());
  CHECK(a == b);
}

TEST_CASE("container rejects corrupted files") {
  const std::string dir = tmp_dir("bad");
  const std::string path = dir + "/junk.bin";
  write_text_file(path, "not a container at all");
  CHECK_THROWS_WITH_AS(Container::read(path), doctest::Contains("magic"),
                       std::runtime_error);
}

TEST_CASE("run_experiment emits registry metrics") {
  ExperimentConfig cfg = parse_experiment_config(kTinyLinear);
  auto metrics = run_experiment(cfg, /*master=*/0, /*seed=*/1);
  CHECK(metrics.count("nmse") == 1);
  CHECK(metrics.count("loss_lam") == 1);
  CHECK(metrics.count("var_xi_prime") == 1);
  CHECK(metrics.count("noise_lhs") == 1);
  for (const auto& [k, v] : metrics) {
    CHECK(is_registered_metric(k));
    CHECK(std::isfinite(v));
  }
  // Same (master, seed) reproduces identical metrics bit-for-bit.
  auto again = run_experiment(cfg, 0, 1);
  CHECK(again == metrics);
  // A different seed gives different numbers.
  auto other = run_experiment(cfg, 0, 2);
  CHECK(other.at("loss_lam") != metrics.at("loss_lam"));
}

TEST_CASE("sweep: deterministic aggregate across parallelism and reruns") {
  SweepSpec spec = parse_sweep_spec(tiny_sweep_json());
  SweepResult r1 = run_sweep(spec, 5, 1);
  SweepResult r2 = run_sweep(spec, 5, 2);
  SweepResult r3 = run_sweep(spec, 5, 2);
  CHECK(r1.failures == 0);
  CHECK(r1.aggregate_csv == r2.aggregate_csv);
  CHECK(r2.aggregate_csv == r3.aggregate_csv);
  CHECK(r1.runs_csv.substr(0, r1.runs_csv.find("wall_seconds")) ==
        r2.runs_csv.substr(0, r2.runs_csv.find("wall_seconds")));
  // 4 result rows + header.
  CHECK(std::count(r1.runs_csv.begin(), r1.runs_csv.end(), '\n') == 5);

  // A different master seed changes the numbers.
  SweepResult r4 = run_sweep(spec, 6, 2);
  CHECK(r4.aggregate_csv != r1.aggregate_csv);
}

TEST_CASE("sweep store and figure reporting") {
  SweepSpec spec = parse_sweep_spec(tiny_sweep_json());
  SweepResult res = run_sweep(spec, 5, 2);
  const std::string dir = tmp_dir("store");
  write_sweep_store(dir, spec, res);
  CHECK(fs::exists(fs::path(dir) / "runs.csv"));
  CHECK(fs::exists(fs::path(dir) / "aggregate.csv"));

  StoreTable runs = load_store_runs(dir);
  CHECK(runs.rows.size() == 4);
  FigureData fig = build_figure("fig2c", runs);
  CHECK(fig.series.size() == 2);  // nmse + var_xi_prime
  for (const auto& s : fig.series) {
    CHECK(s.points.size() == 2);
    for (const auto& p : s.points) CHECK(p.n == 2);
  }
  const std::string csv = figure_csv(fig);
  CHECK(csv.find("nmse") != std::string::npos);
  const std::string svg = figure_svg(fig);
  CHECK(svg.find("<svg") != std::string::npos);
  CHECK(svg.find("polyline") != std::string::npos);

  CHECK_THROWS_WITH_AS(build_figure("fig9z", runs), doctest::Contains("fig9z"),
                       std::invalid_argument);
  CHECK_THROWS_WITH_AS(load_store_runs(tmp_dir("empty_store")),
                       doctest::Contains("runs.csv"), std::runtime_error);
}

TEST_CASE("cli: gen writes byte-identical datasets for the same seed") {
  const std::string dir = tmp_dir("cli");
  const std::string cfg_path = dir + "/cfg.json";
  write_text_file(cfg_path, kTinyLinear);

  CHECK(cmd_gen(cfg_path, dir + "/d1.bin", "", 3) == kExitOk);
  CHECK(cmd_gen(cfg_path, dir + "/d2.bin", "", 3) == kExitOk);
  CHECK(read_text_file(dir + "/d1.bin") == read_text_file(dir + "/d2.bin"));
  CHECK(cmd_gen(cfg_path, dir + "/d3.bin", "", 4) == kExitOk);
  CHECK(read_text_file(dir + "/d1.bin") != read_text_file(dir + "/d3.bin"));

  // CSV inspection dump alongside.
  CHECK(cmd_gen(cfg_path, dir + "/d4.bin", dir + "/d4.csv", 3) == kExitOk);
  const std::string csv = read_text_file(dir + "/d4.csv");
  CHECK(csv.find("xi_tilde") != std::string::npos);

  // Bad config: schema-level rejection -> usage exit code.
  write_text_file(dir + "/bad.json", R"({"kind":"linear","env":{"zzz":1}})");
  CHECK(cmd_gen(dir + "/bad.json", dir + "/nope.bin", "", 0) == kExitUsage);
}

TEST_CASE("cli: train writes checkpoints and resume continues bit-exactly") {
  const std::string dir = tmp_dir("cli_train");
  const std::string cfg_path = dir + "/cfg.json";
  std::string one_seed = kTinyLinear;
  one_seed.replace(one_seed.find("[1, 2]"), 6, "[1]");
  write_text_file(cfg_path, one_seed);

  CHECK(cmd_train(cfg_path, dir + "/out", "", 3) == kExitOk);
  ExperimentConfig cfg = parse_experiment_config(one_seed);
  const std::string ckpt =
      dir + "/out/ckpt_" + config_hash(cfg) + "_1.bin";
  CHECK(fs::exists(ckpt));

  // Half the steps, then resume to the full count: same final params.
  std::string half = one_seed;
  half.replace(half.find("120"), 3, "60");
  write_text_file(dir + "/half.json", half);
  CHECK(cmd_train(dir + "/half.json", dir + "/half_out", "", 3) == kExitOk);
  ExperimentConfig hcfg = parse_experiment_config(half);
  const std::string half_ckpt =
      dir + "/half_out/ckpt_" + config_hash(hcfg) + "_1.bin";
  CHECK(cmd_train(cfg_path, dir + "/resumed", half_ckpt, 3) == kExitOk);
  const std::string resumed_ckpt =
      dir + "/resumed/ckpt_" + config_hash(cfg) + "_1.bin";

  LoadedLinearCheckpoint full = load_linear_checkpoint(ckpt);
  LoadedLinearCheckpoint resumed = load_linear_checkpoint(resumed_ckpt);
  CHECK(full.ckpt.params.A == resumed.ckpt.params.A);
  CHECK(full.ckpt.params.D == resumed.ckpt.params.D);
  CHECK(full.ckpt.step == resumed.ckpt.step);
}

TEST_CASE("cli: sweep + report round trip") {
  const std::string dir = tmp_dir("cli_sweep");
  write_text_file(dir + "/sweep.json", tiny_sweep_json());
  CHECK(cmd_sweep(dir + "/sweep.json", dir + "/store", 2, 5) == kExitOk);
  CHECK(cmd_report(dir + "/store", "fig2c", dir + "/figs") == kExitOk);
  CHECK(fs::exists(dir + "/figs/fig2c.csv"));
  CHECK(fs::exists(dir + "/figs/fig2c.svg"));
  CHECK(cmd_report(dir + "/store", "bogus", dir + "/figs") == kExitUsage);
}

TEST_CASE("cli: verify runs the bundled checks on a small config") {
  const std::string dir = tmp_dir("cli_verify");
  write_text_file(dir + "/verify.json", R"({
    "noise": {"d_s": 4, "d_a": 4, "d_o": 12, "n_xi": 4, "p_switch": 0.3,
              "alpha": 0.5, "n_traj": 100, "traj_len": 4},
    "prop3": {"env": {"d_s": 4, "d_a": 4, "d_o": 12, "n_xi": 4,
                      "p_switch": 0.3, "alpha": 0.5, "n_traj": 60,
                      "traj_len": 4},
              "n_param_draws": 10},
    "prop2": {"d": 6, "n": 20000, "d_z": 2, "steps": 1500, "lr": 0.02,
              "rho": [0.9, 0.8, 0.3, 0.25, 0.2, 0.15], "seeds": [1]}
  })");
  CHECK(cmd_verify(dir + "/verify.json", dir + "/reports.json", 2) == kExitOk);
  const std::string bundle = read_text_file(dir + "/reports.json");
  CHECK(bundle.find("eq14_noise_decomposition") != std::string::npos);
  CHECK(bundle.find("prop3_robust_bound") != std::string::npos);
  CHECK(bundle.find("prop2_cca") != std::string::npos);
}
