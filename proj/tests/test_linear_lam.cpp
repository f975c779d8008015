#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numeric>

#include "exolam/env.hpp"
#include "exolam/linalg.hpp"
#include "exolam/linear_lam.hpp"

using namespace exolam;

namespace {

struct Setup {
  LinearEnvConfig env;
  std::shared_ptr<EmissionSet> em;
  TransitionBatch batch;
};

Setup make_setup(double p_switch, double alpha, std::size_t n_xi = 6,
                 std::size_t n_traj = 200, std::uint64_t seed = 4) {
  LinearEnvConfig cfg;
  cfg.d_s = cfg.d_a = 4;
  cfg.d_o = 16;
  cfg.n_xi = n_xi;
  cfg.p_switch = p_switch;
  cfg.alpha = alpha;
  cfg.n_traj = n_traj;
  cfg.traj_len = 8;
  cfg.seed = seed;
  RngStream em_rng(cfg.seed, kStreamEmissions);
  auto em = std::make_shared<EmissionSet>(build_emissions(cfg, em_rng));
  RngStream data_rng(cfg.seed, kStreamData);
  TransitionBatch batch = generate(cfg, em, data_rng);
  return {cfg, em, std::move(batch)};
}

LinearLamParams random_params(std::size_t d_o, std::size_t d_z,
                              std::size_t d_y, std::uint64_t seed) {
  RngStream rng(seed, kStreamInit);
  return init_params(d_o, d_z, d_y, rng);
}

LinearLamParams copy_shortcut(std::size_t d_o) {
  LinearLamParams p;
  p.A = Matrix(d_o, d_o);
  p.B = Matrix::identity(d_o);
  p.C = Matrix(d_o, d_o);
  p.D = Matrix::identity(d_o);
  return p;
}

double mean_row_sq(const Matrix& rows) {
  return frob_norm_sq(rows) / static_cast<double>(rows.rows());
}

}  // namespace

TEST_CASE("idm closed forms") {
  Setup s = make_setup(0.3, 0.5);
  LinearLamParams p = random_params(16, 4, 0, 5);

  std::vector<double> o(16), on(16);
  s.batch.o(0, o.data());
  s.batch.o_next(0, on.data());

  LinearLamParams zero = p;
  zero.C.fill(0.0);
  zero.D.fill(0.0);
  for (double v : idm(zero, o, on)) CHECK(v == 0.0);

  // C = -D encodes the pure difference.
  LinearLamParams diff = p;
  diff.C = -1.0 * p.D;
  auto z = idm(diff, o, on);
  std::vector<double> u(16), expect(4);
  for (int k = 0; k < 16; ++k) u[k] = on[k] - o[k];
  matvec(p.D, u.data(), expect.data());
  for (int k = 0; k < 4; ++k)
    CHECK(z[k] == doctest::Approx(expect[k]).epsilon(1e-10));

  // Random params match direct matrix arithmetic.
  auto z2 = idm(p, o, on);
  std::vector<double> c1(4), c2(4);
  matvec(p.C, o.data(), c1.data());
  matvec(p.D, on.data(), c2.data());
  for (int k = 0; k < 4; ++k)
    CHECK(z2[k] == doctest::Approx(c1[k] + c2[k]).epsilon(1e-12));
}

TEST_CASE("fdm closed forms and the copy shortcut") {
  Setup s = make_setup(0.2, 0.5);
  LinearLamParams p = random_params(16, 4, 0, 6);
  std::vector<double> o(16), on(16);
  s.batch.o(3, o.data());
  s.batch.o_next(3, on.data());

  LinearLamParams ident = p;
  ident.A = Matrix::identity(16);
  ident.B.fill(0.0);
  auto pred = fdm(ident, o, idm(ident, o, on));
  for (int k = 0; k < 16; ++k)
    CHECK(pred[k] == doctest::Approx(o[k]).epsilon(1e-12));

  std::vector<double> zzero(4, 0.0);
  auto ao = fdm(p, o, zzero);
  std::vector<double> expect(16);
  matvec(p.A, o.data(), expect.data());
  for (int k = 0; k < 16; ++k)
    CHECK(ao[k] == doctest::Approx(expect[k]).epsilon(1e-12));

  // d_z = d_o copy shortcut reproduces o' exactly.
  LinearLamParams shortcut = copy_shortcut(16);
  auto z = idm(shortcut, o, on);
  auto out = fdm(shortcut, o, z);
  for (int k = 0; k < 16; ++k) CHECK(out[k] == doctest::Approx(on[k]));
}

TEST_CASE("loss_lam closed forms") {
  Setup s = make_setup(0.3, 0.5);
  CHECK(loss_lam(copy_shortcut(16), s.batch) == doctest::Approx(0.0));

  // A = I, B = 0 is the do-nothing predictor with loss mean ||q + eps||^2.
  LinearLamParams dn = random_params(16, 4, 0, 7);
  dn.A = Matrix::identity(16);
  dn.B.fill(0.0);
  CHECK(loss_lam(dn, s.batch) ==
        doctest::Approx(do_nothing_baseline(s.batch)).epsilon(1e-10));
}

TEST_CASE("loss_xexo reduces to the u-space objective at A=I, C=-D") {
  Setup s = make_setup(0.3, 0.5);
  LinearLamParams p = random_params(16, 4, 0, 8);
  p.A = Matrix::identity(16);
  p.C = -1.0 * p.D;

  const double lx = loss_xexo(p, s.batch);
  Matrix u = s.batch.u_rows();
  Matrix ut = s.batch.u_tilde_rows();
  Matrix bd = matmul(p.B, p.D);
  Matrix pred = matmul_nt(ut, bd);  // rows: (BD u~_i)^T
  double acc = 0.0;
  for (std::size_t i = 0; i < u.rows(); ++i)
    for (std::size_t k = 0; k < u.cols(); ++k) {
      const double d = u(i, k) - pred(i, k);
      acc += d * d;
    }
  CHECK(lx == doctest::Approx(acc / u.rows()).epsilon(1e-10));

  // B = 0 leaves mean ||u||^2.
  p.B.fill(0.0);
  CHECK(loss_xexo(p, s.batch) ==
        doctest::Approx(mean_row_sq(u)).epsilon(1e-10));
}

TEST_CASE("loss_xexo requires the paired stream") {
  Setup s = make_setup(0.0, 0.5, /*n_xi=*/1);
  LinearLamParams p = random_params(16, 4, 0, 9);
  CHECK_THROWS_WITH_AS(loss_xexo(p, s.batch), doctest::Contains("paired"),
                       std::runtime_error);
}

TEST_CASE("loss_robust with zero head equals action energy") {
  Setup s = make_setup(0.3, 0.5);
  LinearLamParams p = random_params(16, 4, 4, 10);
  p.W.fill(0.0);
  // a ~ N(0, I_4): mean ||a||^2 ~ d_a.
  const double lr = loss_robust(p, s.batch, RobustTarget::action);
  CHECK(lr == doctest::Approx(mean_row_sq(s.batch.action_rows())));
  CHECK(std::fabs(lr - 4.0) < 0.3);
}

TEST_CASE("gradients vanish at the copy-shortcut optimum") {
  Setup s = make_setup(0.3, 0.5);
  LinearTrainConfig cfg;
  cfg.d_z = 16;
  LinearLamGrads g = grad_total(copy_shortcut(16), s.batch, cfg);
  CHECK(max_abs(g.A) < 1e-10);
  CHECK(max_abs(g.B) < 1e-10);
  CHECK(max_abs(g.C) < 1e-10);
  CHECK(max_abs(g.D) < 1e-10);
}

TEST_CASE("gradient matches finite differences over 20 random draws") {
  // Small dims keep the FD sweep cheap: d_o=12, d_z=3, 20 rows.
  LinearEnvConfig cfg;
  cfg.d_s = cfg.d_a = 3;
  cfg.d_o = 12;
  cfg.n_xi = 4;
  cfg.p_switch = 0.4;
  cfg.alpha = 0.5;
  cfg.n_traj = 5;
  cfg.traj_len = 5;

  double worst = 0.0;
  for (std::uint64_t draw = 0; draw < 20; ++draw) {
    cfg.seed = 100 + draw;
    RngStream em_rng(cfg.seed, kStreamEmissions);
    auto em = std::make_shared<EmissionSet>(build_emissions(cfg, em_rng));
    RngStream data_rng(cfg.seed, kStreamData);
    TransitionBatch batch = generate(cfg, em, data_rng);

    LinearTrainConfig tc;
    tc.d_z = 3;
    tc.lambda_xexo = 0.7;
    tc.lambda_robust = 1.3;
    tc.robust_target = draw % 2 == 0 ? RobustTarget::action : RobustTarget::q;
    const std::size_t d_y = tc.robust_target == RobustTarget::action ? 3 : 12;

    LinearLamParams p = random_params(12, 3, d_y, 200 + draw);
    LinearLamGrads g = grad_total(p, batch, tc);

    LossFn loss = [&](const std::vector<Matrix>& plist) {
      LinearLamParams q = LinearLamParams::from_list(plist);
      return loss_all(q, batch, tc.lambda_xexo, tc.lambda_robust,
                      tc.robust_target)
          .total;
    };
    auto fd = finite_diff_grad(loss, p.as_list(), 1e-5);
    worst = std::max(worst, max_rel_error(g.as_list(true), fd));
  }
  CHECK(worst <= 1e-6);
}

TEST_CASE("duplicating the batch leaves the gradient unchanged") {
  Setup s = make_setup(0.3, 0.5, 6, 20);
  LinearLamParams p = random_params(16, 4, 0, 11);
  LinearTrainConfig tc;
  tc.d_z = 4;

  std::vector<std::size_t> rows(s.batch.size());
  std::iota(rows.begin(), rows.end(), 0);
  std::vector<std::size_t> doubled = rows;
  doubled.insert(doubled.end(), rows.begin(), rows.end());

  ObsColumns c1 = make_columns(s.batch, rows, RobustTarget::none, false);
  ObsColumns c2 = make_columns(s.batch, doubled, RobustTarget::none, false);
  LinearLamGrads g1, g2;
  linear_loss_grad(p, c1, 0.0, 0.0, &g1);
  linear_loss_grad(p, c2, 0.0, 0.0, &g2);
  CHECK(max_abs_diff(g1.A, g2.A) < 1e-12);
  CHECK(max_abs_diff(g1.D, g2.D) < 1e-12);
}

TEST_CASE("train: steps 0 returns the initialization") {
  Setup s = make_setup(0.2, 0.5, 6, 50);
  LinearTrainConfig tc;
  tc.d_z = 4;
  tc.steps = 0;
  tc.seed = 21;
  TrainResult r = train(tc, s.batch);
  RngStream init_rng(tc.seed, kStreamInit);
  LinearLamParams expect = init_params(16, 4, 0, init_rng);
  CHECK(r.params.A == expect.A);
  CHECK(r.params.D == expect.D);
}

TEST_CASE("train is bit-deterministic given the seed") {
  Setup s = make_setup(0.3, 0.5, 6, 50);
  LinearTrainConfig tc;
  tc.d_z = 4;
  tc.steps = 300;
  tc.batch_size = 32;
  tc.seed = 33;
  TrainResult a = train(tc, s.batch);
  TrainResult b = train(tc, s.batch);
  CHECK(a.params.A == b.params.A);
  CHECK(a.params.B == b.params.B);
  CHECK(a.params.C == b.params.C);
  CHECK(a.params.D == b.params.D);
  CHECK(a.final_full.lam == b.final_full.lam);
}

TEST_CASE("training beats the do-nothing baseline 10x when q is capturable") {
  // Single exogenous state: the action effect lives in a d_a-dimensional
  // subspace and d_z = d_a captures it fully.
  Setup s = make_setup(0.0, 0.5, /*n_xi=*/1, /*n_traj=*/400, /*seed=*/12);
  LinearTrainConfig tc;
  tc.d_z = 4;
  tc.steps = 4000;
  tc.batch_size = 64;
  tc.lr = 3e-3;
  tc.seed = 13;
  TrainResult r = train(tc, s.batch);
  const double baseline = do_nothing_baseline(s.batch);
  CHECK(r.final_full.lam * 10.0 <= baseline);
}

TEST_CASE("shortcut optimality: d_z = d_o training reaches ~zero loss") {
  LinearEnvConfig cfg;
  cfg.d_s = cfg.d_a = 4;
  cfg.d_o = 8;
  cfg.n_xi = 2;
  cfg.p_switch = 0.3;
  cfg.alpha = 0.5;
  cfg.n_traj = 200;
  cfg.traj_len = 4;
  cfg.seed = 14;
  RngStream em_rng(cfg.seed, kStreamEmissions);
  auto em = std::make_shared<EmissionSet>(build_emissions(cfg, em_rng));
  RngStream data_rng(cfg.seed, kStreamData);
  TransitionBatch batch = generate(cfg, em, data_rng);

  // Adam holds a jitter floor proportional to lr, so anneal in stages;
  // each stage resumes the previous state.
  TrainResult r;
  bool first = true;
  std::size_t total = 0;
  for (double lr : {1e-2, 1e-3, 1e-4}) {
    LinearTrainConfig tc;
    tc.d_z = 8;  // = d_o
    tc.batch_size = 256;
    tc.seed = 15;
    tc.log_every = 0;
    tc.lr = lr;
    total += lr == 1e-2 ? 14000 : 5000;
    tc.steps = total;
    r = first ? train(tc, batch) : train(tc, batch, &r.checkpoint);
    first = false;
  }
  const double baseline = do_nothing_baseline(batch);
  CHECK(r.final_full.lam <= 1e-6 * baseline);
}

TEST_CASE("train resumes bit-exactly from a checkpoint") {
  Setup s = make_setup(0.3, 0.5, 6, 50);
  LinearTrainConfig tc;
  tc.d_z = 4;
  tc.steps = 200;
  tc.batch_size = 32;
  tc.seed = 44;
  TrainResult full = train(tc, s.batch);

  LinearTrainConfig half = tc;
  half.steps = 100;
  TrainResult first = train(half, s.batch);
  TrainResult second = train(tc, s.batch, &first.checkpoint);
  CHECK(second.params.A == full.params.A);
  CHECK(second.params.B == full.params.B);
  CHECK(second.params.C == full.params.C);
  CHECK(second.params.D == full.params.D);
}

TEST_CASE("train rejects xexo without pairs") {
  Setup s = make_setup(0.0, 0.5, 1, 30);
  LinearTrainConfig tc;
  tc.d_z = 4;
  tc.lambda_xexo = 1.0;
  tc.steps = 10;
  CHECK_THROWS_WITH_AS(train(tc, s.batch), doctest::Contains("paired"),
                       std::runtime_error);
}
