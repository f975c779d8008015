#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <array>
#include <cmath>

#include "exolam/grid_env.hpp"
#include "exolam/grid_lam.hpp"
#include "exolam/linalg.hpp"
#include "exolam/linear_lam.hpp"

using namespace exolam;

namespace {

GridModelConfig tiny_config() {
  GridModelConfig cfg;
  cfg.d_z = 2;
  cfg.codebook_size = 2;
  cfg.beta = 0.25;
  cfg.enc_channels = {2};
  cfg.mlp_hidden = 3;
  cfg.dec_channels = {2};
  cfg.lambda_xexo = 0.7;
  cfg.lambda_robust = 1.1;
  cfg.batch_size = 4;
  return cfg;
}

GridBatch tiny_batch(double sigma, std::size_t n, std::uint64_t seed) {
  GridEnvConfig env;
  env.sigma = sigma;
  env.n_steps = n;
  env.seed = seed;
  RngStream rng(seed, kStreamData);
  return generate_grid(env, rng);
}

}  // namespace

TEST_CASE("snaking policy is a Hamiltonian cycle over rows 0-2") {
  CHECK(snaking_policy(0, 0) == GridAction::right);
  CHECK_THROWS(snaking_policy(3, 0));
  CHECK_THROWS(snaking_policy(0, 4));

  int row = 0, col = 0;
  std::array<std::array<bool, 4>, 3> visited{};
  for (int step = 0; step < 12; ++step) {
    CHECK_FALSE(visited[row][col]);
    visited[row][col] = true;
    const GridAction a = snaking_policy(row, col);
    int nr, nc;
    apply_grid_action(row, col, a, &nr, &nc);
    CHECK(std::abs(nr - row) + std::abs(nc - col) == 1);  // 4-adjacent
    CHECK(nr >= 0);
    CHECK(nr <= 2);
    row = nr;
    col = nc;
  }
  CHECK(row == 0);
  CHECK(col == 0);  // closes after exactly 12 steps
  for (const auto& r : visited)
    for (bool v : r) CHECK(v);
}

TEST_CASE("grid generation basics") {
  GridBatch b = tiny_batch(0.0, 240, 5);
  for (std::size_t i = 0; i < b.n; ++i) {
    // sigma 0: exogenous row identically zero.
    for (int p = kExoRowOffset; p < 16; ++p) {
      CHECK(b.frame_obs(i)[p] == 0.f);
      CHECK(b.frame_obs_next(i)[p] == 0.f);
    }
    // Exactly one controllable pixel set.
    int ones = 0;
    for (int p = 0; p < kExoRowOffset; ++p)
      if (b.frame_obs(i)[p] == 1.f) ++ones;
    CHECK(ones == 1);
    CHECK(b.frame_obs(i)[b.cell[i]] == 1.f);
  }

  // Every action appears 3/12 of the time on the fixed cycle.
  std::array<std::size_t, 4> counts{};
  for (std::size_t i = 0; i < b.n; ++i) ++counts[b.action[i]];
  for (auto c : counts) CHECK(c == b.n / 4);
}

TEST_CASE("exogenous pixels are Bernoulli(0.5) * sigma") {
  const double sigma = 0.8;
  GridBatch b = tiny_batch(sigma, 4000, 7);
  double mean = 0.0;
  for (std::size_t i = 0; i < b.n; ++i) mean += b.frame_obs(i)[kExoRowOffset];
  mean /= static_cast<double>(b.n);
  const double se = 0.5 * sigma / std::sqrt(static_cast<double>(b.n));
  CHECK(std::fabs(mean - 0.5 * sigma) <= 3.0 * se);

  // Paired frames share rows 0-2 and redraw row 3 independently.
  std::size_t same = 0;
  for (std::size_t i = 0; i < b.n; ++i) {
    for (int p = 0; p < kExoRowOffset; ++p)
      CHECK(b.frame_obs(i)[p] == b.frame_obs_tilde(i)[p]);
    bool equal = true;
    for (int p = kExoRowOffset; p < 16; ++p)
      equal = equal && b.frame_obs(i)[p] == b.frame_obs_tilde(i)[p];
    if (equal) ++same;
  }
  // Independent draws collide on all 4 pixels 1/16 of the time.
  CHECK(std::fabs(static_cast<double>(same) / b.n - 1.0 / 16.0) < 0.03);
}

TEST_CASE("trajectory frames chain: obs' of row i is obs of row i+1") {
  GridBatch b = tiny_batch(1.0, 50, 9);
  for (std::size_t i = 0; i + 1 < b.n; ++i)
    for (int p = 0; p < 16; ++p)
      CHECK(b.frame_obs_next(i)[p] == b.frame_obs(i + 1)[p]);
}

TEST_CASE("encode: nearest code matches a brute-force scan") {
  GridModelConfig cfg = tiny_config();
  cfg.codebook_size = 5;
  RngStream rng(3, kStreamInit);
  auto params = grid_init_params(cfg, rng);
  GridBatch b = tiny_batch(1.0, 8, 11);

  for (std::size_t i = 0; i < b.n; ++i) {
    GridEncodeResult r =
        grid_encode(cfg, params, b.frame_obs(i), b.frame_obs_next(i));
    const Matrix& cb = params[cfg.enc_channels.size() * 2 + 4];
    std::size_t best = 0;
    double best_d = 1e300;
    for (std::size_t k = 0; k < cfg.codebook_size; ++k) {
      double d = 0.0;
      for (std::size_t j = 0; j < cfg.d_z; ++j) {
        const double t = static_cast<double>(r.z_pre[j]) - cb(k, j);
        d += t * t;
      }
      if (d < best_d) {
        best_d = d;
        best = k;
      }
    }
    CHECK(r.code == best);
    for (std::size_t j = 0; j < cfg.d_z; ++j)
      CHECK(r.z_q[j] == doctest::Approx(cb(r.code, j)));
  }
}

TEST_CASE("encode: single-code codebook is constant; encoding deterministic") {
  GridModelConfig cfg = tiny_config();
  cfg.codebook_size = 1;
  RngStream rng(4, kStreamInit);
  auto params = grid_init_params(cfg, rng);
  GridBatch b = tiny_batch(1.0, 6, 13);
  GridEncodeResult first =
      grid_encode(cfg, params, b.frame_obs(0), b.frame_obs_next(0));
  for (std::size_t i = 1; i < b.n; ++i) {
    GridEncodeResult r =
        grid_encode(cfg, params, b.frame_obs(i), b.frame_obs_next(i));
    CHECK(r.code == 0);
    CHECK(r.z_q == first.z_q);
  }
  GridEncodeResult again =
      grid_encode(cfg, params, b.frame_obs(0), b.frame_obs_next(0));
  CHECK(again.z_pre == first.z_pre);
  CHECK(again.code == first.code);
}

TEST_CASE("decode: zero weights give the output bias everywhere") {
  GridModelConfig cfg = tiny_config();
  RngStream rng(5, kStreamInit);
  auto params = grid_init_params(cfg, rng);
  for (auto& m : params) m.fill(0.0);
  params[params.size() - 2](0, 0) = 0.375;  // dec_out bias
  GridBatch b = tiny_batch(1.0, 3, 15);
  std::vector<float> z(cfg.d_z, 0.7f);
  auto pred = grid_decode(cfg, params, b.frame_obs(0), z.data());
  CHECK(pred.size() == 16);
  for (float v : pred) CHECK(v == doctest::Approx(0.375f));
}

TEST_CASE("conv forward matches a straight-line oracle") {
  const std::size_t c_in = 3, c_out = 2, B = 2;
  Tape tape;
  const int in = tape.alloc(B * 16 * c_in);
  const int w = tape.alloc(c_out * 9 * c_in, true);
  const int bias = tape.alloc(c_out, true);
  const int out = tape.alloc(B * 16 * c_out);
  tape.emit<Conv3x3>(in, w, bias, out, B, c_in, c_out);

  RngStream rng(6, 0);
  for (std::size_t i = 0; i < B * 16 * c_in; ++i)
    tape.val(in)[i] = static_cast<float>(rng.next_gaussian());
  for (std::size_t i = 0; i < c_out * 9 * c_in; ++i)
    tape.val(w)[i] = static_cast<float>(0.3 * rng.next_gaussian());
  tape.val(bias)[0] = 0.1f;
  tape.val(bias)[1] = -0.2f;
  tape.forward();

  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t co = 0; co < c_out; ++co)
      for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x) {
          double acc = tape.val(bias)[co];
          for (std::size_t ci = 0; ci < c_in; ++ci)
            for (int ky = 0; ky < 3; ++ky)
              for (int kx = 0; kx < 3; ++kx) {
                const int ny = y + ky - 1, nx = x + kx - 1;
                if (ny < 0 || ny > 3 || nx < 0 || nx > 3) continue;
                // weight layout: (co, kernel position, ci)
                const float wv =
                    tape.val(w)[(co * 9 + (ky * 3 + kx)) * c_in + ci];
                const float iv =
                    tape.val(in)[(b * 16 + (ny * 4 + nx)) * c_in + ci];
                acc += static_cast<double>(wv) * iv;
              }
          const float got = tape.val(out)[(b * 16 + (y * 4 + x)) * c_out + co];
          CHECK(got == doctest::Approx(acc).epsilon(1e-5));
        }
}

TEST_CASE("straight-through contract: z_q adjoint reaches z_pre unchanged") {
  const std::size_t B = 3, d_z = 4, K = 2;
  Tape tape;
  const int z_pre = tape.alloc(B * d_z);
  const int cb = tape.alloc(K * d_z, true);
  const int z_st = tape.alloc(B * d_z);
  // No VQ loss terms: isolate the straight-through path.
  tape.emit<VectorQuantize>(z_pre, cb, z_st, B, d_z, K, 0.25, false);
  auto* loss = tape.emit<MseLoss>(z_st, B * d_z, 1.0);

  RngStream rng(8, 0);
  for (std::size_t i = 0; i < B * d_z; ++i) {
    tape.val(z_pre)[i] = static_cast<float>(rng.next_gaussian());
    loss->target[i] = static_cast<float>(rng.next_gaussian());
  }
  for (std::size_t i = 0; i < K * d_z; ++i)
    tape.val(cb)[i] = static_cast<float>(rng.next_gaussian());

  tape.forward();
  tape.backward();
  for (std::size_t i = 0; i < B * d_z; ++i)
    CHECK(tape.grad(z_pre)[i] == tape.grad(z_st)[i]);
}

TEST_CASE("tape gradients match finite differences on a truncated model") {
  // Straight-through quantization is not the loss gradient by design, so
  // the FD check runs on a differentiable truncated network: conv, relu,
  // dense, latent passthrough, decoder assembly, mse and robust heads.
  // Relu kinks break central differences, so biases are lifted and the
  // pre-activation margins are asserted to exceed the FD step.
  const std::size_t B = 4, d_z = 2;
  const double h = 5e-3;
  GridBatch data = tiny_batch(1.0, 16, 17);

  Tape tape;
  const int in = tape.alloc(B * 16 * 2);
  const int frame = tape.alloc(B * 16);
  const int c1w = tape.alloc(2 * 9 * 2, true), c1b = tape.alloc(2, true);
  const int d1w = tape.alloc(4 * 32, true), d1b = tape.alloc(4, true);
  const int d2w = tape.alloc(d_z * 4, true), d2b = tape.alloc(d_z, true);
  const int c2w = tape.alloc(2 * 9 * (1 + d_z), true),
            c2b = tape.alloc(2, true);
  const int c3w = tape.alloc(1 * 9 * 2, true), c3b = tape.alloc(1, true);
  const int rw = tape.alloc(4 * d_z, true);

  const int pre1 = tape.alloc(B * 16 * 2);
  tape.emit<Conv3x3>(in, c1w, c1b, pre1, B, 2, 2);
  const int act1 = tape.alloc(B * 16 * 2);
  tape.emit<Relu>(pre1, act1);
  const int pre2 = tape.alloc(B * 4);
  tape.emit<Dense>(act1, d1w, d1b, pre2, B, 32, 4);
  const int act2 = tape.alloc(B * 4);
  tape.emit<Relu>(pre2, act2);
  const int z = tape.alloc(B * d_z);
  tape.emit<Dense>(act2, d2w, d2b, z, B, 4, d_z);
  const int z_st = tape.alloc(B * d_z);
  tape.emit<Identity>(z, z_st);
  const int assembled = tape.alloc(B * 16 * (1 + d_z));
  tape.emit<AssembleDecoderInput>(frame, z_st, assembled, B, d_z);
  const int pre3 = tape.alloc(B * 16 * 2);
  tape.emit<Conv3x3>(assembled, c2w, c2b, pre3, B, 1 + d_z, 2);
  const int act3 = tape.alloc(B * 16 * 2);
  tape.emit<Relu>(pre3, act3);
  const int pred = tape.alloc(B * 16);
  tape.emit<Conv3x3>(act3, c3w, c3b, pred, B, 2, 1);
  auto* mse = tape.emit<MseLoss>(pred, B * 16, 1.0);
  auto* robust = tape.emit<RobustHead>(z, rw, B, d_z, 4, 1.3);

  // ~260 parameters; values random, relu-feeding biases lifted.
  const std::vector<int> pids{c1w, c1b, d1w, d1b, d2w, d2b,
                              c2w, c2b, c3w, c3b, rw};
  RngStream prng(23, 0);
  std::vector<Matrix> params;
  for (int id : pids) {
    Matrix m(1, tape.slot_size(id));
    for (std::size_t i = 0; i < m.size(); ++i)
      m.data()[i] = 0.35 * prng.next_gaussian();
    params.push_back(std::move(m));
  }
  params[1].fill(1.5);  // c1b
  params[3].fill(1.5);  // d1b
  params[7].fill(1.5);  // c2b

  for (std::size_t bi = 0; bi < B; ++bi) {
    const std::size_t r = 2 * bi + 1;
    for (int p = 0; p < 16; ++p) {
      tape.val(in)[(bi * 16 + p) * 2 + 0] = data.frame_obs(r)[p];
      tape.val(in)[(bi * 16 + p) * 2 + 1] = data.frame_obs_next(r)[p];
      tape.val(frame)[bi * 16 + p] = data.frame_obs(r)[p];
      mse->target[bi * 16 + p] = data.frame_obs_next(r)[p];
    }
    robust->mask[bi] = bi != 2;
    robust->onehot[bi * 4 + (bi % 4)] = 1.f;
  }

  auto loss_of = [&](const std::vector<Matrix>& p) {
    for (std::size_t t = 0; t < pids.size(); ++t)
      for (std::size_t i = 0; i < p[t].size(); ++i)
        tape.val(pids[t])[i] = static_cast<float>(p[t].data()[i]);
    tape.forward();
    return mse->value + 1.3 * robust->value;
  };

  loss_of(params);
  // Kink margins: every relu input must sit well clear of zero relative
  // to the FD step; otherwise the comparison below is not meaningful.
  double margin = 1e300;
  for (int slot : {pre1, pre2, pre3})
    for (std::size_t i = 0; i < tape.slot_size(slot); ++i)
      margin = std::min(margin, std::fabs(double(tape.val(slot)[i])));
  REQUIRE(margin > 10.0 * h);

  tape.backward();
  std::vector<Matrix> analytic;
  for (int id : pids) {
    Matrix g(1, tape.slot_size(id));
    for (std::size_t i = 0; i < g.size(); ++i) g.data()[i] = tape.grad(id)[i];
    analytic.push_back(std::move(g));
  }

  LossFn fd_loss = [&](const std::vector<Matrix>& p) { return loss_of(p); };
  std::vector<Matrix> fd = finite_diff_grad(fd_loss, params, h);
  CHECK(max_rel_error(analytic, fd, 1e-4) <= 1e-3);
}

TEST_CASE("vq gradient rules match the closed forms") {
  const std::size_t B = 4, d_z = 3, K = 2;
  const double beta = 0.25;
  Tape tape;
  const int z_pre = tape.alloc(B * d_z);
  const int cb = tape.alloc(K * d_z, true);
  const int z_st = tape.alloc(B * d_z);
  auto* vq = tape.emit<VectorQuantize>(z_pre, cb, z_st, B, d_z, K, beta, true);
  auto* loss = tape.emit<MseLoss>(z_st, B * d_z, 1.0);

  RngStream rng(31, 0);
  for (std::size_t i = 0; i < B * d_z; ++i) {
    tape.val(z_pre)[i] = static_cast<float>(rng.next_gaussian());
    loss->target[i] = static_cast<float>(rng.next_gaussian());
  }
  for (std::size_t i = 0; i < K * d_z; ++i)
    tape.val(cb)[i] = static_cast<float>(rng.next_gaussian());

  tape.forward();
  tape.backward();

  // Expected: dz_pre = dz_st + 2 beta / B (z - e_k);
  //           dcb[k] = -2/B sum_{assigned} (z - e_k).
  std::vector<float> dcb_expect(K * d_z, 0.f);
  for (std::size_t b = 0; b < B; ++b) {
    const std::uint32_t k = vq->indices[b];
    for (std::size_t j = 0; j < d_z; ++j) {
      const float diff =
          tape.val(z_pre)[b * d_z + j] - tape.val(cb)[k * d_z + j];
      const float expect_zpre =
          tape.grad(z_st)[b * d_z + j] +
          static_cast<float>(beta) * 2.f / B * diff;
      CHECK(tape.grad(z_pre)[b * d_z + j] ==
            doctest::Approx(expect_zpre).epsilon(1e-6));
      dcb_expect[k * d_z + j] += -2.f / B * diff;
    }
  }
  for (std::size_t i = 0; i < K * d_z; ++i)
    CHECK(tape.grad(cb)[i] == doctest::Approx(dcb_expect[i]).epsilon(1e-6));

  // Loss values: both VQ terms equal the assignment distance here.
  double dist = 0.0;
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t j = 0; j < d_z; ++j) {
      const double d = tape.val(z_pre)[b * d_z + j] -
                       tape.val(cb)[vq->indices[b] * d_z + j];
      dist += d * d;
    }
  dist /= B;
  CHECK(vq->codebook_loss == doctest::Approx(dist).epsilon(1e-6));
  CHECK(vq->vq_loss() == doctest::Approx((1.0 + beta) * dist).epsilon(1e-6));
}

TEST_CASE("grid_losses: robust needs labels; values finite") {
  GridModelConfig cfg = tiny_config();
  cfg.lambda_xexo = 1.0;
  cfg.lambda_robust = 1.0;
  RngStream rng(9, kStreamInit);
  auto params = grid_init_params(cfg, rng);
  GridBatch data = tiny_batch(0.5, 64, 19);

  std::vector<std::uint8_t> none(data.n, 0);
  CHECK_THROWS_WITH_AS(grid_losses(cfg, params, data, &none),
                       doctest::Contains("zero rows"), std::runtime_error);

  std::vector<std::uint8_t> mask(data.n, 1);
  GridLossBreakdown l = grid_losses(cfg, params, data, &mask);
  CHECK(l.recon > 0.0);
  CHECK(l.vq > 0.0);
  CHECK(std::isfinite(l.total(cfg)));
}

TEST_CASE("train_grid: steps 0 returns the initialization") {
  GridModelConfig cfg = tiny_config();
  cfg.lambda_xexo = 0.0;
  cfg.lambda_robust = 0.0;
  cfg.steps = 0;
  cfg.seed = 23;
  GridBatch data = tiny_batch(0.5, 32, 21);
  GridTrainResult r = train_grid(cfg, data);
  RngStream rng(cfg.seed, kStreamInit);
  auto expect = grid_init_params(cfg, rng);
  for (std::size_t i = 0; i < expect.size(); ++i)
    CHECK(r.params[i] == expect[i]);
}

TEST_CASE("train_grid is deterministic and reduces the loss") {
  GridModelConfig cfg = tiny_config();
  cfg.enc_channels = {8};
  cfg.dec_channels = {8};
  cfg.mlp_hidden = 16;
  cfg.d_z = 4;
  cfg.codebook_size = 4;
  cfg.lambda_xexo = 0.0;
  cfg.lambda_robust = 0.0;
  cfg.steps = 400;
  cfg.batch_size = 32;
  cfg.lr = 3e-3;
  cfg.seed = 29;
  GridBatch data = tiny_batch(0.0, 480, 23);

  GridTrainResult a = train_grid(cfg, data);
  GridTrainResult b = train_grid(cfg, data);
  for (std::size_t i = 0; i < a.params.size(); ++i)
    CHECK(a.params[i] == b.params[i]);

  RngStream rng(cfg.seed, kStreamInit);
  auto init = grid_init_params(cfg, rng);
  GridLossBreakdown l0 = grid_losses(cfg, init, data, nullptr);
  CHECK(a.final_losses.recon < 0.5 * l0.recon);
}
