#include "exolam/grid_env.hpp"

#include <stdexcept>
#include <string>

namespace exolam {

const char* grid_action_name(GridAction a) {
  switch (a) {
    case GridAction::left: return "left";
    case GridAction::right: return "right";
    case GridAction::up: return "up";
    case GridAction::down: return "down";
  }
  return "?";
}

GridAction snaking_policy(int row, int col) {
  if (row < 0 || row > 2 || col < 0 || col > 3)
    throw std::invalid_argument("snaking_policy: cell (" +
                                std::to_string(row) + "," +
                                std::to_string(col) +
                                ") outside the controllable region");
  // Fixed Hamiltonian cycle over the 12 controllable cells.
  static constexpr GridAction table[3][4] = {
      {GridAction::right, GridAction::right, GridAction::right,
       GridAction::down},
      {GridAction::up, GridAction::down, GridAction::left, GridAction::down},
      {GridAction::up, GridAction::left, GridAction::up, GridAction::left},
  };
  return table[row][col];
}

void apply_grid_action(int row, int col, GridAction a, int* row_out,
                       int* col_out) {
  int r = row, c = col;
  switch (a) {
    case GridAction::left: c -= 1; break;
    case GridAction::right: c += 1; break;
    case GridAction::up: r -= 1; break;
    case GridAction::down: r += 1; break;
  }
  if (r < 0 || r > 2 || c < 0 || c > 3)
    throw std::runtime_error("apply_grid_action: left the controllable region");
  *row_out = r;
  *col_out = c;
}

void GridEnvConfig::validate() const {
  if (sigma < 0.0) throw std::invalid_argument("GridEnvConfig: sigma < 0");
  if (n_steps == 0) throw std::invalid_argument("GridEnvConfig: n_steps == 0");
}

namespace {

void write_frame(float* f, int cell, const float* exo_row) {
  for (int i = 0; i < kGridPixels; ++i) f[i] = 0.f;
  f[cell] = 1.f;
  for (int i = 0; i < 4; ++i) f[kExoRowOffset + i] = exo_row[i];
}

void draw_exo(float* row4, double sigma, RngStream& rng) {
  for (int i = 0; i < 4; ++i)
    row4[i] = rng.next_unit() < 0.5 ? static_cast<float>(sigma) : 0.f;
}

}  // namespace

GridBatch generate_grid(const GridEnvConfig& cfg, RngStream& rng) {
  cfg.validate();
  GridBatch b;
  b.n = cfg.n_steps;
  b.sigma = cfg.sigma;
  b.obs.resize(b.n * 16);
  b.obs_next.resize(b.n * 16);
  b.obs_tilde.resize(b.n * 16);
  b.obs_tilde_next.resize(b.n * 16);
  b.action.resize(b.n);
  b.cell.resize(b.n);
  b.cell_next.resize(b.n);

  int row = 0, col = 0;
  float exo_main[4], exo_pair[4];
  draw_exo(exo_main, cfg.sigma, rng);
  draw_exo(exo_pair, cfg.sigma, rng);

  for (std::size_t t = 0; t < cfg.n_steps; ++t) {
    const GridAction a = snaking_policy(row, col);
    int nrow, ncol;
    apply_grid_action(row, col, a, &nrow, &ncol);

    float exo_main_next[4], exo_pair_next[4];
    draw_exo(exo_main_next, cfg.sigma, rng);
    draw_exo(exo_pair_next, cfg.sigma, rng);

    const int c0 = row * 4 + col;
    const int c1 = nrow * 4 + ncol;
    write_frame(b.obs.data() + t * 16, c0, exo_main);
    write_frame(b.obs_next.data() + t * 16, c1, exo_main_next);
    write_frame(b.obs_tilde.data() + t * 16, c0, exo_pair);
    write_frame(b.obs_tilde_next.data() + t * 16, c1, exo_pair_next);
    b.action[t] = static_cast<std::uint8_t>(a);
    b.cell[t] = static_cast<std::uint8_t>(c0);
    b.cell_next[t] = static_cast<std::uint8_t>(c1);

    row = nrow;
    col = ncol;
    for (int i = 0; i < 4; ++i) {
      exo_main[i] = exo_main_next[i];
      exo_pair[i] = exo_pair_next[i];
    }
  }
  return b;
}

}  // namespace exolam
