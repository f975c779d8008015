#pragma once

#include <cstdint>
#include <vector>

#include "exolam/rng.hpp"

namespace exolam {

// 4x4 world: rows 0-2 hold the controllable square, row 3 holds
// exogenous pixels redrawn as Bernoulli(0.5) * sigma at every frame.
inline constexpr int kGridSide = 4;
inline constexpr int kGridPixels = 16;
inline constexpr int kControllableCells = 12;
inline constexpr int kExoRowOffset = 12;  // flat index of row 3, col 0

enum class GridAction : std::uint8_t { left = 0, right = 1, up = 2, down = 3 };

const char* grid_action_name(GridAction a);

// Deterministic policy tracing a fixed Hamiltonian cycle over the 12
// controllable cells; the action depends only on the current cell.
GridAction snaking_policy(int row, int col);

// Cell reached from (row, col) under `a`; stays within rows 0-2.
void apply_grid_action(int row, int col, GridAction a, int* row_out,
                       int* col_out);

struct GridEnvConfig {
  double sigma = 1.0;
  std::size_t n_steps = 12000;
  std::uint64_t seed = 0;
  void validate() const;
};

// Flat transition storage; frames are 16 floats, row-major.
struct GridBatch {
  std::size_t n = 0;
  double sigma = 0.0;
  std::vector<float> obs, obs_next;              // n x 16
  std::vector<float> obs_tilde, obs_tilde_next;  // paired exogenous draws
  std::vector<std::uint8_t> action;              // GridAction per row
  std::vector<std::uint8_t> cell, cell_next;     // row*4 + col (0..11)

  const float* frame_obs(std::size_t i) const { return obs.data() + i * 16; }
  const float* frame_obs_next(std::size_t i) const {
    return obs_next.data() + i * 16;
  }
  const float* frame_obs_tilde(std::size_t i) const {
    return obs_tilde.data() + i * 16;
  }
  const float* frame_obs_tilde_next(std::size_t i) const {
    return obs_tilde_next.data() + i * 16;
  }
};

// One endless cycle starting at (0,0); the paired frames share rows 0-2
// and redraw row 3 independently at both endpoints.
GridBatch generate_grid(const GridEnvConfig& cfg, RngStream& rng);

}  // namespace exolam
