#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "exolam/env.hpp"
#include "exolam/grid_env.hpp"
#include "exolam/linear_lam.hpp"
#include "exolam/matrix.hpp"

namespace exolam {

// Binary container shared by datasets and checkpoints: magic, version,
// byte-order probe, canonical config JSON, then named little-endian arrays.
// Layout details in docs/formats.md.
struct NamedArray {
  std::string name;
  char dtype = 'd';  // 'd' f64, 'q' i64, 'f' f32, 'B' u8
  std::vector<std::uint64_t> dims;
  std::vector<unsigned char> raw;

  std::size_t count() const;
};

class Container {
 public:
  std::string config_json;

  void add_f64(const std::string& name, std::vector<std::uint64_t> dims,
               const double* data);
  void add_i64(const std::string& name, std::vector<std::uint64_t> dims,
               const std::int64_t* data);
  void add_f32(const std::string& name, std::vector<std::uint64_t> dims,
               const float* data);
  void add_u8(const std::string& name, std::vector<std::uint64_t> dims,
              const std::uint8_t* data);
  void add_matrix(const std::string& name, const Matrix& m);

  const NamedArray& get(const std::string& name) const;
  bool has(const std::string& name) const;
  Matrix matrix(const std::string& name) const;
  std::vector<std::int64_t> i64(const std::string& name) const;
  std::vector<float> f32(const std::string& name) const;
  std::vector<std::uint8_t> u8(const std::string& name) const;
  std::vector<double> f64(const std::string& name) const;

  const std::vector<NamedArray>& arrays() const { return arrays_; }

  void write(const std::string& path) const;
  static Container read(const std::string& path);

 private:
  std::vector<NamedArray> arrays_;
};

// Linear dataset <-> container.
void save_dataset(const std::string& path, const std::string& config_json,
                  const TransitionBatch& batch);
struct LoadedDataset {
  std::string config_json;
  TransitionBatch batch;
};
LoadedDataset load_dataset(const std::string& path);

// Linear checkpoint (params + Adam state + minibatch RNG + step).
void save_linear_checkpoint(const std::string& path,
                            const std::string& config_json,
                            const TrainCheckpoint& ckpt);
struct LoadedLinearCheckpoint {
  std::string config_json;
  TrainCheckpoint ckpt;
};
LoadedLinearCheckpoint load_linear_checkpoint(const std::string& path);

// Grid dataset <-> container.
void save_grid_dataset(const std::string& path, const std::string& config_json,
                       const GridBatch& batch);
struct LoadedGridDataset {
  std::string config_json;
  GridBatch batch;
};
LoadedGridDataset load_grid_dataset(const std::string& path);

// CSV inspection dumps (state-level fields; observations are renderable
// from the stored emission maps).
void write_dataset_csv(const std::string& path, const TransitionBatch& batch,
                       std::size_t max_rows);
void write_grid_csv(const std::string& path, const GridBatch& batch,
                    std::size_t max_rows);

}  // namespace exolam
