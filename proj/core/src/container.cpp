#include "exolam/container.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace exolam {

namespace {

constexpr char kMagic[8] = {'E', 'X', 'O', 'L', 'M', 'B', 'I', 'N'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint64_t kOrderProbe = 0x0102030405060708ull;

std::size_t dtype_size(char d) {
  switch (d) {
    case 'd': return 8;
    case 'q': return 8;
    case 'f': return 4;
    case 'B': return 1;
  }
  throw std::runtime_error(std::string("container: unknown dtype '") + d + "'");
}

template <typename T>
void put(std::string& out, const T& v) {
  const char* p = reinterpret_cast<const char*>(&v);
  out.append(p, sizeof(T));
}

template <typename T>
T take(const std::string& buf, std::size_t* off) {
  if (*off + sizeof(T) > buf.size())
    throw std::runtime_error("container: truncated file");
  T v;
  std::memcpy(&v, buf.data() + *off, sizeof(T));
  *off += sizeof(T);
  return v;
}

}  // namespace

std::size_t NamedArray::count() const {
  std::size_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

void Container::add_f64(const std::string& name,
                        std::vector<std::uint64_t> dims, const double* data) {
  NamedArray a;
  a.name = name;
  a.dtype = 'd';
  a.dims = std::move(dims);
  a.raw.resize(a.count() * 8);
  std::memcpy(a.raw.data(), data, a.raw.size());
  arrays_.push_back(std::move(a));
}

void Container::add_i64(const std::string& name,
                        std::vector<std::uint64_t> dims,
                        const std::int64_t* data) {
  NamedArray a;
  a.name = name;
  a.dtype = 'q';
  a.dims = std::move(dims);
  a.raw.resize(a.count() * 8);
  std::memcpy(a.raw.data(), data, a.raw.size());
  arrays_.push_back(std::move(a));
}

void Container::add_f32(const std::string& name,
                        std::vector<std::uint64_t> dims, const float* data) {
  NamedArray a;
  a.name = name;
  a.dtype = 'f';
  a.dims = std::move(dims);
  a.raw.resize(a.count() * 4);
  std::memcpy(a.raw.data(), data, a.raw.size());
  arrays_.push_back(std::move(a));
}

void Container::add_u8(const std::string& name, std::vector<std::uint64_t> dims,
                       const std::uint8_t* data) {
  NamedArray a;
  a.name = name;
  a.dtype = 'B';
  a.dims = std::move(dims);
  a.raw.resize(a.count());
  std::memcpy(a.raw.data(), data, a.raw.size());
  arrays_.push_back(std::move(a));
}

void Container::add_matrix(const std::string& name, const Matrix& m) {
  add_f64(name, {m.rows(), m.cols()}, m.data());
}

bool Container::has(const std::string& name) const {
  for (const auto& a : arrays_)
    if (a.name == name) return true;
  return false;
}

const NamedArray& Container::get(const std::string& name) const {
  for (const auto& a : arrays_)
    if (a.name == name) return a;
  throw std::runtime_error("container: missing array '" + name + "'");
}

Matrix Container::matrix(const std::string& name) const {
  const NamedArray& a = get(name);
  if (a.dtype != 'd' || a.dims.size() != 2)
    throw std::runtime_error("container: '" + name + "' is not an f64 matrix");
  Matrix m(a.dims[0], a.dims[1]);
  std::memcpy(m.data(), a.raw.data(), a.raw.size());
  return m;
}

std::vector<std::int64_t> Container::i64(const std::string& name) const {
  const NamedArray& a = get(name);
  if (a.dtype != 'q')
    throw std::runtime_error("container: '" + name + "' is not i64");
  std::vector<std::int64_t> v(a.count());
  std::memcpy(v.data(), a.raw.data(), a.raw.size());
  return v;
}

std::vector<float> Container::f32(const std::string& name) const {
  const NamedArray& a = get(name);
  if (a.dtype != 'f')
    throw std::runtime_error("container: '" + name + "' is not f32");
  std::vector<float> v(a.count());
  std::memcpy(v.data(), a.raw.data(), a.raw.size());
  return v;
}

std::vector<std::uint8_t> Container::u8(const std::string& name) const {
  const NamedArray& a = get(name);
  if (a.dtype != 'B')
    throw std::runtime_error("container: '" + name + "' is not u8");
  return std::vector<std::uint8_t>(a.raw.begin(), a.raw.end());
}

std::vector<double> Container::f64(const std::string& name) const {
  const NamedArray& a = get(name);
  if (a.dtype != 'd')
    throw std::runtime_error("container: '" + name + "' is not f64");
  std::vector<double> v(a.count());
  std::memcpy(v.data(), a.raw.data(), a.raw.size());
  return v;
}

void Container::write(const std::string& path) const {
  std::string buf;
  buf.append(kMagic, sizeof(kMagic));
  put(buf, kVersion);
  put(buf, kOrderProbe);
  put(buf, static_cast<std::uint64_t>(config_json.size()));
  buf.append(config_json);
  put(buf, static_cast<std::uint64_t>(arrays_.size()));
  for (const auto& a : arrays_) {
    put(buf, static_cast<std::uint64_t>(a.name.size()));
    buf.append(a.name);
    buf.push_back(a.dtype);
    put(buf, static_cast<std::uint8_t>(a.dims.size()));
    for (auto d : a.dims) put(buf, d);
    buf.append(reinterpret_cast<const char*>(a.raw.data()), a.raw.size());
  }
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("container: cannot open " + path);
  os.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!os) throw std::runtime_error("container: short write to " + path);
}

Container Container::read(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("container: cannot open " + path);
  std::string buf((std::istreambuf_iterator<char>(is)),
                  std::istreambuf_iterator<char>());
  std::size_t off = 0;
  if (buf.size() < 8 || std::memcmp(buf.data(), kMagic, 8) != 0)
    throw std::runtime_error("container: bad magic in " + path);
  off = 8;
  const auto version = take<std::uint32_t>(buf, &off);
  if (version != kVersion)
    throw std::runtime_error("container: unsupported version " +
                             std::to_string(version));
  const auto probe = take<std::uint64_t>(buf, &off);
  if (probe != kOrderProbe)
    throw std::runtime_error("container: byte-order mismatch in " + path);

  Container c;
  const auto cfg_len = take<std::uint64_t>(buf, &off);
  if (off + cfg_len > buf.size())
    throw std::runtime_error("container: truncated config JSON");
  c.config_json = buf.substr(off, cfg_len);
  off += cfg_len;

  const auto n_arrays = take<std::uint64_t>(buf, &off);
  for (std::uint64_t i = 0; i < n_arrays; ++i) {
    NamedArray a;
    const auto name_len = take<std::uint64_t>(buf, &off);
    a.name = buf.substr(off, name_len);
    off += name_len;
    a.dtype = take<char>(buf, &off);
    const auto ndim = take<std::uint8_t>(buf, &off);
    for (std::uint8_t d = 0; d < ndim; ++d)
      a.dims.push_back(take<std::uint64_t>(buf, &off));
    const std::size_t bytes = a.count() * dtype_size(a.dtype);
    if (off + bytes > buf.size())
      throw std::runtime_error("container: truncated payload for " + a.name);
    a.raw.assign(buf.begin() + static_cast<std::ptrdiff_t>(off),
                 buf.begin() + static_cast<std::ptrdiff_t>(off + bytes));
    off += bytes;
    c.arrays_.push_back(std::move(a));
  }
  return c;
}

void save_dataset(const std::string& path, const std::string& config_json,
                  const TransitionBatch& batch) {
  Container c;
  c.config_json = config_json;
  const std::uint64_t n = batch.size();
  c.add_f64("s", {n, batch.d_s()}, batch.s(0));
  c.add_f64("a", {n, batch.d_a()}, batch.a(0));
  c.add_f64("s_next", {n, batch.d_s()}, batch.s_next(0));
  c.add_i64("xi", {n}, batch.xi.data());
  c.add_i64("xi_next", {n}, batch.xi_next.data());
  c.add_i64("xi_tilde", {n}, batch.xi_tilde.data());
  c.add_i64("xi_tilde_next", {n}, batch.xi_tilde_next.data());
  const EmissionSet& em = batch.emissions();
  c.add_matrix("H0", em.H0);
  std::vector<double> rflat;
  rflat.reserve(em.R.size() * em.H0.size());
  for (const auto& r : em.R)
    rflat.insert(rflat.end(), r.data(), r.data() + r.size());
  c.add_f64("R", {em.R.size(), em.H0.rows(), em.H0.cols()}, rflat.data());
  const double alpha = em.alpha;
  c.add_f64("alpha", {1}, &alpha);
  c.write(path);
}

LoadedDataset load_dataset(const std::string& path) {
  Container c = Container::read(path);
  const auto& s = c.get("s");
  const std::size_t n = s.dims[0], d_s = s.dims[1];
  const auto& a = c.get("a");
  const std::size_t d_a = a.dims[1];
  const auto& h0 = c.get("H0");
  const std::size_t d_o = h0.dims[0];

  auto em = std::make_shared<EmissionSet>();
  em->H0 = c.matrix("H0");
  em->alpha = c.f64("alpha")[0];
  const auto& r = c.get("R");
  const std::size_t n_xi = r.dims[0];
  std::vector<double> rflat = c.f64("R");
  for (std::size_t i = 0; i < n_xi; ++i) {
    Matrix ri(d_o, d_s,
              std::vector<double>(rflat.begin() + i * d_o * d_s,
                                  rflat.begin() + (i + 1) * d_o * d_s));
    em->R.push_back(std::move(ri));
  }
  em->finalize();

  LoadedDataset out{c.config_json,
                    TransitionBatch(n, d_s, d_a, d_o, em)};
  TransitionBatch& b = out.batch;
  std::memcpy(b.s(0), c.get("s").raw.data(), n * d_s * 8);
  std::memcpy(b.a(0), c.get("a").raw.data(), n * d_a * 8);
  std::memcpy(b.s_next(0), c.get("s_next").raw.data(), n * d_s * 8);
  b.xi = c.i64("xi");
  b.xi_next = c.i64("xi_next");
  b.xi_tilde = c.i64("xi_tilde");
  b.xi_tilde_next = c.i64("xi_tilde_next");
  b.set_has_pairs(n_xi > 1);
  return out;
}

void save_linear_checkpoint(const std::string& path,
                            const std::string& config_json,
                            const TrainCheckpoint& ckpt) {
  Container c;
  c.config_json = config_json;
  c.add_matrix("A", ckpt.params.A);
  c.add_matrix("B", ckpt.params.B);
  c.add_matrix("C", ckpt.params.C);
  c.add_matrix("D", ckpt.params.D);
  if (ckpt.params.has_w()) c.add_matrix("W", ckpt.params.W);
  for (std::size_t i = 0; i < ckpt.adam_m.size(); ++i) {
    c.add_matrix("adam_m" + std::to_string(i), ckpt.adam_m[i]);
    c.add_matrix("adam_v" + std::to_string(i), ckpt.adam_v[i]);
  }
  const std::int64_t meta_i[2] = {ckpt.adam_t,
                                  static_cast<std::int64_t>(ckpt.step)};
  c.add_i64("meta_i", {2}, meta_i);
  const std::int64_t rng_i[2] = {
      static_cast<std::int64_t>(ckpt.minibatch_rng.counter),
      ckpt.minibatch_rng.has_cached ? 1 : 0};
  c.add_i64("rng_i", {2}, rng_i);
  c.add_f64("rng_d", {1}, &ckpt.minibatch_rng.cached_gauss);
  c.write(path);
}

LoadedLinearCheckpoint load_linear_checkpoint(const std::string& path) {
  Container c = Container::read(path);
  LoadedLinearCheckpoint out;
  out.config_json = c.config_json;
  TrainCheckpoint& k = out.ckpt;
  k.params.A = c.matrix("A");
  k.params.B = c.matrix("B");
  k.params.C = c.matrix("C");
  k.params.D = c.matrix("D");
  if (c.has("W")) k.params.W = c.matrix("W");
  for (std::size_t i = 0; c.has("adam_m" + std::to_string(i)); ++i) {
    k.adam_m.push_back(c.matrix("adam_m" + std::to_string(i)));
    k.adam_v.push_back(c.matrix("adam_v" + std::to_string(i)));
  }
  const auto meta = c.i64("meta_i");
  k.adam_t = meta[0];
  k.step = static_cast<std::size_t>(meta[1]);
  const auto rng_i = c.i64("rng_i");
  k.minibatch_rng.counter = static_cast<std::uint64_t>(rng_i[0]);
  k.minibatch_rng.has_cached = rng_i[1] != 0;
  k.minibatch_rng.cached_gauss = c.f64("rng_d")[0];
  return out;
}

void save_grid_dataset(const std::string& path, const std::string& config_json,
                       const GridBatch& batch) {
  Container c;
  c.config_json = config_json;
  const std::uint64_t n = batch.n;
  c.add_f32("obs", {n, 16}, batch.obs.data());
  c.add_f32("obs_next", {n, 16}, batch.obs_next.data());
  c.add_f32("obs_tilde", {n, 16}, batch.obs_tilde.data());
  c.add_f32("obs_tilde_next", {n, 16}, batch.obs_tilde_next.data());
  c.add_u8("action", {n}, batch.action.data());
  c.add_u8("cell", {n}, batch.cell.data());
  c.add_u8("cell_next", {n}, batch.cell_next.data());
  c.add_f64("sigma", {1}, &batch.sigma);
  c.write(path);
}

LoadedGridDataset load_grid_dataset(const std::string& path) {
  Container c = Container::read(path);
  LoadedGridDataset out;
  out.config_json = c.config_json;
  GridBatch& b = out.batch;
  b.obs = c.f32("obs");
  b.obs_next = c.f32("obs_next");
  b.obs_tilde = c.f32("obs_tilde");
  b.obs_tilde_next = c.f32("obs_tilde_next");
  b.action = c.u8("action");
  b.cell = c.u8("cell");
  b.cell_next = c.u8("cell_next");
  b.sigma = c.f64("sigma")[0];
  b.n = b.action.size();
  return out;
}

namespace {

void csv_num(std::string& line, double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  line += buf;
}

}  // namespace

void write_dataset_csv(const std::string& path, const TransitionBatch& batch,
                       std::size_t max_rows) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("csv: cannot open " + path);
  std::string header = "row";
  for (std::size_t k = 0; k < batch.d_s(); ++k)
    header += ",s" + std::to_string(k);
  for (std::size_t k = 0; k < batch.d_a(); ++k)
    header += ",a" + std::to_string(k);
  for (std::size_t k = 0; k < batch.d_s(); ++k)
    header += ",s_next" + std::to_string(k);
  header += ",xi,xi_next,xi_tilde,xi_tilde_next\n";
  os << header;
  const std::size_t n = std::min(batch.size(), max_rows);
  for (std::size_t i = 0; i < n; ++i) {
    std::string line = std::to_string(i);
    for (std::size_t k = 0; k < batch.d_s(); ++k) {
      line += ',';
      csv_num(line, batch.s(i)[k]);
    }
    for (std::size_t k = 0; k < batch.d_a(); ++k) {
      line += ',';
      csv_num(line, batch.a(i)[k]);
    }
    for (std::size_t k = 0; k < batch.d_s(); ++k) {
      line += ',';
      csv_num(line, batch.s_next(i)[k]);
    }
    line += ',' + std::to_string(batch.xi[i]);
    line += ',' + std::to_string(batch.xi_next[i]);
    line += ',' + std::to_string(batch.xi_tilde[i]);
    line += ',' + std::to_string(batch.xi_tilde_next[i]);
    line += '\n';
    os << line;
  }
}

void write_grid_csv(const std::string& path, const GridBatch& batch,
                    std::size_t max_rows) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("csv: cannot open " + path);
  os << "row,action,cell,cell_next";
  for (int p = 0; p < 16; ++p) os << ",obs" << p;
  for (int p = 0; p < 16; ++p) os << ",obs_next" << p;
  os << "\n";
  const std::size_t n = std::min(batch.n, max_rows);
  for (std::size_t i = 0; i < n; ++i) {
    std::string line = std::to_string(i);
    line += ',';
    line += grid_action_name(static_cast<GridAction>(batch.action[i]));
    line += ',' + std::to_string(int(batch.cell[i]));
    line += ',' + std::to_string(int(batch.cell_next[i]));
    for (int p = 0; p < 16; ++p) {
      line += ',';
      csv_num(line, batch.frame_obs(i)[p]);
    }
    for (int p = 0; p < 16; ++p) {
      line += ',';
      csv_num(line, batch.frame_obs_next(i)[p]);
    }
    line += '\n';
    os << line;
  }
}

}  // namespace exolam
