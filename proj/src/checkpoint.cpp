#include "vpflow/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace vpflow {

namespace {

constexpr char kMagic[8] = {'V', 'P', 'F', 'C', 'K', 'P', 'T', '1'};

void put_u32(std::ostream& o, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v),
                        static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 24)};
  o.write(reinterpret_cast<char*>(b), 4);
}

void put_u64(std::ostream& o, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  o.write(reinterpret_cast<char*>(b), 8);
}

void put_f64(std::ostream& o, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  put_u64(o, bits);
}

void put_str(std::ostream& o, const std::string& s) {
  put_u32(o, std::uint32_t(s.size()));
  o.write(s.data(), std::streamsize(s.size()));
}

void put_f64s(std::ostream& o, std::span<const double> v) {
  for (double x : v) put_f64(o, x);
}

std::uint32_t get_u32(std::istream& i) {
  unsigned char b[4];
  i.read(reinterpret_cast<char*>(b), 4);
  return std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) |
         (std::uint32_t(b[2]) << 16) | (std::uint32_t(b[3]) << 24);
}

std::uint64_t get_u64(std::istream& i) {
  unsigned char b[8];
  i.read(reinterpret_cast<char*>(b), 8);
  std::uint64_t v = 0;
  for (int k = 7; k >= 0; --k) v = (v << 8) | b[k];
  return v;
}

double get_f64(std::istream& i) {
  std::uint64_t bits = get_u64(i);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

std::string get_str(std::istream& i) {
  std::uint32_t n = get_u32(i);
  std::string s(n, '\0');
  i.read(s.data(), n);
  return s;
}

void get_f64s(std::istream& i, std::span<double> out) {
  for (double& x : out) x = get_f64(i);
}

}  // namespace

Checkpoint Checkpoint::capture(const TrainConfig& cfg, const VaeModel& model,
                               const AdamState& adam_state,
                               std::uint64_t epoch, double best_val_elbo,
                               const Rng& rng) {
  Checkpoint ck;
  ck.config = cfg;
  for (const auto& [name, t] : model.params().items()) {
    ck.tensors.emplace_back(
        name, Tensor::from(t.shape(),
                           {t.values().begin(), t.values().end()}));
  }
  ck.adam = adam_state;
  ck.epoch = epoch;
  ck.best_val_elbo = best_val_elbo;
  ck.rng_state = rng.state();
  return ck;
}

void Checkpoint::restore_into(VaeModel& model) const {
  for (const auto& [name, stored] : tensors) {
    Tensor live = model.params().find(name);
    if (live.shape() != stored.shape()) {
      throw DataError("checkpoint: shape mismatch for '" + name + "'");
    }
    std::memcpy(live.values_mut().data(), stored.values().data(),
                stored.numel() * sizeof(double));
  }
}

VaeModel Checkpoint::build_model() const {
  Rng init_rng(config.seed);
  VaeModel model(config.model(), init_rng);
  if (model.params().items().size() != tensors.size()) {
    throw DataError("checkpoint: parameter count mismatch");
  }
  restore_into(model);
  return model;
}

void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  std::ofstream o(path, std::ios::binary);
  if (!o) throw DataError("cannot write " + path.string());
  o.write(kMagic, 8);
  put_u32(o, ck.version);
  put_str(o, ck.config.canonical_text());
  put_u32(o, std::uint32_t(ck.tensors.size()));
  for (const auto& [name, t] : ck.tensors) {
    put_str(o, name);
    put_u32(o, std::uint32_t(t.rank()));
    for (std::size_t d : t.shape()) put_u64(o, d);
    put_f64s(o, t.values());
  }
  put_f64(o, ck.adam.beta1);
  put_f64(o, ck.adam.beta2);
  put_f64(o, ck.adam.eps);
  put_u64(o, ck.adam.step_count);
  for (std::size_t p = 0; p < ck.tensors.size(); ++p) {
    put_f64s(o, ck.adam.m[p]);
    put_f64s(o, ck.adam.v[p]);
  }
  put_u64(o, ck.epoch);
  put_f64(o, ck.best_val_elbo);
  put_str(o, ck.rng_state);
  if (!o) throw DataError("write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream i(path, std::ios::binary);
  if (!i) throw DataError("cannot open " + path.string());
  char magic[8];
  i.read(magic, 8);
  if (!i || std::memcmp(magic, kMagic, 8) != 0) {
    throw DataError(path.string() + ": bad checkpoint magic");
  }
  Checkpoint ck;
  ck.version = get_u32(i);
  if (ck.version != 1) {
    throw DataError(path.string() + ": unsupported checkpoint version " +
                    std::to_string(ck.version));
  }
  ck.config = TrainConfig::from_text(get_str(i));
  std::uint32_t n_tensors = get_u32(i);
  for (std::uint32_t t = 0; t < n_tensors; ++t) {
    std::string name = get_str(i);
    std::uint32_t rank = get_u32(i);
    Shape shape(rank);
    for (auto& d : shape) d = get_u64(i);
    Tensor tensor = Tensor::zeros(shape);
    get_f64s(i, tensor.values_mut());
    ck.tensors.emplace_back(std::move(name), std::move(tensor));
  }
  ck.adam.beta1 = get_f64(i);
  ck.adam.beta2 = get_f64(i);
  ck.adam.eps = get_f64(i);
  ck.adam.step_count = get_u64(i);
  for (std::uint32_t t = 0; t < n_tensors; ++t) {
    std::size_t n = ck.tensors[t].second.numel();
    std::vector<double> m(n), v(n);
    get_f64s(i, m);
    get_f64s(i, v);
    ck.adam.m.push_back(std::move(m));
    ck.adam.v.push_back(std::move(v));
  }
  ck.epoch = get_u64(i);
  ck.best_val_elbo = get_f64(i);
  ck.rng_state = get_str(i);
  if (!i) throw DataError(path.string() + ": truncated checkpoint");
  return ck;
}

}  // namespace vpflow
