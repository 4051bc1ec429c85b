#include "vpflow/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>

namespace vpflow {

namespace {

constexpr std::size_t kImageDim = 784;
constexpr char kPatchMagic[8] = {'V', 'P', 'F', 'P', 'A', 'T', 'C', 'H'};

std::uint32_t read_be32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
         (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

std::uint32_t read_le32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  return std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) |
         (std::uint32_t(b[2]) << 16) | (std::uint32_t(b[3]) << 24);
}

void write_le32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v),
                        static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<char*>(b), 4);
}

std::ifstream open_binary(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return in;
}

// Mixes (seed, epoch) into one 64-bit stream seed.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t epoch) {
  std::uint64_t x = seed ^ (0x9E3779B97F4A7C15ull * (epoch + 1));
  x ^= x >> 30;
  x *= 0xBF58476D1CE4E5B9ull;
  x ^= x >> 27;
  x *= 0x94D049BB133111EBull;
  x ^= x >> 31;
  return x;
}

}  // namespace

Tensor Dataset::gather(std::span<const std::uint32_t> idx) const {
  Tensor t = Tensor::zeros({idx.size(), dim});
  double* out = t.values_mut().data();
  for (std::size_t r = 0; r < idx.size(); ++r) {
    std::memcpy(out + r * dim, values.data() + std::size_t(idx[r]) * dim,
                dim * sizeof(double));
  }
  return t;
}

Dataset load_amat(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  Dataset ds;
  ds.dim = kImageDim;
  ds.kind = DataKind::binary;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::vector<double> row;
    row.reserve(kImageDim + 1);
    double v;
    while (ls >> v) row.push_back(v);
    if (row.size() != kImageDim && row.size() != kImageDim + 1) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": " +
                      std::to_string(row.size()) +
                      " tokens, expected 784 or 785");
    }
    for (std::size_t j = 0; j < kImageDim; ++j) {
      if (row[j] != 0.0 && row[j] != 1.0) {
        throw DataError(path.string() + ":" + std::to_string(line_no) +
                        ": non-binary pixel value");
      }
    }
    ds.values.insert(ds.values.end(), row.begin(), row.begin() + kImageDim);
    ++ds.n;
  }
  if (ds.n == 0) throw DataError(path.string() + ": no examples");
  return ds;
}

Dataset load_idx(const std::filesystem::path& path,
                 std::optional<double> binarize_threshold) {
  std::ifstream in = open_binary(path);
  std::uint32_t magic = read_be32(in);
  if (!in || magic != 0x00000803u) {
    throw DataError(path.string() + ": bad IDX magic");
  }
  std::uint32_t n = read_be32(in);
  std::uint32_t rows = read_be32(in);
  std::uint32_t cols = read_be32(in);
  if (!in || rows != 28 || cols != 28) {
    throw DataError(path.string() + ": expected 28x28 images");
  }
  Dataset ds;
  ds.n = n;
  ds.dim = kImageDim;
  ds.kind = binarize_threshold ? DataKind::binary : DataKind::continuous;
  ds.values.resize(std::size_t(n) * kImageDim);
  std::vector<unsigned char> buf(kImageDim);
  for (std::uint32_t i = 0; i < n; ++i) {
    in.read(reinterpret_cast<char*>(buf.data()), kImageDim);
    if (!in) throw DataError(path.string() + ": truncated payload");
    for (std::size_t j = 0; j < kImageDim; ++j) {
      double v = buf[j] / 255.0;
      if (binarize_threshold) v = v >= *binarize_threshold ? 1.0 : 0.0;
      ds.values[std::size_t(i) * kImageDim + j] = v;
    }
  }
  return ds;
}

Dataset load_patches(const std::filesystem::path& path) {
  std::ifstream in = open_binary(path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kPatchMagic, 8) != 0) {
    throw DataError(path.string() + ": bad patch magic");
  }
  std::uint32_t n = read_le32(in);
  std::uint32_t d = read_le32(in);
  if (!in || n == 0 || d == 0) {
    throw DataError(path.string() + ": bad patch header");
  }
  Dataset ds;
  ds.n = n;
  ds.dim = d;
  ds.kind = DataKind::continuous;
  ds.values.resize(std::size_t(n) * d);
  in.read(reinterpret_cast<char*>(ds.values.data()),
          std::streamsize(ds.values.size() * sizeof(double)));
  if (!in) throw DataError(path.string() + ": truncated payload");
  for (double v : ds.values) {
    if (v < -1e-12 || v > 1.0 + 1e-12) {
      throw DataError(path.string() + ": value outside [0,1]");
    }
  }
  return ds;
}

void export_amat(const Dataset& ds, const std::filesystem::path& path) {
  if (ds.kind != DataKind::binary) {
    throw DataError("export_amat: dataset is not binary");
  }
  std::ofstream out(path, std::ios::binary);  // binary: LF always
  if (!out) throw DataError("cannot write " + path.string());
  std::string line;
  for (std::size_t i = 0; i < ds.n; ++i) {
    line.clear();
    for (std::size_t j = 0; j < ds.dim; ++j) {
      if (j) line.push_back(' ');
      line.push_back(ds.at(i, j) == 1.0 ? '1' : '0');
    }
    line.push_back('\n');
    out.write(line.data(), std::streamsize(line.size()));
  }
  if (!out) throw DataError("write failed: " + path.string());
}

void save_patches(const Dataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(kPatchMagic, 8);
  write_le32(out, std::uint32_t(ds.n));
  write_le32(out, std::uint32_t(ds.dim));
  out.write(reinterpret_cast<const char*>(ds.values.data()),
            std::streamsize(ds.values.size() * sizeof(double)));
  if (!out) throw DataError("write failed: " + path.string());
}

Dataset load_auto(const std::filesystem::path& path,
                  std::optional<double> binarize_threshold) {
  {
    std::ifstream in = open_binary(path);
    char head[8] = {};
    in.read(head, 8);
    if (in.gcount() >= 8 && std::memcmp(head, kPatchMagic, 8) == 0) {
      return load_patches(path);
    }
    if (in.gcount() >= 4) {
      unsigned char* b = reinterpret_cast<unsigned char*>(head);
      std::uint32_t magic = (std::uint32_t(b[0]) << 24) |
                            (std::uint32_t(b[1]) << 16) |
                            (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
      if (magic == 0x00000803u) return load_idx(path, binarize_threshold);
    }
  }
  return load_amat(path);
}

std::vector<std::vector<std::uint32_t>> batches(std::size_t n, std::size_t b,
                                                std::uint64_t seed,
                                                std::uint64_t epoch) {
  if (b < 1) throw ConfigError("batches: batch size must be >= 1");
  if (n == 0) throw DataError("batches: empty dataset");
  std::vector<std::uint32_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = std::uint32_t(i);
  Rng rng(mix_seed(seed, epoch));
  for (std::size_t i = n - 1; i > 0; --i) {
    std::size_t j = std::size_t(rng.below(i + 1));
    std::swap(perm[i], perm[j]);
  }
  std::vector<std::vector<std::uint32_t>> out;
  out.reserve((n + b - 1) / b);
  for (std::size_t start = 0; start < n; start += b) {
    std::size_t end = std::min(start + b, n);
    out.emplace_back(perm.begin() + std::ptrdiff_t(start),
                     perm.begin() + std::ptrdiff_t(end));
  }
  return out;
}

// -- synthetic corpora --------------------------------------------------------

namespace {

constexpr int kSide = 28;

struct P2 {
  double x, y;
};

// Distance from point to segment ab.
double seg_dist(P2 p, P2 a, P2 b) {
  double dx = b.x - a.x, dy = b.y - a.y;
  double len2 = dx * dx + dy * dy;
  double t = len2 > 0 ? ((p.x - a.x) * dx + (p.y - a.y) * dy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  double px = a.x + t * dx - p.x, py = a.y + t * dy - p.y;
  return std::sqrt(px * px + py * py);
}

}  // namespace

Dataset synth_strokes(std::size_t n, std::uint64_t seed) {
  Dataset ds;
  ds.n = n;
  ds.dim = kImageDim;
  ds.kind = DataKind::binary;
  ds.values.assign(n * kImageDim, 0.0);
  Rng rng(mix_seed(seed, 0x5752494245ull));
  std::vector<P2> pts;
  for (std::size_t img = 0; img < n; ++img) {
    double* px = ds.values.data() + img * kImageDim;
    std::size_t strokes = 1 + rng.below(3);
    for (std::size_t s = 0; s < strokes; ++s) {
      P2 a{rng.uniform(3, 25), rng.uniform(3, 25)};
      P2 c{rng.uniform(3, 25), rng.uniform(3, 25)};
      P2 b{rng.uniform(3, 25), rng.uniform(3, 25)};
      double thick = rng.uniform(1.0, 2.2);
      pts.clear();
      for (int t = 0; t <= 24; ++t) {
        double u = t / 24.0;
        double w0 = (1 - u) * (1 - u), w1 = 2 * u * (1 - u), w2 = u * u;
        pts.push_back({w0 * a.x + w1 * c.x + w2 * b.x,
                       w0 * a.y + w1 * c.y + w2 * b.y});
      }
      for (int yy = 0; yy < kSide; ++yy) {
        for (int xx = 0; xx < kSide; ++xx) {
          P2 p{double(xx), double(yy)};
          double best = 1e9;
          for (std::size_t q = 0; q + 1 < pts.size(); ++q) {
            best = std::min(best, seg_dist(p, pts[q], pts[q + 1]));
            if (best < thick) break;
          }
          if (best < thick) px[yy * kSide + xx] = 1.0;
        }
      }
    }
  }
  return ds;
}

Dataset synth_blobs(std::size_t n, std::uint64_t seed) {
  Dataset ds;
  ds.n = n;
  ds.dim = kImageDim;
  ds.kind = DataKind::continuous;
  ds.values.assign(n * kImageDim, 0.0);
  Rng rng(mix_seed(seed, 0x424C4F4253ull));
  for (std::size_t img = 0; img < n; ++img) {
    double* px = ds.values.data() + img * kImageDim;
    std::size_t blobs = 3 + rng.below(4);
    double base = rng.uniform(0.02, 0.12);
    for (int i = 0; i < kSide * kSide; ++i) px[i] = base;
    for (std::size_t bidx = 0; bidx < blobs; ++bidx) {
      double cx = rng.uniform(4, 24), cy = rng.uniform(4, 24);
      double sx = rng.uniform(1.5, 5.0), sy = rng.uniform(1.5, 5.0);
      double amp = rng.uniform(0.25, 0.9);
      double rot = rng.uniform(0, 3.14159265358979323846);
      double cr = std::cos(rot), sr = std::sin(rot);
      for (int yy = 0; yy < kSide; ++yy) {
        for (int xx = 0; xx < kSide; ++xx) {
          double dx = xx - cx, dy = yy - cy;
          double rx = (cr * dx + sr * dy) / sx;
          double ry = (-sr * dx + cr * dy) / sy;
          px[yy * kSide + xx] += amp * std::exp(-0.5 * (rx * rx + ry * ry));
        }
      }
    }
    for (int i = 0; i < kSide * kSide; ++i) px[i] = std::clamp(px[i], 0.0, 1.0);
  }
  return ds;
}

}  // namespace vpflow
