#pragma once

// Dataset ingestion and seeded mini-batching.
//
// Formats:
//   amat     text, one example per line, 784 whitespace-separated 0/1 tokens
//            (a 785th label column is dropped); exported with LF endings and
//            single spaces, bit-reproducibly.
//   idx      big-endian IDX image file (magic 0x00000803, N x 28 x 28 bytes),
//            scaled to [0,1]; optional >= threshold binarization.
//   patches  "VPFPATCH" magic, u32 N, u32 D (little-endian), then N*D
//            little-endian float64 values in [0,1].

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "vpflow/rng.hpp"
#include "vpflow/tensor.hpp"

namespace vpflow {

enum class DataKind { binary, continuous };

struct Dataset {
  std::size_t n = 0;
  std::size_t dim = 0;
  DataKind kind = DataKind::binary;
  std::vector<double> values;  // n x dim row-major

  double at(std::size_t i, std::size_t j) const { return values[i * dim + j]; }
  // Gathers the given examples into a [batch x dim] tensor.
  Tensor gather(std::span<const std::uint32_t> idx) const;
};

Dataset load_amat(const std::filesystem::path& path);
Dataset load_idx(const std::filesystem::path& path,
                 std::optional<double> binarize_threshold = std::nullopt);
Dataset load_patches(const std::filesystem::path& path);

void export_amat(const Dataset& ds, const std::filesystem::path& path);
void save_patches(const Dataset& ds, const std::filesystem::path& path);

// Loads by sniffing the magic: IDX, VPFPATCH, else amat text.
Dataset load_auto(const std::filesystem::path& path,
                  std::optional<double> binarize_threshold = std::nullopt);

// Epoch permutation derived from (seed, epoch); ceil(n/b) slices, short
// final batch kept.
std::vector<std::vector<std::uint32_t>> batches(std::size_t n, std::size_t b,
                                                std::uint64_t seed,
                                                std::uint64_t epoch);

// -- synthetic corpora (desk-scale experiments) -----------------------------

// Binary 28x28 images of 1-3 random quadratic Bezier strokes.
Dataset synth_strokes(std::size_t n, std::uint64_t seed);

// Continuous 28x28 patches: mixtures of smooth Gaussian blobs in [0,1].
Dataset synth_blobs(std::size_t n, std::uint64_t seed);

}  // namespace vpflow
