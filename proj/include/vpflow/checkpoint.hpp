#pragma once

// Versioned binary checkpoint: magic "VPFCKPT1", little-endian throughout,
// length-prefixed strings.  save -> load -> save is byte-identical.
//
// Layout: magic, u32 version, str config_text, u32 n_tensors,
// { str name, u32 rank, u64 dims[rank], f64 values[] } per tensor,
// f64 beta1/beta2/eps, u64 step_count, { f64 m[], f64 v[] } per tensor,
// u64 epoch, f64 best_val_elbo, str rng_state.

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "vpflow/adam.hpp"
#include "vpflow/config.hpp"
#include "vpflow/rng.hpp"

namespace vpflow {

struct Checkpoint {
  std::uint32_t version = 1;
  TrainConfig config;
  std::vector<std::pair<std::string, Tensor>> tensors;  // no-grad copies
  AdamState adam;
  std::uint64_t epoch = 0;
  double best_val_elbo = 0.0;
  std::string rng_state;

  static Checkpoint capture(const TrainConfig& cfg, const VaeModel& model,
                            const AdamState& adam, std::uint64_t epoch,
                            double best_val_elbo, const Rng& rng);

  // Copies stored tensors into the model's registry (matched by name).
  void restore_into(VaeModel& model) const;
  // Rebuilds the model architecture from the embedded config and loads it.
  VaeModel build_model() const;
};

void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace vpflow
