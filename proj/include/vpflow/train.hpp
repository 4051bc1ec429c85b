#pragma once

// Training loop: annealed-beta batches, beta=1 validation after every epoch,
// early stopping on the best validation ELBO, best-checkpoint persistence,
// and deterministic metrics.csv (epoch, beta, train_elbo, val_elbo,
// recon_ll, kl_mc; RFC-4180, CRLF).  Wall-clock per epoch goes to a sidecar
// timing.csv so metrics stay byte-reproducible for a fixed (config, seed).

#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <vector>

#include "vpflow/checkpoint.hpp"
#include "vpflow/data.hpp"
#include "vpflow/vae.hpp"

namespace vpflow {

struct EpochRow {
  std::uint64_t epoch = 0;
  double beta = 0;
  double train_elbo = 0;
  double val_elbo = 0;
  double recon_ll = 0;
  double kl_mc = 0;
  double wall_seconds = 0;  // timing.csv only
};

struct RunReport {
  std::vector<EpochRow> rows;
  std::uint64_t epochs_run = 0;
  std::uint64_t best_epoch = 0;
  double best_val_elbo = 0;
  std::filesystem::path checkpoint_path;
  std::filesystem::path metrics_path;
};

using EpochCallback = std::function<void(const EpochRow&)>;

// Stop after `patience` consecutive epochs without strict improvement.
class EarlyStopper {
 public:
  explicit EarlyStopper(std::size_t patience) : patience_(patience) {}

  // Returns true when training should stop after this observation.
  bool observe(double val_score) {
    if (val_score > best_) {
      best_ = val_score;
      wait_ = 0;
      return false;
    }
    return ++wait_ >= patience_;
  }

  bool improved_last() const { return wait_ == 0; }
  double best() const { return best_; }

 private:
  std::size_t patience_;
  std::size_t wait_ = 0;
  double best_ = -std::numeric_limits<double>::infinity();
};

RunReport train(const TrainConfig& cfg, const Dataset& train_set,
                const Dataset& valid_set, const EpochCallback& on_epoch = {});
// Loads the datasets named in the config, then trains.
RunReport train(const TrainConfig& cfg, const EpochCallback& on_epoch = {});

struct EvalResult {
  double mean_elbo = 0;   // mean over examples, averaged over passes
  double std_elbo = 0;    // sample std over pass means (0 for one pass)
  std::size_t passes = 1;
};

// beta = 1, one noise sample per example per pass.
EvalResult evaluate(const VaeModel& model, const Dataset& data,
                    std::size_t passes, std::uint64_t seed);

// Max relative error of the analytic full-ELBO gradient vs central finite
// differences, over every model parameter, with frozen noise and input.
double gradcheck_elbo(const ModelConfig& cfg, std::size_t batch,
                      std::uint64_t seed);

}  // namespace vpflow
