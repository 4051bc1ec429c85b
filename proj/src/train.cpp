#include "vpflow/train.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace vpflow {

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// Mean single-sample ELBO at beta=1 over a full dataset, batched.
double dataset_elbo(const VaeModel& model, const Dataset& data,
                    std::size_t batch, Rng& rng) {
  NoGradGuard ng;
  double total = 0.0;
  for (std::size_t start = 0; start < data.n; start += batch) {
    std::size_t end = std::min(start + batch, data.n);
    std::vector<std::uint32_t> idx(end - start);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      idx[i] = std::uint32_t(start + i);
    }
    Tensor x = data.gather(idx);
    ElboBreakdown eb = elbo(model, x, 1.0, rng);
    for (double v : eb.per_example.values()) total += v;
  }
  return total / double(data.n);
}

void check_dataset(const TrainConfig& cfg, const Dataset& ds,
                   const char* which) {
  if (ds.dim != cfg.input_dim) {
    throw DataError(std::string(which) + " set dimension " +
                    std::to_string(ds.dim) + " does not match input_dim " +
                    std::to_string(cfg.input_dim));
  }
  if (cfg.likelihood == Likelihood::bernoulli &&
      ds.kind != DataKind::binary) {
    throw DataError(std::string(which) +
                    " set is not binary but likelihood is bernoulli");
  }
}

}  // namespace

RunReport train(const TrainConfig& cfg, const Dataset& train_set,
                const Dataset& valid_set, const EpochCallback& on_epoch) {
  cfg.validate();
  check_dataset(cfg, train_set, "train");
  check_dataset(cfg, valid_set, "valid");

  std::filesystem::create_directories(cfg.out_dir);
  std::filesystem::path metrics_path =
      std::filesystem::path(cfg.out_dir) / "metrics.csv";
  std::filesystem::path timing_path =
      std::filesystem::path(cfg.out_dir) / "timing.csv";
  std::filesystem::path ckpt_path =
      std::filesystem::path(cfg.out_dir) / "checkpoint.bin";
  std::ofstream metrics(metrics_path, std::ios::binary);
  std::ofstream timing(timing_path, std::ios::binary);
  if (!metrics || !timing) {
    throw DataError("cannot write into output dir " + cfg.out_dir);
  }
  metrics << "epoch,beta,train_elbo,val_elbo,recon_ll,kl_mc\r\n";
  timing << "epoch,wall_seconds\r\n";

  Rng rng(cfg.seed);
  VaeModel model(cfg.model(), rng);
  AdamState adam;
  adam.init(model.params());

  RunReport report;
  report.metrics_path = metrics_path;
  report.checkpoint_path = ckpt_path;
  EarlyStopper stopper(cfg.patience);
  std::uint64_t best_epoch = 0;
  Checkpoint best_ckpt;

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    auto t0 = std::chrono::steady_clock::now();
    double beta = warmup_beta(epoch, cfg.warmup_epochs);
    double train_sum = 0.0, recon_sum = 0.0, kl_sum = 0.0;
    auto plan = batches(train_set.n, cfg.batch, cfg.seed, epoch);
    for (std::size_t bi = 0; bi < plan.size(); ++bi) {
      Graph::active().reset();
      model.params().zero_grad();
      Tensor x = train_set.gather(plan[bi]);
      ElboBreakdown eb;
      try {
        eb = elbo(model, x, beta, rng);
        Tensor loss = neg(eb.objective);
        backward(loss);
        adam_step(model.params(), adam, cfg.lr);
      } catch (const DivergenceError& e) {
        throw DivergenceError(std::string(e.what()) + " (epoch " +
                              std::to_string(epoch) + ", batch " +
                              std::to_string(bi) + ")");
      }
      double bsz = double(plan[bi].size());
      train_sum += eb.elbo * bsz;
      recon_sum += eb.recon_ll * bsz;
      kl_sum += eb.kl_mc * bsz;
    }
    Graph::active().reset();
    double n = double(train_set.n);

    EpochRow row;
    row.epoch = epoch;
    row.beta = beta;
    row.train_elbo = train_sum / n;
    row.recon_ll = recon_sum / n;
    row.kl_mc = kl_sum / n;
    row.val_elbo = dataset_elbo(model, valid_set, cfg.batch, rng);
    row.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();

    metrics << row.epoch << ',' << fmt(row.beta) << ',' << fmt(row.train_elbo)
            << ',' << fmt(row.val_elbo) << ',' << fmt(row.recon_ll) << ','
            << fmt(row.kl_mc) << "\r\n";
    metrics.flush();
    timing << row.epoch << ',' << fmt(row.wall_seconds) << "\r\n";
    timing.flush();
    report.rows.push_back(row);
    report.epochs_run = epoch;
    if (on_epoch) on_epoch(row);

    bool stop = stopper.observe(row.val_elbo);
    if (stopper.improved_last()) {
      best_epoch = epoch;
      best_ckpt =
          Checkpoint::capture(cfg, model, adam, epoch, stopper.best(), rng);
    }
    if (stop) break;
  }

  report.best_epoch = best_epoch;
  report.best_val_elbo = stopper.best();
  save_checkpoint(best_ckpt, ckpt_path);
  return report;
}

RunReport train(const TrainConfig& cfg, const EpochCallback& on_epoch) {
  if (cfg.train_path.empty() || cfg.valid_path.empty()) {
    throw ConfigError("train: train_path and valid_path are required");
  }
  Dataset tr = load_auto(cfg.train_path);
  Dataset va = load_auto(cfg.valid_path);
  return train(cfg, tr, va, on_epoch);
}

double gradcheck_elbo(const ModelConfig& cfg, std::size_t batch,
                      std::uint64_t seed) {
  Rng rng(seed);
  VaeModel model(cfg, rng);
  Tensor x = Tensor::zeros({batch, cfg.input_dim});
  if (cfg.likelihood == Likelihood::bernoulli) {
    for (double& v : x.values_mut()) v = rng.uniform() < 0.4 ? 1.0 : 0.0;
  } else {
    for (double& v : x.values_mut()) v = rng.uniform(0.05, 0.95);
  }
  Tensor eps = standard_normal({batch, cfg.latent}, rng);
  std::vector<Tensor> params;
  for (const auto& [_, t] : model.params().items()) params.push_back(t);
  auto f = [&]() { return elbo_with_noise(model, x, 1.0, eps).objective; };
  return grad_check(f, params);
}

EvalResult evaluate(const VaeModel& model, const Dataset& data,
                    std::size_t passes, std::uint64_t seed) {
  if (passes < 1) throw ConfigError("evaluate: passes must be >= 1");
  if (data.dim != model.config().input_dim) {
    throw DataError("evaluate: dataset dimension " + std::to_string(data.dim) +
                    " does not match model input " +
                    std::to_string(model.config().input_dim));
  }
  NoGradGuard ng;
  Rng rng(seed);
  std::vector<double> pass_means(passes);
  for (std::size_t p = 0; p < passes; ++p) {
    pass_means[p] = dataset_elbo(model, data, 100, rng);
  }
  EvalResult out;
  out.passes = passes;
  double acc = 0.0;
  for (double v : pass_means) acc += v;
  out.mean_elbo = acc / double(passes);
  if (passes > 1) {
    double ss = 0.0;
    for (double v : pass_means) {
      ss += (v - out.mean_elbo) * (v - out.mean_elbo);
    }
    out.std_elbo = std::sqrt(ss / double(passes - 1));
  }
  return out;
}

}  // namespace vpflow
