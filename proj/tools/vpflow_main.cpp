// Command-line surface: train / eval / gradcheck / sample / data.
// Exit codes: 0 ok, 2 config error, 3 data error, 4 numeric divergence.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "vpflow/train.hpp"

namespace {

using namespace vpflow;

int cmd_train(const std::string& config_path, std::int64_t seed,
              const std::vector<std::string>& overrides) {
  TrainConfig cfg = TrainConfig::from_file(config_path);
  for (const std::string& kv : overrides) cfg.apply_override(kv);
  if (seed >= 0) cfg.seed = std::uint64_t(seed);
  cfg.validate();

  RunReport rep = train(cfg, [](const EpochRow& row) {
    std::printf(
        "epoch %5llu  beta %.3f  train %.3f  val %.3f  recon %.3f  kl %.3f  "
        "(%.1fs)\n",
        static_cast<unsigned long long>(row.epoch), row.beta, row.train_elbo,
        row.val_elbo, row.recon_ll, row.kl_mc, row.wall_seconds);
    std::fflush(stdout);
  });
  std::printf("best epoch %llu  val ELBO %.4f\n",
              static_cast<unsigned long long>(rep.best_epoch),
              rep.best_val_elbo);
  std::printf("checkpoint: %s\nmetrics: %s\n",
              rep.checkpoint_path.string().c_str(),
              rep.metrics_path.string().c_str());

  if (!cfg.test_path.empty()) {
    Dataset test = load_auto(cfg.test_path);
    VaeModel best = load_checkpoint(rep.checkpoint_path).build_model();
    EvalResult ev = evaluate(best, test, 1, cfg.seed);
    std::printf("test ELBO %.4f\n", ev.mean_elbo);
  }
  return 0;
}

int cmd_eval(const std::string& ckpt_path, const std::string& data_path,
             std::size_t passes, std::int64_t seed) {
  Checkpoint ck = load_checkpoint(ckpt_path);
  VaeModel model = ck.build_model();
  Dataset data = load_auto(data_path);
  std::uint64_t s = seed >= 0 ? std::uint64_t(seed) : ck.config.seed;
  EvalResult ev = evaluate(model, data, passes, s);
  std::printf("test ELBO %.4f +/- %.4f nats (%zu passes, %zu examples)\n",
              ev.mean_elbo, ev.std_elbo, ev.passes, data.n);
  return 0;
}

int cmd_gradcheck(const std::string& flow, std::size_t latent,
                  std::size_t hidden, std::size_t input_dim, std::size_t k,
                  std::size_t t, std::size_t batch, std::uint64_t seed) {
  std::vector<FlowKind> kinds;
  if (flow == "all") {
    kinds = {FlowKind::none, FlowKind::planar, FlowKind::householder,
             FlowKind::liniaf, FlowKind::ccliniaf};
  } else {
    auto parsed = parse_flow_kind(flow);
    if (!parsed) throw ConfigError("unknown flow kind '" + flow + "'");
    kinds = {*parsed};
  }
  bool ok = true;
  for (FlowKind kind : kinds) {
    ModelConfig cfg;
    cfg.input_dim = input_dim;
    cfg.hidden = hidden;
    cfg.latent = latent;
    cfg.flow = kind;
    cfg.flow_k = k;
    cfg.flow_t = t;
    double err = gradcheck_elbo(cfg, batch, seed);
    bool pass = err < 1e-4;
    ok = ok && pass;
    std::printf("%-10s max rel err %.3e  %s\n", to_string(kind), err,
                pass ? "ok" : "FAIL");
  }
  return ok ? 0 : 1;
}

int cmd_sample(const std::string& ckpt_path, std::size_t n,
               const std::string& out_path, std::uint64_t seed) {
  Checkpoint ck = load_checkpoint(ckpt_path);
  VaeModel model = ck.build_model();
  const std::size_t side = 28;
  if (model.config().input_dim != side * side) {
    throw DataError("sample: checkpoint is not a 28x28 image model");
  }
  Rng rng(seed);
  NoGradGuard ng;
  Tensor z = standard_normal({n, model.config().latent}, rng);
  Tensor means = model.decode(z).mean;

  std::size_t cols = std::size_t(std::ceil(std::sqrt(double(n))));
  std::size_t rows = (n + cols - 1) / cols;
  std::size_t w = cols * side, h = rows * side;
  std::vector<unsigned char> img(w * h, 0);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t cell_r = i / cols, cell_c = i % cols;
    for (std::size_t y = 0; y < side; ++y) {
      for (std::size_t x = 0; x < side; ++x) {
        double v = means.at(i, y * side + x);
        img[(cell_r * side + y) * w + cell_c * side + x] =
            static_cast<unsigned char>(std::lround(v * 255.0));
      }
    }
  }
  std::ofstream out(out_path, std::ios::binary);
  if (!out) throw DataError("cannot write " + out_path);
  out << "P5\n" << w << " " << h << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.data()),
            std::streamsize(img.size()));
  if (!out) throw DataError("write failed: " + out_path);
  std::printf("wrote %zux%zu PGM to %s\n", w, h, out_path.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"variational auto-encoders with volume-preserving flows"};
  app.require_subcommand(1);

  // train
  auto* train_cmd = app.add_subcommand("train", "train a model from a config");
  std::string config_path;
  std::int64_t seed = -1;
  std::vector<std::string> overrides;
  train_cmd->add_option("--config", config_path, "key=value config file")
      ->required();
  train_cmd->add_option("--seed", seed, "override the config seed");
  train_cmd->add_option("--override", overrides,
                        "key=value config override (repeatable)");

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  std::string ckpt_path, data_path;
  std::size_t passes = 1;
  std::int64_t eval_seed = -1;
  eval_cmd->add_option("--checkpoint", ckpt_path, "checkpoint file")
      ->required();
  eval_cmd->add_option("--data", data_path, "dataset file")->required();
  eval_cmd->add_option("--passes", passes, "noise passes to average");
  eval_cmd->add_option("--seed", eval_seed, "evaluation seed");

  // gradcheck
  auto* gc_cmd =
      app.add_subcommand("gradcheck", "finite-difference check of the ELBO");
  std::string gc_flow = "all";
  std::size_t gc_latent = 3, gc_hidden = 8, gc_input = 10, gc_k = 2, gc_t = 2,
              gc_batch = 2;
  std::uint64_t gc_seed = 1;
  gc_cmd->add_option("--flow", gc_flow,
                     "none|planar|hf|liniaf|ccliniaf|all");
  gc_cmd->add_option("--latent", gc_latent, "latent dimension");
  gc_cmd->add_option("--hidden", gc_hidden, "hidden width");
  gc_cmd->add_option("--input-dim", gc_input, "input dimension");
  gc_cmd->add_option("--k", gc_k, "matrices in the convex combination");
  gc_cmd->add_option("--t", gc_t, "flow steps");
  gc_cmd->add_option("--batch", gc_batch, "batch size");
  gc_cmd->add_option("--seed", gc_seed, "seed");

  // sample
  auto* sample_cmd =
      app.add_subcommand("sample", "decode prior samples into a PGM grid");
  std::string sample_ckpt, sample_out = "grid.pgm";
  std::size_t sample_n = 16;
  std::uint64_t sample_seed = 1;
  sample_cmd->add_option("--checkpoint", sample_ckpt, "checkpoint file")
      ->required();
  sample_cmd->add_option("-n", sample_n, "number of samples");
  sample_cmd->add_option("-o", sample_out, "output PGM path");
  sample_cmd->add_option("--seed", sample_seed, "sampling seed");

  // data
  auto* data_cmd = app.add_subcommand("data", "dataset utilities");
  data_cmd->require_subcommand(1);
  auto* export_cmd =
      data_cmd->add_subcommand("export-amat", "re-emit a dataset as amat text");
  std::string exp_in, exp_out;
  double exp_threshold = -1.0;
  export_cmd->add_option("--in", exp_in, "input dataset (amat/idx/patches)")
      ->required();
  export_cmd->add_option("--out", exp_out, "output amat path")->required();
  export_cmd->add_option("--threshold", exp_threshold,
                         "binarize continuous inputs at >= threshold");
  auto* strokes_cmd = data_cmd->add_subcommand(
      "synth-strokes", "generate the binary stroke corpus");
  auto* blobs_cmd = data_cmd->add_subcommand(
      "synth-blobs", "generate the continuous blob corpus");
  std::size_t synth_n = 1000;
  std::uint64_t synth_seed = 1;
  std::string synth_out;
  for (auto* c : {strokes_cmd, blobs_cmd}) {
    c->add_option("--n", synth_n, "number of examples");
    c->add_option("--seed", synth_seed, "generator seed");
    c->add_option("--out", synth_out, "output path")->required();
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;  // bad arguments are config errors; --help is ok
  }

  try {
    if (*train_cmd) return cmd_train(config_path, seed, overrides);
    if (*eval_cmd) return cmd_eval(ckpt_path, data_path, passes, eval_seed);
    if (*gc_cmd) {
      return cmd_gradcheck(gc_flow, gc_latent, gc_hidden, gc_input, gc_k,
                           gc_t, gc_batch, gc_seed);
    }
    if (*sample_cmd) {
      return cmd_sample(sample_ckpt, sample_n, sample_out, sample_seed);
    }
    if (*export_cmd) {
      std::optional<double> threshold;
      if (exp_threshold >= 0.0) threshold = exp_threshold;
      Dataset ds = load_auto(exp_in, threshold);
      export_amat(ds, exp_out);
      std::printf("wrote %zu examples to %s\n", ds.n, exp_out.c_str());
      return 0;
    }
    if (*strokes_cmd) {
      Dataset ds = synth_strokes(synth_n, synth_seed);
      export_amat(ds, synth_out);
      std::printf("wrote %zu stroke images to %s\n", ds.n, synth_out.c_str());
      return 0;
    }
    if (*blobs_cmd) {
      Dataset ds = synth_blobs(synth_n, synth_seed);
      save_patches(ds, synth_out);
      std::printf("wrote %zu blob patches to %s\n", ds.n, synth_out.c_str());
      return 0;
    }
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 3;
  } catch (const DivergenceError& e) {
    std::fprintf(stderr, "divergence: %s\n", e.what());
    return 4;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
