#pragma once

// Flat key=value experiment configuration (one pair per line, '#' comments).
// canonical_text() emits keys in a fixed order with round-trippable number
// formatting, so config -> text -> config is the identity and checkpoints
// embedding the text are byte-stable.

#include <cstdint>
#include <filesystem>
#include <string>

#include "vpflow/nn.hpp"

namespace vpflow {

struct TrainConfig {
  FlowKind flow = FlowKind::ccliniaf;
  std::size_t flow_k = 5;
  std::size_t flow_t = 1;
  std::size_t latent = 40;
  std::size_t hidden = 300;
  std::size_t input_dim = 784;
  Likelihood likelihood = Likelihood::bernoulli;
  std::size_t batch = 100;
  std::size_t max_epochs = 5000;
  std::size_t warmup_epochs = 200;
  std::size_t patience = 100;
  double lr = 3e-4;
  std::uint64_t seed = 1;
  std::string train_path;
  std::string valid_path;
  std::string test_path;
  std::string out_dir = "run";

  void validate() const;
  ModelConfig model() const;

  static TrainConfig from_file(const std::filesystem::path& path);
  static TrainConfig from_text(const std::string& text);
  void set(const std::string& key, const std::string& value);
  void apply_override(const std::string& key_eq_value);
  std::string canonical_text() const;
};

}  // namespace vpflow
