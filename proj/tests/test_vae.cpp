#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstring>
#include <vector>

#include "oracles.hpp"
#include "vpflow/vae.hpp"

using namespace vpflow;

namespace {

constexpr double kLogStdNormAt0 = -0.91893853320467274;  // -0.5 ln(2 pi)

// Sets a linear head to emit a constant row regardless of input.
void force_head_constant(VaeModel& model, const std::string& prefix,
                         double value) {
  Tensor w = model.params().find(prefix + ".w");
  std::fill(w.values_mut().begin(), w.values_mut().end(), 0.0);
  Tensor b = model.params().find(prefix + ".b");
  std::fill(b.values_mut().begin(), b.values_mut().end(), value);
}

ModelConfig tiny_config(FlowKind flow, Likelihood lik = Likelihood::bernoulli) {
  ModelConfig cfg;
  cfg.input_dim = 6;
  cfg.hidden = 5;
  cfg.latent = 3;
  cfg.flow = flow;
  cfg.flow_k = 2;
  cfg.flow_t = 2;
  cfg.likelihood = lik;
  return cfg;
}

Tensor random_binary(Shape shape, Rng& rng) {
  Tensor t = Tensor::zeros(shape);
  for (double& v : t.values_mut()) v = rng.uniform() < 0.35 ? 1.0 : 0.0;
  return t;
}

}  // namespace

TEST_CASE("reparameterize basics") {
  Rng rng(11);
  Tensor mu = random_uniform({4, 3}, rng, -2.0, 2.0);
  Tensor logvar = Tensor::zeros({4, 3});
  Tensor eps0 = Tensor::zeros({4, 3});
  Tensor z = reparameterize(mu, logvar, eps0);
  for (std::size_t i = 0; i < z.numel(); ++i) {
    CHECK(z.values()[i] == mu.values()[i]);
  }

  // clamped floor logvar = -7: |z - mu| <= e^{-3.5} |eps|
  Tensor lv = Tensor::full({4, 3}, -7.0);
  Tensor eps = standard_normal({4, 3}, rng);
  Tensor z2 = reparameterize(mu, lv, eps);
  for (std::size_t i = 0; i < z2.numel(); ++i) {
    CHECK(std::abs(z2.values()[i] - mu.values()[i]) <=
          std::exp(-3.5) * std::abs(eps.values()[i]) + 1e-15);
  }

  CHECK_THROWS_AS(
      (void)reparameterize(mu, Tensor::zeros({4, 2}), eps0), ShapeError);
}

TEST_CASE("reparameterize sample variance tracks exp(logvar) within 2%") {
  Rng rng(13);
  const double logvar = 0.8;
  const std::size_t n = 100000;
  Tensor mu = Tensor::full({n, 1}, 0.25);
  Tensor lv = Tensor::full({n, 1}, logvar);
  Tensor eps = standard_normal({n, 1}, rng);
  Tensor z = reparameterize(mu, lv, eps);
  double mean = 0.0;
  for (double v : z.values()) mean += v;
  mean /= double(n);
  double var = 0.0;
  for (double v : z.values()) var += (v - mean) * (v - mean);
  var /= double(n - 1);
  CHECK(std::abs(var - std::exp(logvar)) / std::exp(logvar) < 0.02);
}

TEST_CASE("log_normal_std closed-form values") {
  Tensor z1 = Tensor::zeros({1, 1});
  CHECK(log_normal_std(z1).at(0) == doctest::Approx(kLogStdNormAt0).epsilon(1e-12));
  Tensor z40 = Tensor::zeros({1, 40});
  CHECK(log_normal_std(z40).at(0) ==
        doctest::Approx(40.0 * kLogStdNormAt0).epsilon(1e-12));

  Rng rng(17);
  Tensor z = standard_normal({5, 7}, rng);
  Tensor a = log_normal_std(z);
  Tensor b = log_normal_diag(z, Tensor::zeros({5, 7}), Tensor::zeros({5, 7}));
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(a.at(i) == doctest::Approx(b.at(i)).epsilon(1e-13));
  }
}

TEST_CASE("log_normal_diag: peak value and monotonicity") {
  Tensor mu = Tensor::full({1, 1}, 0.3);
  Tensor lv = Tensor::zeros({1, 1});
  CHECK(log_normal_diag(mu, mu, lv).at(0) ==
        doctest::Approx(kLogStdNormAt0).epsilon(1e-12));

  double prev = log_normal_diag(mu, mu, lv).at(0);
  for (double d = 0.5; d < 3.0; d += 0.5) {
    Tensor z = Tensor::full({1, 1}, 0.3 + d);
    double cur = log_normal_diag(z, mu, lv).at(0);
    CHECK(cur < prev);
    prev = cur;
  }
}

TEST_CASE("log_normal_diag integrates to 1 by quadrature, M=1") {
  const double mu = 0.4, logvar = -0.6;
  Tensor mut = Tensor::full({1, 1}, mu);
  Tensor lvt = Tensor::full({1, 1}, logvar);
  const double sigma = std::exp(0.5 * logvar);
  const double lo = mu - 10.0 * sigma, hi = mu + 10.0 * sigma;
  const std::size_t n = 4000;  // Simpson, even count
  const double h = (hi - lo) / double(n);
  double acc = 0.0;
  for (std::size_t i = 0; i <= n; ++i) {
    double z = lo + double(i) * h;
    double f = std::exp(log_normal_diag(Tensor::full({1, 1}, z), mut, lvt).at(0));
    double w = (i == 0 || i == n) ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0);
    acc += w * f;
  }
  acc *= h / 3.0;
  CHECK(std::abs(acc - 1.0) < 1e-6);
}

TEST_CASE("log_bernoulli values and errors") {
  Tensor x1 = Tensor::from({1, 1}, {1.0});
  Tensor half = Tensor::full({1, 1}, 0.5);
  CHECK(log_bernoulli(x1, half).at(0) ==
        doctest::Approx(std::log(0.5)).epsilon(1e-14));

  // p = x clamped: the maximum, ~0
  Rng rng(19);
  Tensor x = random_binary({3, 8}, rng);
  Tensor p = clamp(x, 1e-7, 1.0 - 1e-7);
  Tensor best = log_bernoulli(x, p);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(std::abs(best.at(i)) < 1e-5);
    CHECK(best.at(i) <= 0.0);
  }

  CHECK_THROWS_AS((void)log_bernoulli(Tensor::full({1, 1}, 0.5), half),
                  DataError);
}

TEST_CASE("log_bernoulli gradient w.r.t. decoder logits") {
  Rng rng(23);
  Tensor x = random_binary({2, 5}, rng);
  Tensor logits = random_uniform({2, 5}, rng, -1.5, 1.5, true);
  auto f = [&]() {
    Tensor p = clamp(sigmoid(logits), 1e-7, 1.0 - 1e-7);
    return reduce_sum(log_bernoulli(x, p));
  };
  CHECK(grad_check(f, logits) < 1e-5);
}

TEST_CASE("log_gaussian_obs closed form and positive nats") {
  Rng rng(29);
  Tensor x = random_uniform({2, 6}, rng, 0.1, 0.9);
  Tensor lv0 = Tensor::zeros({2, 6});
  Tensor at_mean = log_gaussian_obs(x, x, lv0);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(at_mean.at(i) == doctest::Approx(6.0 * kLogStdNormAt0).epsilon(1e-12));
  }
  // tight variances make the density exceed 1: positive nats
  Tensor lv_small = Tensor::full({2, 6}, -7.0);
  Tensor sharp = log_gaussian_obs(x, x, lv_small);
  for (std::size_t i = 0; i < 2; ++i) CHECK(sharp.at(i) > 0.0);

  Tensor mean = random_uniform({2, 6}, rng, 0.2, 0.8, true);
  Tensor lv = random_uniform({2, 6}, rng, -1.0, 0.5, true);
  Tensor ps[] = {mean, lv};
  auto f = [&]() { return reduce_sum(log_gaussian_obs(x, mean, lv)); };
  CHECK(grad_check(f, ps) < 1e-4);
}

TEST_CASE("warmup_beta schedule") {
  CHECK(warmup_beta(200, 200) == 1.0);
  CHECK(warmup_beta(100, 200) == 0.5);
  CHECK(warmup_beta(5000, 200) == 1.0);
  CHECK(warmup_beta(1, 0) == 1.0);
  CHECK(warmup_beta(1, 200) == doctest::Approx(0.005));
  CHECK_THROWS_AS((void)warmup_beta(0, 200), DomainError);
}

TEST_CASE("elbo: prior-matched posterior has zero MC KL") {
  Rng rng(31);
  ModelConfig cfg = tiny_config(FlowKind::none);
  VaeModel model(cfg, rng);
  force_head_constant(model, "enc.mu", 0.0);
  force_head_constant(model, "enc.logvar", 0.0);
  NoGradGuard ng;
  double acc = 0.0;
  const int reps = 100;
  Tensor x = random_binary({1000, 6}, rng);
  for (int r = 0; r < reps; ++r) {
    ElboBreakdown eb = elbo(model, x, 1.0, rng);
    acc += eb.kl_mc;
  }
  CHECK(std::abs(acc / reps) <= 0.01);
}

TEST_CASE("elbo: volume-preserving flows contribute exactly zero log-det") {
  Rng rng(37);
  for (FlowKind kind :
       {FlowKind::ccliniaf, FlowKind::liniaf, FlowKind::householder}) {
    VaeModel model(tiny_config(kind), rng);
    NoGradGuard ng;
    Tensor x = random_binary({20, 6}, rng);
    ElboBreakdown eb = elbo(model, x, 1.0, rng);
    CHECK(eb.log_det_sum == 0.0);
  }
}

TEST_CASE("elbo: MC KL over 1e5 draws matches analytic KL within 1%") {
  Rng rng(41);
  ModelConfig cfg = tiny_config(FlowKind::none);
  VaeModel model(cfg, rng);
  const double mu = 0.7, logvar = -0.9;
  force_head_constant(model, "enc.mu", mu);
  force_head_constant(model, "enc.logvar", logvar);
  NoGradGuard ng;
  std::vector<double> mus(cfg.latent, mu), lvs(cfg.latent, logvar);
  double expected = oracles::analytic_kl(mus, lvs);
  double acc = 0.0;
  const int reps = 100;
  Tensor x = random_binary({1000, 6}, rng);
  for (int r = 0; r < reps; ++r) {
    acc += elbo(model, x, 1.0, rng).kl_mc;
  }
  double mc = acc / reps;
  CHECK(std::abs(mc - expected) / expected < 0.01);
}

TEST_CASE("elbo rejects beta outside [0,1]") {
  Rng rng(43);
  VaeModel model(tiny_config(FlowKind::none), rng);
  Tensor x = random_binary({2, 6}, rng);
  CHECK_THROWS_AS((void)elbo(model, x, 1.5, rng), DomainError);
}

TEST_CASE("full ccLinIAF ELBO gradient vs finite differences") {
  Rng rng(47);
  VaeModel model(tiny_config(FlowKind::ccliniaf), rng);
  Tensor x = random_binary({2, 6}, rng);
  Tensor eps = standard_normal({2, 3}, rng);
  std::vector<Tensor> params;
  for (const auto& [_, t] : model.params().items()) params.push_back(t);
  auto f = [&]() { return elbo_with_noise(model, x, 0.7, eps).objective; };
  CHECK(grad_check(f, params) < 1e-4);
}

TEST_CASE("elbo with ccliniaf K=1 equals liniaf bitwise") {
  Rng rng(53);
  ModelConfig lin_cfg = tiny_config(FlowKind::liniaf);
  VaeModel lin(lin_cfg, rng);
  ModelConfig cc_cfg = tiny_config(FlowKind::ccliniaf);
  cc_cfg.flow_k = 1;
  Rng rng2(999);
  VaeModel cc(cc_cfg, rng2);
  // identical parameter values on the shared names
  for (const auto& [name, src] : lin.params().items()) {
    Tensor dst = cc.params().find(name);
    std::memcpy(dst.values_mut().data(), src.values().data(),
                src.numel() * sizeof(double));
  }
  Tensor x = random_binary({5, 6}, rng);
  Tensor eps = standard_normal({5, 3}, rng);
  NoGradGuard ng;
  ElboBreakdown a = elbo_with_noise(lin, x, 1.0, eps);
  ElboBreakdown b = elbo_with_noise(cc, x, 1.0, eps);
  double av = a.elbo, bv = b.elbo;
  CHECK(std::memcmp(&av, &bv, sizeof(double)) == 0);
  for (std::size_t i = 0; i < a.per_example.numel(); ++i) {
    double x1 = a.per_example.values()[i], x2 = b.per_example.values()[i];
    CHECK(std::memcmp(&x1, &x2, sizeof(double)) == 0);
  }
}

namespace {

// ln p(x) for an M=1 model by Simpson quadrature over the latent.
double exact_log_evidence(const VaeModel& model,
                          const std::vector<double>& x_bits) {
  NoGradGuard ng;
  const double lo = -10.0, hi = 10.0;
  const std::size_t n = 4000;
  const double h = (hi - lo) / double(n);
  const std::size_t d = x_bits.size();
  double acc = 0.0;
  for (std::size_t i = 0; i <= n; ++i) {
    double z = lo + double(i) * h;
    VaeModel::Decoded dec = model.decode(Tensor::from({1, 1}, {z}));
    double log_lik = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      double p = dec.mean.at(0, j);
      log_lik += x_bits[j] == 1.0 ? std::log(p) : std::log(1.0 - p);
    }
    double log_prior = -0.5 * (std::log(2.0 * 3.14159265358979323846) + z * z);
    double f = std::exp(log_prior + log_lik);
    double w = (i == 0 || i == n) ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0);
    acc += w * f;
  }
  return std::log(acc * h / 3.0);
}

}  // namespace

TEST_CASE("evaluation ELBO is a lower bound on exact ln p(x), M=1 toy") {
  Rng rng(59);
  ModelConfig cfg;
  cfg.input_dim = 3;
  cfg.hidden = 4;
  cfg.latent = 1;
  cfg.flow = FlowKind::ccliniaf;
  cfg.flow_k = 2;  // M=1 has zero strictly-lower entries; exercises the edge
  VaeModel model(cfg, rng);
  NoGradGuard ng;

  const std::size_t samples = 10000;
  for (int pattern = 0; pattern < 8; ++pattern) {
    std::vector<double> bits = {double(pattern & 1), double((pattern >> 1) & 1),
                                double((pattern >> 2) & 1)};
    double exact = exact_log_evidence(model, bits);

    std::vector<double> row;
    for (std::size_t r = 0; r < samples; ++r) {
      row.insert(row.end(), bits.begin(), bits.end());
    }
    Tensor x = Tensor::from({samples, 3}, row);
    ElboBreakdown eb = elbo(model, x, 1.0, rng);
    double mean = 0.0;
    for (double v : eb.per_example.values()) mean += v;
    mean /= double(samples);
    double ss = 0.0;
    for (double v : eb.per_example.values()) ss += (v - mean) * (v - mean);
    double stderr_mean = std::sqrt(ss / double(samples - 1) / double(samples));
    CHECK(mean <= exact + 3.0 * stderr_mean);
  }
}
