#pragma once

#include <string>
#include <utility>
#include <vector>

#include "proemb/neural.hpp"
#include "proemb/numerics.hpp"

namespace proemb {

/// Column standardizer: zero mean, unit variance; constant columns map to
/// zero rather than dividing by zero.
struct Standardizer {
  Vec mean;
  Vec inv_std;
  void fit(const Mat& X);
  Mat transform(const Mat& X) const;
};

struct TrainConfig {
  double lr = 1e-3;
  int epochs = 50;
  double lambda_rb = 1.0;  // balance-loss weight against L_vae
  int batch = 128;
  int d = 20;  // latent dimension
  double eval_fraction = 0.1;  // held out for the balance trace only
  bool label_is_ego_prev = false;  // discriminator label: T_i (default) or Y_{i,t-1}
};

struct EpochStats {
  double vae_total = 0.0;
  double recon = 0.0;
  double kl = 0.0;
  double disc = 0.0;
  double balance = 0.0;
  double eval_balance_gap = 0.0;  // held-out mean |D(Zhat) - 0.5|
};

struct ProEmbModel {
  DenseNet encoder;        // 2V -> 100 -> 100 -> 100, ReLU
  DenseNet mu_head;        // affine 100 -> d
  DenseNet logvar_head;    // affine 100 -> d
  DenseNet decoder;        // d -> 100 -> 100 -> 100 -> 2V, ReLU hidden, Linear out
  DenseNet discriminator;  // d -> 4 linear hidden layers -> sigmoid scalar
  Standardizer standardizer;
  int d = 0;
  int V = 0;  // Ztilde width is 2V
  bool trained = false;
  bool degenerate_labels = false;  // all-treated/all-control panel seen in train()
  std::vector<EpochStats> trace;
};

ProEmbModel make_proemb_model(int V, int d, RngStream& rng, int hidden = 100,
                              int disc_hidden = 100);

/// (mu, logvar) for a standardized batch; logvar clamped to [-10, 10].
std::pair<Mat, Mat> encode(const ProEmbModel& model, const Mat& Zstd);

/// Reparameterized draw Zhat = mu + exp(logvar/2) .* eta, eta ~ N(0, I).
Mat sample_latent(const Mat& mu, const Mat& logvar, RngStream& rng);
Mat sample_latent_with(const Mat& mu, const Mat& logvar, const Mat& eta);

Mat decode(const ProEmbModel& model, const Mat& Zhat);

/// Discriminator probabilities D(Zhat) in (0, 1).
Vec discriminate(const ProEmbModel& model, const Mat& Zhat);

struct VaeLossValue {
  double total = 0.0;
  double recon = 0.0;  // (1/b) sum_i ||recon_i - x_i||^2 / (2V)
  double kl = 0.0;     // (1/b) sum_i 0.5 sum_k (exp(lv) + mu^2 - 1 - lv)
};

VaeLossValue vae_loss(const Mat& Zstd, const Mat& recon, const Mat& mu, const Mat& logvar);

/// Mean binary cross-entropy of D(Zhat) against labels.
double disc_loss(const ProEmbModel& model, const Mat& Zhat, const std::vector<int>& labels);

/// Mean squared deviation of discriminator outputs from 0.5.
double balance_loss(const ProEmbModel& model, const Mat& Zhat);

/// Per minibatch: VAE step, discriminator step (class-weighted BCE so the
/// no-information optimum is D = 0.5 even under skewed labels), encoder
/// balance step. lambda_rb = 0 skips the adversarial steps entirely (and
/// their rng draws), so it is bit-identical to a plain VAE run.
void train(ProEmbModel& model, const Mat& Ztilde_raw, const std::vector<int>& treat,
           const TrainConfig& config, RngStream& rng);

/// Plain VAE training loop with no discriminator involvement at all; the
/// lambda_rb = 0 ablation of train() must match this bit-for-bit.
void train_vae_only(ProEmbModel& model, const Mat& Ztilde_raw, const TrainConfig& config,
                    RngStream& rng);

/// Deterministic posterior mean mu(Ztilde); no sampling at inference.
Mat embed(const ProEmbModel& model, const Mat& Ztilde_raw);
/// Sampled embedding variant (flagged alternative to the posterior mean).
Mat embed_sampled(const ProEmbModel& model, const Mat& Ztilde_raw, RngStream& rng);

void save_proemb(const ProEmbModel& model, const std::string& dir, std::uint64_t seed,
                 const TrainConfig& config);
ProEmbModel load_proemb(const std::string& dir);

}  // namespace proemb
