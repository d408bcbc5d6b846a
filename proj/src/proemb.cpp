#include "proemb/proemb.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "json.hpp"

namespace proemb {

namespace {

constexpr double kLogvarClamp = 10.0;
constexpr double kProbClamp = 1e-7;

struct VaeStepResult {
  VaeLossValue loss;
  Mat zhat;  // sampled latents for this batch (pre-update parameters)
};

Mat clamp_logvar(const Mat& raw) {
  return raw.array().min(kLogvarClamp).max(-kLogvarClamp).matrix();
}

Mat clamp_mask(const Mat& raw) {
  return (raw.array().abs() < kLogvarClamp).cast<double>().matrix();
}

struct Optimizers {
  AdamState enc, mu, logvar, dec, disc;
};

// One VAE minibatch step: forward, losses, exact reverse-mode gradients
// through the reparameterization, Adam update of encoder + heads + decoder.
VaeStepResult vae_minibatch_step(ProEmbModel& model, Optimizers& opt, const Mat& Xs,
                                 RngStream& rng) {
  const Eigen::Index b = Xs.rows();
  const Eigen::Index d = model.d;
  const double width = static_cast<double>(Xs.cols());

  ForwardCache enc_cache = forward_cached(model.encoder, Xs);
  ForwardCache mu_cache = forward_cached(model.mu_head, enc_cache.output());
  ForwardCache lv_cache = forward_cached(model.logvar_head, enc_cache.output());
  const Mat& mu = mu_cache.output();
  const Mat lv = clamp_logvar(lv_cache.output());
  const Mat mask = clamp_mask(lv_cache.output());

  Mat eta(b, d);
  for (Eigen::Index i = 0; i < b; ++i) {
    for (Eigen::Index k = 0; k < d; ++k) eta(i, k) = rng.gaussian();
  }
  const Mat sd = (lv.array() * 0.5).exp().matrix();
  const Mat zhat = mu + sd.cwiseProduct(eta);

  ForwardCache dec_cache = forward_cached(model.decoder, zhat);
  const Mat& recon = dec_cache.output();

  VaeStepResult result;
  result.loss = vae_loss(Xs, recon, mu, lv);
  result.zhat = zhat;

  const double inv_b = 1.0 / static_cast<double>(b);
  Mat d_recon = (2.0 * inv_b / width) * (recon - Xs);
  Grads dec_grads = backward(model.decoder, dec_cache, d_recon);

  Mat d_mu = dec_grads.dX + inv_b * mu;
  Mat d_lv = dec_grads.dX.cwiseProduct(0.5 * sd.cwiseProduct(eta)) +
             (0.5 * inv_b) * (lv.array().exp() - 1.0).matrix();
  d_lv = d_lv.cwiseProduct(mask);

  Grads mu_grads = backward(model.mu_head, mu_cache, d_mu);
  Grads lv_grads = backward(model.logvar_head, lv_cache, d_lv);
  Grads enc_grads = backward(model.encoder, enc_cache, Mat(mu_grads.dX + lv_grads.dX));

  adam_step(model.encoder, enc_grads, opt.enc);
  adam_step(model.mu_head, mu_grads, opt.mu);
  adam_step(model.logvar_head, lv_grads, opt.logvar);
  adam_step(model.decoder, dec_grads, opt.dec);
  return result;
}

// Discriminator step: minimize class-balanced BCE of D(zhat) against labels;
// zhat is a constant here (no gradient into the encoder). The per-class
// weights (w0, w1) rescale both classes to an effective 50/50 prior, so the
// discriminator's no-information output is 0.5 — the fixed point the balance
// regularizer (D - 0.5)^2 drives toward. Without the reweighting, a skewed
// treated fraction would pull D's bias toward the base rate, and the balance
// gap would measure class imbalance instead of latent separability.
double disc_minibatch_step(ProEmbModel& model, Optimizers& opt, const Mat& zhat,
                           const Vec& labels, double w0, double w1) {
  const Eigen::Index b = zhat.rows();
  ForwardCache cache = forward_cached(model.discriminator, zhat);
  Vec p = cache.output().col(0).cwiseMax(kProbClamp).cwiseMin(1.0 - kProbClamp);
  double loss = 0.0;
  for (Eigen::Index i = 0; i < b; ++i) {
    const double w = labels[i] > 0.5 ? w1 : w0;
    loss -= w * (labels[i] * std::log(p[i]) + (1.0 - labels[i]) * std::log(1.0 - p[i]));
  }
  loss /= static_cast<double>(b);
  // Fused BCE-with-logits gradient at the final pre-activation.
  Mat d_pre = (p - labels) / static_cast<double>(b);
  for (Eigen::Index i = 0; i < b; ++i) {
    d_pre(i, 0) *= labels[i] > 0.5 ? w1 : w0;
  }
  Grads grads = backward_from_pre(model.discriminator, cache, d_pre);
  adam_step(model.discriminator, grads, opt.disc);
  return loss;
}

// Balance step: minimize lambda_rb * mean (D(zhat) - 0.5)^2 w.r.t. encoder
// and heads only; the discriminator is frozen (its gradients are discarded).
double balance_minibatch_step(ProEmbModel& model, Optimizers& opt, const Mat& Xs,
                              double lambda_rb, RngStream& rng) {
  const Eigen::Index b = Xs.rows();
  const Eigen::Index d = model.d;

  ForwardCache enc_cache = forward_cached(model.encoder, Xs);
  ForwardCache mu_cache = forward_cached(model.mu_head, enc_cache.output());
  ForwardCache lv_cache = forward_cached(model.logvar_head, enc_cache.output());
  const Mat& mu = mu_cache.output();
  const Mat lv = clamp_logvar(lv_cache.output());
  const Mat mask = clamp_mask(lv_cache.output());

  Mat eta(b, d);
  for (Eigen::Index i = 0; i < b; ++i) {
    for (Eigen::Index k = 0; k < d; ++k) eta(i, k) = rng.gaussian();
  }
  const Mat sd = (lv.array() * 0.5).exp().matrix();
  const Mat zhat = mu + sd.cwiseProduct(eta);

  ForwardCache disc_cache = forward_cached(model.discriminator, zhat);
  Vec p = disc_cache.output().col(0);
  const double inv_b = 1.0 / static_cast<double>(b);
  double loss = (p.array() - 0.5).square().mean();

  // d/dlogit of (p - 0.5)^2 is 2 (p - 0.5) p (1 - p).
  Mat d_pre = (2.0 * inv_b * (p.array() - 0.5) * p.array() * (1.0 - p.array())).matrix();
  Grads disc_grads = backward_from_pre(model.discriminator, disc_cache, d_pre);

  const Mat& d_zhat = disc_grads.dX;
  Mat d_mu = d_zhat;
  Mat d_lv = d_zhat.cwiseProduct(0.5 * sd.cwiseProduct(eta)).cwiseProduct(mask);

  Grads mu_grads = backward(model.mu_head, mu_cache, d_mu);
  Grads lv_grads = backward(model.logvar_head, lv_cache, d_lv);
  Grads enc_grads = backward(model.encoder, enc_cache, Mat(mu_grads.dX + lv_grads.dX));

  adam_step(model.encoder, enc_grads, opt.enc, lambda_rb);
  adam_step(model.mu_head, mu_grads, opt.mu, lambda_rb);
  adam_step(model.logvar_head, lv_grads, opt.logvar, lambda_rb);
  return loss;
}

double eval_balance_gap(const ProEmbModel& model, const Mat& Zstd_eval) {
  if (Zstd_eval.rows() == 0) return 0.0;
  ForwardCache enc_cache = forward_cached(model.encoder, Zstd_eval);
  Mat mu = model.mu_head.forward(enc_cache.output());
  Vec p = model.discriminator.forward(mu).col(0);
  return (p.array() - 0.5).abs().mean();
}

}  // namespace

void Standardizer::fit(const Mat& X) {
  const double n = static_cast<double>(X.rows());
  mean = X.colwise().mean().transpose();
  Vec var = (X.rowwise() - mean.transpose()).array().square().colwise().sum().transpose() / n;
  inv_std.resize(var.size());
  for (Eigen::Index c = 0; c < var.size(); ++c) {
    const double sd = std::sqrt(var[c]);
    inv_std[c] = sd > 0.0 ? 1.0 / sd : 0.0;  // constant columns drop to zero
  }
}

Mat Standardizer::transform(const Mat& X) const {
  if (X.cols() != mean.size()) throw std::invalid_argument("Standardizer: width mismatch");
  return ((X.rowwise() - mean.transpose()).array().rowwise() *
          inv_std.transpose().array())
      .matrix();
}

ProEmbModel make_proemb_model(int V, int d, RngStream& rng, int hidden, int disc_hidden) {
  if (V < 1 || d < 1) throw std::invalid_argument("make_proemb_model: need V >= 1, d >= 1");
  ProEmbModel model;
  model.V = V;
  model.d = d;
  const int width = 2 * V;
  model.encoder = make_net({width, hidden, hidden, hidden},
                           {Activation::ReLU, Activation::ReLU, Activation::ReLU}, rng);
  model.mu_head = make_net({hidden, d}, {Activation::Linear}, rng);
  model.logvar_head = make_net({hidden, d}, {Activation::Linear}, rng);
  model.decoder = make_net({d, hidden, hidden, hidden, width},
                           {Activation::ReLU, Activation::ReLU, Activation::ReLU,
                            Activation::Linear},
                           rng);
  model.discriminator = make_net(
      {d, disc_hidden, disc_hidden, disc_hidden, disc_hidden, 1},
      {Activation::Linear, Activation::Linear, Activation::Linear, Activation::Linear,
       Activation::Sigmoid},
      rng);
  return model;
}

std::pair<Mat, Mat> encode(const ProEmbModel& model, const Mat& Zstd) {
  if (Zstd.cols() != 2 * model.V) throw std::invalid_argument("encode: width mismatch");
  Mat h = model.encoder.forward(Zstd);
  return {model.mu_head.forward(h), clamp_logvar(model.logvar_head.forward(h))};
}

Mat sample_latent(const Mat& mu, const Mat& logvar, RngStream& rng) {
  if (mu.rows() != logvar.rows() || mu.cols() != logvar.cols()) {
    throw std::invalid_argument("sample_latent: shape mismatch");
  }
  Mat eta(mu.rows(), mu.cols());
  for (Eigen::Index i = 0; i < eta.rows(); ++i) {
    for (Eigen::Index k = 0; k < eta.cols(); ++k) eta(i, k) = rng.gaussian();
  }
  return sample_latent_with(mu, logvar, eta);
}

Mat sample_latent_with(const Mat& mu, const Mat& logvar, const Mat& eta) {
  return mu + ((logvar.array() * 0.5).exp() * eta.array()).matrix();
}

Mat decode(const ProEmbModel& model, const Mat& Zhat) {
  if (Zhat.cols() != model.d) throw std::invalid_argument("decode: width mismatch");
  return model.decoder.forward(Zhat);
}

Vec discriminate(const ProEmbModel& model, const Mat& Zhat) {
  return model.discriminator.forward(Zhat).col(0);
}

VaeLossValue vae_loss(const Mat& Zstd, const Mat& recon, const Mat& mu, const Mat& logvar) {
  if (Zstd.rows() != recon.rows() || Zstd.cols() != recon.cols() ||
      mu.rows() != Zstd.rows() || mu.cols() != logvar.cols() || mu.rows() != logvar.rows()) {
    throw std::invalid_argument("vae_loss: shape mismatch");
  }
  const double b = static_cast<double>(Zstd.rows());
  const double width = static_cast<double>(Zstd.cols());
  VaeLossValue loss;
  loss.recon = (recon - Zstd).array().square().sum() / (b * width);
  loss.kl = 0.5 *
            (logvar.array().exp() + mu.array().square() - 1.0 - logvar.array()).sum() / b;
  loss.total = loss.recon + loss.kl;
  return loss;
}

double disc_loss(const ProEmbModel& model, const Mat& Zhat, const std::vector<int>& labels) {
  if (static_cast<Eigen::Index>(labels.size()) != Zhat.rows()) {
    throw std::invalid_argument("disc_loss: label count mismatch");
  }
  Vec p = discriminate(model, Zhat).cwiseMax(kProbClamp).cwiseMin(1.0 - kProbClamp);
  double loss = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    const double y = labels[static_cast<std::size_t>(i)];
    loss -= y * std::log(p[i]) + (1.0 - y) * std::log(1.0 - p[i]);
  }
  return loss / static_cast<double>(p.size());
}

double balance_loss(const ProEmbModel& model, const Mat& Zhat) {
  Vec p = discriminate(model, Zhat);
  return (p.array() - 0.5).square().mean();
}

void train(ProEmbModel& model, const Mat& Ztilde_raw, const std::vector<int>& treat,
           const TrainConfig& config, RngStream& rng) {
  const Eigen::Index n = Ztilde_raw.rows();
  if (static_cast<Eigen::Index>(treat.size()) != n) {
    throw std::invalid_argument("train: treat length mismatch");
  }
  if (Ztilde_raw.cols() != 2 * model.V) throw std::invalid_argument("train: width mismatch");
  if (config.epochs < 1 || config.batch < 1 || config.lambda_rb < 0.0) {
    throw std::invalid_argument("train: invalid config");
  }

  model.standardizer.fit(Ztilde_raw);
  Mat Zstd = model.standardizer.transform(Ztilde_raw);

  const int n_pos = static_cast<int>(std::accumulate(treat.begin(), treat.end(), 0));
  model.degenerate_labels = (n_pos == 0 || n_pos == static_cast<int>(n));
  const bool adversarial = config.lambda_rb > 0.0 && !model.degenerate_labels;
  // Panel-level class weights normalizing the discriminator's prior to 50/50.
  double w0 = 1.0, w1 = 1.0;
  if (!model.degenerate_labels) {
    w1 = static_cast<double>(n) / (2.0 * static_cast<double>(n_pos));
    w0 = static_cast<double>(n) / (2.0 * static_cast<double>(n - n_pos));
  }

  // Held-out slice used only for the balance trace.
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  rng.shuffle(order);
  Eigen::Index n_eval = static_cast<Eigen::Index>(config.eval_fraction * static_cast<double>(n));
  if (n_eval >= n) n_eval = n - 1;
  std::vector<Eigen::Index> eval_idx(order.begin(), order.begin() + n_eval);
  std::vector<Eigen::Index> train_idx(order.begin() + n_eval, order.end());

  Mat Zeval(n_eval, Zstd.cols());
  for (Eigen::Index i = 0; i < n_eval; ++i) Zeval.row(i) = Zstd.row(eval_idx[static_cast<std::size_t>(i)]);

  Optimizers opt{make_adam(model.encoder, config.lr), make_adam(model.mu_head, config.lr),
                 make_adam(model.logvar_head, config.lr), make_adam(model.decoder, config.lr),
                 make_adam(model.discriminator, config.lr)};

  model.trace.clear();
  {  // epoch-0 entry: held-out balance gap of the untrained model
    EpochStats init;
    init.eval_balance_gap = eval_balance_gap(model, Zeval);
    model.trace.push_back(init);
  }
  const Eigen::Index n_train = static_cast<Eigen::Index>(train_idx.size());
  Mat Xs;
  Vec batch_labels;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(train_idx);
    EpochStats stats;
    double seen = 0.0;
    int disc_batches = 0;
    for (Eigen::Index start = 0; start < n_train; start += config.batch) {
      const Eigen::Index b = std::min<Eigen::Index>(config.batch, n_train - start);
      Xs.resize(b, Zstd.cols());
      batch_labels.resize(b);
      for (Eigen::Index i = 0; i < b; ++i) {
        const Eigen::Index row = train_idx[static_cast<std::size_t>(start + i)];
        Xs.row(i) = Zstd.row(row);
        batch_labels[i] = treat[static_cast<std::size_t>(row)];
      }
      VaeStepResult vae = vae_minibatch_step(model, opt, Xs, rng);
      stats.vae_total += vae.loss.total * static_cast<double>(b);
      stats.recon += vae.loss.recon * static_cast<double>(b);
      stats.kl += vae.loss.kl * static_cast<double>(b);
      seen += static_cast<double>(b);
      if (adversarial) {
        stats.disc += disc_minibatch_step(model, opt, vae.zhat, batch_labels, w0, w1);
        stats.balance += balance_minibatch_step(model, opt, Xs, config.lambda_rb, rng);
        ++disc_batches;
      }
    }
    stats.vae_total /= seen;
    stats.recon /= seen;
    stats.kl /= seen;
    if (disc_batches > 0) {
      stats.disc /= disc_batches;
      stats.balance /= disc_batches;
    }
    stats.eval_balance_gap = eval_balance_gap(model, Zeval);
    model.trace.push_back(stats);
  }
  model.trained = true;
}

void train_vae_only(ProEmbModel& model, const Mat& Ztilde_raw, const TrainConfig& config,
                    RngStream& rng) {
  const Eigen::Index n = Ztilde_raw.rows();
  if (Ztilde_raw.cols() != 2 * model.V) {
    throw std::invalid_argument("train_vae_only: width mismatch");
  }
  model.standardizer.fit(Ztilde_raw);
  Mat Zstd = model.standardizer.transform(Ztilde_raw);

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  rng.shuffle(order);
  Eigen::Index n_eval = static_cast<Eigen::Index>(config.eval_fraction * static_cast<double>(n));
  if (n_eval >= n) n_eval = n - 1;
  std::vector<Eigen::Index> eval_idx(order.begin(), order.begin() + n_eval);
  std::vector<Eigen::Index> train_idx(order.begin() + n_eval, order.end());

  Mat Zeval(n_eval, Zstd.cols());
  for (Eigen::Index i = 0; i < n_eval; ++i) {
    Zeval.row(i) = Zstd.row(eval_idx[static_cast<std::size_t>(i)]);
  }

  Optimizers opt{make_adam(model.encoder, config.lr), make_adam(model.mu_head, config.lr),
                 make_adam(model.logvar_head, config.lr), make_adam(model.decoder, config.lr),
                 make_adam(model.discriminator, config.lr)};

  model.trace.clear();
  {
    EpochStats init;
    init.eval_balance_gap = eval_balance_gap(model, Zeval);
    model.trace.push_back(init);
  }
  const Eigen::Index n_train = static_cast<Eigen::Index>(train_idx.size());
  Mat Xs;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(train_idx);
    EpochStats stats;
    double seen = 0.0;
    for (Eigen::Index start = 0; start < n_train; start += config.batch) {
      const Eigen::Index b = std::min<Eigen::Index>(config.batch, n_train - start);
      Xs.resize(b, Zstd.cols());
      for (Eigen::Index i = 0; i < b; ++i) {
        Xs.row(i) = Zstd.row(train_idx[static_cast<std::size_t>(start + i)]);
      }
      VaeStepResult vae = vae_minibatch_step(model, opt, Xs, rng);
      stats.vae_total += vae.loss.total * static_cast<double>(b);
      stats.recon += vae.loss.recon * static_cast<double>(b);
      stats.kl += vae.loss.kl * static_cast<double>(b);
      seen += static_cast<double>(b);
    }
    stats.vae_total /= seen;
    stats.recon /= seen;
    stats.kl /= seen;
    stats.eval_balance_gap = eval_balance_gap(model, Zeval);
    model.trace.push_back(stats);
  }
  model.trained = true;
}

Mat embed(const ProEmbModel& model, const Mat& Ztilde_raw) {
  if (!model.trained) throw std::runtime_error("embed: model is not trained");
  Mat Zstd = model.standardizer.transform(Ztilde_raw);
  return model.mu_head.forward(model.encoder.forward(Zstd));
}

Mat embed_sampled(const ProEmbModel& model, const Mat& Ztilde_raw, RngStream& rng) {
  if (!model.trained) throw std::runtime_error("embed_sampled: model is not trained");
  Mat Zstd = model.standardizer.transform(Ztilde_raw);
  auto [mu, logvar] = encode(model, Zstd);
  return sample_latent(mu, logvar, rng);
}

void save_proemb(const ProEmbModel& model, const std::string& dir, std::uint64_t seed,
                 const TrainConfig& config) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  save_net(model.encoder, dir + "/encoder.json");
  save_net(model.mu_head, dir + "/mu_head.json");
  save_net(model.logvar_head, dir + "/logvar_head.json");
  save_net(model.decoder, dir + "/decoder.json");
  save_net(model.discriminator, dir + "/discriminator.json");

  nlohmann::json side;
  side["d"] = model.d;
  side["V"] = model.V;
  side["lambda_rb"] = config.lambda_rb;
  side["epochs"] = config.epochs;
  side["seed"] = seed;
  side["trained"] = model.trained;
  side["standardizer"] = {
      {"mean", std::vector<double>(model.standardizer.mean.data(),
                                   model.standardizer.mean.data() + model.standardizer.mean.size())},
      {"inv_std", std::vector<double>(model.standardizer.inv_std.data(),
                                      model.standardizer.inv_std.data() +
                                          model.standardizer.inv_std.size())}};
  nlohmann::json trace = nlohmann::json::array();
  for (const auto& s : model.trace) {
    trace.push_back({{"vae_total", s.vae_total},
                     {"recon", s.recon},
                     {"kl", s.kl},
                     {"disc", s.disc},
                     {"balance", s.balance},
                     {"eval_balance_gap", s.eval_balance_gap}});
  }
  side["loss_trace"] = std::move(trace);
  std::ofstream out(dir + "/sidecar.json");
  if (!out) throw std::runtime_error("save_proemb: cannot open sidecar");
  out << side.dump(2) << "\n";
}

ProEmbModel load_proemb(const std::string& dir) {
  ProEmbModel model;
  model.encoder = load_net(dir + "/encoder.json");
  model.mu_head = load_net(dir + "/mu_head.json");
  model.logvar_head = load_net(dir + "/logvar_head.json");
  model.decoder = load_net(dir + "/decoder.json");
  model.discriminator = load_net(dir + "/discriminator.json");

  std::ifstream in(dir + "/sidecar.json");
  if (!in) throw std::runtime_error("load_proemb: cannot open sidecar");
  nlohmann::json side = nlohmann::json::parse(in);
  model.d = side.at("d").get<int>();
  model.V = side.at("V").get<int>();
  model.trained = side.at("trained").get<bool>();
  const auto mean = side.at("standardizer").at("mean").get<std::vector<double>>();
  const auto inv_std = side.at("standardizer").at("inv_std").get<std::vector<double>>();
  model.standardizer.mean = Eigen::Map<const Vec>(mean.data(), static_cast<Eigen::Index>(mean.size()));
  model.standardizer.inv_std =
      Eigen::Map<const Vec>(inv_std.data(), static_cast<Eigen::Index>(inv_std.size()));
  for (const auto& js : side.at("loss_trace")) {
    EpochStats s;
    s.vae_total = js.at("vae_total").get<double>();
    s.recon = js.at("recon").get<double>();
    s.kl = js.at("kl").get<double>();
    s.disc = js.at("disc").get<double>();
    s.balance = js.at("balance").get<double>();
    s.eval_balance_gap = js.at("eval_balance_gap").get<double>();
    model.trace.push_back(s);
  }
  return model;
}

}  // namespace proemb
