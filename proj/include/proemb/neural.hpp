#pragma once

#include <string>
#include <vector>

#include "proemb/numerics.hpp"

namespace proemb {

enum class Activation { ReLU, Linear, Sigmoid };

struct Layer {
  Mat W;  // out x in
  Vec b;  // out
  Activation act = Activation::Linear;
};

/// Feed-forward stack of affine layers. Inputs and activations are
/// batch x dim row blocks; forward computes act(X W' + b) layer by layer.
struct DenseNet {
  std::vector<Layer> layers;

  int in_dim() const { return static_cast<int>(layers.front().W.cols()); }
  int out_dim() const { return static_cast<int>(layers.back().W.rows()); }
  std::size_t param_count() const;

  Mat forward(const Mat& X) const;
};

struct ForwardCache {
  Mat input;
  std::vector<Mat> pre;   // pre-activations per layer
  std::vector<Mat> post;  // activations per layer
  const Mat& output() const { return post.back(); }
};

struct Grads {
  std::vector<Mat> dW;
  std::vector<Vec> db;
  Mat dX;  // gradient w.r.t. the network input
};

ForwardCache forward_cached(const DenseNet& net, const Mat& X);

/// Reverse-mode gradients; dOut is the loss gradient at the final
/// activation output.
Grads backward(const DenseNet& net, const ForwardCache& cache, const Mat& dOut);

/// Same, but the gradient is supplied at the final pre-activation (fused
/// losses such as BCE-with-logits land here).
Grads backward_from_pre(const DenseNet& net, const ForwardCache& cache, const Mat& dPreLast);

struct AdamState {
  std::vector<Mat> mW, vW;
  std::vector<Vec> mb, vb;
  long step = 0;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

AdamState make_adam(const DenseNet& net, double lr);

/// Bias-corrected Adam update; `scale` multiplies the gradients (loss
/// weights such as lambda_rb).
void adam_step(DenseNet& net, const Grads& grads, AdamState& state, double scale = 1.0);

/// He-uniform init for ReLU layers, Xavier-uniform for Linear/Sigmoid,
/// zero biases.
DenseNet make_net(const std::vector<int>& dims, const std::vector<Activation>& acts,
                  RngStream& rng);

/// Flat parameter access (tests, finite-difference checks, checkpoints).
Vec get_params(const DenseNet& net);
void set_params(DenseNet& net, const Vec& flat);
Vec flatten_grads(const Grads& grads);

/// JSON checkpoint with shapes + row-major values; round-trips bit-exactly.
std::string net_to_json(const DenseNet& net);
DenseNet net_from_json(const std::string& text);
void save_net(const DenseNet& net, const std::string& path);
DenseNet load_net(const std::string& path);

}  // namespace proemb
