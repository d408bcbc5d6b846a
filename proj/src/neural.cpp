#include "proemb/neural.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace proemb {

namespace {

Mat apply_activation(const Mat& pre, Activation act) {
  switch (act) {
    case Activation::ReLU:
      return pre.cwiseMax(0.0);
    case Activation::Linear:
      return pre;
    case Activation::Sigmoid:
      return pre.unaryExpr([](double x) { return sigmoid(x); });
  }
  throw std::logic_error("unknown activation");
}

// d(post)/d(pre) elementwise, given both.
Mat activation_grad(const Mat& pre, const Mat& post, Activation act) {
  switch (act) {
    case Activation::ReLU:
      return (pre.array() > 0.0).cast<double>().matrix();
    case Activation::Linear:
      return Mat::Ones(pre.rows(), pre.cols());
    case Activation::Sigmoid:
      return (post.array() * (1.0 - post.array())).matrix();
  }
  throw std::logic_error("unknown activation");
}

Grads backward_impl(const DenseNet& net, const ForwardCache& cache, Mat delta,
                    bool last_is_pre) {
  const std::size_t L = net.layers.size();
  if (cache.pre.size() != L) throw std::invalid_argument("backward: stale or mismatched cache");
  Grads g;
  g.dW.resize(L);
  g.db.resize(L);
  for (std::size_t li = L; li-- > 0;) {
    const Layer& layer = net.layers[li];
    if (!(li == L - 1 && last_is_pre)) {
      delta = delta.cwiseProduct(activation_grad(cache.pre[li], cache.post[li], layer.act));
    }
    const Mat& layer_in = li == 0 ? cache.input : cache.post[li - 1];
    g.dW[li].noalias() = delta.transpose() * layer_in;
    g.db[li] = delta.colwise().sum().transpose();
    if (li > 0) {
      delta = delta * layer.W;
    } else {
      g.dX.noalias() = delta * layer.W;
    }
  }
  return g;
}

}  // namespace

std::size_t DenseNet::param_count() const {
  std::size_t c = 0;
  for (const auto& l : layers) c += static_cast<std::size_t>(l.W.size() + l.b.size());
  return c;
}

Mat DenseNet::forward(const Mat& X) const {
  Mat h = X;
  for (const auto& layer : layers) {
    if (h.cols() != layer.W.cols()) throw std::invalid_argument("forward: shape mismatch");
    Mat pre = (h * layer.W.transpose()).rowwise() + layer.b.transpose();
    h = apply_activation(pre, layer.act);
  }
  return h;
}

ForwardCache forward_cached(const DenseNet& net, const Mat& X) {
  ForwardCache cache;
  cache.input = X;
  cache.pre.reserve(net.layers.size());
  cache.post.reserve(net.layers.size());
  const Mat* h = &cache.input;
  for (const auto& layer : net.layers) {
    if (h->cols() != layer.W.cols()) throw std::invalid_argument("forward: shape mismatch");
    cache.pre.push_back((*h * layer.W.transpose()).rowwise() + layer.b.transpose());
    cache.post.push_back(apply_activation(cache.pre.back(), layer.act));
    h = &cache.post.back();
  }
  return cache;
}

Grads backward(const DenseNet& net, const ForwardCache& cache, const Mat& dOut) {
  return backward_impl(net, cache, dOut, false);
}

Grads backward_from_pre(const DenseNet& net, const ForwardCache& cache, const Mat& dPreLast) {
  return backward_impl(net, cache, dPreLast, true);
}

AdamState make_adam(const DenseNet& net, double lr) {
  AdamState st;
  st.lr = lr;
  for (const auto& layer : net.layers) {
    st.mW.push_back(Mat::Zero(layer.W.rows(), layer.W.cols()));
    st.vW.push_back(Mat::Zero(layer.W.rows(), layer.W.cols()));
    st.mb.push_back(Vec::Zero(layer.b.size()));
    st.vb.push_back(Vec::Zero(layer.b.size()));
  }
  return st;
}

void adam_step(DenseNet& net, const Grads& grads, AdamState& state, double scale) {
  if (grads.dW.size() != net.layers.size()) {
    throw std::invalid_argument("adam_step: gradient/parameter mismatch");
  }
  state.step += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  // m_hat = m / bc1, v_hat = v / bc2, p -= lr * m_hat / (sqrt(v_hat) + eps)
  for (std::size_t li = 0; li < net.layers.size(); ++li) {
    {
      Mat grad = scale * grads.dW[li];
      state.mW[li] = state.beta1 * state.mW[li] + (1.0 - state.beta1) * grad;
      state.vW[li] = (state.beta2 * state.vW[li].array() +
                      (1.0 - state.beta2) * grad.array().square())
                         .matrix();
      net.layers[li].W.array() -=
          state.lr * (state.mW[li].array() / bc1) /
          ((state.vW[li].array() / bc2).sqrt() + state.eps);
    }
    {
      Vec grad = scale * grads.db[li];
      state.mb[li] = state.beta1 * state.mb[li] + (1.0 - state.beta1) * grad;
      state.vb[li] = (state.beta2 * state.vb[li].array() +
                      (1.0 - state.beta2) * grad.array().square())
                         .matrix();
      net.layers[li].b.array() -=
          state.lr * (state.mb[li].array() / bc1) /
          ((state.vb[li].array() / bc2).sqrt() + state.eps);
    }
  }
}

DenseNet make_net(const std::vector<int>& dims, const std::vector<Activation>& acts,
                  RngStream& rng) {
  if (dims.size() < 2 || acts.size() != dims.size() - 1) {
    throw std::invalid_argument("make_net: dims/activations mismatch");
  }
  DenseNet net;
  for (std::size_t li = 0; li + 1 < dims.size(); ++li) {
    const int fan_in = dims[li];
    const int fan_out = dims[li + 1];
    const double limit = acts[li] == Activation::ReLU
                             ? std::sqrt(6.0 / fan_in)
                             : std::sqrt(6.0 / (fan_in + fan_out));
    Layer layer;
    layer.W.resize(fan_out, fan_in);
    for (int r = 0; r < fan_out; ++r) {
      for (int c = 0; c < fan_in; ++c) {
        layer.W(r, c) = (2.0 * rng.uniform01() - 1.0) * limit;
      }
    }
    layer.b = Vec::Zero(fan_out);
    layer.act = acts[li];
    net.layers.push_back(std::move(layer));
  }
  return net;
}

Vec get_params(const DenseNet& net) {
  Vec flat(static_cast<Eigen::Index>(net.param_count()));
  Eigen::Index pos = 0;
  for (const auto& layer : net.layers) {
    for (Eigen::Index r = 0; r < layer.W.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.W.cols(); ++c) flat[pos++] = layer.W(r, c);
    }
    for (Eigen::Index k = 0; k < layer.b.size(); ++k) flat[pos++] = layer.b[k];
  }
  return flat;
}

void set_params(DenseNet& net, const Vec& flat) {
  if (flat.size() != static_cast<Eigen::Index>(net.param_count())) {
    throw std::invalid_argument("set_params: size mismatch");
  }
  Eigen::Index pos = 0;
  for (auto& layer : net.layers) {
    for (Eigen::Index r = 0; r < layer.W.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.W.cols(); ++c) layer.W(r, c) = flat[pos++];
    }
    for (Eigen::Index k = 0; k < layer.b.size(); ++k) layer.b[k] = flat[pos++];
  }
}

Vec flatten_grads(const Grads& grads) {
  Eigen::Index total = 0;
  for (std::size_t li = 0; li < grads.dW.size(); ++li) {
    total += grads.dW[li].size() + grads.db[li].size();
  }
  Vec flat(total);
  Eigen::Index pos = 0;
  for (std::size_t li = 0; li < grads.dW.size(); ++li) {
    const Mat& dW = grads.dW[li];
    for (Eigen::Index r = 0; r < dW.rows(); ++r) {
      for (Eigen::Index c = 0; c < dW.cols(); ++c) flat[pos++] = dW(r, c);
    }
    for (Eigen::Index k = 0; k < grads.db[li].size(); ++k) flat[pos++] = grads.db[li][k];
  }
  return flat;
}

namespace {

const char* act_name(Activation a) {
  switch (a) {
    case Activation::ReLU:
      return "relu";
    case Activation::Linear:
      return "linear";
    case Activation::Sigmoid:
      return "sigmoid";
  }
  return "linear";
}

Activation act_from_name(const std::string& s) {
  if (s == "relu") return Activation::ReLU;
  if (s == "linear") return Activation::Linear;
  if (s == "sigmoid") return Activation::Sigmoid;
  throw std::invalid_argument("unknown activation name: " + s);
}

}  // namespace

std::string net_to_json(const DenseNet& net) {
  nlohmann::json doc;
  doc["layers"] = nlohmann::json::array();
  for (const auto& layer : net.layers) {
    nlohmann::json jl;
    jl["out"] = layer.W.rows();
    jl["in"] = layer.W.cols();
    jl["act"] = act_name(layer.act);
    std::vector<double> w;
    w.reserve(static_cast<std::size_t>(layer.W.size()));
    for (Eigen::Index r = 0; r < layer.W.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.W.cols(); ++c) w.push_back(layer.W(r, c));
    }
    jl["W"] = w;
    jl["b"] = std::vector<double>(layer.b.data(), layer.b.data() + layer.b.size());
    doc["layers"].push_back(std::move(jl));
  }
  return doc.dump();
}

DenseNet net_from_json(const std::string& text) {
  nlohmann::json doc = nlohmann::json::parse(text);
  DenseNet net;
  for (const auto& jl : doc.at("layers")) {
    Layer layer;
    const Eigen::Index out = jl.at("out").get<Eigen::Index>();
    const Eigen::Index in = jl.at("in").get<Eigen::Index>();
    layer.act = act_from_name(jl.at("act").get<std::string>());
    const auto w = jl.at("W").get<std::vector<double>>();
    const auto b = jl.at("b").get<std::vector<double>>();
    if (static_cast<Eigen::Index>(w.size()) != out * in ||
        static_cast<Eigen::Index>(b.size()) != out) {
      throw std::invalid_argument("net_from_json: shape mismatch");
    }
    layer.W.resize(out, in);
    std::size_t pos = 0;
    for (Eigen::Index r = 0; r < out; ++r) {
      for (Eigen::Index c = 0; c < in; ++c) layer.W(r, c) = w[pos++];
    }
    layer.b = Eigen::Map<const Vec>(b.data(), out);
    net.layers.push_back(std::move(layer));
  }
  return net;
}

void save_net(const DenseNet& net, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_net: cannot open " + path);
  out << net_to_json(net);
}

DenseNet load_net(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_net: cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return net_from_json(buf.str());
}

}  // namespace proemb
