#include "proemb/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <sstream>

#include "json.hpp"
#include "proemb/neural.hpp"
#include "proemb/proemb.hpp"

namespace proemb {

namespace {

// ---------------------------------------------------------------------------
// Depth-limited regression tree with exact greedy splits on sorted feature
// values. Split finding is level-wise over presorted feature orders so a
// whole level costs O(p * n).

struct TreeNode {
  int feature = -1;
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double value = 0.0;
  bool is_leaf() const { return feature < 0; }
};

struct Presorted {
  // sorted[f] holds sample indices ordered by feature f.
  std::vector<std::vector<int>> sorted;

  static Presorted build(const Mat& X) {
    Presorted ps;
    const int n = static_cast<int>(X.rows());
    const int p = static_cast<int>(X.cols());
    ps.sorted.resize(static_cast<std::size_t>(p));
    for (int f = 0; f < p; ++f) {
      auto& ord = ps.sorted[static_cast<std::size_t>(f)];
      ord.resize(static_cast<std::size_t>(n));
      std::iota(ord.begin(), ord.end(), 0);
      std::sort(ord.begin(), ord.end(),
                [&X, f](int a, int b) { return X(a, f) < X(b, f); });
    }
    return ps;
  }
};

class RegressionTree {
 public:
  void fit(const Mat& X, const Vec& y, const Presorted& presorted, int max_depth) {
    const int n = static_cast<int>(X.rows());
    const int p = static_cast<int>(X.cols());
    nodes_.clear();
    nodes_.push_back({});
    std::vector<int> node_of(static_cast<std::size_t>(n), 0);

    struct LeafStats {
      int node = 0;
      double count = 0.0;
      double sum = 0.0;
    };

    std::vector<int> active = {0};
    {
      double s = 0.0;
      for (int i = 0; i < n; ++i) s += y[i];
      nodes_[0].value = s / n;
    }

    for (int depth = 0; depth < max_depth && !active.empty(); ++depth) {
      // Compact slot per active leaf.
      std::vector<int> slot_of_node(nodes_.size(), -1);
      std::vector<LeafStats> totals(active.size());
      for (std::size_t s = 0; s < active.size(); ++s) {
        slot_of_node[static_cast<std::size_t>(active[s])] = static_cast<int>(s);
        totals[s].node = active[s];
      }
      for (int i = 0; i < n; ++i) {
        const int slot = slot_of_node[static_cast<std::size_t>(node_of[static_cast<std::size_t>(i)])];
        if (slot < 0) continue;
        totals[static_cast<std::size_t>(slot)].count += 1.0;
        totals[static_cast<std::size_t>(slot)].sum += y[i];
      }

      const std::size_t L = active.size();
      std::vector<double> best_gain(L, 0.0);
      std::vector<int> best_feature(L, -1);
      std::vector<double> best_threshold(L, 0.0);

      std::vector<double> cnt_left(L), sum_left(L), last_value(L);
      std::vector<bool> started(L);
      for (int f = 0; f < p; ++f) {
        std::fill(cnt_left.begin(), cnt_left.end(), 0.0);
        std::fill(sum_left.begin(), sum_left.end(), 0.0);
        std::fill(started.begin(), started.end(), false);
        for (int i : presorted.sorted[static_cast<std::size_t>(f)]) {
          const int slot = slot_of_node[static_cast<std::size_t>(node_of[static_cast<std::size_t>(i)])];
          if (slot < 0) continue;
          const std::size_t s = static_cast<std::size_t>(slot);
          const double v = X(i, f);
          if (started[s] && v > last_value[s] && cnt_left[s] > 0.0) {
            const double cl = cnt_left[s];
            const double cr = totals[s].count - cl;
            const double sl = sum_left[s];
            const double sr = totals[s].sum - sl;
            const double gain = sl * sl / cl + sr * sr / cr -
                                totals[s].sum * totals[s].sum / totals[s].count;
            if (gain > best_gain[s] + 1e-12) {
              best_gain[s] = gain;
              best_feature[s] = f;
              best_threshold[s] = 0.5 * (last_value[s] + v);
            }
          }
          cnt_left[s] += 1.0;
          sum_left[s] += y[i];
          last_value[s] = v;
          started[s] = true;
        }
      }

      std::vector<int> next_active;
      for (std::size_t s = 0; s < L; ++s) {
        const int node = active[s];
        nodes_[static_cast<std::size_t>(node)].value = totals[s].sum / totals[s].count;
        if (best_feature[s] < 0) continue;
        nodes_[static_cast<std::size_t>(node)].feature = best_feature[s];
        nodes_[static_cast<std::size_t>(node)].threshold = best_threshold[s];
        nodes_[static_cast<std::size_t>(node)].left = static_cast<int>(nodes_.size());
        nodes_.push_back({});
        nodes_[static_cast<std::size_t>(node)].right = static_cast<int>(nodes_.size());
        nodes_.push_back({});
        next_active.push_back(nodes_[static_cast<std::size_t>(node)].left);
        next_active.push_back(nodes_[static_cast<std::size_t>(node)].right);
      }
      if (next_active.empty()) break;
      for (int i = 0; i < n; ++i) {
        const int node = node_of[static_cast<std::size_t>(i)];
        const TreeNode& nd = nodes_[static_cast<std::size_t>(node)];
        if (nd.is_leaf()) continue;
        node_of[static_cast<std::size_t>(i)] =
            X(i, nd.feature) <= nd.threshold ? nd.left : nd.right;
      }
      // Seed child values with their means for the next level (also the
      // final leaf values if the child never splits).
      active = std::move(next_active);
      std::vector<double> cnt(nodes_.size(), 0.0), sum(nodes_.size(), 0.0);
      for (int i = 0; i < n; ++i) {
        cnt[static_cast<std::size_t>(node_of[static_cast<std::size_t>(i)])] += 1.0;
        sum[static_cast<std::size_t>(node_of[static_cast<std::size_t>(i)])] += y[i];
      }
      for (int node : active) {
        if (cnt[static_cast<std::size_t>(node)] > 0.0) {
          nodes_[static_cast<std::size_t>(node)].value =
              sum[static_cast<std::size_t>(node)] / cnt[static_cast<std::size_t>(node)];
        }
      }
    }
  }

  double predict_one(const Mat& X, Eigen::Index row) const {
    int node = 0;
    for (;;) {
      const TreeNode& nd = nodes_[static_cast<std::size_t>(node)];
      if (nd.is_leaf()) return nd.value;
      node = X(row, nd.feature) <= nd.threshold ? nd.left : nd.right;
    }
  }

 private:
  std::vector<TreeNode> nodes_;
};

// ---------------------------------------------------------------------------
// Base learners

class LinearRidgeLearner : public BaseLearner {
 public:
  explicit LinearRidgeLearner(LinearRidgeSpec spec) : spec_(spec) {
    if (spec.ridge < 0.0) throw std::invalid_argument("LinearRidge: ridge must be >= 0");
  }

  void fit(const Mat& X, const Vec& y, RngStream&) override {
    Mat design(X.rows(), X.cols() + 1);
    design.col(0).setOnes();
    design.rightCols(X.cols()) = X;
    coef_ = solve_least_squares(design, y, spec_.ridge);
  }

  Vec predict(const Mat& X) const override {
    if (X.cols() + 1 != coef_.size()) throw std::invalid_argument("LinearRidge: feature dim mismatch");
    return (X * coef_.tail(X.cols())).array() + coef_[0];
  }

 private:
  LinearRidgeSpec spec_;
  Vec coef_;
};

class GradBoostLearner : public BaseLearner {
 public:
  explicit GradBoostLearner(GradBoostSpec spec) : spec_(spec) {
    if (spec.trees < 1 || spec.depth < 1 || spec.shrinkage <= 0.0) {
      throw std::invalid_argument("GradBoost: invalid hyperparameters");
    }
  }

  void fit(const Mat& X, const Vec& y, RngStream&) override {
    feature_dim_ = static_cast<int>(X.cols());
    base_ = y.mean();
    Presorted presorted = Presorted::build(X);
    Vec residual = y.array() - base_;
    trees_.clear();
    trees_.reserve(static_cast<std::size_t>(spec_.trees));
    for (int t = 0; t < spec_.trees; ++t) {
      RegressionTree tree;
      tree.fit(X, residual, presorted, spec_.depth);
      for (Eigen::Index i = 0; i < X.rows(); ++i) {
        residual[i] -= spec_.shrinkage * tree.predict_one(X, i);
      }
      trees_.push_back(std::move(tree));
    }
  }

  Vec predict(const Mat& X) const override {
    if (static_cast<int>(X.cols()) != feature_dim_) {
      throw std::invalid_argument("GradBoost: feature dim mismatch");
    }
    Vec out = Vec::Constant(X.rows(), base_);
    for (const auto& tree : trees_) {
      for (Eigen::Index i = 0; i < X.rows(); ++i) {
        out[i] += spec_.shrinkage * tree.predict_one(X, i);
      }
    }
    return out;
  }

 private:
  GradBoostSpec spec_;
  double base_ = 0.0;
  int feature_dim_ = 0;
  std::vector<RegressionTree> trees_;
};

class MlpLearner : public BaseLearner {
 public:
  explicit MlpLearner(MlpSpec spec) : spec_(spec) {}

  void fit(const Mat& X, const Vec& y, RngStream& rng) override {
    const int p = static_cast<int>(X.cols());
    net_ = make_net({p, spec_.hidden, spec_.hidden, 1},
                    {Activation::ReLU, Activation::ReLU, Activation::Linear}, rng);
    y_offset_ = y.mean();
    Vec yc = y.array() - y_offset_;
    AdamState opt = make_adam(net_, spec_.lr);

    const Eigen::Index n = X.rows();
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), Eigen::Index{0});
    Mat Xs;
    Vec ys;
    for (int epoch = 0; epoch < spec_.epochs; ++epoch) {
      rng.shuffle(idx);
      for (Eigen::Index start = 0; start < n; start += spec_.batch) {
        const Eigen::Index b = std::min<Eigen::Index>(spec_.batch, n - start);
        Xs.resize(b, p);
        ys.resize(b);
        for (Eigen::Index i = 0; i < b; ++i) {
          Xs.row(i) = X.row(idx[static_cast<std::size_t>(start + i)]);
          ys[i] = yc[idx[static_cast<std::size_t>(start + i)]];
        }
        ForwardCache cache = forward_cached(net_, Xs);
        Mat d_out = (2.0 / static_cast<double>(b)) * (cache.output().col(0) - ys);
        Grads grads = backward(net_, cache, d_out);
        adam_step(net_, grads, opt);
      }
    }
  }

  Vec predict(const Mat& X) const override {
    return net_.forward(X).col(0).array() + y_offset_;
  }

 private:
  MlpSpec spec_;
  DenseNet net_;
  double y_offset_ = 0.0;
};

}  // namespace

std::unique_ptr<BaseLearner> make_base_learner(const BaseLearnerSpec& spec) {
  return std::visit(
      [](const auto& s) -> std::unique_ptr<BaseLearner> {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, LinearRidgeSpec>) {
          return std::make_unique<LinearRidgeLearner>(s);
        } else if constexpr (std::is_same_v<T, GradBoostSpec>) {
          return std::make_unique<GradBoostLearner>(s);
        } else {
          return std::make_unique<MlpLearner>(s);
        }
      },
      spec);
}

TLearnerModel fit_tlearner(const Mat& X, const std::vector<int>& treat, const Vec& y_fact,
                           const BaseLearnerSpec& spec, RngStream& rng) {
  const Eigen::Index n = X.rows();
  if (static_cast<Eigen::Index>(treat.size()) != n || y_fact.size() != n) {
    throw std::invalid_argument("fit_tlearner: length mismatch");
  }
  if (X.cols() < 1) throw std::invalid_argument("fit_tlearner: empty feature matrix");
  std::vector<Eigen::Index> treated, control;
  for (Eigen::Index i = 0; i < n; ++i) {
    (treat[static_cast<std::size_t>(i)] ? treated : control).push_back(i);
  }
  if (treated.empty() || control.empty()) {
    throw std::invalid_argument("fit_tlearner: an arm is empty; ACE unidentifiable from this sample");
  }

  auto arm_fit = [&](const std::vector<Eigen::Index>& rows, std::uint64_t substream) {
    Mat Xa(static_cast<Eigen::Index>(rows.size()), X.cols());
    Vec ya(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      Xa.row(static_cast<Eigen::Index>(i)) = X.row(rows[i]);
      ya[static_cast<Eigen::Index>(i)] = y_fact[rows[i]];
    }
    auto learner = make_base_learner(spec);
    RngStream arm_rng(rng.seed() ^ substream, rng.stream() + substream);
    learner->fit(Xa, ya, arm_rng);
    return learner;
  };

  TLearnerModel model;
  model.feature_dim = static_cast<int>(X.cols());
  model.mu_t = arm_fit(treated, 1);
  model.mu_c = arm_fit(control, 2);
  return model;
}

Vec predict_ite(const TLearnerModel& model, const Mat& X) {
  if (static_cast<int>(X.cols()) != model.feature_dim) {
    throw std::invalid_argument("predict_ite: feature dim mismatch");
  }
  return model.mu_t->predict(X) - model.mu_c->predict(X);
}

EstimateReport estimate_ace(const TLearnerModel& model, const Mat& X,
                            const std::string& method, std::uint64_t seed,
                            const std::string& config_digest) {
  if (X.rows() < 1) throw std::invalid_argument("estimate_ace: empty feature matrix");
  EstimateReport report;
  report.method = method;
  report.ite = predict_ite(model, X);
  report.ace_hat = report.ite.mean();
  report.seed = seed;
  report.d_or_V = static_cast<int>(X.cols());
  report.config_digest = config_digest;
  return report;
}

EstimateReport fit_naive_tlearner(const Mat& Ztilde_raw, const std::vector<int>& treat,
                                  const Vec& y_fact, const BaseLearnerSpec& spec,
                                  RngStream& rng) {
  Standardizer std_;
  std_.fit(Ztilde_raw);
  Mat X = std_.transform(Ztilde_raw);
  TLearnerModel model = fit_tlearner(X, treat, y_fact, spec, rng);
  EstimateReport report = estimate_ace(model, X, "naive_tlearner", rng.seed());
  report.base_learner = std::visit(
      [](const auto& s) -> std::string {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, LinearRidgeSpec>) return "linear-ridge";
        else if constexpr (std::is_same_v<T, GradBoostSpec>) return "gradboost";
        else return "mlp";
      },
      spec);
  return report;
}

TslsFit fit_tsls(const Vec& y, const std::vector<int>& T, const Mat& Z, const Mat& Zngb,
                 double ridge) {
  const Eigen::Index n = y.size();
  if (n < 2) throw std::invalid_argument("fit_tsls: need n >= 2");
  if (static_cast<Eigen::Index>(T.size()) != n) throw std::invalid_argument("fit_tsls: T length mismatch");
  if (Z.rows() != n || Zngb.rows() != n || Z.cols() != Zngb.cols()) {
    throw std::invalid_argument("fit_tsls: proxy shape mismatch");
  }
  Vec t(n);
  for (Eigen::Index i = 0; i < n; ++i) t[i] = T[static_cast<std::size_t>(i)];
  if ((t.array() - t.mean()).abs().maxCoeff() == 0.0) {
    throw std::invalid_argument("fit_tsls: zero-variance treatment, no identification");
  }
  const Eigen::Index V = Z.cols();

  // First stage: endogenous block [T | Z] on instruments [1 | T | Zngb].
  Mat W(n, 2 + V);
  W.col(0).setOnes();
  W.col(1) = t;
  if (V > 0) W.rightCols(V) = Zngb;
  Mat E(n, 1 + V);
  E.col(0) = t;
  if (V > 0) E.rightCols(V) = Z;
  Mat coef = solve_least_squares_multi(W, E, ridge);
  Mat Ehat = W * coef;

  // Second stage: y on [1 | fitted endogenous block].
  Mat X2(n, 2 + V);
  X2.col(0).setOnes();
  X2.rightCols(1 + V) = Ehat;
  Vec beta = solve_least_squares(X2, y, ridge);

  TslsFit fit;
  fit.theta_hat = beta[1];
  fit.second_stage_coef = beta;
  fit.first_stage_rss_t = (Ehat.col(0) - t).squaredNorm();
  fit.n = static_cast<int>(n);
  fit.V = static_cast<int>(V);
  return fit;
}

double fit_ols_slope(const Vec& y, const std::vector<int>& T, const Mat& covariates,
                     double ridge) {
  const Eigen::Index n = y.size();
  if (static_cast<Eigen::Index>(T.size()) != n) throw std::invalid_argument("fit_ols_slope: length mismatch");
  const Eigen::Index p = covariates.size() > 0 ? covariates.cols() : 0;
  Mat design(n, 2 + p);
  design.col(0).setOnes();
  for (Eigen::Index i = 0; i < n; ++i) design(i, 1) = T[static_cast<std::size_t>(i)];
  if (p > 0) design.rightCols(p) = covariates;
  return solve_least_squares(design, y, ridge)[1];
}

std::string EstimateReport::to_json() const {
  nlohmann::json doc;
  doc["method"] = method;
  doc["ace_hat"] = ace_hat;
  doc["n"] = ite.size();
  doc["seed"] = seed;
  doc["d_or_V"] = d_or_V;
  doc["base_learner"] = base_learner;
  doc["config_digest"] = config_digest;
  return doc.dump();
}

void write_ite_csv(const EstimateReport& report, std::ostream& out) {
  out << "node,ite\n";
  out.precision(17);
  for (Eigen::Index i = 0; i < report.ite.size(); ++i) {
    out << i << ',' << report.ite[i] << '\n';
  }
}

}  // namespace proemb
