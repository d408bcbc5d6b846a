#pragma once

#include <iosfwd>
#include <memory>
#include <string>
#include <variant>
#include <vector>

#include "proemb/numerics.hpp"

namespace proemb {

struct LinearRidgeSpec {
  double ridge = 1e-6;
};

struct GradBoostSpec {
  int trees = 100;
  int depth = 3;
  double shrinkage = 0.1;
};

struct MlpSpec {
  int hidden = 125;  // two hidden layers of this width
  double lr = 1e-3;
  int epochs = 50;
  int batch = 128;
};

using BaseLearnerSpec = std::variant<LinearRidgeSpec, GradBoostSpec, MlpSpec>;

class BaseLearner {
 public:
  virtual ~BaseLearner() = default;
  virtual void fit(const Mat& X, const Vec& y, RngStream& rng) = 0;
  virtual Vec predict(const Mat& X) const = 0;
};

std::unique_ptr<BaseLearner> make_base_learner(const BaseLearnerSpec& spec);

struct TLearnerModel {
  std::unique_ptr<BaseLearner> mu_t;  // fitted on treated nodes
  std::unique_ptr<BaseLearner> mu_c;  // fitted on control nodes
  int feature_dim = 0;
};

struct EstimateReport {
  std::string method;
  double ace_hat = 0.0;
  Vec ite;
  std::uint64_t seed = 0;
  int d_or_V = 0;  // feature width the estimator saw
  std::string base_learner;
  std::string config_digest;
  std::string to_json() const;
};

/// mu_t on {treat = 1}, mu_c on {treat = 0}; throws if either arm is empty.
TLearnerModel fit_tlearner(const Mat& X, const std::vector<int>& treat, const Vec& y_fact,
                           const BaseLearnerSpec& spec, RngStream& rng);

/// Per-node mu_t(x) - mu_c(x).
Vec predict_ite(const TLearnerModel& model, const Mat& X);

EstimateReport estimate_ace(const TLearnerModel& model, const Mat& X,
                            const std::string& method = "tlearner", std::uint64_t seed = 0,
                            const std::string& config_digest = "");

/// T-learner on raw column-standardized proxies (no embedding).
EstimateReport fit_naive_tlearner(const Mat& Ztilde_raw, const std::vector<int>& treat,
                                  const Vec& y_fact, const BaseLearnerSpec& spec,
                                  RngStream& rng);

struct TslsFit {
  double theta_hat = 0.0;
  Vec second_stage_coef;       // [intercept, T_hat, Z_hat...]
  double first_stage_rss_t = 0.0;  // residual sum of squares of the T column
  int n = 0;
  int V = 0;
};

/// Two-stage least squares: endogenous block [T | Z] on instruments
/// [1 | T | Zngb], then OLS of y on [1 | T_hat | Z_hat]. Minimum-norm
/// solutions in rank-deficient regimes; optional ridge in both stages.
TslsFit fit_tsls(const Vec& y, const std::vector<int>& T, const Mat& Z, const Mat& Zngb,
                 double ridge = 0.0);

/// Coefficient of T when regressing y on [1 | T | covariates].
double fit_ols_slope(const Vec& y, const std::vector<int>& T, const Mat& covariates,
                     double ridge = 0.0);

void write_ite_csv(const EstimateReport& report, std::ostream& out);

}  // namespace proemb
