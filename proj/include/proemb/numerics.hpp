#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace proemb {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

/// Counter-based seeded RNG: identical (seed, stream) pairs reproduce the
/// draw sequence bit-exactly; distinct stream ids give independent streams.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed, std::uint64_t stream = 0);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }

  std::uint64_t next_u64();
  /// Uniform on [0, 1) with 53 bits of entropy.
  double uniform01();
  /// Uniform on (0, 1] (never returns exactly zero; safe under log()).
  double uniform_pos();
  /// Standard normal via Box-Muller (stateless: no cached second draw).
  double gaussian();
  double gaussian(double mean, double sd);
  int bernoulli(double p);
  /// Gamma(shape, 1) via Marsaglia-Tsang, with the alpha < 1 boost.
  double gamma(double shape);
  Vec dirichlet(const Vec& concentration);
  int poisson(double mean);
  std::vector<int> multinomial(int n, const Vec& probs);
  /// Uniform integer in [0, n).
  std::size_t uniform_index(std::size_t n);

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[uniform_index(i)]);
    }
  }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t state_;
};

double sigmoid(double x);

/// Cosine of the angle between a and b. Throws on zero-norm input.
double cosine_similarity(const Vec& a, const Vec& b);

/// Least squares with optional ridge. ridge = 0 returns the OLS minimizer
/// (minimum-norm solution on rank-deficient designs); ridge > 0 solves
/// (X'X + ridge*I) beta = X'y.
Vec solve_least_squares(const Mat& X, const Vec& y, double ridge = 0.0);

/// Multi-RHS minimum-norm least squares, used by the TSLS first stage.
Mat solve_least_squares_multi(const Mat& X, const Mat& B, double ridge = 0.0);

void check_finite(const Mat& m, const char* what);

}  // namespace proemb
