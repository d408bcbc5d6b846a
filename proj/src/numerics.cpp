#include "proemb/numerics.hpp"

#include <cmath>

namespace proemb {

namespace {

constexpr double kPi = 3.14159265358979323846;

std::uint64_t splitmix64(std::uint64_t& x) {
  x += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream)
    : seed_(seed), stream_(stream) {
  // Mix seed and stream id so nearby pairs land far apart in state space.
  std::uint64_t s = seed;
  std::uint64_t a = splitmix64(s);
  s = stream ^ 0xda3e39cb94b95bdbULL;
  std::uint64_t b = splitmix64(s);
  state_ = a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2));
}

std::uint64_t RngStream::next_u64() { return splitmix64(state_); }

double RngStream::uniform01() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RngStream::uniform_pos() {
  return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
}

double RngStream::gaussian() {
  double u1 = uniform_pos();
  double u2 = uniform01();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
}

double RngStream::gaussian(double mean, double sd) {
  if (sd < 0.0) throw std::invalid_argument("gaussian: sd must be >= 0");
  return mean + sd * gaussian();
}

int RngStream::bernoulli(double p) {
  if (p < 0.0 || p > 1.0) throw std::invalid_argument("bernoulli: p outside [0,1]");
  return uniform01() < p ? 1 : 0;
}

double RngStream::gamma(double shape) {
  if (shape <= 0.0) throw std::invalid_argument("gamma: shape must be > 0");
  if (shape < 1.0) {
    // Boost: Gamma(a) = Gamma(a+1) * U^(1/a)
    double u = uniform_pos();
    return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x, v;
    do {
      x = gaussian();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = uniform_pos();
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
    if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
  }
}

Vec RngStream::dirichlet(const Vec& concentration) {
  if (concentration.size() < 1) throw std::invalid_argument("dirichlet: empty concentration");
  Vec out(concentration.size());
  double sum = 0.0;
  for (Eigen::Index k = 0; k < concentration.size(); ++k) {
    if (concentration[k] <= 0.0) {
      throw std::invalid_argument("dirichlet: concentrations must be positive");
    }
    out[k] = gamma(concentration[k]);
    sum += out[k];
  }
  if (sum <= 0.0) {
    // All gammas underflowed (tiny concentrations); put mass on one coordinate.
    out.setZero();
    out[static_cast<Eigen::Index>(uniform_index(out.size()))] = 1.0;
    return out;
  }
  return out / sum;
}

int RngStream::poisson(double mean) {
  if (mean < 0.0) throw std::invalid_argument("poisson: mean must be >= 0");
  if (mean == 0.0) return 0;
  if (mean < 500.0) {
    // Knuth's product-of-uniforms; exp(-500) is still representable.
    const double limit = std::exp(-mean);
    int k = 0;
    double prod = uniform01();
    while (prod > limit) {
      ++k;
      prod *= uniform01();
    }
    return k;
  }
  // Normal approximation for very large means (not hit by default configs).
  double draw = std::round(gaussian(mean, std::sqrt(mean)));
  return draw < 0.0 ? 0 : static_cast<int>(draw);
}

std::vector<int> RngStream::multinomial(int n, const Vec& probs) {
  if (n < 0) throw std::invalid_argument("multinomial: n must be >= 0");
  if (probs.size() < 1) throw std::invalid_argument("multinomial: empty probs");
  double total = 0.0;
  for (Eigen::Index k = 0; k < probs.size(); ++k) {
    if (probs[k] < 0.0) throw std::invalid_argument("multinomial: negative probability");
    total += probs[k];
  }
  if (total <= 0.0) throw std::invalid_argument("multinomial: probabilities sum to zero");
  std::vector<int> counts(static_cast<std::size_t>(probs.size()), 0);
  for (int draw = 0; draw < n; ++draw) {
    double u = uniform01() * total;
    double acc = 0.0;
    Eigen::Index pick = probs.size() - 1;
    for (Eigen::Index k = 0; k < probs.size(); ++k) {
      acc += probs[k];
      if (u < acc) {
        pick = k;
        break;
      }
    }
    ++counts[static_cast<std::size_t>(pick)];
  }
  return counts;
}

std::size_t RngStream::uniform_index(std::size_t n) {
  if (n == 0) throw std::invalid_argument("uniform_index: n must be > 0");
  // Rejection sampling to avoid modulo bias.
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t x;
  do {
    x = next_u64();
  } while (x >= limit);
  return static_cast<std::size_t>(x % n);
}

double sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double cosine_similarity(const Vec& a, const Vec& b) {
  if (a.size() != b.size() || a.size() < 1) {
    throw std::invalid_argument("cosine_similarity: dimension mismatch");
  }
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) {
    throw std::invalid_argument("cosine_similarity: zero-norm input");
  }
  double c = a.dot(b) / (na * nb);
  if (c > 1.0) c = 1.0;
  if (c < -1.0) c = -1.0;
  return c;
}

namespace {

// Minimum-norm solve through the Gram matrix: cheaper than a direct
// orthogonal factorization when one dimension is large. pinv identities:
//   p <= n:  X+ = pinv(X'X) X'
//   p >  n:  X+ = X' pinv(X X')
Mat min_norm_gram(const Mat& X, const Mat& B) {
  const Eigen::Index n = X.rows(), p = X.cols();
  if (p <= n) {
    Mat G = X.transpose() * X;
    Mat rhs = X.transpose() * B;
    Eigen::LLT<Mat> llt(G);
    if (llt.info() == Eigen::Success) {
      Mat sol = llt.solve(rhs);
      if (((G * sol - rhs).norm() <= 1e-8 * (rhs.norm() + 1.0))) return sol;
    }
    Eigen::CompleteOrthogonalDecomposition<Mat> cod(G);
    return cod.solve(rhs);
  }
  Mat G = X * X.transpose();
  Eigen::LLT<Mat> llt(G);
  if (llt.info() == Eigen::Success) {
    Mat sol = llt.solve(B);
    if (((G * sol - B).norm() <= 1e-8 * (B.norm() + 1.0))) {
      return X.transpose() * sol;
    }
  }
  Eigen::CompleteOrthogonalDecomposition<Mat> cod(G);
  return X.transpose() * cod.solve(B);
}

}  // namespace

Mat solve_least_squares_multi(const Mat& X, const Mat& B, double ridge) {
  if (X.rows() != B.rows()) {
    throw std::invalid_argument("solve_least_squares: row mismatch between X and rhs");
  }
  if (X.rows() < 1 || X.cols() < 1) {
    throw std::invalid_argument("solve_least_squares: empty design");
  }
  if (ridge < 0.0) throw std::invalid_argument("solve_least_squares: ridge must be >= 0");
  if (ridge > 0.0) {
    Mat G = X.transpose() * X;
    G.diagonal().array() += ridge;
    return G.ldlt().solve(X.transpose() * B);
  }
  // Small systems: direct rank-revealing factorization; large ones go
  // through the Gram matrix.
  if (std::min(X.rows(), X.cols()) <= 512 || std::max(X.rows(), X.cols()) <= 1024) {
    Eigen::CompleteOrthogonalDecomposition<Mat> cod(X);
    return cod.solve(B);
  }
  return min_norm_gram(X, B);
}

Vec solve_least_squares(const Mat& X, const Vec& y, double ridge) {
  return solve_least_squares_multi(X, y, ridge).col(0);
}

void check_finite(const Mat& m, const char* what) {
  if (!m.allFinite()) {
    throw std::runtime_error(std::string("non-finite values in ") + what);
  }
}

}  // namespace proemb
