#include "proemb/simdata.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

namespace proemb {

ConfounderSet gen_confounders(int n, int d, RngStream& rng) {
  if (n < 2 || d < 2) throw std::invalid_argument("gen_confounders: need n >= 2, d >= 2");
  ConfounderSet conf;
  conf.U.resize(n, d);
  const Vec alpha = Vec::Constant(d, 0.1);
  for (int i = 0; i < n; ++i) {
    conf.U.row(i) = rng.dirichlet(alpha).transpose();
  }
  return conf;
}

ProxyPanel gen_proxies(const ConfounderSet& conf, const EgoNetwork& g, int V,
                       int doc_len, RngStream& rng) {
  const int n = conf.n();
  const int d = conf.d();
  if (V < d) throw std::invalid_argument("gen_proxies: need V >= d");
  if (doc_len < 1) throw std::invalid_argument("gen_proxies: need doc_len >= 1");
  if (g.n != n) throw std::invalid_argument("gen_proxies: graph/confounder size mismatch");
  for (int i = 0; i < n; ++i) {
    if (g.degree(i) == 0) {
      throw std::invalid_argument("gen_proxies: isolated node violates the ego-network premise");
    }
  }

  // Topic-word matrix, one draw per run; rows stored as cumulative sums so
  // word draws are a binary search.
  Mat phi_cdf(d, V);
  const Vec alpha = Vec::Constant(V, 0.01);
  for (int k = 0; k < d; ++k) {
    Vec row = rng.dirichlet(alpha);
    double acc = 0.0;
    for (int w = 0; w < V; ++w) {
      acc += row[w];
      phi_cdf(k, w) = acc;
    }
    phi_cdf(k, V - 1) = 1.0;
  }

  ProxyPanel proxies;
  proxies.V = V;
  proxies.Z = Mat::Zero(n, V);
  for (int i = 0; i < n; ++i) {
    const int len = rng.poisson(doc_len);
    for (int w = 0; w < len; ++w) {
      // Topic from the node mixture, then word from the topic row: the word
      // counts are Multinomial(len, Phi' U_i).
      double u = rng.uniform01();
      double acc = 0.0;
      int topic = d - 1;
      for (int k = 0; k < d; ++k) {
        acc += conf.U(i, k);
        if (u < acc) {
          topic = k;
          break;
        }
      }
      // Eigen is column-major; copy the cdf row once per draw would be
      // wasteful, so binary-search via coefficient access.
      const double uw = rng.uniform01();
      int lo = 0, hi = V - 1;
      while (lo < hi) {
        const int mid = (lo + hi) / 2;
        if (phi_cdf(topic, mid) < uw) {
          lo = mid + 1;
        } else {
          hi = mid;
        }
      }
      proxies.Z(i, lo) += 1.0;
    }
  }

  proxies.Zngb = Mat::Zero(n, V);
  for (int i = 0; i < n; ++i) {
    const auto& nbrs = g.adj[static_cast<std::size_t>(i)];
    for (int j : nbrs) proxies.Zngb.row(i) += proxies.Z.row(j);
    proxies.Zngb.row(i) /= static_cast<double>(nbrs.size());
  }

  proxies.Ztilde.resize(n, 2 * V);
  proxies.Ztilde.leftCols(V) = proxies.Z;
  proxies.Ztilde.rightCols(V) = proxies.Zngb;
  return proxies;
}

std::vector<int> gen_baseline_activation(const ConfounderSet& conf, const Vec& alpha_u,
                                         RngStream& rng, double noise_sd) {
  if (alpha_u.size() != conf.d()) {
    throw std::invalid_argument("gen_baseline_activation: alpha_u dimension mismatch");
  }
  const int n = conf.n();
  std::vector<int> y(static_cast<std::size_t>(n), 0);
  for (int i = 0; i < n; ++i) {
    const double eps = noise_sd > 0.0 ? rng.gaussian(0.0, noise_sd) : 0.0;
    y[static_cast<std::size_t>(i)] = rng.bernoulli(sigmoid(conf.U.row(i).dot(alpha_u) + eps));
  }
  return y;
}

std::vector<int> apply_peer_activation(const EgoNetwork& g, const std::vector<int>& y_prev,
                                       double p, RngStream& rng) {
  if (p < 0.0 || p > 1.0) throw std::invalid_argument("apply_peer_activation: p outside [0,1]");
  if (static_cast<int>(y_prev.size()) != g.n) {
    throw std::invalid_argument("apply_peer_activation: size mismatch");
  }
  std::vector<int> out = y_prev;
  for (int i = 0; i < g.n; ++i) {
    if (y_prev[static_cast<std::size_t>(i)] != 0) continue;
    bool active_neighbor = false;
    for (int j : g.adj[static_cast<std::size_t>(i)]) {
      if (y_prev[static_cast<std::size_t>(j)] != 0) {
        active_neighbor = true;
        break;
      }
    }
    if (active_neighbor) out[static_cast<std::size_t>(i)] = rng.bernoulli(p);
  }
  return out;
}

int h_max(const std::vector<int>& neighbor_outcomes) {
  if (neighbor_outcomes.empty()) throw std::invalid_argument("h_max: empty neighbor list");
  for (int v : neighbor_outcomes) {
    if (v != 0) return 1;
  }
  return 0;
}

int h_mean(const std::vector<int>& neighbor_outcomes) {
  if (neighbor_outcomes.empty()) throw std::invalid_argument("h_mean: empty neighbor list");
  double sum = 0.0;
  for (int v : neighbor_outcomes) sum += v != 0 ? 1.0 : 0.0;
  // Strict: a mean of exactly 0.5 does not surpass the threshold.
  return sum / static_cast<double>(neighbor_outcomes.size()) > 0.5 ? 1 : 0;
}

std::vector<int> compute_treatments(const EgoNetwork& g, const std::vector<int>& y_prev,
                                    HRule rule) {
  if (static_cast<int>(y_prev.size()) != g.n) {
    throw std::invalid_argument("compute_treatments: size mismatch");
  }
  std::vector<int> treat(static_cast<std::size_t>(g.n), 0);
  std::vector<int> nbr_outcomes;
  for (int i = 0; i < g.n; ++i) {
    const auto& nbrs = g.adj[static_cast<std::size_t>(i)];
    nbr_outcomes.clear();
    for (int j : nbrs) nbr_outcomes.push_back(y_prev[static_cast<std::size_t>(j)]);
    treat[static_cast<std::size_t>(i)] =
        rule == HRule::Max ? h_max(nbr_outcomes) : h_mean(nbr_outcomes);
  }
  return treat;
}

OutcomePanel gen_outcomes(const ConfounderSet& conf, const std::vector<int>& y_prev,
                          const std::vector<int>& treat, const Vec& beta_u, double beta_y,
                          double tau, RngStream& rng, double noise_sd) {
  const int n = conf.n();
  if (static_cast<int>(y_prev.size()) != n || static_cast<int>(treat.size()) != n) {
    throw std::invalid_argument("gen_outcomes: vector length mismatch");
  }
  if (beta_u.size() != conf.d()) {
    throw std::invalid_argument("gen_outcomes: beta_u dimension mismatch");
  }
  OutcomePanel panel;
  panel.y_prev = y_prev;
  panel.treat = treat;
  panel.tau = tau;
  panel.beta_u = beta_u;
  panel.beta_y = beta_y;
  panel.y_fact.resize(n);
  panel.y_cf.resize(n);
  for (int i = 0; i < n; ++i) {
    const double eps = noise_sd > 0.0 ? rng.gaussian(0.0, noise_sd) : 0.0;
    double base = conf.U.row(i).dot(beta_u) +
                  beta_y * y_prev[static_cast<std::size_t>(i)] + eps;
    // Quantize to the 2^-32 grid: adding tau (same grid, |values| << 2^19)
    // is then exact, so y_fact - y_cf = tau * (2 treat - 1) holds bit-exactly.
    base = std::ldexp(std::round(std::ldexp(base, 32)), -32);
    const double t = treat[static_cast<std::size_t>(i)];
    panel.y_fact[i] = base + tau * t;
    panel.y_cf[i] = base + tau * (1.0 - t);
  }
  return panel;
}

double true_ace(const OutcomePanel& panel) {
  const Eigen::Index n = panel.y_fact.size();
  if (n == 0) throw std::invalid_argument("true_ace: empty panel");
  double sum = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double y1 = panel.treat[static_cast<std::size_t>(i)] ? panel.y_fact[i] : panel.y_cf[i];
    const double y0 = panel.treat[static_cast<std::size_t>(i)] ? panel.y_cf[i] : panel.y_fact[i];
    sum += y1 - y0;
  }
  return sum / static_cast<double>(n);
}

void write_panel_jsonl(const OutcomePanel& panel, std::ostream& out) {
  const Eigen::Index n = panel.y_fact.size();
  out.precision(17);
  for (Eigen::Index i = 0; i < n; ++i) {
    out << "{\"node\":" << i << ",\"y_prev\":" << panel.y_prev[static_cast<std::size_t>(i)]
        << ",\"treat\":" << panel.treat[static_cast<std::size_t>(i)]
        << ",\"y_fact\":" << panel.y_fact[i] << ",\"y_cf\":" << panel.y_cf[i] << "}\n";
  }
}

void write_proxies_csv(const ProxyPanel& proxies, std::ostream& out, bool sparse) {
  const Eigen::Index n = proxies.Z.rows();
  if (sparse) {
    out << "node,word,count\n";
    for (Eigen::Index i = 0; i < n; ++i) {
      for (int w = 0; w < proxies.V; ++w) {
        if (proxies.Z(i, w) != 0.0) {
          out << i << ',' << w << ',' << static_cast<long long>(proxies.Z(i, w)) << '\n';
        }
      }
    }
    return;
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int w = 0; w < proxies.V; ++w) {
      if (w) out << ',';
      out << static_cast<long long>(proxies.Z(i, w));
    }
    out << '\n';
  }
}

}  // namespace proemb
