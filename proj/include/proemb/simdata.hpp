#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "proemb/graphgen.hpp"
#include "proemb/numerics.hpp"

namespace proemb {

/// Per-node latent topic vectors (rows on the probability simplex).
struct ConfounderSet {
  Mat U;  // n x d
  int n() const { return static_cast<int>(U.rows()); }
  int d() const { return static_cast<int>(U.cols()); }
};

/// High-dimensional proxies: ego word counts (NCO), neighbor means (NCE),
/// and their concatenation.
struct ProxyPanel {
  Mat Z;       // n x V, nonnegative integer counts
  Mat Zngb;    // n x V, arithmetic mean of neighbors' Z rows
  Mat Ztilde;  // n x 2V, [Z | Zngb]
  int V = 0;
};

enum class HRule { Max, Mean };

struct OutcomePanel {
  std::vector<int> y_prev;  // Y_{i,t-1}
  std::vector<int> treat;   // T_i = h(Y_ngb,t-1)
  Vec y_fact;               // Y^F_{i,t}
  Vec y_cf;                 // Y^CF_{i,t}
  double tau = 0.0;         // ground-truth contagion effect
  Vec beta_u;
  double beta_y = 0.0;
};

/// Rows drawn Dirichlet(0.1 * 1_d).
ConfounderSet gen_confounders(int n, int d, RngStream& rng);

/// Synthetic LDA-style generator: topic-word rows Dirichlet(0.01 * 1_V),
/// per-node document length Poisson(doc_len), words from the node's topic
/// mixture. Requires every node to have at least one neighbor.
ProxyPanel gen_proxies(const ConfounderSet& conf, const EgoNetwork& g, int V,
                       int doc_len, RngStream& rng);

/// Y_{i,t-1} = Bernoulli(sigmoid(alpha_u . U_i + eps)), eps ~ N(0, noise_sd^2).
/// noise_sd = 0 is the deterministic test hook.
std::vector<int> gen_baseline_activation(const ConfounderSet& conf, const Vec& alpha_u,
                                         RngStream& rng, double noise_sd = 1.0);

/// One synchronous pass: inactive nodes with an active neighbor flip with
/// probability p.
std::vector<int> apply_peer_activation(const EgoNetwork& g, const std::vector<int>& y_prev,
                                       double p, RngStream& rng);

int h_max(const std::vector<int>& neighbor_outcomes);
int h_mean(const std::vector<int>& neighbor_outcomes);

/// T_i = h(Y_ngb,t-1) for every node.
std::vector<int> compute_treatments(const EgoNetwork& g, const std::vector<int>& y_prev,
                                    HRule rule);

/// Factual/counterfactual outcomes with a single noise draw shared by both
/// potential outcomes, so y_fact - y_cf = tau * (2*treat - 1) exactly.
OutcomePanel gen_outcomes(const ConfounderSet& conf, const std::vector<int>& y_prev,
                          const std::vector<int>& treat, const Vec& beta_u, double beta_y,
                          double tau, RngStream& rng, double noise_sd = 1.0);

/// Mean of per-node potential-outcome differences Y(1) - Y(0).
double true_ace(const OutcomePanel& panel);

/// JSON-lines export: {node, y_prev, treat, y_fact, y_cf} per row.
void write_panel_jsonl(const OutcomePanel& panel, std::ostream& out);

/// Dense CSV or sparse `node,word,count` triplets.
void write_proxies_csv(const ProxyPanel& proxies, std::ostream& out, bool sparse);

}  // namespace proemb
