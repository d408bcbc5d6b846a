#include <cmath>
#include <sstream>

#include "doctest.h"
#include "proemb/graphgen.hpp"
#include "proemb/simdata.hpp"

using namespace proemb;

namespace {

EgoNetwork path_graph(int n) {
  EgoNetwork g;
  g.n = n;
  g.adj.resize(static_cast<std::size_t>(n));
  for (int i = 0; i + 1 < n; ++i) {
    g.adj[static_cast<std::size_t>(i)].push_back(i + 1);
    g.adj[static_cast<std::size_t>(i + 1)].push_back(i);
  }
  for (auto& nbrs : g.adj) std::sort(nbrs.begin(), nbrs.end());
  return g;
}

EgoNetwork star_graph(int leaves) {
  EgoNetwork g;
  g.n = leaves + 1;
  g.adj.resize(static_cast<std::size_t>(g.n));
  for (int i = 1; i <= leaves; ++i) {
    g.adj[0].push_back(i);
    g.adj[static_cast<std::size_t>(i)].push_back(0);
  }
  return g;
}

}  // namespace

TEST_CASE("gen_confounders: rows on the simplex, per-coordinate mean 1/d") {
  RngStream rng(1);
  ConfounderSet conf = gen_confounders(10000, 20, rng);
  CHECK(conf.n() == 10000);
  CHECK(conf.d() == 20);
  CHECK(conf.U.minCoeff() >= 0.0);
  for (int i = 0; i < conf.n(); ++i) {
    CHECK(conf.U.row(i).sum() == doctest::Approx(1.0).epsilon(1e-9));
  }
  Vec col_means = conf.U.colwise().mean();
  for (int k = 0; k < 20; ++k) CHECK(std::abs(col_means[k] - 0.05) < 0.005);
}

TEST_CASE("gen_proxies: shapes, integrality, and Zngb reconstruction") {
  RngStream rng(2);
  ConfounderSet conf = gen_confounders(60, 5, rng);
  EgoNetwork g = gen_homophily_ba(conf.U, 3, 2, rng);
  ProxyPanel panel = gen_proxies(conf, g, 40, 10, rng);
  CHECK(panel.Z.rows() == 60);
  CHECK(panel.Z.cols() == 40);
  CHECK(panel.Ztilde.cols() == 80);
  for (int i = 0; i < 60; ++i) {
    for (int w = 0; w < 40; ++w) {
      CHECK(panel.Z(i, w) >= 0.0);
      CHECK(panel.Z(i, w) == std::floor(panel.Z(i, w)));
    }
    // Zngb row = arithmetic mean of neighbors' Z rows, bit-exact layout check
    Vec mean = Vec::Zero(40);
    for (int j : g.adj[static_cast<std::size_t>(i)]) mean += panel.Z.row(j).transpose();
    mean /= static_cast<double>(g.degree(i));
    CHECK((panel.Zngb.row(i).transpose() - mean).cwiseAbs().maxCoeff() < 1e-12);
  }
  CHECK((panel.Ztilde.leftCols(40) - panel.Z).norm() == 0.0);
  CHECK((panel.Ztilde.rightCols(40) - panel.Zngb).norm() == 0.0);
}

TEST_CASE("gen_proxies: dyad partner gives Zngb_i = Z_j exactly") {
  RngStream rng(3);
  ConfounderSet conf = gen_confounders(10, 4, rng);
  EgoNetwork g = gen_dyads(conf.U, rng);
  ProxyPanel panel = gen_proxies(conf, g, 30, 8, rng);
  for (int i = 0; i < 10; ++i) {
    const int j = g.adj[static_cast<std::size_t>(i)][0];
    CHECK((panel.Zngb.row(i) - panel.Z.row(j)).norm() == 0.0);
  }
}

TEST_CASE("gen_proxies: row sums follow Poisson(doc_len)") {
  RngStream rng(4);
  const int n = 2000, doc_len = 50;
  ConfounderSet conf = gen_confounders(n, 5, rng);
  EgoNetwork g = gen_homophily_ba(conf.U, 3, 3, rng);
  ProxyPanel panel = gen_proxies(conf, g, 100, doc_len, rng);
  const double mean_len = panel.Z.rowwise().sum().mean();
  CHECK(std::abs(mean_len - doc_len) < 3.0 * std::sqrt(static_cast<double>(doc_len) / n));
}

TEST_CASE("gen_proxies: isolated node rejected") {
  RngStream rng(5);
  ConfounderSet conf = gen_confounders(4, 3, rng);
  EgoNetwork g;
  g.n = 4;
  g.adj.resize(4);
  g.adj[0] = {1};
  g.adj[1] = {0};  // nodes 2, 3 isolated
  CHECK_THROWS_AS(gen_proxies(conf, g, 10, 5, rng), std::invalid_argument);
}

TEST_CASE("gen_baseline_activation: rate 0.5 when alpha=0 and noise suppressed") {
  RngStream rng(6);
  ConfounderSet conf = gen_confounders(10000, 5, rng);
  auto y = gen_baseline_activation(conf, Vec::Zero(5), rng, 0.0);
  double rate = 0.0;
  for (int v : y) rate += v;
  rate /= static_cast<double>(y.size());
  CHECK(std::abs(rate - 0.5) < 0.02);
}

TEST_CASE("gen_baseline_activation: saturation with huge coefficients") {
  RngStream rng(7);
  ConfounderSet conf = gen_confounders(200, 5, rng);
  auto y = gen_baseline_activation(conf, Vec::Constant(5, 50.0), rng, 0.0);
  for (int v : y) CHECK(v == 1);  // alpha . U = 50 since rows sum to 1
}

TEST_CASE("gen_baseline_activation: rate matches Monte-Carlo oracle at 3 sigma") {
  RngStream rng(8);
  const int n = 10000;
  ConfounderSet conf = gen_confounders(n, 5, rng);
  Vec alpha(5);
  for (int k = 0; k < 5; ++k) alpha[k] = rng.gaussian();
  // oracle: P(active_i) averaged over noise draws, independent stream
  RngStream oracle(9);
  double p_acc = 0.0;
  for (int i = 0; i < n; ++i) {
    const double base = alpha.dot(conf.U.row(i));
    for (int t = 0; t < 20; ++t) p_acc += sigmoid(base + oracle.gaussian());
  }
  const double p = p_acc / (20.0 * n);
  auto y = gen_baseline_activation(conf, alpha, rng);
  double rate = 0.0;
  for (int v : y) rate += v;
  rate /= n;
  const double se = std::sqrt(p * (1 - p) / n);
  CHECK(std::abs(rate - p) < 3.0 * se + 0.01);
}

TEST_CASE("apply_peer_activation: p=0 identity, p=1 star floods") {
  RngStream rng(10);
  EgoNetwork star = star_graph(5);
  std::vector<int> y0 = {1, 0, 0, 0, 0, 0};
  CHECK(apply_peer_activation(star, y0, 0.0, rng) == y0);
  auto y1 = apply_peer_activation(star, y0, 1.0, rng);
  for (int v : y1) CHECK(v == 1);
}

TEST_CASE("apply_peer_activation: flip fraction near p among eligible nodes") {
  RngStream rng(11);
  EgoNetwork star = star_graph(10000);
  std::vector<int> y0(10001, 0);
  y0[0] = 1;
  auto y1 = apply_peer_activation(star, y0, 0.3, rng);
  double flips = 0.0;
  for (std::size_t i = 1; i < y1.size(); ++i) flips += y1[i];
  CHECK(std::abs(flips / 10000.0 - 0.3) < 0.015);
}

TEST_CASE("h rules: strict mean threshold, max dominance") {
  CHECK(h_max({0, 0, 0}) == 0);
  CHECK(h_mean({0, 0, 0}) == 0);
  CHECK(h_max({0, 1, 0}) == 1);
  CHECK(h_mean({0, 1, 0}) == 0);  // mean 1/3
  CHECK(h_max({1, 1}) == 1);
  CHECK(h_mean({1, 1}) == 1);
  CHECK(h_mean({1, 0}) == 0);  // mean exactly 0.5 does not surpass
  CHECK_THROWS_AS(h_max({}), std::invalid_argument);
  CHECK_THROWS_AS(h_mean({}), std::invalid_argument);
}

TEST_CASE("compute_treatments: h_max prevalence >= h_mean prevalence") {
  RngStream rng(12);
  ConfounderSet conf = gen_confounders(500, 5, rng);
  EgoNetwork g = gen_homophily_ba(conf.U, 3, 3, rng);
  auto y = gen_baseline_activation(conf, Vec::Zero(5), rng);
  auto t_max = compute_treatments(g, y, HRule::Max);
  auto t_mean = compute_treatments(g, y, HRule::Mean);
  int s_max = 0, s_mean = 0;
  for (int i = 0; i < 500; ++i) {
    CHECK(t_max[static_cast<std::size_t>(i)] >= t_mean[static_cast<std::size_t>(i)]);
    s_max += t_max[static_cast<std::size_t>(i)];
    s_mean += t_mean[static_cast<std::size_t>(i)];
  }
  CHECK(s_max >= s_mean);
}

TEST_CASE("gen_outcomes: shared-noise identity and true ACE") {
  RngStream rng(13);
  ConfounderSet conf = gen_confounders(400, 6, rng);
  auto y_prev = gen_baseline_activation(conf, Vec::Zero(6), rng);
  std::vector<int> treat(400);
  for (auto& t : treat) t = rng.bernoulli(0.4);
  Vec beta_u(6);
  for (int k = 0; k < 6; ++k) beta_u[k] = rng.gaussian(0.0, 3.0);

  SUBCASE("tau = 0 collapses factual and counterfactual") {
    auto panel = gen_outcomes(conf, y_prev, treat, beta_u, 0.2, 0.0, rng);
    CHECK((panel.y_fact - panel.y_cf).norm() == 0.0);
    CHECK(true_ace(panel) == doctest::Approx(0.0));
  }
  SUBCASE("tau = 1: +1 on treated, -1 on controls, exactly") {
    auto panel = gen_outcomes(conf, y_prev, treat, beta_u, 0.2, 1.0, rng);
    for (int i = 0; i < 400; ++i) {
      const double diff = panel.y_fact[i] - panel.y_cf[i];
      CHECK(diff == (treat[static_cast<std::size_t>(i)] ? 1.0 : -1.0));
    }
    CHECK(true_ace(panel) == doctest::Approx(1.0));
  }
  SUBCASE("tau = 2.5 brute-force potential-outcome average") {
    auto panel = gen_outcomes(conf, y_prev, treat, beta_u, 0.2, 2.5, rng);
    double acc = 0.0;
    for (int i = 0; i < 400; ++i) {
      const double y1 = treat[static_cast<std::size_t>(i)] ? panel.y_fact[i] : panel.y_cf[i];
      const double y0 = treat[static_cast<std::size_t>(i)] ? panel.y_cf[i] : panel.y_fact[i];
      acc += y1 - y0;
    }
    CHECK(true_ace(panel) == doctest::Approx(acc / 400).epsilon(1e-12));
    CHECK(true_ace(panel) == doctest::Approx(2.5));
  }
  SUBCASE("noiseless deterministic hook: y_fact = treat exactly") {
    auto panel = gen_outcomes(conf, y_prev, treat, Vec::Zero(6), 0.0, 1.0, rng, 0.0);
    for (int i = 0; i < 400; ++i) {
      CHECK(panel.y_fact[i] == static_cast<double>(treat[static_cast<std::size_t>(i)]));
    }
  }
}

TEST_CASE("panel jsonl and proxies csv exports") {
  RngStream rng(14);
  ConfounderSet conf = gen_confounders(6, 3, rng);
  EgoNetwork g = path_graph(6);
  ProxyPanel proxies = gen_proxies(conf, g, 8, 5, rng);
  auto y_prev = gen_baseline_activation(conf, Vec::Zero(3), rng);
  auto treat = compute_treatments(g, y_prev, HRule::Max);
  Vec beta_u = Vec::Ones(3);
  auto panel = gen_outcomes(conf, y_prev, treat, beta_u, 0.2, 1.0, rng);

  std::ostringstream jsonl;
  write_panel_jsonl(panel, jsonl);
  int lines = 0;
  std::istringstream in(jsonl.str());
  std::string line;
  while (std::getline(in, line)) {
    CHECK(line.find("\"node\"") != std::string::npos);
    CHECK(line.find("\"y_fact\"") != std::string::npos);
    ++lines;
  }
  CHECK(lines == 6);

  std::ostringstream dense, sparse;
  write_proxies_csv(proxies, dense, false);
  write_proxies_csv(proxies, sparse, true);
  CHECK(sparse.str().rfind("node,word,count", 0) == 0);
  // sparse triplet count = number of nonzero Z entries
  int nonzeros = 0;
  for (int i = 0; i < 6; ++i) {
    for (int w = 0; w < 8; ++w) nonzeros += proxies.Z(i, w) > 0 ? 1 : 0;
  }
  int triplets = -1;  // skip header
  std::istringstream sin(sparse.str());
  while (std::getline(sin, line)) ++triplets;
  CHECK(triplets == nonzeros);
}
