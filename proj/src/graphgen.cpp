#include "proemb/graphgen.hpp"

#include <algorithm>
#include <numeric>
#include <ostream>

namespace proemb {

namespace {

constexpr double kDyadEps = 1e-6;

void add_edge(EgoNetwork& g, int a, int b) {
  g.adj[static_cast<std::size_t>(a)].push_back(b);
  g.adj[static_cast<std::size_t>(b)].push_back(a);
}

void sort_adjacency(EgoNetwork& g) {
  for (auto& nbrs : g.adj) std::sort(nbrs.begin(), nbrs.end());
}

// Weighted pick without replacement support: returns an index into weights,
// weights must have positive sum.
std::size_t weighted_pick(const std::vector<double>& weights, double total, RngStream& rng) {
  double u = rng.uniform01() * total;
  double acc = 0.0;
  std::size_t last = weights.size() - 1;
  for (std::size_t k = 0; k < weights.size(); ++k) {
    if (weights[k] <= 0.0) continue;
    acc += weights[k];
    last = k;
    if (u < acc) return k;
  }
  return last;
}

}  // namespace

std::size_t EgoNetwork::edge_count() const {
  std::size_t deg_sum = 0;
  for (const auto& nbrs : adj) deg_sum += nbrs.size();
  return deg_sum / 2;
}

void EgoNetwork::write_edge_csv(std::ostream& out) const {
  out << "src,dst\n";
  for (int i = 0; i < n; ++i) {
    for (int j : adj[static_cast<std::size_t>(i)]) {
      if (i < j) out << i << ',' << j << '\n';
    }
  }
}

EgoNetwork gen_dyads(const Mat& U, RngStream& rng) {
  const int n = static_cast<int>(U.rows());
  if (n < 2 || n % 2 != 0) {
    throw std::invalid_argument("gen_dyads: node count must be even and >= 2");
  }
  EgoNetwork g;
  g.n = n;
  g.adj.assign(static_cast<std::size_t>(n), {});
  g.model = GraphModel::Dyadic;

  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);

  std::vector<bool> matched(static_cast<std::size_t>(n), false);
  std::vector<int> candidates;
  std::vector<double> weights;
  for (int i : order) {
    if (matched[static_cast<std::size_t>(i)]) continue;
    candidates.clear();
    weights.clear();
    double total = 0.0;
    for (int j = 0; j < n; ++j) {
      if (j == i || matched[static_cast<std::size_t>(j)]) continue;
      double w = std::max(cosine_similarity(U.row(i).transpose(), U.row(j).transpose()), 0.0) + kDyadEps;
      candidates.push_back(j);
      weights.push_back(w);
      total += w;
    }
    const int partner = candidates[weighted_pick(weights, total, rng)];
    matched[static_cast<std::size_t>(i)] = true;
    matched[static_cast<std::size_t>(partner)] = true;
    add_edge(g, i, partner);
  }
  sort_adjacency(g);
  return g;
}

EgoNetwork gen_homophily_ba(const Mat& U, int m0, int m, RngStream& rng) {
  const int n = static_cast<int>(U.rows());
  if (!(n >= m0 && m0 >= m && m >= 1)) {
    throw std::invalid_argument("gen_homophily_ba: need n >= m0 >= m >= 1");
  }
  EgoNetwork g;
  g.n = n;
  g.adj.assign(static_cast<std::size_t>(n), {});
  g.model = GraphModel::HomophilyBA;
  g.m0 = m0;
  g.m = m;

  for (int a = 0; a < m0; ++a) {
    for (int b = a + 1; b < m0; ++b) add_edge(g, a, b);
  }

  std::vector<double> weights;
  for (int j = m0; j < n; ++j) {
    weights.assign(static_cast<std::size_t>(j), 0.0);
    double total = 0.0;
    for (int i = 0; i < j; ++i) {
      double c = std::max(cosine_similarity(U.row(i).transpose(), U.row(j).transpose()), 0.0);
      weights[static_cast<std::size_t>(i)] = c * g.degree(i);
      total += weights[static_cast<std::size_t>(i)];
    }
    if (total <= 0.0) {
      // All clamped cosines are zero: fall back to pure degree weights.
      for (int i = 0; i < j; ++i) {
        weights[static_cast<std::size_t>(i)] = g.degree(i);
        total += weights[static_cast<std::size_t>(i)];
      }
    }
    // m distinct targets by sequential renormalization.
    for (int pick = 0; pick < m; ++pick) {
      if (total <= 0.0) {
        // Remaining weights vanished; fall back to uniform over unchosen nodes.
        for (int i = 0; i < j; ++i) {
          if (weights[static_cast<std::size_t>(i)] >= 0.0) {
            weights[static_cast<std::size_t>(i)] = 1.0;
            total += 1.0;
          }
        }
      }
      std::size_t target = weighted_pick(weights, total, rng);
      add_edge(g, static_cast<int>(target), j);
      total -= weights[target];
      weights[target] = -1.0;  // removed from the candidate pool
    }
  }
  sort_adjacency(g);
  return g;
}

}  // namespace proemb
