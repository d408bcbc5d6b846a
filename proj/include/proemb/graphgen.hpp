#pragma once

#include <iosfwd>
#include <vector>

#include "proemb/numerics.hpp"

namespace proemb {

enum class GraphModel { Dyadic, HomophilyBA };

struct EgoNetwork {
  int n = 0;
  std::vector<std::vector<int>> adj;  // sorted neighbor lists, symmetric
  GraphModel model = GraphModel::Dyadic;
  int m0 = 0;  // seed clique size (HomophilyBA only)
  int m = 0;   // attachments per arriving node (HomophilyBA only)

  std::size_t edge_count() const;
  int degree(int i) const { return static_cast<int>(adj[static_cast<std::size_t>(i)].size()); }
  /// Plain-text `src,dst` edge list, src < dst, one undirected edge per line.
  void write_edge_csv(std::ostream& out) const;
};

/// Perfect matching by homophily: visit unmatched nodes in random order,
/// partner weight max(cos, 0) + eps among the remaining unmatched nodes.
EgoNetwork gen_dyads(const Mat& U, RngStream& rng);

/// Degree-weighted homophilic preferential attachment: m0 fully connected
/// seed nodes, then each arriving node j attaches to m distinct existing
/// nodes with weight max(cos(U_i, U_j), 0) * degree_i (pure degree weights
/// when every clamped cosine is zero).
EgoNetwork gen_homophily_ba(const Mat& U, int m0, int m, RngStream& rng);

}  // namespace proemb
