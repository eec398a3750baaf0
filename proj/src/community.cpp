#include "fhtriage/community.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <tuple>

#include "fhtriage/error.hpp"
#include "fhtriage/stable_hash.hpp"

namespace fhtriage {

namespace {

struct Triple {
  std::uint32_t row;
  std::uint32_t col;
  double weight;
};

// Sorts and merges (row, col) duplicates, then packs into CSR arrays.
void pack(std::vector<Triple>& triples, std::size_t nodes, std::vector<std::size_t>& offsets,
          std::vector<Graph::Neighbor>& adjacency) {
  std::sort(triples.begin(), triples.end(),
            [](const Triple& a, const Triple& b) { return std::tie(a.row, a.col) < std::tie(b.row, b.col); });
  offsets.assign(nodes + 1, 0);
  adjacency.clear();
  adjacency.reserve(triples.size());
  for (std::size_t i = 0; i < triples.size();) {
    std::size_t j = i;
    double w = 0.0;
    while (j < triples.size() && triples[j].row == triples[i].row && triples[j].col == triples[i].col)
      w += triples[j++].weight;
    adjacency.push_back({triples[i].col, w});
    ++offsets[triples[i].row + 1];
    i = j;
  }
  std::partial_sum(offsets.begin(), offsets.end(), offsets.begin());
}

struct LocalMoveResult {
  std::vector<std::uint32_t> community;
  bool moved = false;
};

// One level of local moving: nodes join the neighbouring community with the
// largest modularity gain until a full pass gains less than min_gain.
LocalMoveResult local_moves(const Graph& g, const CommunityOptions& options, Rng& rng) {
  const std::size_t n = g.node_count();
  const double two_m = g.total_weight();
  const double m = two_m / 2.0;
  const double gamma = options.resolution;

  LocalMoveResult result;
  auto& community = result.community;
  community.resize(n);
  std::iota(community.begin(), community.end(), 0u);
  std::vector<double> tot(n);
  for (std::size_t i = 0; i < n; ++i) tot[i] = g.degree(i);

  std::vector<double> link(n, 0.0);
  std::vector<std::uint32_t> touched;
  std::vector<std::uint32_t> order(n);
  std::iota(order.begin(), order.end(), 0u);

  for (;;) {
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[uniform_index(rng, i)]);
    double pass_gain = 0.0;
    bool any_move = false;
    for (std::uint32_t node : order) {
      const double k = g.degree(node);
      if (k == 0.0) continue;
      const std::uint32_t own = community[node];
      touched.clear();
      for (const auto& nb : g.neighbors(node)) {
        if (nb.node == node) continue;
        const std::uint32_t c = community[nb.node];
        if (link[c] == 0.0 && std::find(touched.begin(), touched.end(), c) == touched.end()) touched.push_back(c);
        link[c] += nb.weight;
      }
      tot[own] -= k;
      auto gain = [&](std::uint32_t c) { return link[c] - gamma * tot[c] * k / two_m; };
      const double own_gain = gain(own);
      std::uint32_t best = own;
      double best_gain = own_gain;
      for (std::uint32_t c : touched) {
        if (c == own) continue;
        const double g_c = gain(c);
        if (g_c > best_gain || (g_c == best_gain && best != own && c < best)) {
          best = c;
          best_gain = g_c;
        }
      }
      tot[best] += k;
      if (best != own) {
        community[node] = best;
        pass_gain += (best_gain - own_gain) / m;
        any_move = true;
        result.moved = true;
      }
      for (std::uint32_t c : touched) link[c] = 0.0;
      link[own] = 0.0;
    }
    if (!any_move || pass_gain < options.min_gain) break;
  }
  return result;
}

}  // namespace

Graph::Graph(std::size_t nodes, std::span<const WeightedEdge> edges) {
  std::vector<Triple> triples;
  triples.reserve(edges.size() * 2);
  for (const auto& e : edges) {
    if (e.u >= nodes || e.v >= nodes)
      throw Error(ErrorCode::InvalidParameter, "edge endpoint out of range");
    if (e.u == e.v) throw Error(ErrorCode::InvalidParameter, "input self-loop on node " + std::to_string(e.u));
    if (!(e.weight >= 0.0) || !std::isfinite(e.weight))
      throw Error(ErrorCode::InvalidParameter, "edge weights must be finite and non-negative");
    triples.push_back({e.u, e.v, e.weight});
    triples.push_back({e.v, e.u, e.weight});
  }
  std::vector<std::size_t> offsets;
  std::vector<Neighbor> adjacency;
  pack(triples, nodes, offsets, adjacency);
  const std::size_t undirected = adjacency.size() / 2;
  *this = from_adjacency(std::move(offsets), std::move(adjacency), undirected);
}

Graph Graph::from_adjacency(std::vector<std::size_t> offsets, std::vector<Neighbor> adjacency, std::size_t edge_count) {
  Graph g;
  g.offsets_ = std::move(offsets);
  g.adjacency_ = std::move(adjacency);
  g.edge_count_ = edge_count;
  const std::size_t n = g.offsets_.empty() ? 0 : g.offsets_.size() - 1;
  g.degree_.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t p = g.offsets_[i]; p < g.offsets_[i + 1]; ++p) g.degree_[i] += g.adjacency_[p].weight;
  g.total_weight_ = std::accumulate(g.degree_.begin(), g.degree_.end(), 0.0);
  return g;
}

Graph Graph::aggregate(std::span<const std::uint32_t> assignment, std::size_t communities) const {
  if (assignment.size() != node_count()) throw Error(ErrorCode::InvalidParameter, "assignment size != node count");
  std::vector<Triple> triples;
  triples.reserve(adjacency_.size());
  for (std::size_t i = 0; i < node_count(); ++i) {
    if (assignment[i] >= communities) throw Error(ErrorCode::InvalidParameter, "community id out of range");
    for (const auto& nb : neighbors(i)) triples.push_back({assignment[i], assignment[nb.node], nb.weight});
  }
  std::vector<std::size_t> offsets;
  std::vector<Neighbor> adjacency;
  pack(triples, communities, offsets, adjacency);
  std::size_t loops = 0;
  for (std::size_t c = 0; c < communities; ++c)
    for (std::size_t p = offsets[c]; p < offsets[c + 1]; ++p) loops += adjacency[p].node == c;
  const std::size_t undirected = loops + (adjacency.size() - loops) / 2;
  return from_adjacency(std::move(offsets), std::move(adjacency), undirected);
}

Graph Graph::unweighted() const {
  Graph g = *this;
  for (auto& nb : g.adjacency_) nb.weight = 1.0;
  return from_adjacency(std::move(g.offsets_), std::move(g.adjacency_), edge_count_);
}

std::size_t Partition::community_count() const {
  if (assignment.empty()) return 0;
  return static_cast<std::size_t>(*std::max_element(assignment.begin(), assignment.end())) + 1;
}

Partition Partition::singletons(std::size_t n) {
  Partition p;
  p.assignment.resize(n);
  std::iota(p.assignment.begin(), p.assignment.end(), 0u);
  return p;
}

Partition Partition::normalized(std::span<const std::uint32_t> raw) {
  Partition p;
  p.assignment.reserve(raw.size());
  std::vector<std::uint32_t> remap;
  std::uint32_t next = 0;
  for (std::uint32_t c : raw) {
    if (c >= remap.size()) remap.resize(static_cast<std::size_t>(c) + 1, UINT32_MAX);
    if (remap[c] == UINT32_MAX) remap[c] = next++;
    p.assignment.push_back(remap[c]);
  }
  return p;
}

double modularity(const Graph& g, const Partition& p, double resolution) {
  if (p.node_count() != g.node_count())
    throw Error(ErrorCode::InvalidParameter, "partition covers " + std::to_string(p.node_count()) + " nodes, graph has " +
                                                 std::to_string(g.node_count()));
  const double two_m = g.total_weight();
  if (!(two_m > 0.0)) throw Error(ErrorCode::UndefinedModularity, "graph has no edge weight");
  const std::size_t c = p.community_count();
  std::vector<double> inside(c, 0.0), tot(c, 0.0);
  for (std::size_t i = 0; i < g.node_count(); ++i) {
    const std::uint32_t ci = p.assignment[i];
    tot[ci] += g.degree(i);
    for (const auto& nb : g.neighbors(i))
      if (p.assignment[nb.node] == ci) inside[ci] += nb.weight;
  }
  double q = 0.0;
  for (std::size_t k = 0; k < c; ++k) q += inside[k] / two_m - resolution * (tot[k] / two_m) * (tot[k] / two_m);
  return q;
}

std::map<std::uint32_t, std::size_t> community_sizes(const Partition& p) {
  std::map<std::uint32_t, std::size_t> sizes;
  for (std::uint32_t c : p.assignment) ++sizes[c];
  return sizes;
}

CommunityResult detect_communities(const Graph& input, const CommunityOptions& options) {
  if (input.node_count() == 0) throw Error(ErrorCode::EmptyInput, "graph has no nodes");
  if (!(options.resolution > 0.0)) throw Error(ErrorCode::InvalidParameter, "resolution must be positive");
  const Graph base = options.weighted ? input : input.unweighted();

  CommunityResult result;
  result.partition = Partition::singletons(base.node_count());
  if (!(base.total_weight() > 0.0)) return result;

  Rng rng(derive_seed(options.seed, 0x10ba1ULL));
  Graph current = base;
  std::vector<std::uint32_t> flat = result.partition.assignment;
  for (;;) {
    auto moves = local_moves(current, options, rng);
    Partition level = Partition::normalized(moves.community);
    const std::size_t communities = level.community_count();
    if (!moves.moved || communities == current.node_count()) break;
    for (auto& c : flat) c = level.assignment[c];
    result.partition.assignment = flat;
    result.level_partitions.push_back(result.partition);
    result.levels.push_back({communities, modularity(base, result.partition, options.resolution)});
    current = current.aggregate(level.assignment, communities);
  }
  result.partition = Partition::normalized(flat);
  result.modularity = modularity(base, result.partition, options.resolution);
  if (result.levels.empty()) result.levels.push_back({result.partition.community_count(), *result.modularity});
  return result;
}

}  // namespace fhtriage
