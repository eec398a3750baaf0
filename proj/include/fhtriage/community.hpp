#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <vector>

namespace fhtriage {

struct WeightedEdge {
  std::uint32_t u = 0;
  std::uint32_t v = 0;
  double weight = 1.0;
};

/// Undirected weighted graph in CSR form. A self-loop entry (i, i) carries
/// the diagonal adjacency value A_ii and is stored once.
class Graph {
 public:
  Graph() = default;
  /// Parallel edges are merged by summing weights. Input self-loops and
  /// negative weights are rejected.
  Graph(std::size_t nodes, std::span<const WeightedEdge> edges);

  std::size_t node_count() const noexcept { return offsets_.empty() ? 0 : offsets_.size() - 1; }
  std::size_t edge_count() const noexcept { return edge_count_; }
  /// Sum over all adjacency entries A_ij, i.e. 2m.
  double total_weight() const noexcept { return total_weight_; }
  double degree(std::size_t i) const noexcept { return degree_[i]; }

  struct Neighbor {
    std::uint32_t node;
    double weight;
  };
  std::span<const Neighbor> neighbors(std::size_t i) const noexcept {
    return {adjacency_.data() + offsets_[i], adjacency_.data() + offsets_[i + 1]};
  }

  /// Collapses each community into one node; intra-community weight becomes
  /// the self-loop. `assignment` must use dense ids.
  Graph aggregate(std::span<const std::uint32_t> assignment, std::size_t communities) const;

  Graph unweighted() const;

 private:
  static Graph from_adjacency(std::vector<std::size_t> offsets, std::vector<Neighbor> adjacency,
                              std::size_t edge_count);

  std::vector<std::size_t> offsets_;
  std::vector<Neighbor> adjacency_;
  std::vector<double> degree_;
  double total_weight_ = 0.0;
  std::size_t edge_count_ = 0;
};

/// Community id per node, dense from 0.
struct Partition {
  std::vector<std::uint32_t> assignment;

  std::size_t node_count() const noexcept { return assignment.size(); }
  std::size_t community_count() const;
  static Partition singletons(std::size_t n);
  /// Renumbers ids densely in order of first appearance.
  static Partition normalized(std::span<const std::uint32_t> raw);
};

/// Newman modularity with resolution gamma (1 = standard). Throws
/// UndefinedModularity when the graph has no edge weight.
double modularity(const Graph& g, const Partition& p, double resolution = 1.0);

std::map<std::uint32_t, std::size_t> community_sizes(const Partition& p);

struct CommunityOptions {
  double resolution = 1.0;
  std::uint64_t seed = 0;
  bool weighted = true;
  /// A local-move pass gaining less than this (in modularity units) ends the level.
  double min_gain = 1e-9;
};

struct LevelSummary {
  std::size_t communities = 0;
  double modularity = 0.0;
};

struct CommunityResult {
  Partition partition;
  /// Empty when the graph has no edges.
  std::optional<double> modularity;
  std::vector<LevelSummary> levels;
  /// Flattened partition after every level (levels.size() entries).
  std::vector<Partition> level_partitions;
};

/// Fast-unfolding modularity optimisation: local moves to the best
/// neighbouring community, then aggregation, until no merge happens.
CommunityResult detect_communities(const Graph& g, const CommunityOptions& options = {});

}  // namespace fhtriage
