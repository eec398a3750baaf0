#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fhtriage/floathash.hpp"
#include "fhtriage/lsh.hpp"

namespace fhtriage {

double cosine(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

enum class EstimationMode : std::uint8_t { Exact, Sampled };
std::string_view to_string(EstimationMode mode);

struct MeanSimilarity {
  double mean = 0.0;
  EstimationMode mode = EstimationMode::Exact;
  std::uint64_t pairs = 0;
  std::uint64_t seed = 0;
};

inline constexpr std::size_t kDefaultExactCutoff = 20000;
inline constexpr std::uint64_t kDefaultSamplePairs = 1000000;

/// Mean pairwise cosine over distinct pairs (self-pairs excluded). Exact
/// when rows <= exact_cutoff, otherwise averaged over `sample_pairs`
/// uniformly drawn distinct pairs.
MeanSimilarity estimate_mean_similarity(const Eigen::MatrixXd& digests, std::size_t exact_cutoff,
                                        std::uint64_t sample_pairs, std::uint64_t seed);

struct ThresholdPolicy {
  double percentage = 100.0;
  std::array<double, 2> threshold{};  // indexed by SequenceKind

  double operator[](SequenceKind k) const { return threshold[static_cast<std::size_t>(k)]; }
};

ThresholdPolicy derive_thresholds(double percentage, const std::array<double, 2>& mean_similarity);

/// One kind's digests, rows aligned with `samples`.
struct DigestSet {
  SequenceKind kind = SequenceKind::Opcode;
  std::vector<SampleId> samples;
  Eigen::MatrixXd values;
};

/// Splits digest rows of one variant into per-kind sets (sorted by sample id).
std::array<DigestSet, 2> split_by_kind(std::span<const FloatHashDigest> digests, Variant variant);

struct Edge {
  std::uint32_t a = 0;  // node index, a < b
  std::uint32_t b = 0;
  std::array<double, 2> similarity{};
  double weight = 0.0;

  friend bool operator==(const Edge&, const Edge&) = default;
};

struct SimilarityNetwork {
  std::vector<SampleId> nodes;  // sorted
  std::vector<Edge> edges;      // sorted by (a, b)
  ThresholdPolicy policy;
  /// Samples dropped because a kind was missing or its digest was zero.
  std::vector<SampleId> dropped;
};

struct NetworkOptions {
  LshParams lsh;
  std::size_t jobs = 1;
};

/// Aligned per-kind digests with LSH indexes built once and reused across
/// threshold policies.
class NetworkBuilder {
 public:
  NetworkBuilder(const std::array<DigestSet, 2>& sets, const NetworkOptions& options);

  const std::vector<SampleId>& nodes() const noexcept { return nodes_; }
  const std::vector<SampleId>& dropped() const noexcept { return dropped_; }
  const Eigen::MatrixXd& aligned(SequenceKind k) const { return aligned_[static_cast<std::size_t>(k)]; }

  SimilarityNetwork build(const ThresholdPolicy& policy) const;

  /// Fraction of queries that fell back to an exhaustive scan in the last build.
  double last_exhaustive_fraction() const noexcept { return last_exhaustive_fraction_; }

 private:
  NetworkOptions options_;
  std::vector<SampleId> nodes_;
  std::vector<SampleId> dropped_;
  std::array<Eigen::MatrixXd, 2> aligned_;
  std::vector<CosineIndex> indexes_;
  mutable double last_exhaustive_fraction_ = 0.0;
};

SimilarityNetwork build_network(const std::array<DigestSet, 2>& sets, const ThresholdPolicy& policy,
                                const NetworkOptions& options = {});

// Edge list: "src\tdst\tsim_opcode\tsim_function\tweight", src < dst, with
// '#' comment header lines. The node list goes to a companion file.
void write_edge_list(std::ostream& out, const SimilarityNetwork& net);
void write_node_list(std::ostream& out, const SimilarityNetwork& net);

struct EdgeListFile {
  std::optional<ThresholdPolicy> policy;
  std::vector<SampleId> nodes;
  std::vector<Edge> edges;
};
/// Reads an edge list; node ids are the union of `known_nodes` and every
/// endpoint, sorted.
EdgeListFile read_edge_list(std::istream& in, std::span<const SampleId> known_nodes = {});
std::vector<SampleId> read_node_list(std::istream& in);

}  // namespace fhtriage
