#pragma once

// Random-hyperplane LSH for cosine similarity with query-directed
// multi-probing. Candidates are always re-scored exactly, so the index
// can only lose recall, never precision.

#include <cstddef>
#include <cstdint>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

namespace fhtriage {

/// Dot product with a fixed summation order (four interleaved partial sums),
/// so every caller gets bit-identical results regardless of alignment.
double stable_dot(const double* a, const double* b, std::size_t n) noexcept;

struct LshParams {
  std::size_t tables = 24;
  std::size_t bits = 12;
  /// Extra buckets probed per table by flipping the least confident bits.
  std::size_t probes = 8;
  std::uint64_t seed = 0x5eedULL;
  /// Scan every point instead of hashing.
  bool exhaustive = false;
  /// Queries whose predicted recall at the requested threshold falls below
  /// this value are answered by an exhaustive scan.
  double target_recall = 0.95;
};

/// Lower bound on the probability that a point at cosine `similarity` from
/// the query lands in one of the probed buckets of at least one table.
double predicted_recall(const LshParams& params, double similarity);

struct NeighborQueryStats {
  std::size_t candidates = 0;
  bool scanned_exhaustively = false;
};

class CosineIndex {
 public:
  using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  /// Rows of `points` are the indexed vectors. Zero rows are kept but never
  /// reported as neighbors.
  CosineIndex(const Eigen::MatrixXd& points, LshParams params);

  std::size_t size() const noexcept { return static_cast<std::size_t>(points_.rows()); }
  std::size_t dim() const noexcept { return static_cast<std::size_t>(points_.cols()); }
  const LshParams& params() const noexcept { return params_; }

  /// Indices whose exact cosine with `query` is >= threshold, ascending.
  /// `exclude` (if not npos) is dropped from the result.
  std::vector<std::size_t> neighbors(const Eigen::VectorXd& query, double threshold,
                                     std::size_t exclude = static_cast<std::size_t>(-1),
                                     NeighborQueryStats* stats = nullptr) const;

  /// Same as neighbors() for the indexed point i; only indices > i are
  /// returned when `upper_only` is set.
  std::vector<std::size_t> neighbors_of(std::size_t i, double threshold, bool upper_only,
                                        NeighborQueryStats* stats = nullptr) const;

  /// Exact cosine between indexed points (NaN if either is zero).
  double similarity(std::size_t i, std::size_t j) const noexcept;

  /// True when a query at this threshold is answered by scanning.
  bool scans_at(double threshold) const;

 private:
  std::vector<std::size_t> query(const double* q, double q_norm, double threshold, std::size_t exclude,
                                 std::size_t lower_bound, NeighborQueryStats* stats) const;

  LshParams params_;
  RowMatrix points_;
  Eigen::VectorXd norms_;
  RowMatrix hyperplanes_;  // (tables * bits) x dim
  std::vector<std::unordered_map<std::uint64_t, std::vector<std::uint32_t>>> buckets_;
};

}  // namespace fhtriage
