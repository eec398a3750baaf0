#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>

#include <Eigen/Dense>
#include <Eigen/SparseCore>

namespace fhtriage {

using RowSparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor, std::int64_t>;

/// Mean vector plus an orthonormal S x D projection basis. Immutable after fit.
struct PcaModel {
  std::size_t input_dim = 0;
  std::size_t components = 0;
  /// Hash seed of the pipeline that produced the fit rows (0 if unused).
  std::uint64_t seed = 0;
  Eigen::VectorXd mean;
  Eigen::MatrixXd basis;  // components x input_dim, rows orthonormal
  Eigen::VectorXd explained_variance;
  /// Components with non-zero variance; the rest complete the basis.
  std::size_t informative_components = 0;
  /// basis * mean, derived from the fields above; not serialized.
  Eigen::VectorXd projected_mean;

  bool rank_deficient() const noexcept { return informative_components < components; }

  void write(std::ostream& out) const;
  static PcaModel read(std::istream& in);
};

enum class PcaSolver : std::uint8_t { Auto, Exact, Randomized };

struct PcaOptions {
  /// Auto picks Exact while min(rows, active columns) <= exact_limit.
  PcaSolver solver = PcaSolver::Auto;
  std::size_t exact_limit = 4000;
  std::size_t oversample = 10;
  std::size_t power_iterations = 4;
  std::uint64_t seed = 0;
};

/// Fits the top `components` principal directions of the rows of `data`.
///
/// Columns that are constant over all rows carry no variance and are
/// dropped before the decomposition. The remaining centered block is
/// decomposed through whichever of the covariance (d x d) or Gram (n x n)
/// matrices is smaller; both are exact. Component signs are fixed so that
/// the largest-magnitude coordinate is positive.
/// Large problems use randomized subspace iteration instead.
PcaModel pca_fit(const RowSparseMatrix& data, std::size_t components, const PcaOptions& options = {});
PcaModel pca_fit(const Eigen::MatrixXd& data, std::size_t components, const PcaOptions& options = {});

Eigen::VectorXd pca_transform(const PcaModel& model, const Eigen::VectorXd& x);
Eigen::VectorXd pca_transform(const PcaModel& model, const Eigen::SparseVector<double>& x);
Eigen::VectorXd pca_reconstruct(const PcaModel& model, const Eigen::VectorXd& projected);

}  // namespace fhtriage
