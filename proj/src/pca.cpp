#include "fhtriage/pca.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <istream>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include "fhtriage/error.hpp"
#include "fhtriage/stable_hash.hpp"

namespace fhtriage {

namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

constexpr char kMagic[8] = {'F', 'H', 'P', 'C', 'A', 'M', 'D', 'L'};
constexpr std::uint32_t kFormatVersion = 1;

struct Decomposition {
  MatrixXd vectors;   // active_dim x k, orthonormal columns, descending variance
  VectorXd eigenvalues;  // squared singular values of the centered block
};

// Top-k eigenpairs of a symmetric matrix, descending.
std::pair<MatrixXd, VectorXd> top_eigen(const MatrixXd& sym, std::size_t k) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> solver(sym);
  if (solver.info() != Eigen::Success) throw Error(ErrorCode::InvalidParameter, "eigendecomposition failed");
  const Index n = sym.rows();
  const Index kk = static_cast<Index>(k);
  MatrixXd vecs(n, kk);
  VectorXd vals(kk);
  for (Index i = 0; i < kk; ++i) {
    vecs.col(i) = solver.eigenvectors().col(n - 1 - i);
    vals[i] = std::max(0.0, solver.eigenvalues()[n - 1 - i]);
  }
  return {vecs, vals};
}

Decomposition exact_decomposition(const MatrixXd& centered, std::size_t k) {
  const Index n = centered.rows();
  const Index d = centered.cols();
  Decomposition out;
  if (d <= n) {
    MatrixXd cov = MatrixXd::Zero(d, d);
    cov.selfadjointView<Eigen::Lower>().rankUpdate(centered.transpose());
    cov.triangularView<Eigen::StrictlyUpper>() = cov.transpose();
    std::tie(out.vectors, out.eigenvalues) = top_eigen(cov, k);
    return out;
  }
  MatrixXd gram = MatrixXd::Zero(n, n);
  gram.selfadjointView<Eigen::Lower>().rankUpdate(centered);
  gram.triangularView<Eigen::StrictlyUpper>() = gram.transpose();
  auto [u, vals] = top_eigen(gram, k);
  out.eigenvalues = vals;
  out.vectors = centered.transpose() * u;
  for (Index i = 0; i < out.vectors.cols(); ++i) {
    const double norm = out.vectors.col(i).norm();
    if (norm > 0) out.vectors.col(i) /= norm;
  }
  return out;
}

MatrixXd orthonormal_columns(const MatrixXd& m) {
  Eigen::HouseholderQR<MatrixXd> qr(m);
  return qr.householderQ() * MatrixXd::Identity(m.rows(), m.cols());
}

Decomposition randomized_decomposition(const MatrixXd& centered, std::size_t k, const PcaOptions& options) {
  const Index n = centered.rows();
  const Index d = centered.cols();
  const Index width = std::min<Index>(std::min(n, d), static_cast<Index>(k + options.oversample));
  Rng rng(derive_seed(options.seed, 0x7a11dULL));
  MatrixXd omega(d, width);
  for (Index j = 0; j < width; ++j)
    for (Index i = 0; i < d; ++i) omega(i, j) = standard_normal(rng);
  MatrixXd q = orthonormal_columns(centered * omega);
  for (std::size_t it = 0; it < options.power_iterations; ++it) {
    MatrixXd z = orthonormal_columns(centered.transpose() * q);
    q = orthonormal_columns(centered * z);
  }
  const MatrixXd b = q.transpose() * centered;  // width x d
  const MatrixXd bbt = b * b.transpose();
  auto [w, vals] = top_eigen(bbt, k);
  Decomposition out;
  out.eigenvalues = vals;
  out.vectors = b.transpose() * w;
  for (Index i = 0; i < out.vectors.cols(); ++i) {
    const double norm = out.vectors.col(i).norm();
    if (norm > 0) out.vectors.col(i) /= norm;
  }
  return out;
}

void canonicalize_sign(MatrixXd& basis) {
  for (Index r = 0; r < basis.rows(); ++r) {
    Index arg = 0;
    double best = -1.0;
    for (Index c = 0; c < basis.cols(); ++c) {
      if (std::abs(basis(r, c)) > best) {
        best = std::abs(basis(r, c));
        arg = c;
      }
    }
    if (basis(r, arg) < 0) basis.row(r) *= -1.0;
  }
}

// Fills rows [first, S) with unit vectors orthogonal to everything above,
// trying standard basis vectors in index order.
void complete_basis(MatrixXd& basis, Index first) {
  const Index dim = basis.cols();
  Index row = first;
  for (Index j = 0; j < dim && row < basis.rows(); ++j) {
    VectorXd candidate = VectorXd::Unit(dim, j);
    for (int pass = 0; pass < 2; ++pass)
      for (Index r = 0; r < row; ++r) candidate -= basis.row(r).dot(candidate) * basis.row(r).transpose();
    const double norm = candidate.norm();
    if (norm > 0.5) basis.row(row++) = candidate / norm;
  }
}

void update_projected_mean(PcaModel& m) { m.projected_mean = m.basis * m.mean; }

template <typename T>
void put(std::ostream& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  if constexpr (std::endian::native == std::endian::big) {
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, &value, sizeof(T));
    std::reverse(bytes, bytes + sizeof(T));
    out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
  } else {
    out.write(reinterpret_cast<const char*>(&value), sizeof(T));
  }
}

template <typename T>
T get(std::istream& in) {
  T value;
  unsigned char bytes[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(T))) throw Error(ErrorCode::ParseError, "model file truncated");
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

}  // namespace

PcaModel pca_fit(const RowSparseMatrix& data, std::size_t components, const PcaOptions& options) {
  const Index n = data.rows();
  const Index dim = data.cols();
  if (n < 2) throw Error(ErrorCode::InsufficientData, "PCA needs at least 2 rows, got " + std::to_string(n));
  if (components == 0 || components > static_cast<std::size_t>(std::min(n, dim)))
    throw Error(ErrorCode::InvalidParameter, "component count " + std::to_string(components) +
                                                 " must be in [1, min(rows, columns)]");

  // Column means and constant-column detection in one sparse sweep.
  VectorXd sum = VectorXd::Zero(dim);
  std::vector<Index> nnz(static_cast<std::size_t>(dim), 0);
  VectorXd lo = VectorXd::Constant(dim, std::numeric_limits<double>::infinity());
  VectorXd hi = VectorXd::Constant(dim, -std::numeric_limits<double>::infinity());
  for (Index r = 0; r < n; ++r) {
    for (RowSparseMatrix::InnerIterator it(data, r); it; ++it) {
      const Index c = it.col();
      sum[c] += it.value();
      ++nnz[static_cast<std::size_t>(c)];
      lo[c] = std::min(lo[c], it.value());
      hi[c] = std::max(hi[c], it.value());
    }
  }
  std::vector<Index> active;
  std::vector<Index> column_slot(static_cast<std::size_t>(dim), -1);
  for (Index c = 0; c < dim; ++c) {
    const Index count = nnz[static_cast<std::size_t>(c)];
    if (count == 0) continue;
    double mn = lo[c], mx = hi[c];
    if (count < n) {
      mn = std::min(mn, 0.0);
      mx = std::max(mx, 0.0);
    }
    if (mn != mx) {
      column_slot[static_cast<std::size_t>(c)] = static_cast<Index>(active.size());
      active.push_back(c);
    }
  }

  PcaModel model;
  model.input_dim = static_cast<std::size_t>(dim);
  model.components = components;
  model.seed = options.seed;
  model.mean = sum / static_cast<double>(n);
  model.basis = MatrixXd::Zero(static_cast<Index>(components), dim);
  model.explained_variance = VectorXd::Zero(static_cast<Index>(components));

  const Index active_dim = static_cast<Index>(active.size());
  std::size_t informative = 0;
  if (active_dim > 0) {
    MatrixXd centered(n, active_dim);
    for (Index j = 0; j < active_dim; ++j) centered.col(j).setConstant(-model.mean[active[static_cast<std::size_t>(j)]]);
    for (Index r = 0; r < n; ++r)
      for (RowSparseMatrix::InnerIterator it(data, r); it; ++it)
        if (Index slot = column_slot[static_cast<std::size_t>(it.col())]; slot >= 0) centered(r, slot) += it.value();

    const std::size_t k = std::min<std::size_t>(components, static_cast<std::size_t>(std::min(n, active_dim)));
    const bool exact = options.solver == PcaSolver::Exact ||
                       (options.solver == PcaSolver::Auto &&
                        static_cast<std::size_t>(std::min(n, active_dim)) <= options.exact_limit);
    Decomposition dec = exact ? exact_decomposition(centered, k) : randomized_decomposition(centered, k, options);

    const double top = dec.eigenvalues.size() ? dec.eigenvalues[0] : 0.0;
    const double tol = std::max(top, 1e-300) * static_cast<double>(std::max(n, active_dim)) *
                       std::numeric_limits<double>::epsilon() * 16.0;
    for (Index i = 0; i < static_cast<Index>(k); ++i) {
      if (dec.eigenvalues[i] <= tol) break;
      for (Index j = 0; j < active_dim; ++j) model.basis(i, active[static_cast<std::size_t>(j)]) = dec.vectors(j, i);
      model.explained_variance[i] = dec.eigenvalues[i] / static_cast<double>(n - 1);
      ++informative;
    }
  }
  model.informative_components = informative;
  complete_basis(model.basis, static_cast<Index>(informative));
  canonicalize_sign(model.basis);
  update_projected_mean(model);
  return model;
}

PcaModel pca_fit(const MatrixXd& data, std::size_t components, const PcaOptions& options) {
  return pca_fit(RowSparseMatrix(data.sparseView()), components, options);
}

VectorXd pca_transform(const PcaModel& model, const VectorXd& x) {
  if (static_cast<std::size_t>(x.size()) != model.input_dim)
    throw Error(ErrorCode::DimensionMismatch, "vector length " + std::to_string(x.size()) + " != model input_dim " +
                                                  std::to_string(model.input_dim));
  return model.basis * (x - model.mean);
}

VectorXd pca_transform(const PcaModel& model, const Eigen::SparseVector<double>& x) {
  if (static_cast<std::size_t>(x.size()) != model.input_dim)
    throw Error(ErrorCode::DimensionMismatch, "vector length " + std::to_string(x.size()) + " != model input_dim " +
                                                  std::to_string(model.input_dim));
  VectorXd out = -model.projected_mean;
  for (Eigen::SparseVector<double>::InnerIterator it(x); it; ++it) out += it.value() * model.basis.col(it.index());
  return out;
}

VectorXd pca_reconstruct(const PcaModel& model, const VectorXd& projected) {
  if (static_cast<std::size_t>(projected.size()) != model.components)
    throw Error(ErrorCode::DimensionMismatch, "projected length != model components");
  return model.basis.transpose() * projected + model.mean;
}

void PcaModel::write(std::ostream& out) const {
  out.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kFormatVersion);
  put<std::uint64_t>(out, input_dim);
  put<std::uint64_t>(out, components);
  put<std::uint64_t>(out, seed);
  put<std::uint64_t>(out, informative_components);
  for (Index i = 0; i < mean.size(); ++i) put<double>(out, mean[i]);
  for (Index r = 0; r < basis.rows(); ++r)
    for (Index c = 0; c < basis.cols(); ++c) put<double>(out, basis(r, c));
  for (Index i = 0; i < explained_variance.size(); ++i) put<double>(out, explained_variance[i]);
  if (!out) throw Error(ErrorCode::IoError, "failed to write PCA model");
}

PcaModel PcaModel::read(std::istream& in) {
  char magic[sizeof(kMagic)];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw Error(ErrorCode::ParseError, "not a PCA model file");
  if (auto version = get<std::uint32_t>(in); version != kFormatVersion)
    throw Error(ErrorCode::ParseError, "unsupported model version " + std::to_string(version));
  PcaModel m;
  m.input_dim = get<std::uint64_t>(in);
  m.components = get<std::uint64_t>(in);
  m.seed = get<std::uint64_t>(in);
  m.informative_components = get<std::uint64_t>(in);
  if (m.components == 0 || m.components > m.input_dim || m.informative_components > m.components ||
      m.input_dim > (std::uint64_t{1} << 32))
    throw Error(ErrorCode::ParseError, "inconsistent model header");
  const auto d = static_cast<Index>(m.input_dim);
  const auto s = static_cast<Index>(m.components);
  m.mean.resize(d);
  for (Index i = 0; i < d; ++i) m.mean[i] = get<double>(in);
  m.basis.resize(s, d);
  for (Index r = 0; r < s; ++r)
    for (Index c = 0; c < d; ++c) m.basis(r, c) = get<double>(in);
  m.explained_variance.resize(s);
  for (Index i = 0; i < s; ++i) m.explained_variance[i] = get<double>(in);
  update_projected_mean(m);
  return m;
}

}  // namespace fhtriage
