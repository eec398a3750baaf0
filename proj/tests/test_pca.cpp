#include <doctest.h>

#include <cmath>
#include <sstream>

#include "fhtriage/error.hpp"
#include "fhtriage/pca.hpp"
#include "fhtriage/stable_hash.hpp"
#include "oracles.hpp"

using namespace fhtriage;

namespace {

Eigen::MatrixXd gaussian(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = standard_normal(rng);
  return m;
}

oracle::Matrix to_rows(const Eigen::MatrixXd& m) {
  oracle::Matrix out(static_cast<std::size_t>(m.rows()), std::vector<double>(static_cast<std::size_t>(m.cols())));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) out[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = m(i, j);
  return out;
}

void check_orthonormal(const PcaModel& m, double tol) {
  const Eigen::MatrixXd g = m.basis * m.basis.transpose();
  CHECK((g - Eigen::MatrixXd::Identity(g.rows(), g.cols())).cwiseAbs().maxCoeff() < tol);
}

}  // namespace

TEST_CASE("variance along one axis") {
  Eigen::MatrixXd x(3, 2);
  x << 0, 0, 2, 0, 4, 0;
  const auto m = pca_fit(x, 1);
  CHECK(m.mean.isApprox(Eigen::Vector2d(2, 0)));
  CHECK(m.basis(0, 0) == doctest::Approx(1.0));
  CHECK(m.basis(0, 1) == doctest::Approx(0.0));
  CHECK(m.explained_variance[0] == doctest::Approx(4.0));
}

TEST_CASE("lossless at full rank") {
  const auto x = gaussian(12, 5, 3);
  const auto m = pca_fit(x, 5);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const Eigen::VectorXd row = x.row(i).transpose();
    CHECK((pca_reconstruct(m, pca_transform(m, row)) - row).cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("matches a Jacobi eigendecomposition of the covariance") {
  const auto x = gaussian(50, 200, 2024);
  const auto m = pca_fit(x, 10);
  const auto [values, vectors] = oracle::jacobi_eigen(oracle::covariance(to_rows(x)));
  for (std::size_t k = 0; k < 10; ++k) {
    CHECK(std::abs(m.explained_variance[static_cast<Eigen::Index>(k)] - values[k]) < 1e-6);
    double same = 0, flipped = 0;
    for (std::size_t j = 0; j < 200; ++j) {
      same = std::max(same, std::abs(m.basis(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j)) - vectors[k][j]));
      flipped =
          std::max(flipped, std::abs(m.basis(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j)) + vectors[k][j]));
    }
    CHECK(std::min(same, flipped) < 1e-6);
  }
}

TEST_CASE("transformed rows have the explained variance") {
  const auto x = gaussian(40, 15, 77);
  const auto m = pca_fit(x, 6);
  Eigen::MatrixXd t(x.rows(), 6);
  for (Eigen::Index i = 0; i < x.rows(); ++i) t.row(i) = pca_transform(m, Eigen::VectorXd(x.row(i).transpose())).transpose();
  for (Eigen::Index k = 0; k < 6; ++k) {
    const Eigen::VectorXd col = t.col(k);
    const double var = (col.array() - col.mean()).square().sum() / static_cast<double>(x.rows() - 1);
    CHECK(std::abs(var - m.explained_variance[k]) < 1e-6);
  }
}

TEST_CASE("model invariants") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto x = gaussian(30, 60, seed);
    const auto m = pca_fit(x, 12);
    check_orthonormal(m, 1e-6);
    for (Eigen::Index k = 1; k < m.explained_variance.size(); ++k)
      CHECK(m.explained_variance[k] <= m.explained_variance[k - 1]);
    for (Eigen::Index k = 0; k < m.basis.rows(); ++k) {
      Eigen::Index arg = 0;
      m.basis.row(k).cwiseAbs().maxCoeff(&arg);
      CHECK(m.basis(k, arg) > 0);
    }
  }
}

TEST_CASE("projection basics") {
  const auto x = gaussian(10, 4, 1);
  const auto m = pca_fit(x, 3);
  CHECK(pca_transform(m, Eigen::VectorXd(m.mean)).cwiseAbs().maxCoeff() < 1e-12);

  PcaModel axis;
  axis.input_dim = 2;
  axis.components = 1;
  axis.mean = Eigen::Vector2d(0, 0);
  axis.basis = Eigen::MatrixXd(1, 2);
  axis.basis << 1, 0;
  axis.explained_variance = Eigen::VectorXd::Ones(1);
  axis.informative_components = 1;
  axis.projected_mean = Eigen::VectorXd::Zero(1);
  CHECK(pca_transform(axis, Eigen::VectorXd(Eigen::Vector2d(3, 7)))[0] == 3.0);

  try {
    pca_transform(m, Eigen::VectorXd(Eigen::VectorXd::Zero(5)));
    FAIL("expected DimensionMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DimensionMismatch);
  }
}

TEST_CASE("fit errors") {
  try {
    pca_fit(gaussian(1, 4, 1), 1);
    FAIL("expected InsufficientData");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InsufficientData);
  }
  try {
    pca_fit(gaussian(5, 4, 1), 6);
    FAIL("expected InvalidParameter");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InvalidParameter);
  }
  CHECK_THROWS_AS(pca_fit(gaussian(5, 4, 1), 0), Error);
}

TEST_CASE("rank-deficient input completes the basis") {
  Eigen::MatrixXd x(4, 3);
  x << 1, 2, 0, 2, 4, 0, 3, 6, 0, 4, 8, 0;
  const auto m = pca_fit(x, 3);
  CHECK(m.informative_components == 1);
  CHECK(m.rank_deficient());
  CHECK(m.explained_variance[1] == 0.0);
  CHECK(m.explained_variance[2] == 0.0);
  check_orthonormal(m, 1e-9);
}

TEST_CASE("sparse and dense fits agree") {
  Rng rng(6);
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(25, 80);
  for (int k = 0; k < 300; ++k) x(uniform_index(rng, 25), uniform_index(rng, 80)) += 1.0 + uniform_index(rng, 3);
  const RowSparseMatrix s = x.sparseView().cast<double>();
  const auto a = pca_fit(x, 7);
  const auto b = pca_fit(s, 7);
  CHECK((a.basis - b.basis).cwiseAbs().maxCoeff() < 1e-9);
  CHECK((a.explained_variance - b.explained_variance).cwiseAbs().maxCoeff() < 1e-9);
  const Eigen::SparseVector<double> row = s.row(3);
  const Eigen::VectorXd dense_row = x.row(3).transpose();
  CHECK((pca_transform(b, row) - pca_transform(b, dense_row)).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("randomized solver agrees on a decaying spectrum") {
  Rng rng(12);
  const Eigen::Index n = 120, d = 90;
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(n, d);
  for (Eigen::Index k = 0; k < 8; ++k) {
    const Eigen::VectorXd u = gaussian(static_cast<std::size_t>(n), 1, 100 + static_cast<std::uint64_t>(k));
    const Eigen::VectorXd v = gaussian(static_cast<std::size_t>(d), 1, 200 + static_cast<std::uint64_t>(k));
    x += std::pow(0.3, static_cast<double>(k)) * 10.0 * u * v.transpose();
  }
  PcaOptions exact, randomized;
  exact.solver = PcaSolver::Exact;
  randomized.solver = PcaSolver::Randomized;
  randomized.seed = 3;
  const auto a = pca_fit(x, 4, exact);
  const auto b = pca_fit(x, 4, randomized);
  for (Eigen::Index k = 0; k < 4; ++k) {
    CHECK(b.explained_variance[k] == doctest::Approx(a.explained_variance[k]).epsilon(1e-6));
    CHECK(std::abs(std::abs(a.basis.row(k).dot(b.basis.row(k))) - 1.0) < 1e-6);
  }
}

TEST_CASE("model files round-trip bit-exactly") {
  auto m = pca_fit(gaussian(20, 9, 5), 4);
  m.seed = 0xabcdef;
  std::stringstream ss;
  m.write(ss);
  const auto back = PcaModel::read(ss);
  CHECK(back.input_dim == m.input_dim);
  CHECK(back.components == m.components);
  CHECK(back.seed == m.seed);
  CHECK(back.informative_components == m.informative_components);
  CHECK(back.mean == m.mean);
  CHECK(back.basis == m.basis);
  CHECK(back.explained_variance == m.explained_variance);
  std::stringstream again;
  back.write(again);
  CHECK(again.str() == ss.str());

  std::istringstream junk("not a model");
  CHECK_THROWS_AS(PcaModel::read(junk), Error);
}
