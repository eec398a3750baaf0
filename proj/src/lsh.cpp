#include "fhtriage/lsh.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <string>

#include "fhtriage/error.hpp"
#include "fhtriage/stable_hash.hpp"

namespace fhtriage {

double stable_dot(const double* a, const double* b, std::size_t n) noexcept {
  double s0 = 0, s1 = 0, s2 = 0, s3 = 0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  for (; i < n; ++i) s0 += a[i] * b[i];
  return (s0 + s1) + (s2 + s3);
}

double predicted_recall(const LshParams& params, double similarity) {
  if (params.exhaustive) return 1.0;
  const double angle = std::acos(std::clamp(similarity, -1.0, 1.0));
  const double agree = 1.0 - angle / std::numbers::pi;
  const auto bits = static_cast<double>(params.bits);
  const auto probes = static_cast<double>(std::min(params.probes, params.bits));
  // Exact bucket, or exactly one disagreeing bit that happens to be probed.
  double per_table = std::pow(agree, bits);
  if (params.bits > 0) per_table += probes * std::pow(agree, bits - 1) * (1.0 - agree);
  per_table = std::min(per_table, 1.0);
  return 1.0 - std::pow(1.0 - per_table, static_cast<double>(params.tables));
}

CosineIndex::CosineIndex(const Eigen::MatrixXd& points, LshParams params)
    : params_(params), points_(points), norms_(points.rows()) {
  if (params_.bits == 0 || params_.bits > 63 || params_.tables == 0)
    throw Error(ErrorCode::InvalidParameter, "LSH needs 1..63 bits and at least one table");
  const auto n = static_cast<std::size_t>(points_.rows());
  const auto d = static_cast<std::size_t>(points_.cols());
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = points_.row(static_cast<Eigen::Index>(i)).data();
    norms_[static_cast<Eigen::Index>(i)] = std::sqrt(stable_dot(row, row, d));
  }
  if (params_.exhaustive) return;

  Rng rng(derive_seed(params_.seed, 0x15aULL));
  hyperplanes_.resize(static_cast<Eigen::Index>(params_.tables * params_.bits), static_cast<Eigen::Index>(d));
  for (Eigen::Index r = 0; r < hyperplanes_.rows(); ++r)
    for (Eigen::Index c = 0; c < hyperplanes_.cols(); ++c) hyperplanes_(r, c) = standard_normal(rng);

  buckets_.resize(params_.tables);
  std::vector<double> proj(params_.tables * params_.bits);
  for (std::size_t i = 0; i < n; ++i) {
    if (norms_[static_cast<Eigen::Index>(i)] == 0.0) continue;
    const double* row = points_.row(static_cast<Eigen::Index>(i)).data();
    for (std::size_t h = 0; h < proj.size(); ++h)
      proj[h] = stable_dot(hyperplanes_.row(static_cast<Eigen::Index>(h)).data(), row, d);
    for (std::size_t t = 0; t < params_.tables; ++t) {
      std::uint64_t code = 0;
      for (std::size_t b = 0; b < params_.bits; ++b)
        if (proj[t * params_.bits + b] > 0) code |= std::uint64_t{1} << b;
      buckets_[t][code].push_back(static_cast<std::uint32_t>(i));
    }
  }
}

bool CosineIndex::scans_at(double threshold) const {
  return params_.exhaustive || predicted_recall(params_, threshold) < params_.target_recall;
}

double CosineIndex::similarity(std::size_t i, std::size_t j) const noexcept {
  const double ni = norms_[static_cast<Eigen::Index>(i)];
  const double nj = norms_[static_cast<Eigen::Index>(j)];
  if (ni == 0.0 || nj == 0.0) return std::numeric_limits<double>::quiet_NaN();
  return stable_dot(points_.row(static_cast<Eigen::Index>(i)).data(), points_.row(static_cast<Eigen::Index>(j)).data(),
                    dim()) /
         (ni * nj);
}

std::vector<std::size_t> CosineIndex::neighbors(const Eigen::VectorXd& query_vec, double threshold,
                                                std::size_t exclude, NeighborQueryStats* stats) const {
  if (static_cast<std::size_t>(query_vec.size()) != dim())
    throw Error(ErrorCode::DimensionMismatch, "query length " + std::to_string(query_vec.size()) +
                                                  " != index dimension " + std::to_string(dim()));
  const double norm = std::sqrt(stable_dot(query_vec.data(), query_vec.data(), dim()));
  return query(query_vec.data(), norm, threshold, exclude, 0, stats);
}

std::vector<std::size_t> CosineIndex::neighbors_of(std::size_t i, double threshold, bool upper_only,
                                                   NeighborQueryStats* stats) const {
  return query(points_.row(static_cast<Eigen::Index>(i)).data(), norms_[static_cast<Eigen::Index>(i)], threshold, i,
               upper_only ? i + 1 : 0, stats);
}

std::vector<std::size_t> CosineIndex::query(const double* q, double q_norm, double threshold, std::size_t exclude,
                                            std::size_t lower_bound, NeighborQueryStats* stats) const {
  std::vector<std::size_t> out;
  NeighborQueryStats local;
  const std::size_t n = size();
  const std::size_t d = dim();
  auto accept = [&](std::size_t j) {
    if (j == exclude || j < lower_bound) return;
    const double nj = norms_[static_cast<Eigen::Index>(j)];
    if (nj == 0.0) return;
    ++local.candidates;
    const double s = stable_dot(q, points_.row(static_cast<Eigen::Index>(j)).data(), d) / (q_norm * nj);
    if (s >= threshold) out.push_back(j);
  };

  if (q_norm == 0.0 || threshold > 1.0) {
    if (stats) *stats = local;
    return out;
  }
  if (scans_at(threshold)) {
    local.scanned_exhaustively = true;
    for (std::size_t j = lower_bound; j < n; ++j) accept(j);
    if (stats) *stats = local;
    return out;
  }

  const std::size_t bits = params_.bits;
  std::vector<double> proj(params_.tables * bits);
  for (std::size_t h = 0; h < proj.size(); ++h)
    proj[h] = stable_dot(hyperplanes_.row(static_cast<Eigen::Index>(h)).data(), q, d);

  std::vector<std::uint32_t> candidates;
  std::vector<std::size_t> order(bits);
  const std::size_t probes = std::min(params_.probes, bits);
  for (std::size_t t = 0; t < params_.tables; ++t) {
    const double* p = proj.data() + t * bits;
    std::uint64_t code = 0;
    for (std::size_t b = 0; b < bits; ++b)
      if (p[b] > 0) code |= std::uint64_t{1} << b;
    auto take = [&](std::uint64_t c) {
      auto it = buckets_[t].find(c);
      if (it != buckets_[t].end()) candidates.insert(candidates.end(), it->second.begin(), it->second.end());
    };
    take(code);
    if (probes == 0) continue;
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(probes), order.end(),
                      [&](std::size_t a, std::size_t b) {
                        return std::abs(p[a]) != std::abs(p[b]) ? std::abs(p[a]) < std::abs(p[b]) : a < b;
                      });
    for (std::size_t k = 0; k < probes; ++k) take(code ^ (std::uint64_t{1} << order[k]));
  }
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
  for (std::uint32_t j : candidates) accept(j);
  if (stats) *stats = local;
  return out;
}

}  // namespace fhtriage
