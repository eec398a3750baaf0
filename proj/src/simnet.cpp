#include "fhtriage/simnet.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <string>

#include "fhtriage/error.hpp"
#include "fhtriage/stable_hash.hpp"
#include "parallel.hpp"

namespace fhtriage {

namespace {

constexpr std::size_t kind_index(SequenceKind k) { return static_cast<std::size_t>(k); }

std::string format_double(double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

double parse_double(std::string_view s, const std::string& context) {
  double v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw Error(ErrorCode::ParseError, context + ": bad number '" + std::string(s) + "'");
  return v;
}

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  for (;;) {
    auto pos = line.find(sep);
    out.push_back(line.substr(0, pos));
    if (pos == std::string_view::npos) return out;
    line.remove_prefix(pos + 1);
  }
}

}  // namespace

double cosine(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  if (a.size() != b.size())
    throw Error(ErrorCode::DimensionMismatch,
                "cosine of vectors with lengths " + std::to_string(a.size()) + " and " + std::to_string(b.size()));
  const auto n = static_cast<std::size_t>(a.size());
  const double na = std::sqrt(stable_dot(a.data(), a.data(), n));
  const double nb = std::sqrt(stable_dot(b.data(), b.data(), n));
  if (na == 0.0 || nb == 0.0) throw Error(ErrorCode::ZeroVector, "cosine of a zero vector is undefined");
  return stable_dot(a.data(), b.data(), n) / (na * nb);
}

std::string_view to_string(EstimationMode mode) { return mode == EstimationMode::Exact ? "exact" : "sampled"; }

MeanSimilarity estimate_mean_similarity(const Eigen::MatrixXd& digests, std::size_t exact_cutoff,
                                        std::uint64_t sample_pairs, std::uint64_t seed) {
  const auto n = static_cast<std::size_t>(digests.rows());
  const auto d = static_cast<std::size_t>(digests.cols());
  if (n < 2) throw Error(ErrorCode::InsufficientData, "mean similarity needs at least 2 digests");
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rows = digests;
  std::vector<double> norms(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double* r = rows.row(static_cast<Eigen::Index>(i)).data();
    norms[i] = std::sqrt(stable_dot(r, r, d));
    if (norms[i] == 0.0) throw Error(ErrorCode::ZeroVector, "digest row " + std::to_string(i) + " is all zeros");
  }

  MeanSimilarity out;
  out.seed = seed;
  if (n <= exact_cutoff) {
    // sum_{i != j} u_i . u_j = |sum u|^2 - sum |u_i|^2 over unit vectors u.
    Eigen::VectorXd total = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d));
    double self = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      Eigen::VectorXd u = rows.row(static_cast<Eigen::Index>(i)).transpose() / norms[i];
      total += u;
      self += u.squaredNorm();
    }
    const double nd = static_cast<double>(n);
    out.mode = EstimationMode::Exact;
    out.pairs = static_cast<std::uint64_t>(n) * (n - 1) / 2;
    out.mean = (total.squaredNorm() - self) / (nd * (nd - 1.0));
    return out;
  }
  if (sample_pairs == 0) throw Error(ErrorCode::InvalidParameter, "sample_pairs must be positive");
  Rng rng(derive_seed(seed, 0xa11a1ULL));
  double sum = 0.0;
  for (std::uint64_t k = 0; k < sample_pairs; ++k) {
    const auto i = static_cast<std::size_t>(uniform_index(rng, n));
    auto j = static_cast<std::size_t>(uniform_index(rng, n - 1));
    if (j >= i) ++j;
    sum += stable_dot(rows.row(static_cast<Eigen::Index>(i)).data(), rows.row(static_cast<Eigen::Index>(j)).data(), d) /
           (norms[i] * norms[j]);
  }
  out.mode = EstimationMode::Sampled;
  out.pairs = sample_pairs;
  out.mean = sum / static_cast<double>(sample_pairs);
  return out;
}

ThresholdPolicy derive_thresholds(double percentage, const std::array<double, 2>& mean_similarity) {
  if (!(percentage > 0.0 && percentage <= 100.0))
    throw Error(ErrorCode::InvalidParameter, "threshold percentage must be in (0, 100], got " + format_double(percentage));
  ThresholdPolicy policy;
  policy.percentage = percentage;
  for (std::size_t k = 0; k < 2; ++k) policy.threshold[k] = percentage / 100.0 * mean_similarity[k];
  return policy;
}

std::array<DigestSet, 2> split_by_kind(std::span<const FloatHashDigest> digests, Variant variant) {
  std::array<std::map<SampleId, const FloatHashDigest*>, 2> by_kind;
  Eigen::Index width = -1;
  for (const auto& d : digests) {
    if (d.variant != variant) continue;
    if (width >= 0 && d.values.size() != width)
      throw Error(ErrorCode::DimensionMismatch, "digest '" + d.sample + "' has a different length");
    width = d.values.size();
    if (!by_kind[kind_index(d.kind)].emplace(d.sample, &d).second)
      throw Error(ErrorCode::DuplicateSample, "two " + std::string(to_string(d.kind)) + " digests for '" + d.sample + "'");
  }
  std::array<DigestSet, 2> out;
  for (SequenceKind k : kAllKinds) {
    auto& set = out[kind_index(k)];
    const auto& src = by_kind[kind_index(k)];
    set.kind = k;
    set.values.resize(static_cast<Eigen::Index>(src.size()), std::max<Eigen::Index>(width, 0));
    Eigen::Index row = 0;
    for (const auto& [id, d] : src) {
      set.samples.push_back(id);
      set.values.row(row++) = d->values.transpose();
    }
  }
  return out;
}

NetworkBuilder::NetworkBuilder(const std::array<DigestSet, 2>& sets, const NetworkOptions& options)
    : options_(options) {
  for (const auto& set : sets) {
    if (set.samples.empty()) throw Error(ErrorCode::EmptyInput, "no " + std::string(to_string(set.kind)) + " digests");
    if (static_cast<std::size_t>(set.values.rows()) != set.samples.size())
      throw Error(ErrorCode::DimensionMismatch, "digest rows do not match sample ids");
  }
  std::array<std::map<std::string_view, Eigen::Index>, 2> rows;
  std::set<std::string_view> all;
  for (std::size_t k = 0; k < 2; ++k) {
    for (std::size_t i = 0; i < sets[k].samples.size(); ++i) {
      if (!rows[k].emplace(sets[k].samples[i], static_cast<Eigen::Index>(i)).second)
        throw Error(ErrorCode::DuplicateSample, "sample '" + sets[k].samples[i] + "' repeated");
      all.insert(sets[k].samples[i]);
    }
  }
  std::vector<std::array<Eigen::Index, 2>> kept;
  for (std::string_view id : all) {
    std::array<Eigen::Index, 2> r{};
    bool ok = true;
    for (std::size_t k = 0; k < 2 && ok; ++k) {
      auto it = rows[k].find(id);
      ok = it != rows[k].end() && sets[k].values.row(it->second).squaredNorm() > 0.0;
      if (ok) r[k] = it->second;
    }
    if (ok) {
      nodes_.emplace_back(id);
      kept.push_back(r);
    } else {
      dropped_.emplace_back(id);
    }
  }
  if (nodes_.empty()) throw Error(ErrorCode::EmptyInput, "no sample has a usable digest of every kind");
  for (std::size_t k = 0; k < 2; ++k) {
    aligned_[k].resize(static_cast<Eigen::Index>(nodes_.size()), sets[k].values.cols());
    for (std::size_t i = 0; i < kept.size(); ++i)
      aligned_[k].row(static_cast<Eigen::Index>(i)) = sets[k].values.row(kept[i][k]);
    indexes_.emplace_back(aligned_[k], options_.lsh);
  }
}

SimilarityNetwork NetworkBuilder::build(const ThresholdPolicy& policy) const {
  SimilarityNetwork net;
  net.nodes = nodes_;
  net.dropped = dropped_;
  net.policy = policy;
  const std::size_t n = nodes_.size();

  // Candidates come from one kind; the other is checked exactly. Prefer a
  // kind whose index can answer without scanning, then the stricter one.
  std::size_t driver = 0;
  auto rank = [&](std::size_t k) { return std::pair(!indexes_[k].scans_at(policy.threshold[k]), policy.threshold[k]); };
  if (rank(1) > rank(0)) driver = 1;
  const std::size_t other = 1 - driver;

  const std::size_t jobs = std::max<std::size_t>(1, options_.jobs);
  std::vector<std::vector<Edge>> chunks(std::min(jobs, std::max<std::size_t>(n, 1)));
  std::vector<std::size_t> scanned(chunks.size(), 0);
  detail::parallel_chunks(n, chunks.size(), [&](std::size_t c, std::size_t begin, std::size_t end) {
    auto& out = chunks[c];
    for (std::size_t i = begin; i < end; ++i) {
      NeighborQueryStats stats;
      for (std::size_t j : indexes_[driver].neighbors_of(i, policy.threshold[driver], true, &stats)) {
        const double s_other = indexes_[other].similarity(i, j);
        if (!(s_other >= policy.threshold[other])) continue;
        Edge e;
        e.a = static_cast<std::uint32_t>(i);
        e.b = static_cast<std::uint32_t>(j);
        e.similarity[driver] = indexes_[driver].similarity(i, j);
        e.similarity[other] = s_other;
        e.weight = (e.similarity[0] + e.similarity[1]) / 2.0;
        out.push_back(e);
      }
      if (stats.scanned_exhaustively) ++scanned[c];
    }
  });
  std::size_t total_scanned = 0;
  for (std::size_t c = 0; c < chunks.size(); ++c) {
    net.edges.insert(net.edges.end(), chunks[c].begin(), chunks[c].end());
    total_scanned += scanned[c];
  }
  last_exhaustive_fraction_ = n ? static_cast<double>(total_scanned) / static_cast<double>(n) : 0.0;
  return net;
}

SimilarityNetwork build_network(const std::array<DigestSet, 2>& sets, const ThresholdPolicy& policy,
                                const NetworkOptions& options) {
  return NetworkBuilder(sets, options).build(policy);
}

void write_edge_list(std::ostream& out, const SimilarityNetwork& net) {
  out << "# percentage=" << format_double(net.policy.percentage)
      << " threshold_opcode=" << format_double(net.policy.threshold[0])
      << " threshold_function=" << format_double(net.policy.threshold[1]) << '\n';
  out << "# src\tdst\tsim_opcode\tsim_function\tweight\n";
  std::string row;
  for (const auto& e : net.edges) {
    row.clear();
    row.append(net.nodes[e.a]).push_back('\t');
    row.append(net.nodes[e.b]).push_back('\t');
    row.append(format_double(e.similarity[0])).push_back('\t');
    row.append(format_double(e.similarity[1])).push_back('\t');
    row.append(format_double(e.weight)).push_back('\n');
    out << row;
  }
}

void write_node_list(std::ostream& out, const SimilarityNetwork& net) {
  for (const auto& id : net.nodes) out << id << '\n';
}

std::vector<SampleId> read_node_list(std::istream& in) {
  std::vector<SampleId> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

EdgeListFile read_edge_list(std::istream& in, std::span<const SampleId> known_nodes) {
  struct Row {
    std::string src, dst;
    std::array<double, 2> sim;
    double weight;
  };
  EdgeListFile file;
  std::vector<Row> rows;
  std::set<SampleId> ids(known_nodes.begin(), known_nodes.end());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::string ctx = "edge list line " + std::to_string(lineno);
    if (line.front() == '#') {
      std::istringstream header(line.substr(1));
      std::string field;
      std::map<std::string, double> values;
      while (header >> field) {
        auto eq = field.find('=');
        if (eq != std::string::npos) values[field.substr(0, eq)] = parse_double(field.substr(eq + 1), ctx);
      }
      if (values.contains("percentage") && values.contains("threshold_opcode") && values.contains("threshold_function")) {
        ThresholdPolicy p;
        p.percentage = values["percentage"];
        p.threshold = {values["threshold_opcode"], values["threshold_function"]};
        file.policy = p;
      }
      continue;
    }
    auto f = split(line, '\t');
    if (f.size() != 5) throw Error(ErrorCode::ParseError, ctx + ": expected 5 tab-separated fields");
    Row r{std::string(f[0]), std::string(f[1]),
          {parse_double(f[2], ctx), parse_double(f[3], ctx)}, parse_double(f[4], ctx)};
    if (r.src == r.dst) throw Error(ErrorCode::ParseError, ctx + ": self-loop on '" + r.src + "'");
    if (r.src > r.dst) std::swap(r.src, r.dst);
    ids.insert(r.src);
    ids.insert(r.dst);
    rows.push_back(std::move(r));
  }
  file.nodes.assign(ids.begin(), ids.end());
  std::map<std::string_view, std::uint32_t> index;
  for (std::size_t i = 0; i < file.nodes.size(); ++i) index.emplace(file.nodes[i], static_cast<std::uint32_t>(i));
  file.edges.reserve(rows.size());
  for (const auto& r : rows) file.edges.push_back({index.at(r.src), index.at(r.dst), r.sim, r.weight});
  std::sort(file.edges.begin(), file.edges.end(),
            [](const Edge& x, const Edge& y) { return std::pair(x.a, x.b) < std::pair(y.a, y.b); });
  return file;
}

}  // namespace fhtriage
