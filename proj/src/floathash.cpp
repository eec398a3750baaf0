#include "fhtriage/floathash.hpp"

#include <charconv>
#include <cmath>
#include <istream>
#include <ostream>
#include <string>

#include "fhtriage/error.hpp"
#include "fhtriage/stable_hash.hpp"

namespace fhtriage {

namespace {

constexpr std::uint64_t kSignSalt = 0x51a7e5d00dULL;

void check_dim(std::size_t dim) {
  if (dim == 0 || (dim & (dim - 1)) != 0)
    throw Error(ErrorCode::InvalidParameter, "hash dimension must be a power of two, got " + std::to_string(dim));
}

void append_double(std::string& out, double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, end);
}

}  // namespace

std::uint64_t NGramVector::total() const {
  std::uint64_t sum = 0;
  for (const auto& [gram, count] : counts) sum += count;
  return sum;
}

NGramVector& NGramVector::operator+=(const NGramVector& other) {
  if (other.n != n) throw Error(ErrorCode::InvalidParameter, "cannot add n-gram vectors of different order");
  for (const auto& [gram, count] : other.counts) counts[gram] += count;
  return *this;
}

NGramVector ngrams(std::span<const std::string> tokens, std::size_t n) {
  if (n == 0) throw Error(ErrorCode::InvalidParameter, "n-gram order must be >= 1");
  NGramVector v;
  v.n = n;
  if (tokens.size() < n) return v;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i)
    ++v.counts[std::vector<std::string>(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                                        tokens.begin() + static_cast<std::ptrdiff_t>(i + n))];
  return v;
}

HashSlot hash_slot(std::span<const std::string> ngram, std::size_t dim, std::uint64_t seed) {
  std::vector<std::string_view> views(ngram.begin(), ngram.end());
  const std::uint64_t bucket_hash = hash_tokens(views, seed);
  const std::uint64_t sign_hash = hash_tokens(views, derive_seed(seed, kSignSalt));
  return {static_cast<std::size_t>(bucket_hash & (dim - 1)), (sign_hash >> 63) ? -1.0 : 1.0};
}

Eigen::VectorXd feature_hash(const NGramVector& v, std::size_t dim, std::uint64_t seed) {
  check_dim(dim);
  Eigen::VectorXd out = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim));
  for (const auto& [gram, count] : v.counts) {
    auto slot = hash_slot(gram, dim, seed);
    out[static_cast<Eigen::Index>(slot.bucket)] += slot.sign * static_cast<double>(count);
  }
  return out;
}

Eigen::SparseVector<double> feature_hash_sparse(const NGramVector& v, std::size_t dim, std::uint64_t seed) {
  check_dim(dim);
  std::map<std::size_t, double> acc;
  for (const auto& [gram, count] : v.counts) {
    auto slot = hash_slot(gram, dim, seed);
    acc[slot.bucket] += slot.sign * static_cast<double>(count);
  }
  Eigen::SparseVector<double> out(static_cast<Eigen::Index>(dim));
  out.reserve(static_cast<Eigen::Index>(acc.size()));
  for (const auto& [bucket, value] : acc)
    if (value != 0.0) out.insertBack(static_cast<Eigen::Index>(bucket)) = value;
  return out;
}

std::vector<std::int64_t> unify(std::span<const std::int64_t> ids, std::size_t length) {
  if (length == 0) throw Error(ErrorCode::InvalidParameter, "unified length must be >= 1");
  std::vector<std::int64_t> out(length, kPadId);
  std::copy_n(ids.begin(), std::min(length, ids.size()), out.begin());
  return out;
}

std::string_view to_string(Variant variant) { return variant == Variant::Hashing ? "hashing" : "sequence"; }

Variant parse_variant(std::string_view text) {
  if (text == "hashing") return Variant::Hashing;
  if (text == "sequence") return Variant::Sequence;
  throw Error(ErrorCode::ParseError, "unknown digest variant '" + std::string(text) + "'");
}

Eigen::SparseVector<double> hashing_vector(const TokenSequence& seq, const HashingParams& params) {
  return feature_hash_sparse(ngrams(seq.tokens, params.ngram), params.dim(), params.seed);
}

Eigen::SparseVector<double> sequence_vector(const TokenSequence& seq, const TokenDictionary& dict, std::size_t length) {
  auto ids = map_sequence(seq, dict);
  if (length == 0) throw Error(ErrorCode::InvalidParameter, "unified length must be >= 1");
  // Same values as unify(); the pad region is the implicit zero tail.
  const std::size_t kept = std::min(length, ids.size());
  Eigen::SparseVector<double> out(static_cast<Eigen::Index>(length));
  out.reserve(static_cast<Eigen::Index>(kept));
  for (std::size_t i = 0; i < kept; ++i) out.insertBack(static_cast<Eigen::Index>(i)) = static_cast<double>(ids[i]);
  return out;
}

FloatHashDigest digest_hashing(const TokenSequence& seq, const HashingParams& params, const PcaModel& model) {
  if (model.input_dim != params.dim())
    throw Error(ErrorCode::DimensionMismatch, "model input_dim " + std::to_string(model.input_dim) +
                                                  " != hash dimension " + std::to_string(params.dim()));
  return {seq.sample, seq.kind, Variant::Hashing, pca_transform(model, hashing_vector(seq, params)),
          seq.tokens.empty()};
}

FloatHashDigest digest_sequence(const TokenSequence& seq, const TokenDictionary& dict, std::size_t length,
                                const PcaModel& model) {
  if (model.input_dim != length)
    throw Error(ErrorCode::DimensionMismatch, "model input_dim " + std::to_string(model.input_dim) +
                                                  " != sequence length " + std::to_string(length));
  return {seq.sample, seq.kind, Variant::Sequence, pca_transform(model, sequence_vector(seq, dict, length)),
          seq.tokens.empty()};
}

void write_digests(std::ostream& out, std::span<const FloatHashDigest> digests) {
  std::string row;
  for (const auto& d : digests) {
    if (d.sample.find_first_of(",\n\r") != std::string::npos)
      throw Error(ErrorCode::InvalidParameter, "sample id '" + d.sample + "' cannot be written to a CSV digest file");
    row.clear();
    row.append(d.sample).append(",").append(to_string(d.kind)).append(",").append(to_string(d.variant));
    for (double v : d.values) {
      if (!std::isfinite(v)) throw Error(ErrorCode::InvalidParameter, "non-finite digest value for " + d.sample);
      row.push_back(',');
      append_double(row, v);
    }
    row.push_back('\n');
    out << row;
  }
}

std::vector<FloatHashDigest> read_digests(std::istream& in) {
  std::vector<FloatHashDigest> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fail = [&](const std::string& why) {
      return Error(ErrorCode::ParseError, "digests line " + std::to_string(lineno) + ": " + why);
    };
    std::vector<std::string_view> fields;
    std::string_view rest(line);
    for (;;) {
      auto comma = rest.find(',');
      fields.push_back(rest.substr(0, comma));
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    if (fields.size() < 4) throw fail("expected sample,kind,variant and at least one value");
    FloatHashDigest d;
    d.sample = std::string(fields[0]);
    d.kind = parse_kind(fields[1]);
    d.variant = parse_variant(fields[2]);
    d.values.resize(static_cast<Eigen::Index>(fields.size() - 3));
    for (std::size_t i = 3; i < fields.size(); ++i) {
      double v = 0;
      auto f = fields[i];
      auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
      if (ec != std::errc() || ptr != f.data() + f.size()) throw fail("bad number '" + std::string(f) + "'");
      d.values[static_cast<Eigen::Index>(i - 3)] = v;
    }
    if (!out.empty() && out.front().values.size() != d.values.size()) throw fail("digest length differs from first row");
    out.push_back(std::move(d));
  }
  return out;
}

}  // namespace fhtriage
