#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include "fhtriage/ingest.hpp"
#include "fhtriage/pca.hpp"

namespace fhtriage {

struct NGramVector {
  std::size_t n = 1;
  std::map<std::vector<std::string>, std::uint64_t> counts;

  std::uint64_t total() const;
  NGramVector& operator+=(const NGramVector& other);
};

NGramVector ngrams(std::span<const std::string> tokens, std::size_t n);

inline constexpr unsigned kDefaultHashBits = 16;
inline constexpr std::size_t kDefaultNgram = 2;
inline constexpr std::size_t kDefaultSequenceLength = 20000;
inline constexpr std::size_t kDefaultComponents = 100;

/// Signed hashing trick: each n-gram adds +count or -count to one bucket.
/// Bucket and sign come from two independently seeded stable hashes.
Eigen::VectorXd feature_hash(const NGramVector& v, std::size_t dim, std::uint64_t seed);
Eigen::SparseVector<double> feature_hash_sparse(const NGramVector& v, std::size_t dim, std::uint64_t seed);

struct HashSlot {
  std::size_t bucket;
  double sign;
};
HashSlot hash_slot(std::span<const std::string> ngram, std::size_t dim, std::uint64_t seed);

/// Truncate to the first `length` ids or pad with kPadId.
std::vector<std::int64_t> unify(std::span<const std::int64_t> ids, std::size_t length);

enum class Variant : std::uint8_t { Hashing, Sequence };
std::string_view to_string(Variant variant);
Variant parse_variant(std::string_view text);

struct FloatHashDigest {
  SampleId sample;
  SequenceKind kind = SequenceKind::Opcode;
  Variant variant = Variant::Hashing;
  Eigen::VectorXd values;
  /// The source sequence was empty; the digest is the all-pad projection.
  bool from_empty = false;
};

struct HashingParams {
  std::size_t ngram = kDefaultNgram;
  unsigned hash_bits = kDefaultHashBits;
  std::uint64_t seed = 0;

  std::size_t dim() const { return std::size_t{1} << hash_bits; }
};

/// Discrete (pre-PCA) vectors for each variant.
Eigen::SparseVector<double> hashing_vector(const TokenSequence& seq, const HashingParams& params);
Eigen::SparseVector<double> sequence_vector(const TokenSequence& seq, const TokenDictionary& dict,
                                            std::size_t length);

FloatHashDigest digest_hashing(const TokenSequence& seq, const HashingParams& params, const PcaModel& model);
FloatHashDigest digest_sequence(const TokenSequence& seq, const TokenDictionary& dict, std::size_t length,
                                const PcaModel& model);

// Digest files: "sample_id,kind,variant,v1,...,vS" per row, shortest
// round-trip decimal formatting.
void write_digests(std::ostream& out, std::span<const FloatHashDigest> digests);
std::vector<FloatHashDigest> read_digests(std::istream& in);

}  // namespace fhtriage
