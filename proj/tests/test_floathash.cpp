#include <doctest.h>

#include <cmath>
#include <sstream>

#include "fhtriage/error.hpp"
#include "fhtriage/floathash.hpp"
#include "fhtriage/stable_hash.hpp"
#include "oracles.hpp"

using namespace fhtriage;

namespace {

using Gram = std::vector<std::string>;

std::vector<std::string> random_tokens(Rng& rng, std::size_t length, std::size_t alphabet) {
  std::vector<std::string> out(length);
  for (auto& t : out) t = "t" + std::to_string(uniform_index(rng, alphabet));
  return out;
}

std::vector<std::string> mutate(Rng& rng, std::vector<std::string> tokens, double rate, std::size_t alphabet) {
  for (auto& t : tokens)
    if (uniform_unit(rng) < rate) t = "t" + std::to_string(uniform_index(rng, alphabet));
  return tokens;
}

double exact_dot(const NGramVector& a, const NGramVector& b) {
  double s = 0;
  for (const auto& [g, c] : a.counts)
    if (auto it = b.counts.find(g); it != b.counts.end()) s += static_cast<double>(c) * static_cast<double>(it->second);
  return s;
}

double exact_cosine(const NGramVector& a, const NGramVector& b) {
  return exact_dot(a, b) / std::sqrt(exact_dot(a, a) * exact_dot(b, b));
}

double dense_cosine(const Eigen::VectorXd& a, const Eigen::VectorXd& b) { return a.dot(b) / (a.norm() * b.norm()); }

RowSparseMatrix hashed_rows(const std::vector<TokenSequence>& seqs, const HashingParams& p) {
  RowSparseMatrix m(static_cast<std::int64_t>(seqs.size()), static_cast<std::int64_t>(p.dim()));
  std::vector<Eigen::Triplet<double, std::int64_t>> trips;
  for (std::size_t r = 0; r < seqs.size(); ++r) {
    const auto v = hashing_vector(seqs[r], p);
    for (Eigen::SparseVector<double>::InnerIterator it(v); it; ++it)
      trips.emplace_back(static_cast<std::int64_t>(r), it.index(), it.value());
  }
  m.setFromTriplets(trips.begin(), trips.end());
  return m;
}

std::vector<TokenSequence> random_corpus(std::uint64_t seed, std::size_t count) {
  Rng rng(seed);
  std::vector<TokenSequence> out;
  for (std::size_t i = 0; i < count; ++i)
    out.push_back({"s" + std::to_string(i), SequenceKind::Opcode, random_tokens(rng, 30 + uniform_index(rng, 30), 12)});
  return out;
}

}  // namespace

TEST_CASE("ngram windows") {
  const std::vector<std::string> abab{"a", "b", "a", "b"};
  const auto v = ngrams(abab, 2);
  CHECK(v.counts.size() == 2);
  CHECK(v.counts.at(Gram{"a", "b"}) == 2);
  CHECK(v.counts.at(Gram{"b", "a"}) == 1);
  CHECK(v.total() == 3);

  const std::vector<std::string> abc{"a", "b", "c"};
  const auto w = ngrams(abc, 3);
  CHECK(w.counts.size() == 1);
  CHECK(w.counts.at(Gram{"a", "b", "c"}) == 1);

  const std::vector<std::string> a{"a"};
  CHECK(ngrams(a, 2).counts.empty());
  CHECK_THROWS_AS(ngrams(a, 0), Error);
}

TEST_CASE("ngram total count matches the window count") {
  Rng rng(3);
  for (std::size_t n = 1; n <= 4; ++n) {
    const auto tokens = random_tokens(rng, 25, 5);
    CHECK(ngrams(tokens, n).total() == tokens.size() - n + 1);
  }
}

TEST_CASE("feature_hash basics") {
  NGramVector empty;
  empty.n = 2;
  const auto z = feature_hash(empty, 1024, 7);
  CHECK(z.size() == 1024);
  CHECK(z.isZero(0.0));

  NGramVector one;
  one.n = 2;
  one.counts[Gram{"mov", "push"}] = 2;
  const auto h = feature_hash(one, 1024, 7);
  int nonzero = 0;
  for (Eigen::Index i = 0; i < h.size(); ++i)
    if (h[i] != 0.0) {
      ++nonzero;
      CHECK(std::abs(h[i]) == 2.0);
    }
  CHECK(nonzero == 1);

  CHECK_THROWS_AS(feature_hash(one, 1000, 7), Error);
}

TEST_CASE("sparse and dense hashing agree") {
  Rng rng(5);
  const auto v = ngrams(random_tokens(rng, 300, 40), 2);
  const Eigen::VectorXd dense = feature_hash(v, 1 << 12, 9);
  const Eigen::VectorXd sparse = feature_hash_sparse(v, 1 << 12, 9);
  CHECK(dense == sparse);
}

TEST_CASE("feature_hash is exactly linear") {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const auto u = ngrams(random_tokens(rng, 200, 30), 2);
    const auto v = ngrams(random_tokens(rng, 150, 30), 2);
    NGramVector sum = u;
    sum += v;
    const auto seed = static_cast<std::uint64_t>(trial);
    CHECK(feature_hash(sum, 1 << 16, seed) == feature_hash(u, 1 << 16, seed) + feature_hash(v, 1 << 16, seed));
  }
}

TEST_CASE("hashed cosine preserves the ranking of n-gram cosines") {
  Rng rng(21);
  std::vector<double> exact, hashed;
  for (int pair = 0; pair < 100; ++pair) {
    const auto a = random_tokens(rng, 300, 50);
    const auto b = mutate(rng, a, uniform_unit(rng), 50);
    const auto va = ngrams(a, 2), vb = ngrams(b, 2);
    exact.push_back(exact_cosine(va, vb));
    hashed.push_back(dense_cosine(feature_hash(va, 1 << 16, 1), feature_hash(vb, 1 << 16, 1)));
  }
  CHECK(oracle::spearman(exact, hashed) >= 0.9);
}

TEST_CASE("unify pads and truncates") {
  const std::vector<std::int64_t> two{2, 3};
  CHECK(unify(two, 5) == std::vector<std::int64_t>{2, 3, 0, 0, 0});
  const std::vector<std::int64_t> six{2, 3, 4, 5, 6, 7};
  CHECK(unify(six, 4) == std::vector<std::int64_t>{2, 3, 4, 5});
  const std::vector<std::int64_t> three{2, 3, 4};
  CHECK(unify(three, 3) == three);
  CHECK_THROWS_AS(unify(three, 0), Error);
}

TEST_CASE("unified sequences have no interior padding") {
  Rng rng(4);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<std::int64_t> ids(uniform_index(rng, 30));
    for (auto& id : ids) id = 1 + static_cast<std::int64_t>(uniform_index(rng, 9));
    const auto u = unify(ids, 20);
    REQUIRE(u.size() == 20);
    const auto first_pad = std::find(u.begin(), u.end(), kPadId);
    CHECK(std::all_of(first_pad, u.end(), [](std::int64_t x) { return x == kPadId; }));
  }
}

TEST_CASE("sequence_vector matches unify") {
  const auto dict = TokenDictionary::from_ordered(SequenceKind::Opcode, std::vector<std::string>{"mov", "push"});
  const TokenSequence s{"x", SequenceKind::Opcode, {"mov", "push", "nop", "mov"}};
  const Eigen::VectorXd v = sequence_vector(s, dict, 6);
  const auto ids = unify(map_sequence(s, dict), 6);
  for (std::size_t i = 0; i < ids.size(); ++i) CHECK(v[static_cast<Eigen::Index>(i)] == static_cast<double>(ids[i]));
}

TEST_CASE("hashing digests") {
  const auto corpus = random_corpus(31, 40);
  const HashingParams params{2, 10, 99};
  const auto model = pca_fit(hashed_rows(corpus, params), 5);
  const auto a = digest_hashing(corpus[0], params, model);
  const auto b = digest_hashing(corpus[0], params, model);
  CHECK(a.values.size() == 5);
  CHECK(a.values == b.values);
  CHECK(a.variant == Variant::Hashing);

  TokenSequence forward{"f", SequenceKind::Opcode, {"t1", "t2", "t3", "t4"}};
  TokenSequence reordered{"r", SequenceKind::Opcode, {"t4", "t3", "t2", "t1"}};
  CHECK(digest_hashing(forward, params, model).values != digest_hashing(reordered, params, model).values);

  const HashingParams wrong{2, 11, 99};
  try {
    digest_hashing(corpus[0], wrong, model);
    FAIL("expected DimensionMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DimensionMismatch);
  }
}

TEST_CASE("sequence digests") {
  const auto corpus = random_corpus(41, 40);
  const auto dict = build_dictionary(corpus, SequenceKind::Opcode, 100);
  const std::size_t L = 64;
  RowSparseMatrix rows(static_cast<std::int64_t>(corpus.size()), static_cast<std::int64_t>(L));
  std::vector<Eigen::Triplet<double, std::int64_t>> trips;
  for (std::size_t r = 0; r < corpus.size(); ++r) {
    const auto v = sequence_vector(corpus[r], dict, L);
    for (Eigen::SparseVector<double>::InnerIterator it(v); it; ++it)
      trips.emplace_back(static_cast<std::int64_t>(r), it.index(), it.value());
  }
  rows.setFromTriplets(trips.begin(), trips.end());
  const auto model = pca_fit(rows, 8);

  TokenSequence longer = corpus[0];
  longer.tokens.resize(L, "t0");
  TokenSequence tail = longer;
  tail.tokens.push_back("t5");
  tail.tokens.push_back("t7");
  CHECK(digest_sequence(longer, dict, L, model).values == digest_sequence(tail, dict, L, model).values);

  const TokenSequence empty{"e", SequenceKind::Opcode, {}};
  const auto d = digest_sequence(empty, dict, L, model);
  CHECK(d.from_empty);
  CHECK(d.values.size() == 8);
  CHECK(d.values.isApprox(pca_transform(model, Eigen::VectorXd::Zero(static_cast<Eigen::Index>(L))), 1e-12));

  CHECK_THROWS_AS(digest_sequence(empty, dict, L + 1, model), Error);
}

TEST_CASE("a model fit on one corpus digests another") {
  const HashingParams params{2, 12, 5};
  const auto model = pca_fit(hashed_rows(random_corpus(1, 30), params), 6);
  const auto other = random_corpus(2, 10);
  for (const auto& s : other) {
    const auto d1 = digest_hashing(s, params, model);
    const auto d2 = digest_hashing(s, params, model);
    CHECK(d1.values.allFinite());
    CHECK(d1.values == d2.values);
  }
}

TEST_CASE("digest files round-trip bit-exactly") {
  Rng rng(8);
  std::vector<FloatHashDigest> digests;
  for (int i = 0; i < 5; ++i) {
    FloatHashDigest d{"s" + std::to_string(i), i % 2 ? SequenceKind::Function : SequenceKind::Opcode,
                      Variant::Sequence, Eigen::VectorXd(7), false};
    for (Eigen::Index j = 0; j < 7; ++j) d.values[j] = standard_normal(rng) * std::pow(10.0, static_cast<double>(j) - 3);
    digests.push_back(d);
  }
  std::stringstream ss;
  write_digests(ss, digests);
  const auto back = read_digests(ss);
  REQUIRE(back.size() == digests.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].sample == digests[i].sample);
    CHECK(back[i].kind == digests[i].kind);
    CHECK(back[i].variant == digests[i].variant);
    CHECK(back[i].values == digests[i].values);
  }
}

TEST_CASE("malformed digest rows are rejected") {
  std::istringstream short_row("a,opcode,hashing\n");
  CHECK_THROWS_AS(read_digests(short_row), Error);
  std::istringstream bad_number("a,opcode,hashing,1.0,zz\n");
  CHECK_THROWS_AS(read_digests(bad_number), Error);
  std::istringstream ragged("a,opcode,hashing,1,2\nb,opcode,hashing,1\n");
  CHECK_THROWS_AS(read_digests(ragged), Error);
}
