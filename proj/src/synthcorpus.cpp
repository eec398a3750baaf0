#include "fhtriage/synthcorpus.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <set>

#include "fhtriage/error.hpp"
#include "fhtriage/stable_hash.hpp"

namespace fhtriage {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

void check_rate(double rate, const char* name, const std::string& family) {
  if (!(rate >= 0.0 && rate <= 1.0))
    throw Error(ErrorCode::InvalidParameter, std::string(name) + " rate for family '" + family + "' must lie in [0, 1]");
}

const std::string& draw(Rng& rng, std::span<const std::string> from) { return from[uniform_index(rng, from.size())]; }

}  // namespace

std::string member_id(const FamilySpec& spec, std::size_t index) {
  const int width = std::max<int>(3, static_cast<int>(std::to_string(spec.members > 0 ? spec.members - 1 : 0).size()));
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%0*zu", width, index);
  return spec.family + "_" + buf;
}

SyntheticCorpus generate_corpus(std::span<const FamilySpec> specs, std::span<const std::string> alphabet,
                                const CorpusOptions& options) {
  if (specs.empty()) throw Error(ErrorCode::EmptyInput, "no family specs");
  if (alphabet.empty()) throw Error(ErrorCode::InvalidParameter, "token alphabet is empty");
  std::set<std::string_view> names;
  for (const auto& spec : specs) {
    if (spec.family.empty()) throw Error(ErrorCode::InvalidParameter, "family id is empty");
    if (!names.insert(spec.family).second)
      throw Error(ErrorCode::DuplicateSample, "family '" + spec.family + "' listed twice");
    if (spec.members == 0) throw Error(ErrorCode::InvalidParameter, "family '" + spec.family + "' has no members");
    if (spec.seed_length == 0) throw Error(ErrorCode::InvalidParameter, "family '" + spec.family + "' has empty seed");
    check_rate(spec.substitution, "substitution", spec.family);
    check_rate(spec.insertion, "insertion", spec.family);
    check_rate(spec.deletion, "deletion", spec.family);
  }

  SyntheticCorpus corpus;
  for (const auto& spec : specs) {
    Rng rng(hash_bytes(spec.family, derive_seed(options.seed, static_cast<std::uint64_t>(options.kind) + 1)));
    std::vector<std::string> seed(spec.seed_length);
    for (auto& token : seed) token = draw(rng, alphabet);

    for (std::size_t m = 0; m < spec.members; ++m) {
      TokenSequence seq{member_id(spec, m), options.kind, {}};
      seq.tokens.reserve(seed.size());
      for (const auto& token : seed) {
        if (uniform_unit(rng) < spec.deletion) continue;
        if (uniform_unit(rng) < spec.substitution) {
          if (!options.replacement_alphabet.empty()) {
            seq.tokens.push_back(draw(rng, options.replacement_alphabet));
          } else if (alphabet.size() > 1) {
            // Uniform over the alphabet minus the current token.
            std::string replacement = token;
            while (replacement == token) replacement = draw(rng, alphabet);
            seq.tokens.push_back(std::move(replacement));
          } else {
            seq.tokens.push_back(token);
          }
        } else {
          seq.tokens.push_back(token);
        }
        if (uniform_unit(rng) < spec.insertion) seq.tokens.push_back(draw(rng, alphabet));
      }
      corpus.labels.emplace(seq.sample, spec.family);
      corpus.sequences.push_back(std::move(seq));
    }
  }
  return corpus;
}

std::vector<FamilySpec> uniform_families(std::size_t families, const FamilySpec& prototype) {
  std::vector<FamilySpec> out(families, prototype);
  char buf[32];
  for (std::size_t i = 0; i < families; ++i) {
    std::snprintf(buf, sizeof(buf), "fam%03zu", i);
    out[i].family = buf;
  }
  return out;
}

std::vector<WeightedEdge> erdos_renyi_edges(const RandomGraphSpec& spec) {
  if (spec.n == 0) throw Error(ErrorCode::InvalidParameter, "random graph needs at least one node");
  if (!(spec.p >= 0.0 && spec.p <= 1.0)) throw Error(ErrorCode::InvalidParameter, "edge probability must lie in [0, 1]");
  if (spec.n > UINT32_MAX) throw Error(ErrorCode::InvalidParameter, "too many nodes");
  std::vector<WeightedEdge> edges;
  const auto n = static_cast<std::int64_t>(spec.n);
  if (spec.p == 0.0) return edges;
  if (spec.p == 1.0) {
    for (std::int64_t v = 1; v < n; ++v)
      for (std::int64_t w = 0; w < v; ++w) edges.push_back({static_cast<std::uint32_t>(w), static_cast<std::uint32_t>(v)});
    return edges;
  }
  const double pairs = static_cast<double>(n) * static_cast<double>(n - 1) / 2.0;
  edges.reserve(static_cast<std::size_t>(pairs * spec.p * 1.05) + 16);
  Rng rng(derive_seed(spec.seed, 0xe5d05ULL));
  const double log_q = std::log1p(-spec.p);
  // Walk the lower triangle (v, w < v), jumping geometric gaps between edges.
  std::int64_t v = 1, w = -1;
  while (v < n) {
    const double r = uniform_unit(rng);
    w += 1 + static_cast<std::int64_t>(std::floor(std::log1p(-r) / log_q));
    while (w >= v && v < n) {
      w -= v;
      ++v;
    }
    if (v < n) edges.push_back({static_cast<std::uint32_t>(w), static_cast<std::uint32_t>(v)});
  }
  return edges;
}

Graph erdos_renyi(const RandomGraphSpec& spec) {
  auto edges = erdos_renyi_edges(spec);
  return Graph(spec.n, edges);
}

BenchResult bench_detection(const RandomGraphSpec& spec, std::uint64_t detection_seed) {
  BenchResult r;
  r.spec = spec;
  auto start = Clock::now();
  Graph g = erdos_renyi(spec);
  r.generate_seconds = seconds_since(start);
  r.edges = g.edge_count();

  start = Clock::now();
  CommunityOptions options;
  options.seed = detection_seed;
  auto result = detect_communities(g, options);
  const double detect = seconds_since(start);

  r.communities = result.partition.community_count();
  r.modularity = result.modularity;
  r.efficiency = EfficiencyReport::from(r.generate_seconds, detect);
  return r;
}

}  // namespace fhtriage
