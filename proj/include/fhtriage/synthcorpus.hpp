#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fhtriage/community.hpp"
#include "fhtriage/ingest.hpp"
#include "fhtriage/metrics.hpp"

namespace fhtriage {

struct FamilySpec {
  std::string family;
  std::size_t seed_length = 400;
  std::size_t members = 100;
  double substitution = 0.05;
  double insertion = 0.0;
  double deletion = 0.0;
};

struct SyntheticCorpus {
  std::vector<TokenSequence> sequences;
  LabeledCorpus labels;
};

struct CorpusOptions {
  SequenceKind kind = SequenceKind::Opcode;
  std::uint64_t seed = 0;
  /// Substitutions draw from here when non-empty, otherwise from the main
  /// alphabet excluding the current token.
  std::vector<std::string> replacement_alphabet;
};

/// Member ids are "<family>_<index>" with a zero-padded index.
std::string member_id(const FamilySpec& spec, std::size_t index);

/// Per family: a uniform random seed sequence over `alphabet`, then each
/// member applies independent per-token deletion, substitution and
/// insertion edits to it. Each family draws from its own derived stream.
SyntheticCorpus generate_corpus(std::span<const FamilySpec> specs, std::span<const std::string> alphabet,
                                const CorpusOptions& options);

/// `families` identical specs named fam000, fam001, ...
std::vector<FamilySpec> uniform_families(std::size_t families, const FamilySpec& prototype);

struct RandomGraphSpec {
  std::size_t n = 1;
  double p = 0.0;
  std::uint64_t seed = 0;
};

/// G(n, p) with geometric skipping over the pair sequence.
std::vector<WeightedEdge> erdos_renyi_edges(const RandomGraphSpec& spec);
Graph erdos_renyi(const RandomGraphSpec& spec);

struct BenchResult {
  RandomGraphSpec spec;
  std::size_t edges = 0;
  std::size_t communities = 0;
  double generate_seconds = 0.0;
  EfficiencyReport efficiency;  // network_build_seconds holds generation time
  std::optional<double> modularity;
};

BenchResult bench_detection(const RandomGraphSpec& spec, std::uint64_t detection_seed = 0);

}  // namespace fhtriage
