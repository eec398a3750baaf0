#pragma once

// Batch phases over a working directory. Every phase reads its inputs from
// files, writes outputs atomically and records itself in manifest.json.
//
// Layout of a working directory:
//   sequences.tsv  labels.csv  ingest.json
//   dict_<kind>.tsv  model_<kind>_<variant>.fhm
//   digests_<variant>.csv
//   <variant>/edges.tsv  <variant>/edges.nodes  <variant>/threshold.json
//   <variant>/partition.csv  <variant>/communities.json  <variant>/metrics.json
//   <variant>/sweep.json  <variant>/sweep.csv
//   cache/  manifest.json

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "fhtriage/community.hpp"
#include "fhtriage/floathash.hpp"
#include "fhtriage/metrics.hpp"
#include "fhtriage/simnet.hpp"
#include "fhtriage/synthcorpus.hpp"

namespace fhtriage {

namespace fs = std::filesystem;

inline constexpr const char* kVersion = "0.3.0";
inline constexpr const char* kConfigEnv = "FHTRIAGE_CONFIG";

struct PipelineConfig {
  std::string variant = "both";  // hashing | sequence | both
  std::size_t ngram_n = kDefaultNgram;
  std::size_t hash_bits = kDefaultHashBits;
  std::size_t seq_len = kDefaultSequenceLength;
  std::size_t pca_dims = kDefaultComponents;
  std::size_t pca_exact_limit = 4000;
  std::size_t dictionary_size = 0;  // 0 keeps every token
  double threshold_pct = 10.0;
  LshParams lsh;
  std::size_t exact_cutoff = kDefaultExactCutoff;
  std::uint64_t sample_pairs = kDefaultSamplePairs;
  double resolution = 1.0;
  bool weighted = true;
  bool include_singletons = false;
  std::uint64_t seed = 0;
  std::size_t jobs = 1;

  std::vector<Variant> variants() const;
  HashingParams hashing() const { return {ngram_n, static_cast<unsigned>(hash_bits), seed}; }
  NetworkOptions network() const { return {lsh, jobs}; }
  CommunityOptions communities() const { return {resolution, seed, weighted, 1e-9}; }
  MetricsOptions metrics() const { return {include_singletons}; }

  /// Throws InvalidParameter on the first bad field.
  void validate() const;
};

nlohmann::json to_json(const PipelineConfig& config);
/// Fields absent from `j` keep the values already in `config`. A manifest
/// (an object with a "config" member) is accepted as well.
void merge_json(PipelineConfig& config, const nlohmann::json& j);
PipelineConfig load_config(const fs::path& path);

/// Wraps a failure with the name of the phase that raised it.
class PhaseError : public std::runtime_error {
 public:
  PhaseError(std::string phase, const std::string& message)
      : std::runtime_error(phase + ": " + message), phase_(std::move(phase)) {}
  const std::string& phase() const noexcept { return phase_; }

 private:
  std::string phase_;
};

/// Writes through a temporary sibling and renames it over `path`.
void write_file_atomic(const fs::path& path, const std::string& content);
std::string read_file(const fs::path& path);
/// 16 hex digits of the stable content hash.
std::string file_digest(const fs::path& path);

void write_labels(const fs::path& path, const LabeledCorpus& labels);
LabeledCorpus read_labels(const fs::path& path);

void write_partition(std::ostream& out, std::span<const SampleId> samples, const Partition& p);
Membership read_partition(std::istream& in);

class Workspace {
 public:
  Workspace(fs::path dir, PipelineConfig config);

  const fs::path& dir() const noexcept { return dir_; }
  const PipelineConfig& config() const noexcept { return config_; }

  fs::path sequences() const { return dir_ / "sequences.tsv"; }
  fs::path labels() const { return dir_ / "labels.csv"; }
  fs::path dictionary(SequenceKind k) const;
  fs::path model(SequenceKind k, Variant v) const;
  fs::path digests(Variant v) const;
  fs::path variant_dir(Variant v) const { return dir_ / std::string(to_string(v)); }
  fs::path edges(Variant v) const { return variant_dir(v) / "edges.tsv"; }
  fs::path nodes(Variant v) const { return variant_dir(v) / "edges.nodes"; }
  fs::path threshold_report(Variant v) const { return variant_dir(v) / "threshold.json"; }
  fs::path partition(Variant v) const { return variant_dir(v) / "partition.csv"; }
  fs::path community_report(Variant v) const { return variant_dir(v) / "communities.json"; }
  fs::path metrics_report(Variant v) const { return variant_dir(v) / "metrics.json"; }
  fs::path manifest() const { return dir_ / "manifest.json"; }

  /// Records timing and input/output digests of a finished phase.
  void record(const std::string& phase, double seconds, const std::vector<fs::path>& inputs,
              const std::vector<fs::path>& outputs) const;

 private:
  fs::path dir_;
  PipelineConfig config_;
};

// Each phase returns the files it wrote.
std::vector<fs::path> cmd_ingest(const Workspace& ws, const fs::path& listing_dir);
std::vector<fs::path> cmd_synth(const Workspace& ws, std::size_t families, const FamilySpec& prototype);
std::vector<fs::path> cmd_fit(const Workspace& ws);
std::vector<fs::path> cmd_digest(const Workspace& ws);
std::vector<fs::path> cmd_network(const Workspace& ws, Variant v);
std::vector<fs::path> cmd_communities(const Workspace& ws, Variant v);
std::vector<fs::path> cmd_metrics(const Workspace& ws, Variant v);
std::vector<fs::path> cmd_sweep(const Workspace& ws, Variant v, std::span<const double> percentages);
std::vector<fs::path> cmd_bench(const fs::path& out_csv, std::span<const RandomGraphSpec> specs, std::size_t repeats);
/// ingest (or an existing sequences file) through metrics for every configured variant.
std::vector<fs::path> cmd_run(const Workspace& ws, const std::optional<fs::path>& listing_dir);

/// Mean similarity per kind, cached under cache/ by digest content and estimator settings.
std::array<MeanSimilarity, 2> cached_mean_similarity(const Workspace& ws, Variant v,
                                                     const std::array<DigestSet, 2>& sets);

struct SweepRow {
  double percentage = 0.0;
  ThresholdPolicy policy;
  std::size_t edges = 0;
  EffectivenessReport effectiveness;
  EfficiencyReport efficiency;
};

/// Rebuilds the network per percentage from one set of indexes and means.
std::vector<SweepRow> threshold_sweep(const std::array<DigestSet, 2>& sets,
                                      const std::array<MeanSimilarity, 2>& means, const LabeledCorpus& labels,
                                      std::span<const double> percentages, const PipelineConfig& config);

/// The metrics.json body shared by cmd_metrics and cmd_sweep.
nlohmann::json metrics_json(const Membership& m, const LabeledCorpus& labels, const MetricsOptions& options,
                            const EfficiencyReport& efficiency);

/// Corpus size for coverage: union of labelled and partitioned samples.
std::size_t evaluated_corpus_size(const Membership& m, const LabeledCorpus& labels);

/// Weighted graph for detection; negative similarities are clamped to zero.
Graph network_graph(std::size_t nodes, std::span<const Edge> edges);

}  // namespace fhtriage
