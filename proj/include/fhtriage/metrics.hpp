#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "fhtriage/community.hpp"
#include "fhtriage/ingest.hpp"

namespace fhtriage {

using LabeledCorpus = std::unordered_map<SampleId, std::string>;
inline constexpr const char* kBenignLabel = "benign";

/// Partition over named samples.
struct Membership {
  std::vector<SampleId> samples;
  Partition partition;
};

struct MetricsOptions {
  /// Count size-1 communities as groups (off: isolated samples are ungrouped).
  bool include_singletons = false;

  std::size_t min_group_size() const noexcept { return include_singletons ? 1 : 2; }
};

struct Distribution {
  std::size_t pure = 0;
  std::size_t mixed2 = 0;
  std::size_t mixed3 = 0;
  std::size_t mixed_n = 0;

  std::size_t total() const noexcept { return pure + mixed2 + mixed3 + mixed_n; }
  /// "(P-M2-M3-MN) / total"
  std::string to_string() const;
  friend bool operator==(const Distribution&, const Distribution&) = default;
};

struct EffectivenessReport {
  double coverage_pct = 0.0;
  std::optional<double> purity_pct;  // empty when nothing is grouped
  std::size_t grouped_samples = 0;
  std::size_t corpus_size = 0;
  Distribution distribution;

  std::size_t communities_total() const noexcept { return distribution.total(); }
};

struct EfficiencyReport {
  double network_build_seconds = 0.0;
  double community_detection_seconds = 0.0;
  double total_seconds = 0.0;

  static EfficiencyReport from(double build, double detect) { return {build, detect, build + detect}; }
};

double coverage(const Partition& p, std::size_t corpus_size, const MetricsOptions& options = {});
/// Empty optional when no sample is grouped.
std::optional<double> purity(const Membership& m, const LabeledCorpus& labels, const MetricsOptions& options = {});
Distribution distribution(const Membership& m, const LabeledCorpus& labels, const MetricsOptions& options = {});

EffectivenessReport effectiveness(const Membership& m, const LabeledCorpus& labels, std::size_t corpus_size,
                                  const MetricsOptions& options = {});

/// Coverage and purity restricted to benign samples: coverage is grouped
/// benign over all benign; purity counts benign samples sitting in
/// benign-only communities; the distribution covers communities holding at
/// least one benign sample.
EffectivenessReport benign_report(const Membership& m, const LabeledCorpus& labels,
                                  const MetricsOptions& options = {});

nlohmann::json to_json(const EffectivenessReport& report);
nlohmann::json to_json(const EfficiencyReport& report);

}  // namespace fhtriage
