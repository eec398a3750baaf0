#include "fhtriage/metrics.hpp"

#include <set>
#include <string>

#include "fhtriage/error.hpp"

namespace fhtriage {

namespace {

struct Group {
  std::vector<std::size_t> members;
};

std::vector<Group> groups_of(const Partition& p, std::size_t min_size) {
  std::vector<Group> groups(p.community_count());
  for (std::size_t i = 0; i < p.assignment.size(); ++i) groups[p.assignment[i]].members.push_back(i);
  std::erase_if(groups, [&](const Group& g) { return g.members.size() < min_size; });
  return groups;
}

void check_membership(const Membership& m) {
  if (m.samples.size() != m.partition.node_count())
    throw Error(ErrorCode::InvalidParameter, "membership has " + std::to_string(m.samples.size()) +
                                                 " samples but the partition covers " +
                                                 std::to_string(m.partition.node_count()));
}

const std::string& label_of(const Membership& m, const LabeledCorpus& labels, std::size_t node) {
  auto it = labels.find(m.samples[node]);
  if (it == labels.end()) throw Error(ErrorCode::MissingLabel, "no label for grouped sample '" + m.samples[node] + "'");
  return it->second;
}

std::size_t family_count(const Membership& m, const LabeledCorpus& labels, const Group& g) {
  std::set<std::string_view> families;
  for (std::size_t node : g.members) families.insert(label_of(m, labels, node));
  return families.size();
}

void classify(Distribution& d, std::size_t families) {
  if (families <= 1)
    ++d.pure;
  else if (families == 2)
    ++d.mixed2;
  else if (families == 3)
    ++d.mixed3;
  else
    ++d.mixed_n;
}

nlohmann::json optional_number(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(); }

}  // namespace

std::string Distribution::to_string() const {
  return "(" + std::to_string(pure) + "-" + std::to_string(mixed2) + "-" + std::to_string(mixed3) + "-" +
         std::to_string(mixed_n) + ") / " + std::to_string(total());
}

double coverage(const Partition& p, std::size_t corpus_size, const MetricsOptions& options) {
  if (corpus_size == 0) throw Error(ErrorCode::InvalidParameter, "corpus size must be positive");
  std::size_t grouped = 0;
  for (const auto& g : groups_of(p, options.min_group_size())) grouped += g.members.size();
  if (grouped > corpus_size)
    throw Error(ErrorCode::InvalidParameter, std::to_string(grouped) + " grouped samples exceed corpus size " +
                                                 std::to_string(corpus_size));
  return 100.0 * static_cast<double>(grouped) / static_cast<double>(corpus_size);
}

std::optional<double> purity(const Membership& m, const LabeledCorpus& labels, const MetricsOptions& options) {
  check_membership(m);
  std::size_t grouped = 0, pure = 0;
  for (const auto& g : groups_of(m.partition, options.min_group_size())) {
    grouped += g.members.size();
    if (family_count(m, labels, g) == 1) pure += g.members.size();
  }
  if (grouped == 0) return std::nullopt;
  return 100.0 * static_cast<double>(pure) / static_cast<double>(grouped);
}

Distribution distribution(const Membership& m, const LabeledCorpus& labels, const MetricsOptions& options) {
  check_membership(m);
  Distribution d;
  for (const auto& g : groups_of(m.partition, options.min_group_size())) classify(d, family_count(m, labels, g));
  return d;
}

EffectivenessReport effectiveness(const Membership& m, const LabeledCorpus& labels, std::size_t corpus_size,
                                  const MetricsOptions& options) {
  check_membership(m);
  EffectivenessReport r;
  r.corpus_size = corpus_size;
  r.coverage_pct = coverage(m.partition, corpus_size, options);
  std::size_t pure_samples = 0;
  for (const auto& g : groups_of(m.partition, options.min_group_size())) {
    const std::size_t families = family_count(m, labels, g);
    classify(r.distribution, families);
    r.grouped_samples += g.members.size();
    if (families == 1) pure_samples += g.members.size();
  }
  if (r.grouped_samples > 0)
    r.purity_pct = 100.0 * static_cast<double>(pure_samples) / static_cast<double>(r.grouped_samples);
  return r;
}

EffectivenessReport benign_report(const Membership& m, const LabeledCorpus& labels, const MetricsOptions& options) {
  check_membership(m);
  std::size_t benign_total = 0;
  for (const auto& [sample, label] : labels) benign_total += label == kBenignLabel;
  if (benign_total == 0) throw Error(ErrorCode::InvalidParameter, "corpus has no benign samples");

  EffectivenessReport r;
  r.corpus_size = benign_total;
  std::size_t benign_in_pure = 0;
  for (const auto& g : groups_of(m.partition, options.min_group_size())) {
    std::size_t benign = 0;
    for (std::size_t node : g.members) benign += label_of(m, labels, node) == kBenignLabel;
    if (benign == 0) continue;
    const std::size_t families = family_count(m, labels, g);
    classify(r.distribution, families);
    r.grouped_samples += benign;
    if (families == 1) benign_in_pure += benign;
  }
  r.coverage_pct = 100.0 * static_cast<double>(r.grouped_samples) / static_cast<double>(benign_total);
  if (r.grouped_samples > 0)
    r.purity_pct = 100.0 * static_cast<double>(benign_in_pure) / static_cast<double>(r.grouped_samples);
  return r;
}

nlohmann::json to_json(const EffectivenessReport& report) {
  return {
      {"coverage_pct", report.coverage_pct},
      {"purity_pct", optional_number(report.purity_pct)},
      {"grouped_samples", report.grouped_samples},
      {"corpus_size", report.corpus_size},
      {"communities_total", report.communities_total()},
      {"pure", report.distribution.pure},
      {"mixed2", report.distribution.mixed2},
      {"mixed3", report.distribution.mixed3},
      {"mixed_n", report.distribution.mixed_n},
      {"distribution", report.distribution.to_string()},
  };
}

nlohmann::json to_json(const EfficiencyReport& report) {
  return {
      {"network_build_seconds", report.network_build_seconds},
      {"community_detection_seconds", report.community_detection_seconds},
      {"total_seconds", report.total_seconds},
  };
}

}  // namespace fhtriage
