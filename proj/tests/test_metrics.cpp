#include <doctest.h>

#include <map>
#include <set>

#include "fhtriage/error.hpp"
#include "fhtriage/metrics.hpp"
#include "fhtriage/stable_hash.hpp"

using namespace fhtriage;

namespace {

// Communities given as lists of labels; sample ids are generated.
struct Fixture {
  Membership membership;
  LabeledCorpus labels;
};

Fixture build(const std::vector<std::vector<std::string>>& communities) {
  Fixture f;
  std::uint32_t c = 0;
  for (const auto& members : communities) {
    for (const auto& label : members) {
      const SampleId id = "s" + std::to_string(f.membership.samples.size());
      f.membership.samples.push_back(id);
      f.membership.partition.assignment.push_back(c);
      f.labels[id] = label;
    }
    ++c;
  }
  return f;
}

}  // namespace

TEST_CASE("coverage") {
  const Partition p{{0, 0, 0, 1, 1, 1, 2, 3, 4, 5}};
  CHECK(coverage(p, 10) == doctest::Approx(60.0));
  CHECK(coverage(Partition::singletons(7), 7) == 0.0);
  CHECK(coverage(Partition{{0, 0, 0}}, 3) == 100.0);
  CHECK(coverage(p, 10, MetricsOptions{true}) == 100.0);
  CHECK(coverage(Partition{{0, 0, 1, 1}}, 8) == 50.0);
  try {
    coverage(p, 0);
    FAIL("expected InvalidParameter");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InvalidParameter);
  }
}

TEST_CASE("purity") {
  const auto f = build({{"x1", "x1", "x1"}, {"x1", "x2"}});
  CHECK(*purity(f.membership, f.labels) == doctest::Approx(60.0));
  const auto pure = build({{"a", "a"}, {"b", "b", "b"}, {"c"}});
  CHECK(*purity(pure.membership, pure.labels) == 100.0);
  const auto lonely = build({{"a"}, {"b"}});
  CHECK_FALSE(purity(lonely.membership, lonely.labels).has_value());

  auto missing = build({{"a", "a"}});
  missing.labels.erase("s1");
  try {
    purity(missing.membership, missing.labels);
    FAIL("expected MissingLabel");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::MissingLabel);
  }
  // Isolated samples need no label.
  auto isolated = build({{"a", "a"}, {"b"}});
  isolated.labels.erase("s2");
  CHECK(*purity(isolated.membership, isolated.labels) == 100.0);
}

TEST_CASE("distribution") {
  const auto f = build({{"a", "a"}, {"b", "b"}, {"a", "b"}, {"a", "b", "c", "d", "e"}});
  const auto d = distribution(f.membership, f.labels);
  CHECK(d == Distribution{2, 1, 0, 1});
  CHECK(d.to_string() == "(2-1-0-1) / 4");
  CHECK(Distribution{138, 8, 3, 6}.to_string() == "(138-8-3-6) / 155");
  CHECK(Distribution{}.to_string() == "(0-0-0-0) / 0");
  const auto none = build({});
  CHECK(distribution(none.membership, none.labels).total() == 0);
}

TEST_CASE("benign report") {
  std::vector<std::vector<std::string>> communities;
  for (int i = 0; i < 7; ++i) communities.push_back({"benign", "benign", "benign"});
  for (int i = 0; i < 79; ++i) communities.push_back({"benign"});
  communities.push_back({"fam", "fam"});
  const auto f = build(communities);
  const auto r = benign_report(f.membership, f.labels);
  CHECK(r.coverage_pct == doctest::Approx(21.0));
  CHECK(*r.purity_pct == 100.0);
  CHECK(r.distribution == Distribution{7, 0, 0, 0});

  const auto ungrouped = build({{"benign"}, {"benign"}, {"fam", "fam"}});
  const auto u = benign_report(ungrouped.membership, ungrouped.labels);
  CHECK(u.coverage_pct == 0.0);
  CHECK_FALSE(u.purity_pct.has_value());

  const auto mixed = build({{"benign", "benign", "fam"}, {"benign"}});
  const auto m = benign_report(mixed.membership, mixed.labels);
  CHECK(*m.purity_pct == 0.0);
  CHECK(m.coverage_pct == doctest::Approx(200.0 / 3.0));

  const auto malware = build({{"fam", "fam"}});
  try {
    benign_report(malware.membership, malware.labels);
    FAIL("expected InvalidParameter");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InvalidParameter);
  }
}

TEST_CASE("reports agree with a brute-force recount") {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 5 + uniform_index(rng, 60);
    const std::size_t k = 1 + uniform_index(rng, n);
    Membership m;
    LabeledCorpus labels;
    std::vector<std::uint32_t> raw;
    for (std::size_t i = 0; i < n; ++i) {
      m.samples.push_back("s" + std::to_string(i));
      raw.push_back(static_cast<std::uint32_t>(uniform_index(rng, k)));
      labels[m.samples.back()] = "f" + std::to_string(uniform_index(rng, 5));
    }
    m.partition = Partition::normalized(raw);
    const std::size_t corpus = n + uniform_index(rng, 10);
    for (bool singles : {false, true}) {
      const MetricsOptions opts{singles};
      std::map<std::uint32_t, std::vector<std::size_t>> groups;
      for (std::size_t i = 0; i < n; ++i) groups[m.partition.assignment[i]].push_back(i);
      std::size_t grouped = 0, pure_samples = 0;
      Distribution expect;
      for (const auto& [c, members] : groups) {
        if (members.size() < opts.min_group_size()) continue;
        grouped += members.size();
        std::set<std::string> fams;
        for (auto i : members) fams.insert(labels[m.samples[i]]);
        if (fams.size() == 1) {
          ++expect.pure;
          pure_samples += members.size();
        } else if (fams.size() == 2) {
          ++expect.mixed2;
        } else if (fams.size() == 3) {
          ++expect.mixed3;
        } else {
          ++expect.mixed_n;
        }
      }
      const auto r = effectiveness(m, labels, corpus, opts);
      CHECK(r.grouped_samples == grouped);
      CHECK(r.distribution == expect);
      CHECK(r.coverage_pct == 100.0 * static_cast<double>(grouped) / static_cast<double>(corpus));
      CHECK(r.coverage_pct >= 0.0);
      CHECK(r.coverage_pct <= 100.0);
      if (grouped == 0) {
        CHECK_FALSE(r.purity_pct.has_value());
      } else {
        CHECK(*r.purity_pct == 100.0 * static_cast<double>(pure_samples) / static_cast<double>(grouped));
        CHECK(*r.purity_pct == *purity(m, labels, opts));
      }
      CHECK(r.distribution == distribution(m, labels, opts));
      CHECK(to_json(r).dump() == to_json(effectiveness(m, labels, corpus, opts)).dump());
    }
  }
}

TEST_CASE("report json layout") {
  const auto f = build({{"a", "a"}, {"b"}});
  const auto j = to_json(effectiveness(f.membership, f.labels, 3));
  CHECK(j["distribution"] == "(1-0-0-0) / 1");
  CHECK(j["communities_total"] == 1);
  const auto none = build({{"a"}});
  CHECK(to_json(effectiveness(none.membership, none.labels, 1))["purity_pct"].is_null());
  const auto e = to_json(EfficiencyReport::from(1.5, 2.0));
  CHECK(e["total_seconds"] == 3.5);
}
