#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fhtriage/error.hpp"
#include "fhtriage/pipeline.hpp"

using namespace fhtriage;

namespace {

struct Overrides {
  std::string config_path;
  std::string out = ".";
  std::optional<std::string> variant;
  std::optional<std::size_t> ngram_n, hash_bits, seq_len, pca_dims, jobs;
  std::optional<double> threshold_pct;
  std::optional<std::uint64_t> seed;
  bool include_singletons = false;
  bool exhaustive = false;
};

PipelineConfig resolve(const Overrides& o) {
  PipelineConfig c;
  std::string path = o.config_path;
  if (path.empty())
    if (const char* env = std::getenv(kConfigEnv)) path = env;
  if (!path.empty()) c = load_config(path);
  if (o.variant) c.variant = *o.variant;
  if (o.ngram_n) c.ngram_n = *o.ngram_n;
  if (o.hash_bits) c.hash_bits = *o.hash_bits;
  if (o.seq_len) c.seq_len = *o.seq_len;
  if (o.pca_dims) c.pca_dims = *o.pca_dims;
  if (o.jobs) c.jobs = *o.jobs;
  if (o.threshold_pct) c.threshold_pct = *o.threshold_pct;
  if (o.seed) c.seed = *o.seed;
  if (o.include_singletons) c.include_singletons = true;
  if (o.exhaustive) c.lsh.exhaustive = true;
  c.validate();
  return c;
}

void report(const std::vector<fs::path>& written) {
  for (const auto& p : written) std::cout << p.string() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Malware triage: FloatHash digests, similarity networks and family communities"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  app.fallthrough();

  Overrides o;
  app.add_option("--config", o.config_path, std::string("JSON config file (default: $") + kConfigEnv + ")");
  app.add_option("-o,--out", o.out, "Working directory")->capture_default_str();
  app.add_option("--variant", o.variant, "hashing, sequence or both");
  app.add_option("--ngram-n", o.ngram_n, "n-gram order for the hashing variant");
  app.add_option("--hash-bits", o.hash_bits, "feature-hash dimension is 2^bits");
  app.add_option("--seq-len", o.seq_len, "unified sequence length for the sequence variant");
  app.add_option("--pca-dims", o.pca_dims, "digest length");
  app.add_option("--threshold-pct", o.threshold_pct, "threshold as a percentage of the mean similarity");
  app.add_option("--seed", o.seed, "global seed");
  app.add_option("-j,--jobs", o.jobs, "worker threads");
  app.add_flag("--include-singletons", o.include_singletons, "count size-1 communities as groups");
  app.add_flag("--exhaustive", o.exhaustive, "scan all candidates instead of LSH buckets");

  auto* ingest = app.add_subcommand("ingest", "Parse disassembly listings into token sequences");
  std::string listing_dir;
  ingest->add_option("dir", listing_dir, "Directory of listings")->required()->check(CLI::ExistingDirectory);

  auto* synth = app.add_subcommand("synth", "Generate a labelled synthetic corpus");
  std::size_t families = 10;
  FamilySpec proto;
  synth->add_option("--families", families)->capture_default_str();
  synth->add_option("--members", proto.members)->capture_default_str();
  synth->add_option("--seed-length", proto.seed_length)->capture_default_str();
  synth->add_option("--substitution", proto.substitution)->capture_default_str();
  synth->add_option("--insertion", proto.insertion)->capture_default_str();
  synth->add_option("--deletion", proto.deletion)->capture_default_str();

  auto* fit = app.add_subcommand("fit", "Fit dictionaries and PCA models");
  auto* digest = app.add_subcommand("digest", "Compute FloatHash digests");
  auto* network = app.add_subcommand("network", "Build the similarity network");
  auto* communities = app.add_subcommand("communities", "Detect communities in the network");
  auto* metrics = app.add_subcommand("metrics", "Score communities against labels");

  auto* sweep = app.add_subcommand("sweep", "Rebuild network and communities over threshold percentages");
  std::vector<double> percentages;
  sweep->add_option("--pct", percentages, "Threshold percentages")->delimiter(',')->required();

  auto* bench = app.add_subcommand("bench", "Time community detection on random graphs");
  std::vector<std::size_t> sizes{1000, 10000};
  std::vector<double> probs{0.001};
  std::size_t repeats = 3;
  std::string bench_out = "bench.csv";
  bench->add_option("--n", sizes, "Node counts")->delimiter(',')->capture_default_str();
  bench->add_option("--p", probs, "Edge probabilities")->delimiter(',')->capture_default_str();
  bench->add_option("--repeats", repeats)->capture_default_str();
  bench->add_option("--output", bench_out)->capture_default_str();

  auto* run = app.add_subcommand("run", "All phases from listings (or existing sequences) to metrics");
  std::optional<std::string> run_input;
  run->add_option("--input", run_input, "Directory of listings")->check(CLI::ExistingDirectory);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (bench->parsed()) {
      std::vector<RandomGraphSpec> specs;
      const std::uint64_t seed = o.seed.value_or(0);
      for (double p : probs)
        for (std::size_t n : sizes) specs.push_back({n, p, seed});
      report(cmd_bench(bench_out, specs, repeats));
      return 0;
    }
    const Workspace ws(o.out, resolve(o));
    if (ingest->parsed()) report(cmd_ingest(ws, listing_dir));
    if (synth->parsed()) report(cmd_synth(ws, families, proto));
    if (fit->parsed()) report(cmd_fit(ws));
    if (digest->parsed()) report(cmd_digest(ws));
    for (Variant v : ws.config().variants()) {
      if (network->parsed()) report(cmd_network(ws, v));
      if (communities->parsed()) report(cmd_communities(ws, v));
      if (metrics->parsed()) report(cmd_metrics(ws, v));
      if (sweep->parsed()) report(cmd_sweep(ws, v, percentages));
    }
    if (run->parsed())
      report(cmd_run(ws, run_input ? std::optional<fs::path>(*run_input) : std::nullopt));
  } catch (const PhaseError& e) {
    std::cerr << "fhtriage: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "fhtriage: config: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
