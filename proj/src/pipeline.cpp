#include "fhtriage/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <unistd.h>

#include "fhtriage/error.hpp"
#include "fhtriage/stable_hash.hpp"
#include "parallel.hpp"

namespace fhtriage {

namespace {

using Clock = std::chrono::steady_clock;
using nlohmann::json;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string hex16(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

json read_json(const fs::path& path) {
  try {
    return json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
  }
}

template <typename Fn>
auto in_phase(const std::string& phase, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const PhaseError&) {
    throw;
  } catch (const std::exception& e) {
    throw PhaseError(phase, e.what());
  }
}

void require_file(const fs::path& path, const char* what) {
  if (!fs::is_regular_file(path)) throw Error(ErrorCode::IoError, std::string("missing ") + what + " " + path.string());
}

std::vector<TokenSequence> load_sequences(const fs::path& path) {
  require_file(path, "sequence file");
  std::istringstream in(read_file(path));
  return read_sequences(in);
}

std::vector<FloatHashDigest> load_digests(const fs::path& path) {
  require_file(path, "digest file");
  std::istringstream in(read_file(path));
  return read_digests(in);
}

std::vector<TokenSequence> of_kind(const std::vector<TokenSequence>& all, SequenceKind kind) {
  std::vector<TokenSequence> out;
  for (const auto& s : all)
    if (s.kind == kind) out.push_back(s);
  return out;
}

RowSparseMatrix stack_rows(const std::vector<Eigen::SparseVector<double>>& rows, std::size_t dim) {
  std::vector<Eigen::Triplet<double, std::int64_t>> triplets;
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (Eigen::SparseVector<double>::InnerIterator it(rows[r]); it; ++it)
      triplets.emplace_back(static_cast<std::int64_t>(r), it.index(), it.value());
  RowSparseMatrix m(static_cast<std::int64_t>(rows.size()), static_cast<std::int64_t>(dim));
  m.setFromTriplets(triplets.begin(), triplets.end());
  return m;
}

template <typename T>
void assign_if(const json& j, const char* key, T& field) {
  if (j.contains(key)) field = j.at(key).get<T>();
}

void reject_unknown(const json& j, std::initializer_list<const char*> known, const std::string& section) {
  for (const auto& [key, value] : j.items())
    if (std::none_of(known.begin(), known.end(), [&](const char* k) { return key == k; }))
      throw Error(ErrorCode::InvalidParameter, "unknown config key '" + section + key + "'");
}

json mean_json(const MeanSimilarity& m) {
  return {{"mean", m.mean}, {"mode", std::string(to_string(m.mode))}, {"pairs", m.pairs}, {"seed", m.seed}};
}

MeanSimilarity mean_from_json(const json& j) {
  MeanSimilarity m;
  m.mean = j.at("mean").get<double>();
  m.mode = j.at("mode").get<std::string>() == "exact" ? EstimationMode::Exact : EstimationMode::Sampled;
  m.pairs = j.at("pairs").get<std::uint64_t>();
  m.seed = j.at("seed").get<std::uint64_t>();
  return m;
}

json policy_json(const ThresholdPolicy& p) {
  return {{"percentage", p.percentage},
          {"opcode", p[SequenceKind::Opcode]},
          {"function", p[SequenceKind::Function]}};
}

std::optional<double> json_number(const fs::path& path, const char* key) {
  if (!fs::is_regular_file(path)) return std::nullopt;
  const json j = read_json(path);
  if (!j.contains(key) || !j.at(key).is_number()) return std::nullopt;
  return j.at(key).get<double>();
}

}  // namespace

// ---------------------------------------------------------------- config

std::vector<Variant> PipelineConfig::variants() const {
  if (variant == "hashing") return {Variant::Hashing};
  if (variant == "sequence") return {Variant::Sequence};
  if (variant == "both") return {Variant::Hashing, Variant::Sequence};
  throw Error(ErrorCode::InvalidParameter, "variant must be hashing, sequence or both, got '" + variant + "'");
}

void PipelineConfig::validate() const {
  auto fail = [](const std::string& why) { throw Error(ErrorCode::InvalidParameter, why); };
  variants();
  if (ngram_n == 0) fail("ngram_n must be >= 1");
  if (hash_bits == 0 || hash_bits > 30) fail("hash_bits must lie in 1..30");
  if (seq_len == 0) fail("seq_len must be >= 1");
  if (pca_dims == 0) fail("pca_dims must be >= 1");
  if (!(threshold_pct > 0.0 && threshold_pct <= 100.0)) fail("threshold_pct must lie in (0, 100]");
  if (lsh.tables == 0 || lsh.bits == 0 || lsh.bits > 63) fail("lsh needs >= 1 table and 1..63 bits");
  if (!(lsh.target_recall >= 0.0 && lsh.target_recall <= 1.0)) fail("lsh target_recall must lie in [0, 1]");
  if (exact_cutoff < 2) fail("exact_cutoff must be >= 2");
  if (sample_pairs == 0) fail("sample_pairs must be >= 1");
  if (!(resolution > 0.0)) fail("resolution must be positive");
  if (jobs == 0) fail("jobs must be >= 1");
}

json to_json(const PipelineConfig& c) {
  return {
      {"floathash",
       {{"variant", c.variant},
        {"ngram_n", c.ngram_n},
        {"hash_bits", c.hash_bits},
        {"seq_len", c.seq_len},
        {"pca_dims", c.pca_dims},
        {"pca_exact_limit", c.pca_exact_limit},
        {"dictionary_size", c.dictionary_size}}},
      {"network",
       {{"threshold_pct", c.threshold_pct},
        {"exact_cutoff", c.exact_cutoff},
        {"sample_pairs", c.sample_pairs},
        {"lsh",
         {{"tables", c.lsh.tables},
          {"bits", c.lsh.bits},
          {"probes", c.lsh.probes},
          {"seed", c.lsh.seed},
          {"exhaustive", c.lsh.exhaustive},
          {"target_recall", c.lsh.target_recall}}}}},
      {"communities", {{"resolution", c.resolution}, {"weighted", c.weighted}}},
      {"metrics", {{"include_singletons", c.include_singletons}}},
      {"seed", c.seed},
      {"jobs", c.jobs},
  };
}

void merge_json(PipelineConfig& c, const json& in) {
  try {
    const json& j = in.contains("config") && in.at("config").is_object() ? in.at("config") : in;
    if (!j.is_object()) throw Error(ErrorCode::ParseError, "config must be a JSON object");
    reject_unknown(j, {"floathash", "network", "communities", "metrics", "seed", "jobs"}, "");
    if (j.contains("floathash")) {
      const auto& f = j.at("floathash");
      reject_unknown(f, {"variant", "ngram_n", "hash_bits", "seq_len", "pca_dims", "pca_exact_limit", "dictionary_size"},
                     "floathash.");
      assign_if(f, "variant", c.variant);
      assign_if(f, "ngram_n", c.ngram_n);
      assign_if(f, "hash_bits", c.hash_bits);
      assign_if(f, "seq_len", c.seq_len);
      assign_if(f, "pca_dims", c.pca_dims);
      assign_if(f, "pca_exact_limit", c.pca_exact_limit);
      assign_if(f, "dictionary_size", c.dictionary_size);
    }
    if (j.contains("network")) {
      const auto& n = j.at("network");
      reject_unknown(n, {"threshold_pct", "exact_cutoff", "sample_pairs", "lsh"}, "network.");
      assign_if(n, "threshold_pct", c.threshold_pct);
      assign_if(n, "exact_cutoff", c.exact_cutoff);
      assign_if(n, "sample_pairs", c.sample_pairs);
      if (n.contains("lsh")) {
        const auto& l = n.at("lsh");
        reject_unknown(l, {"tables", "bits", "probes", "seed", "exhaustive", "target_recall"}, "network.lsh.");
        assign_if(l, "tables", c.lsh.tables);
        assign_if(l, "bits", c.lsh.bits);
        assign_if(l, "probes", c.lsh.probes);
        assign_if(l, "seed", c.lsh.seed);
        assign_if(l, "exhaustive", c.lsh.exhaustive);
        assign_if(l, "target_recall", c.lsh.target_recall);
      }
    }
    if (j.contains("communities")) {
      const auto& m = j.at("communities");
      reject_unknown(m, {"resolution", "weighted"}, "communities.");
      assign_if(m, "resolution", c.resolution);
      assign_if(m, "weighted", c.weighted);
    }
    if (j.contains("metrics")) {
      reject_unknown(j.at("metrics"), {"include_singletons"}, "metrics.");
      assign_if(j.at("metrics"), "include_singletons", c.include_singletons);
    }
    assign_if(j, "seed", c.seed);
    assign_if(j, "jobs", c.jobs);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("config: ") + e.what());
  }
}

PipelineConfig load_config(const fs::path& path) {
  PipelineConfig c;
  merge_json(c, read_json(path));
  c.validate();
  return c;
}

// ---------------------------------------------------------------- files

void write_file_atomic(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp" + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot open " + tmp.string() + " for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) {
      out.close();
      fs::remove(tmp);
      throw Error(ErrorCode::IoError, "write to " + tmp.string() + " failed");
    }
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp);
    throw Error(ErrorCode::IoError, "cannot rename onto " + path.string() + ": " + ec.message());
  }
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string file_digest(const fs::path& path) { return hex16(hash_bytes(read_file(path), 0)); }

void write_labels(const fs::path& path, const LabeledCorpus& labels) {
  std::vector<std::pair<std::string_view, std::string_view>> rows(labels.begin(), labels.end());
  std::sort(rows.begin(), rows.end());
  std::string out = "sample_id,label\n";
  for (const auto& [sample, label] : rows) out.append(sample).append(",").append(label).append("\n");
  write_file_atomic(path, out);
}

LabeledCorpus read_labels(const fs::path& path) {
  require_file(path, "label file");
  std::istringstream in(read_file(path));
  LabeledCorpus labels;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (lineno == 1) {
      if (line != "sample_id,label") throw Error(ErrorCode::ParseError, "labels: expected header 'sample_id,label'");
      continue;
    }
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos || comma == 0 || comma + 1 == line.size())
      throw Error(ErrorCode::ParseError, "labels line " + std::to_string(lineno) + ": expected sample_id,label");
    if (!labels.emplace(line.substr(0, comma), line.substr(comma + 1)).second)
      throw Error(ErrorCode::DuplicateSample, "labels line " + std::to_string(lineno) + ": sample repeated");
  }
  return labels;
}

void write_partition(std::ostream& out, std::span<const SampleId> samples, const Partition& p) {
  if (samples.size() != p.node_count()) throw Error(ErrorCode::InvalidParameter, "partition does not match samples");
  out << "sample_id,community_id\n";
  for (std::size_t i = 0; i < samples.size(); ++i) out << samples[i] << ',' << p.assignment[i] << '\n';
}

Membership read_partition(std::istream& in) {
  Membership m;
  std::vector<std::uint32_t> raw;
  std::string line;
  std::size_t lineno = 0;
  std::set<std::string> seen;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (lineno == 1) {
      if (line != "sample_id,community_id")
        throw Error(ErrorCode::ParseError, "partition: expected header 'sample_id,community_id'");
      continue;
    }
    if (line.empty()) continue;
    const auto comma = line.rfind(',');
    auto fail = [&] { return Error(ErrorCode::ParseError, "partition line " + std::to_string(lineno)); };
    if (comma == std::string::npos || comma == 0) throw fail();
    std::uint32_t c = 0;
    const char* first = line.data() + comma + 1;
    const char* last = line.data() + line.size();
    auto [ptr, ec] = std::from_chars(first, last, c);
    if (ec != std::errc() || ptr != last || first == last) throw fail();
    std::string sample = line.substr(0, comma);
    if (!seen.insert(sample).second)
      throw Error(ErrorCode::DuplicateSample, "partition line " + std::to_string(lineno) + ": sample repeated");
    m.samples.push_back(std::move(sample));
    raw.push_back(c);
  }
  m.partition = Partition::normalized(raw);
  return m;
}

// ---------------------------------------------------------------- workspace

Workspace::Workspace(fs::path dir, PipelineConfig config) : dir_(std::move(dir)), config_(std::move(config)) {
  config_.validate();
}

fs::path Workspace::dictionary(SequenceKind k) const { return dir_ / ("dict_" + std::string(to_string(k)) + ".tsv"); }

fs::path Workspace::model(SequenceKind k, Variant v) const {
  return dir_ / ("model_" + std::string(to_string(k)) + "_" + std::string(to_string(v)) + ".fhm");
}

fs::path Workspace::digests(Variant v) const { return dir_ / ("digests_" + std::string(to_string(v)) + ".csv"); }

void Workspace::record(const std::string& phase, double seconds, const std::vector<fs::path>& inputs,
                       const std::vector<fs::path>& outputs) const {
  const fs::path path = manifest();
  json doc = json::object();
  if (fs::is_regular_file(path)) {
    try {
      doc = json::parse(read_file(path));
    } catch (const json::exception&) {
      doc = json::object();
    }
  }
  auto digests = [&](const std::vector<fs::path>& files) {
    json out = json::object();
    for (const auto& f : files)
      if (fs::is_regular_file(f)) out[fs::relative(f, dir_).generic_string()] = file_digest(f);
    return out;
  };
  doc["tool"] = "fhtriage";
  doc["version"] = kVersion;
  doc["config"] = to_json(config_);
  doc["phases"][phase] = {{"seconds", seconds}, {"inputs", digests(inputs)}, {"outputs", digests(outputs)}};
  write_file_atomic(path, dump(doc));
}

// ---------------------------------------------------------------- phases

std::vector<fs::path> cmd_ingest(const Workspace& ws, const fs::path& listing_dir) {
  return in_phase("ingest", [&] {
    const auto start = Clock::now();
    IngestStats stats;
    auto sequences = ingest_directory(listing_dir, &stats);
    std::ostringstream out;
    write_sequences(out, sequences);
    write_file_atomic(ws.sequences(), out.str());
    const json report = {{"files", stats.files},
                         {"unparseable_lines", stats.unparseable_lines},
                         {"empty_opcode", stats.empty_opcode},
                         {"empty_function", stats.empty_function}};
    write_file_atomic(ws.dir() / "ingest.json", dump(report));
    std::vector<fs::path> outputs{ws.sequences(), ws.dir() / "ingest.json"};
    ws.record("ingest", seconds_since(start), {}, outputs);
    return outputs;
  });
}

std::vector<fs::path> cmd_synth(const Workspace& ws, std::size_t families, const FamilySpec& prototype) {
  return in_phase("synth", [&] {
    const auto start = Clock::now();
    const auto specs = uniform_families(families, prototype);
    std::vector<std::string> opcodes(x86_opcodes().begin(), x86_opcodes().end());
    std::vector<std::string> functions;
    char buf[16];
    for (int i = 0; i < 512; ++i) {
      std::snprintf(buf, sizeof(buf), "fn%04d", i);
      functions.emplace_back(buf);
    }
    CorpusOptions options;
    options.seed = ws.config().seed;
    options.kind = SequenceKind::Opcode;
    auto corpus = generate_corpus(specs, opcodes, options);
    options.kind = SequenceKind::Function;
    auto calls = generate_corpus(specs, functions, options);
    corpus.sequences.insert(corpus.sequences.end(), std::make_move_iterator(calls.sequences.begin()),
                            std::make_move_iterator(calls.sequences.end()));
    std::ostringstream out;
    write_sequences(out, corpus.sequences);
    write_file_atomic(ws.sequences(), out.str());
    write_labels(ws.labels(), corpus.labels);
    std::vector<fs::path> outputs{ws.sequences(), ws.labels()};
    ws.record("synth", seconds_since(start), {}, outputs);
    return outputs;
  });
}

std::vector<fs::path> cmd_fit(const Workspace& ws) {
  return in_phase("fit", [&] {
    const auto start = Clock::now();
    const auto& cfg = ws.config();
    const auto all = load_sequences(ws.sequences());
    PcaOptions pca;
    pca.exact_limit = cfg.pca_exact_limit;
    pca.seed = cfg.seed;
    std::vector<fs::path> outputs;
    for (SequenceKind kind : kAllKinds) {
      const auto seqs = of_kind(all, kind);
      if (seqs.empty()) throw Error(ErrorCode::EmptyCorpus, "no " + std::string(to_string(kind)) + " sequences");
      for (Variant v : cfg.variants()) {
        std::vector<Eigen::SparseVector<double>> rows(seqs.size());
        std::size_t dim = 0;
        if (v == Variant::Hashing) {
          const auto params = cfg.hashing();
          dim = params.dim();
          detail::parallel_chunks(seqs.size(), cfg.jobs, [&](std::size_t, std::size_t b, std::size_t e) {
            for (std::size_t i = b; i < e; ++i) rows[i] = hashing_vector(seqs[i], params);
          });
        } else {
          const std::size_t limit = cfg.dictionary_size == 0 ? SIZE_MAX : cfg.dictionary_size;
          const auto dict = build_dictionary(seqs, kind, limit);
          std::ostringstream out;
          dict.write(out);
          write_file_atomic(ws.dictionary(kind), out.str());
          outputs.push_back(ws.dictionary(kind));
          dim = cfg.seq_len;
          for (std::size_t i = 0; i < seqs.size(); ++i) rows[i] = sequence_vector(seqs[i], dict, dim);
        }
        PcaModel model = pca_fit(stack_rows(rows, dim), cfg.pca_dims, pca);
        if (v == Variant::Hashing) model.seed = cfg.seed;
        std::ostringstream out;
        model.write(out);
        write_file_atomic(ws.model(kind, v), out.str());
        outputs.push_back(ws.model(kind, v));
      }
    }
    ws.record("fit", seconds_since(start), {ws.sequences()}, outputs);
    return outputs;
  });
}

std::vector<fs::path> cmd_digest(const Workspace& ws) {
  return in_phase("digest", [&] {
    const auto start = Clock::now();
    const auto& cfg = ws.config();
    const auto all = load_sequences(ws.sequences());
    std::vector<fs::path> inputs{ws.sequences()}, outputs;
    for (Variant v : cfg.variants()) {
      std::vector<FloatHashDigest> digests;
      for (SequenceKind kind : kAllKinds) {
        const auto seqs = of_kind(all, kind);
        require_file(ws.model(kind, v), "model");
        std::istringstream model_in(read_file(ws.model(kind, v)));
        const PcaModel model = PcaModel::read(model_in);
        inputs.push_back(ws.model(kind, v));
        std::optional<TokenDictionary> dict;
        if (v == Variant::Sequence) {
          require_file(ws.dictionary(kind), "dictionary");
          std::istringstream dict_in(read_file(ws.dictionary(kind)));
          dict = TokenDictionary::read(dict_in);
          inputs.push_back(ws.dictionary(kind));
        }
        std::vector<FloatHashDigest> part(seqs.size());
        detail::parallel_chunks(seqs.size(), cfg.jobs, [&](std::size_t, std::size_t b, std::size_t e) {
          for (std::size_t i = b; i < e; ++i)
            part[i] = v == Variant::Hashing ? digest_hashing(seqs[i], cfg.hashing(), model)
                                            : digest_sequence(seqs[i], *dict, cfg.seq_len, model);
        });
        digests.insert(digests.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
      }
      std::ostringstream out;
      write_digests(out, digests);
      write_file_atomic(ws.digests(v), out.str());
      outputs.push_back(ws.digests(v));
    }
    ws.record("digest", seconds_since(start), inputs, outputs);
    return outputs;
  });
}

std::array<MeanSimilarity, 2> cached_mean_similarity(const Workspace& ws, Variant v,
                                                     const std::array<DigestSet, 2>& sets) {
  const auto& cfg = ws.config();
  std::string key_text = file_digest(ws.digests(v)) + "/" + std::to_string(cfg.exact_cutoff) + "/" +
                         std::to_string(cfg.sample_pairs) + "/" + std::to_string(cfg.seed);
  const fs::path cache = ws.dir() / "cache" / ("meansim_" + hex16(hash_bytes(key_text, 0)) + ".json");
  std::array<MeanSimilarity, 2> means;
  if (fs::is_regular_file(cache)) {
    try {
      const json j = read_json(cache);
      for (SequenceKind k : kAllKinds) means[static_cast<std::size_t>(k)] = mean_from_json(j.at(std::string(to_string(k))));
      return means;
    } catch (const std::exception&) {
      // Fall through and recompute a damaged cache entry.
    }
  }
  json j;
  for (SequenceKind k : kAllKinds) {
    const auto i = static_cast<std::size_t>(k);
    means[i] = estimate_mean_similarity(sets[i].values, cfg.exact_cutoff, cfg.sample_pairs,
                                        derive_seed(cfg.seed, i + 1));
    j[std::string(to_string(k))] = mean_json(means[i]);
  }
  write_file_atomic(cache, dump(j));
  return means;
}

Graph network_graph(std::size_t nodes, std::span<const Edge> edges) {
  std::vector<WeightedEdge> weighted;
  weighted.reserve(edges.size());
  for (const auto& e : edges) weighted.push_back({e.a, e.b, std::max(0.0, e.weight)});
  return Graph(nodes, weighted);
}

std::vector<fs::path> cmd_network(const Workspace& ws, Variant v) {
  return in_phase("network", [&] {
    const auto start = Clock::now();
    const auto& cfg = ws.config();
    const auto digests = load_digests(ws.digests(v));
    const auto sets = split_by_kind(digests, v);
    const auto means = cached_mean_similarity(ws, v, sets);
    const auto policy = derive_thresholds(cfg.threshold_pct, {means[0].mean, means[1].mean});
    NetworkBuilder builder(sets, cfg.network());
    const auto net = builder.build(policy);
    const double build_seconds = seconds_since(start);

    std::ostringstream edges, nodes;
    write_edge_list(edges, net);
    write_node_list(nodes, net);
    write_file_atomic(ws.edges(v), edges.str());
    write_file_atomic(ws.nodes(v), nodes.str());
    const json report = {
        {"variant", std::string(to_string(v))},
        {"thresholds", policy_json(policy)},
        {"mean_similarity", {{"opcode", mean_json(means[0])}, {"function", mean_json(means[1])}}},
        {"nodes", net.nodes.size()},
        {"edges", net.edges.size()},
        {"dropped", net.dropped},
        {"exhaustive_fraction", builder.last_exhaustive_fraction()},
        {"build_seconds", build_seconds},
    };
    write_file_atomic(ws.threshold_report(v), dump(report));
    std::vector<fs::path> outputs{ws.edges(v), ws.nodes(v), ws.threshold_report(v)};
    ws.record("network." + std::string(to_string(v)), seconds_since(start), {ws.digests(v)}, outputs);
    return outputs;
  });
}

std::vector<fs::path> cmd_communities(const Workspace& ws, Variant v) {
  return in_phase("communities", [&] {
    const auto start = Clock::now();
    require_file(ws.edges(v), "edge list");
    std::vector<SampleId> known;
    if (fs::is_regular_file(ws.nodes(v))) {
      std::istringstream in(read_file(ws.nodes(v)));
      known = read_node_list(in);
    }
    std::istringstream in(read_file(ws.edges(v)));
    const auto file = read_edge_list(in, known);
    const Graph g = network_graph(file.nodes.size(), file.edges);
    const auto detect_start = Clock::now();
    const auto result = detect_communities(g, ws.config().communities());
    const double runtime = seconds_since(detect_start);

    std::ostringstream part;
    write_partition(part, file.nodes, result.partition);
    write_file_atomic(ws.partition(v), part.str());
    json levels = json::array();
    for (const auto& l : result.levels) levels.push_back({{"communities", l.communities}, {"modularity", l.modularity}});
    const json report = {
        {"nodes", g.node_count()},
        {"edges", g.edge_count()},
        {"communities", result.partition.community_count()},
        {"levels", levels},
        {"modularity", result.modularity ? json(*result.modularity) : json()},
        {"runtime_seconds", runtime},
    };
    write_file_atomic(ws.community_report(v), dump(report));
    std::vector<fs::path> outputs{ws.partition(v), ws.community_report(v)};
    ws.record("communities." + std::string(to_string(v)), seconds_since(start), {ws.edges(v), ws.nodes(v)}, outputs);
    return outputs;
  });
}

std::size_t evaluated_corpus_size(const Membership& m, const LabeledCorpus& labels) {
  std::size_t extra = 0;
  for (const auto& s : m.samples) extra += !labels.contains(s);
  return labels.size() + extra;
}

json metrics_json(const Membership& m, const LabeledCorpus& labels, const MetricsOptions& options,
                  const EfficiencyReport& efficiency) {
  json j;
  j["effectiveness"] = to_json(effectiveness(m, labels, evaluated_corpus_size(m, labels), options));
  const bool has_benign =
      std::any_of(labels.begin(), labels.end(), [](const auto& kv) { return kv.second == kBenignLabel; });
  if (has_benign) j["benign"] = to_json(benign_report(m, labels, options));
  j["efficiency"] = to_json(efficiency);
  j["include_singletons"] = options.include_singletons;
  return j;
}

std::vector<fs::path> cmd_metrics(const Workspace& ws, Variant v) {
  return in_phase("metrics", [&] {
    const auto start = Clock::now();
    require_file(ws.partition(v), "partition");
    std::istringstream in(read_file(ws.partition(v)));
    const Membership m = read_partition(in);
    const LabeledCorpus labels = read_labels(ws.labels());
    const auto efficiency = EfficiencyReport::from(json_number(ws.threshold_report(v), "build_seconds").value_or(0.0),
                                                   json_number(ws.community_report(v), "runtime_seconds").value_or(0.0));
    write_file_atomic(ws.metrics_report(v), dump(metrics_json(m, labels, ws.config().metrics(), efficiency)));
    std::vector<fs::path> outputs{ws.metrics_report(v)};
    ws.record("metrics." + std::string(to_string(v)), seconds_since(start), {ws.partition(v), ws.labels()}, outputs);
    return outputs;
  });
}

std::vector<SweepRow> threshold_sweep(const std::array<DigestSet, 2>& sets, const std::array<MeanSimilarity, 2>& means,
                                      const LabeledCorpus& labels, std::span<const double> percentages,
                                      const PipelineConfig& config) {
  if (percentages.empty()) throw Error(ErrorCode::InvalidParameter, "no threshold percentages given");
  NetworkBuilder builder(sets, config.network());
  std::vector<SweepRow> rows;
  for (double pct : percentages) {
    SweepRow row;
    row.percentage = pct;
    auto start = Clock::now();
    row.policy = derive_thresholds(pct, {means[0].mean, means[1].mean});
    const auto net = builder.build(row.policy);
    const double build = seconds_since(start);
    row.edges = net.edges.size();
    start = Clock::now();
    const auto result = detect_communities(network_graph(net.nodes.size(), net.edges), config.communities());
    row.efficiency = EfficiencyReport::from(build, seconds_since(start));
    const Membership m{net.nodes, result.partition};
    row.effectiveness = effectiveness(m, labels, evaluated_corpus_size(m, labels), config.metrics());
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<fs::path> cmd_sweep(const Workspace& ws, Variant v, std::span<const double> percentages) {
  return in_phase("sweep", [&] {
    const auto start = Clock::now();
    if (percentages.empty()) throw Error(ErrorCode::InvalidParameter, "no threshold percentages given");
    const auto digests = load_digests(ws.digests(v));
    const auto sets = split_by_kind(digests, v);
    const auto means = cached_mean_similarity(ws, v, sets);
    const LabeledCorpus labels = read_labels(ws.labels());
    const auto rows = threshold_sweep(sets, means, labels, percentages, ws.config());

    json out = json::array();
    std::string csv = "percentage,threshold_opcode,threshold_function,edges,communities,coverage_pct,purity_pct,"
                      "distribution,build_seconds,detect_seconds\n";
    for (const auto& r : rows) {
      out.push_back({{"thresholds", policy_json(r.policy)},
                     {"edges", r.edges},
                     {"effectiveness", to_json(r.effectiveness)},
                     {"efficiency", to_json(r.efficiency)}});
      std::ostringstream line;
      line.precision(17);
      line << r.percentage << ',' << r.policy[SequenceKind::Opcode] << ',' << r.policy[SequenceKind::Function] << ','
           << r.edges << ',' << r.effectiveness.communities_total() << ',' << r.effectiveness.coverage_pct << ',';
      if (r.effectiveness.purity_pct) line << *r.effectiveness.purity_pct;
      line << ',' << r.effectiveness.distribution.to_string() << ',' << r.efficiency.network_build_seconds << ','
           << r.efficiency.community_detection_seconds << '\n';
      csv += line.str();
    }
    const fs::path json_path = ws.variant_dir(v) / "sweep.json";
    const fs::path csv_path = ws.variant_dir(v) / "sweep.csv";
    write_file_atomic(json_path, dump(out));
    write_file_atomic(csv_path, csv);
    std::vector<fs::path> outputs{json_path, csv_path};
    ws.record("sweep." + std::string(to_string(v)), seconds_since(start), {ws.digests(v), ws.labels()}, outputs);
    return outputs;
  });
}

std::vector<fs::path> cmd_bench(const fs::path& out_csv, std::span<const RandomGraphSpec> specs, std::size_t repeats) {
  return in_phase("bench", [&] {
    if (specs.empty()) throw Error(ErrorCode::InvalidParameter, "no benchmark graphs given");
    if (repeats == 0) throw Error(ErrorCode::InvalidParameter, "repeats must be >= 1");
    std::ostringstream csv;
    csv.precision(17);
    csv << "n,p,edges,communities,detect_seconds\n";
    for (const auto& spec : specs) {
      std::vector<BenchResult> runs;
      for (std::size_t r = 0; r < repeats; ++r) runs.push_back(bench_detection(spec, r));
      std::sort(runs.begin(), runs.end(), [](const BenchResult& a, const BenchResult& b) {
        return a.efficiency.community_detection_seconds < b.efficiency.community_detection_seconds;
      });
      const auto& median = runs[runs.size() / 2];
      csv << spec.n << ',' << spec.p << ',' << median.edges << ',' << median.communities << ','
          << median.efficiency.community_detection_seconds << '\n';
    }
    write_file_atomic(out_csv, csv.str());
    return std::vector<fs::path>{out_csv};
  });
}

std::vector<fs::path> cmd_run(const Workspace& ws, const std::optional<fs::path>& listing_dir) {
  std::vector<fs::path> outputs;
  auto add = [&](std::vector<fs::path> more) { outputs.insert(outputs.end(), more.begin(), more.end()); };
  if (listing_dir) add(cmd_ingest(ws, *listing_dir));
  add(cmd_fit(ws));
  add(cmd_digest(ws));
  for (Variant v : ws.config().variants()) {
    add(cmd_network(ws, v));
    add(cmd_communities(ws, v));
    if (fs::is_regular_file(ws.labels())) add(cmd_metrics(ws, v));
  }
  return outputs;
}

}  // namespace fhtriage
