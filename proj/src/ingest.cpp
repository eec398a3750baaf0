#include "fhtriage/ingest.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <unordered_set>

#include "fhtriage/error.hpp"

namespace fhtriage {

namespace detail {
extern const std::string_view kOpcodeTableText;
}

namespace {

constexpr std::array<std::string_view, 24> kDirectives = {
    "db",     "dw",     "dd",     "dq",      "dt",   "align", "assume", "proc",
    "endp",   "public", "extrn",  "include", "org",  "end",   "segment", "ends",
    "offset", "struc",  "unicode", "model",  "label", "equ",   "extern",  "global"};

constexpr std::array<std::string_view, 40> kRegisters = {
    "eax", "ebx", "ecx", "edx", "esi", "edi", "ebp", "esp", "rax", "rbx",
    "rcx", "rdx", "rsi", "rdi", "rbp", "rsp", "r8",  "r9",  "r10", "r11",
    "r12", "r13", "r14", "r15", "ax",  "bx",  "cx",  "dx",  "si",  "di",
    "bp",  "sp",  "al",  "bl",  "cl",  "dl",  "ah",  "bh",  "ch",  "dh"};

std::string lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

bool is_hex(char c) { return std::isxdigit(static_cast<unsigned char>(c)) != 0; }
bool is_digit(char c) { return std::isdigit(static_cast<unsigned char>(c)) != 0; }

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    std::size_t j = i;
    while (j < s.size() && !std::isspace(static_cast<unsigned char>(s[j]))) ++j;
    if (j > i) out.push_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

// "401000", "0x401000", ".text:00401000", "00401000h". A bare run of hex
// letters ("add", "dec") is a mnemonic, not an address.
bool is_address(std::string_view tok) {
  bool prefixed = false;
  if (auto colon = tok.rfind(':'); colon != std::string_view::npos && colon + 1 < tok.size()) {
    tok.remove_prefix(colon + 1);
    prefixed = true;
  }
  if (tok.size() > 2 && tok[0] == '0' && (tok[1] == 'x' || tok[1] == 'X')) {
    tok.remove_prefix(2);
    prefixed = true;
  }
  if (!tok.empty() && (tok.back() == 'h' || tok.back() == 'H' || tok.back() == ':')) tok.remove_suffix(1);
  if (tok.empty() || !std::all_of(tok.begin(), tok.end(), is_hex)) return false;
  return prefixed || std::any_of(tok.begin(), tok.end(), is_digit);
}

// Raw instruction bytes between address and mnemonic ("8B", "FF+").
bool is_byte_token(std::string_view tok) {
  if (tok.size() == 3 && tok[2] == '+') tok.remove_suffix(1);
  return tok.size() == 2 && is_hex(tok[0]) && is_hex(tok[1]) &&
         (is_digit(tok[0]) || is_digit(tok[1]) || std::isupper(static_cast<unsigned char>(tok[0])));
}

bool is_mnemonic_shape(std::string_view tok) {
  if (tok.empty() || tok.size() > 16 || !std::isalpha(static_cast<unsigned char>(tok[0]))) return false;
  return std::all_of(tok.begin(), tok.end(), [](char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; });
}

bool is_symbol_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '?' || c == '@' || c == '$' || c == '.';
}

const std::unordered_set<std::string_view>& opcode_set() {
  static const std::unordered_set<std::string_view> set(x86_opcodes().begin(), x86_opcodes().end());
  return set;
}

bool contains(std::span<const std::string_view> list, std::string_view s) {
  return std::find(list.begin(), list.end(), s) != list.end();
}

// IDA auto-names for internal routines vary per binary; collapse them.
bool is_auto_name(std::string_view s) {
  for (std::string_view prefix : {"sub_", "loc_", "nullsub_", "j_sub_"}) {
    if (s.starts_with(prefix) && s.size() > prefix.size()) {
      auto rest = s.substr(prefix.size());
      return std::all_of(rest.begin(), rest.end(), is_hex);
    }
  }
  return false;
}

enum class CallTarget { Symbol, Indirect, NotACall };

struct Instruction {
  std::string mnemonic;
  std::string_view operands;
};

// Splits an instruction line into mnemonic + operand text, or nullopt.
std::optional<Instruction> split_instruction(std::string_view line) {
  auto tokens = split_ws(line);
  if (tokens.empty()) return std::nullopt;
  std::size_t idx = 0;
  bool has_address = false;
  if (is_address(tokens[0])) {
    has_address = true;
    ++idx;
    while (idx < tokens.size() && is_byte_token(tokens[idx])) ++idx;
  }
  if (idx >= tokens.size()) return Instruction{};  // address-only line
  std::string mnemonic = lower(tokens[idx]);
  if (!is_mnemonic_shape(mnemonic) || contains(kDirectives, mnemonic)) return std::nullopt;
  if (!has_address && !opcode_set().contains(mnemonic)) return std::nullopt;
  auto rest_begin = static_cast<std::size_t>(tokens[idx].data() + tokens[idx].size() - line.data());
  return Instruction{std::move(mnemonic), trim(line.substr(rest_begin))};
}

std::pair<CallTarget, std::string> call_target(const Instruction& ins) {
  const bool is_call = ins.mnemonic == "call";
  if (!is_call && ins.mnemonic != "jmp") return {CallTarget::NotACall, {}};
  std::string operand = lower(ins.operands);
  for (std::string_view noise : {"near ptr ", "far ptr ", "dword ptr ", "qword ptr ", "large ", "short "}) {
    for (auto pos = operand.find(noise); pos != std::string::npos; pos = operand.find(noise))
      operand.erase(pos, noise.size());
  }
  std::string_view op = trim(operand);
  if (op.size() >= 2 && op.front() == '[' && op.back() == ']') op = trim(op.substr(1, op.size() - 2));
  bool thunk = false;
  for (std::string_view seg : {"ds:", "cs:"}) {
    if (op.starts_with(seg)) {
      op.remove_prefix(seg.size());
      thunk = true;
    }
  }
  if (op.size() >= 2 && op.front() == '[' && op.back() == ']') op = trim(op.substr(1, op.size() - 2));
  thunk = thunk || op.starts_with("__imp_");
  if (!is_call && !thunk) return {CallTarget::NotACall, {}};
  const bool symbolic = !op.empty() && !is_digit(op.front()) &&
                        std::all_of(op.begin(), op.end(), is_symbol_char) && !contains(kRegisters, op);
  if (!symbolic) return {CallTarget::Indirect, {}};
  if (is_auto_name(op)) return {CallTarget::Symbol, "sub_"};
  return {CallTarget::Symbol, normalize_symbol(op)};
}

}  // namespace

std::string_view to_string(SequenceKind kind) {
  return kind == SequenceKind::Opcode ? "opcode" : "function";
}

SequenceKind parse_kind(std::string_view text) {
  if (text == "opcode") return SequenceKind::Opcode;
  if (text == "function") return SequenceKind::Function;
  throw Error(ErrorCode::ParseError, "unknown sequence kind '" + std::string(text) + "'");
}

std::string normalize_symbol(std::string_view symbol) {
  std::string s = lower(trim(symbol));
  for (std::string_view seg : {"ds:", "cs:"})
    if (s.starts_with(seg)) s.erase(0, seg.size());
  if (s.starts_with("__imp_")) s.erase(0, 6);
  s.erase(0, s.find_first_not_of('_') == std::string::npos ? s.size() : s.find_first_not_of('_'));
  if (auto at = s.rfind('@'); at != std::string::npos && at + 1 < s.size() &&
                              std::all_of(s.begin() + static_cast<std::ptrdiff_t>(at) + 1, s.end(), is_digit)) {
    s.erase(at);
  }
  return s;
}

ParseResult parse_listing(std::string_view text, SequenceKind kind, SampleId sample) {
  ParseResult result;
  result.sequence.sample = std::move(sample);
  result.sequence.kind = kind;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    std::string_view line = text.substr(pos, eol - pos);
    pos = eol + 1;
    if (auto semi = line.find(';'); semi != std::string_view::npos) line = line.substr(0, semi);
    line = trim(line);
    if (line.empty()) continue;

    auto ins = split_instruction(line);
    if (!ins) {
      ++result.unparseable_lines;
      continue;
    }
    if (ins->mnemonic.empty()) continue;
    if (kind == SequenceKind::Opcode) {
      result.sequence.tokens.push_back(std::move(ins->mnemonic));
      continue;
    }
    auto [target, symbol] = call_target(*ins);
    if (target == CallTarget::Indirect) {
      ++result.indirect_calls;
    } else if (target == CallTarget::Symbol) {
      if (symbol.empty())
        ++result.unparseable_lines;
      else
        result.sequence.tokens.push_back(std::move(symbol));
    }
  }
  result.empty = result.sequence.tokens.empty();
  return result;
}

TokenDictionary TokenDictionary::from_ordered(SequenceKind kind, std::span<const std::string> tokens) {
  TokenDictionary dict(kind);
  dict.ordered_.reserve(tokens.size());
  for (const auto& token : tokens) {
    if (token.empty() || token.find_first_of("\t\n\r ") != std::string::npos)
      throw Error(ErrorCode::InvalidParameter, "dictionary token must be non-empty and whitespace-free");
    auto id = static_cast<std::int64_t>(dict.ordered_.size()) + kFirstTokenId;
    if (!dict.ids_.emplace(token, id).second)
      throw Error(ErrorCode::InvalidParameter, "duplicate dictionary token '" + token + "'");
    dict.ordered_.push_back(token);
  }
  return dict;
}

std::int64_t TokenDictionary::lookup(std::string_view token) const {
  auto it = ids_.find(std::string(token));
  return it == ids_.end() ? kUnknownId : it->second;
}

void TokenDictionary::write(std::ostream& out) const {
  out << to_string(kind_) << ' ' << max_id() << '\n';
  for (std::size_t i = 0; i < ordered_.size(); ++i)
    out << ordered_[i] << '\t' << static_cast<std::int64_t>(i) + kFirstTokenId << '\n';
}

TokenDictionary TokenDictionary::read(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::ParseError, "dictionary: missing header");
  std::istringstream header(line);
  std::string kind_text;
  std::int64_t max_id = 0;
  if (!(header >> kind_text >> max_id)) throw Error(ErrorCode::ParseError, "dictionary: bad header '" + line + "'");
  std::vector<std::string> tokens;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos) throw Error(ErrorCode::ParseError, "dictionary: bad entry '" + line + "'");
    std::int64_t id = 0;
    try {
      id = std::stoll(line.substr(tab + 1));
    } catch (const std::exception&) {
      throw Error(ErrorCode::ParseError, "dictionary: bad id in '" + line + "'");
    }
    if (id != static_cast<std::int64_t>(tokens.size()) + kFirstTokenId)
      throw Error(ErrorCode::ParseError, "dictionary: ids must be contiguous from 2");
    tokens.push_back(line.substr(0, tab));
  }
  auto dict = from_ordered(parse_kind(kind_text), tokens);
  if (dict.max_id() != max_id) throw Error(ErrorCode::ParseError, "dictionary: header max_id disagrees with entries");
  return dict;
}

TokenDictionary build_dictionary(std::span<const TokenSequence> corpus, SequenceKind kind, std::size_t max_entries) {
  if (max_entries == 0) throw Error(ErrorCode::InvalidParameter, "max_entries must be positive");
  if (corpus.empty()) throw Error(ErrorCode::EmptyCorpus, "no sequences to build a dictionary from");
  std::unordered_map<std::string, std::uint64_t> freq;
  for (const auto& seq : corpus) {
    if (seq.kind != kind) throw Error(ErrorCode::KindMismatch, "sequence '" + seq.sample + "' has the wrong kind");
    for (const auto& t : seq.tokens) ++freq[t];
  }
  if (freq.empty()) throw Error(ErrorCode::EmptyCorpus, "corpus holds no tokens");
  std::vector<std::pair<std::string, std::uint64_t>> ranked(freq.begin(), freq.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  if (ranked.size() > max_entries) ranked.resize(max_entries);
  std::vector<std::string> tokens;
  tokens.reserve(ranked.size());
  for (auto& [token, count] : ranked) tokens.push_back(std::move(token));
  return TokenDictionary::from_ordered(kind, tokens);
}

std::vector<std::int64_t> map_sequence(const TokenSequence& seq, const TokenDictionary& dict) {
  if (seq.kind != dict.kind())
    throw Error(ErrorCode::KindMismatch, "sequence kind " + std::string(to_string(seq.kind)) +
                                             " does not match dictionary kind " + std::string(to_string(dict.kind())));
  std::vector<std::int64_t> ids;
  ids.reserve(seq.tokens.size());
  for (const auto& t : seq.tokens) ids.push_back(dict.lookup(t));
  return ids;
}

std::span<const std::string_view> x86_opcodes() {
  static const std::vector<std::string_view> table = [] {
    std::vector<std::string_view> out;
    std::string_view text = detail::kOpcodeTableText;
    std::size_t pos = 0;
    while (pos < text.size()) {
      auto eol = text.find('\n', pos);
      if (eol == std::string_view::npos) eol = text.size();
      auto line = text.substr(pos, eol - pos);
      pos = eol + 1;
      if (trim(line).starts_with('#')) continue;
      for (auto tok : split_ws(line)) out.push_back(tok);
    }
    return out;
  }();
  return table;
}

TokenDictionary opcode_dictionary() {
  std::vector<std::string> tokens(x86_opcodes().begin(), x86_opcodes().end());
  return TokenDictionary::from_ordered(SequenceKind::Opcode, tokens);
}

void write_sequences(std::ostream& out, std::span<const TokenSequence> sequences) {
  for (const auto& seq : sequences) {
    if (seq.sample.empty() || seq.sample.find_first_of("\t\n\r") != std::string::npos)
      throw Error(ErrorCode::InvalidParameter, "sample id must be non-empty without tabs or newlines");
    out << seq.sample << '\t' << to_string(seq.kind) << '\t';
    for (std::size_t i = 0; i < seq.tokens.size(); ++i) {
      if (i) out << ' ';
      out << seq.tokens[i];
    }
    out << '\n';
  }
}

std::vector<TokenSequence> read_sequences(std::istream& in) {
  std::vector<TokenSequence> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto t1 = line.find('\t');
    auto t2 = t1 == std::string::npos ? std::string::npos : line.find('\t', t1 + 1);
    if (t2 == std::string::npos || t1 == 0)
      throw Error(ErrorCode::ParseError, "sequences line " + std::to_string(lineno) + ": expected 3 tab-separated fields");
    TokenSequence seq;
    seq.sample = line.substr(0, t1);
    seq.kind = parse_kind(std::string_view(line).substr(t1 + 1, t2 - t1 - 1));
    for (auto tok : split_ws(std::string_view(line).substr(t2 + 1))) seq.tokens.emplace_back(tok);
    out.push_back(std::move(seq));
  }
  return out;
}

std::vector<TokenSequence> ingest_directory(const std::filesystem::path& dir, IngestStats* stats) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw Error(ErrorCode::IoError, "not a directory: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::recursive_directory_iterator(dir))
    if (entry.is_regular_file()) files.push_back(entry.path());
  std::sort(files.begin(), files.end());

  IngestStats local;
  std::unordered_set<std::string> seen;
  std::vector<TokenSequence> out;
  out.reserve(files.size() * 2);
  for (const auto& path : files) {
    SampleId id = path.stem().string();
    if (id.empty() || id.find_first_of("\t\n\r") != std::string::npos)
      throw Error(ErrorCode::InvalidParameter, "unusable sample id from " + path.string());
    if (!seen.insert(id).second) throw Error(ErrorCode::DuplicateSample, "sample id '" + id + "' appears twice");
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot read " + path.string());
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    ++local.files;
    for (SequenceKind kind : kAllKinds) {
      auto parsed = parse_listing(text, kind, id);
      if (kind == SequenceKind::Opcode) local.unparseable_lines += parsed.unparseable_lines;
      if (parsed.empty) (kind == SequenceKind::Opcode ? local.empty_opcode : local.empty_function).push_back(id);
      out.push_back(std::move(parsed.sequence));
    }
  }
  if (stats) *stats = std::move(local);
  return out;
}

}  // namespace fhtriage
