#pragma once

// Disassembly listing parsing and token dictionaries.
//
// Listing grammar (one instruction per line):
//   [segment:]<hex address> <mnemonic> [operands]   ; opcode lines
//   [address] call <symbol>                          ; function lines
//   [address] call|jmp [ds:]<import thunk>           ; e.g. ds:__imp__CreateFileA@28
// Blank lines and lines starting with ';' are ignored. Labels, directives and
// anything else that does not fit are counted as unparseable and skipped.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace fhtriage {

enum class SequenceKind : std::uint8_t { Opcode, Function };

inline constexpr SequenceKind kAllKinds[] = {SequenceKind::Opcode, SequenceKind::Function};

std::string_view to_string(SequenceKind kind);
SequenceKind parse_kind(std::string_view text);

using SampleId = std::string;

struct TokenSequence {
  SampleId sample;
  SequenceKind kind = SequenceKind::Opcode;
  std::vector<std::string> tokens;
};

struct ParseResult {
  TokenSequence sequence;
  std::size_t unparseable_lines = 0;
  /// Call lines whose target is a register or an unnamed memory operand.
  std::size_t indirect_calls = 0;
  /// Set when the listing produced no tokens of the requested kind.
  bool empty = false;
};

ParseResult parse_listing(std::string_view text, SequenceKind kind, SampleId sample = {});

/// Lowercases a callee symbol and strips segment prefixes, import-thunk
/// prefixes, leading underscores and trailing @N stdcall decoration.
std::string normalize_symbol(std::string_view symbol);

inline constexpr std::int64_t kPadId = 0;
inline constexpr std::int64_t kUnknownId = 1;
inline constexpr std::int64_t kFirstTokenId = 2;

class TokenDictionary {
 public:
  explicit TokenDictionary(SequenceKind kind) : kind_(kind) {}

  /// Tokens receive ids 2, 3, ... in the given order. Duplicates are rejected.
  static TokenDictionary from_ordered(SequenceKind kind, std::span<const std::string> tokens);

  SequenceKind kind() const noexcept { return kind_; }
  std::size_t size() const noexcept { return ordered_.size(); }
  /// Largest assigned id, or kUnknownId for an empty dictionary.
  std::int64_t max_id() const noexcept {
    return static_cast<std::int64_t>(ordered_.size()) + kFirstTokenId - 1;
  }
  std::int64_t lookup(std::string_view token) const;
  const std::vector<std::string>& tokens_by_id() const noexcept { return ordered_; }

  void write(std::ostream& out) const;
  static TokenDictionary read(std::istream& in);

  friend bool operator==(const TokenDictionary&, const TokenDictionary&) = default;

 private:
  SequenceKind kind_;
  std::vector<std::string> ordered_;  // index i holds the token with id i + 2
  std::unordered_map<std::string, std::int64_t> ids_;
};

/// Top `max_entries` tokens by frequency (ties broken lexicographically).
TokenDictionary build_dictionary(std::span<const TokenSequence> corpus, SequenceKind kind,
                                 std::size_t max_entries);

std::vector<std::int64_t> map_sequence(const TokenSequence& seq, const TokenDictionary& dict);

/// The bundled x86 mnemonic table (lowercase, in id order).
std::span<const std::string_view> x86_opcodes();
TokenDictionary opcode_dictionary();

// Sequence files: "<sample_id>\t<kind>\t<token token ...>" per line.
void write_sequences(std::ostream& out, std::span<const TokenSequence> sequences);
std::vector<TokenSequence> read_sequences(std::istream& in);

struct IngestStats {
  std::size_t files = 0;
  std::size_t unparseable_lines = 0;
  std::vector<SampleId> empty_opcode;
  std::vector<SampleId> empty_function;
};

/// Parses every regular file under `dir` (sorted by path); the file stem is
/// the sample id. Produces one opcode and one function sequence per file.
std::vector<TokenSequence> ingest_directory(const std::filesystem::path& dir, IngestStats* stats = nullptr);

}  // namespace fhtriage
