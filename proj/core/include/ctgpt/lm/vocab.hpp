#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace ctgpt::lm {

inline constexpr std::int64_t kPadId = 0;
inline constexpr std::int64_t kBosId = 1;
inline constexpr std::int64_t kEosId = 2;
inline constexpr std::int64_t kStopId = 3;
inline constexpr std::int64_t kUnkId = 4;
inline constexpr std::int64_t kNumSpecials = 5;
/// Marks where visual tokens are spliced in. Never a vocabulary entry.
inline constexpr std::int64_t kImageSentinel = -200;

/// Lowercases and splits on whitespace; every punctuation mark becomes its own
/// token. Letters, digits, '-' and '\'' form words.
std::vector<std::string> split_words(std::string_view text);

/// Joins tokens with single spaces, without a space before closing
/// punctuation or after an opening parenthesis.
std::string join_words(std::span<const std::string> words);

/// split_words followed by join_words.
std::string normalize_text(std::string_view text);

class Vocab {
 public:
  /// Specials first (PAD, BOS, EOS, STOP, UNK), then every distinct corpus
  /// token in lexicographic order.
  static Vocab build(std::span<const std::string> corpus);

  std::size_t size() const { return tokens_.size(); }
  bool contains(std::string_view token) const;
  std::int64_t id(std::string_view token) const;
  const std::string& token(std::int64_t id) const;

  std::vector<std::int64_t> encode(std::string_view text) const;
  /// Specials are skipped; the sentinel is rendered as "<image>".
  std::string decode(std::span<const std::int64_t> ids) const;
  std::vector<std::string> decode_tokens(std::span<const std::int64_t> ids) const;

  /// "token<TAB>id" per line, ordered by id.
  std::string to_tsv() const;
  static Vocab from_tsv(std::string_view text);
  void save(const std::filesystem::path& path) const;
  static Vocab load(const std::filesystem::path& path);

  bool operator==(const Vocab& other) const { return tokens_ == other.tokens_; }

 private:
  void add(std::string token);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::int64_t> ids_;
};

}  // namespace ctgpt::lm
