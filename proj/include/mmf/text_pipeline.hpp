#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace mmf {

enum class EmojiPolicy { kStrip, kMapToToken };

struct NormalizerConfig {
  /// Characters removed as punctuation (UTF-8). Empty optional means the
  /// built-in set: ASCII punctuation, general punctuation, danda.
  std::optional<std::string> punctuation;
  EmojiPolicy emoji_policy = EmojiPolicy::kStrip;
  /// Per-emoji replacement words used by kMapToToken.
  std::map<std::string, std::string> emoji_table;
  /// Replacement for emoji missing from emoji_table under kMapToToken.
  std::string emoji_token = "emoji";
  /// Whole-word spelling corrections applied after cleaning.
  std::map<std::string, std::string> corrections;
  /// Hook for mixed-script normalization; identity when unset.
  std::function<std::string(std::string_view)> transliterate;
};

/// Cleans raw text: transliteration hook, emoji policy, punctuation and
/// control-character removal, whitespace collapse and trim, corrections.
std::string normalize_text(std::string_view raw, const NormalizerConfig& rules = {});

/// Subword inventory. Ids are dense; ids 0..3 are [PAD] [UNK] [CLS] [SEP].
/// Word-internal pieces carry the "##" continuation prefix.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kCls = 2;
  static constexpr int kSep = 3;
  static constexpr std::string_view kContinuation = "##";

  Vocabulary();
  /// Validates specials at fixed ids, uniqueness and non-empty tokens.
  explicit Vocabulary(std::vector<std::string> tokens);

  std::size_t size() const { return tokens_.size(); }
  std::optional<int> find(std::string_view token) const;
  bool contains(std::string_view token) const { return find(token).has_value(); }
  const std::string& token(int id) const;
  const std::vector<std::string>& tokens() const { return tokens_; }

  /// One token per line; line number is the id.
  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

/// Greedy pair-merge vocabulary: start from every character (initial and
/// "##"-continuation forms), repeatedly merge the most frequent adjacent
/// pair (ties: lexicographically smallest) until `target_size` tokens exist
/// or no pair occurs at least twice. Depends only on the word multiset.
Vocabulary train_vocabulary(std::span<const std::string> corpus, std::size_t target_size);

struct TokenSequence {
  std::vector<int> ids;
  std::vector<int> attention_mask;

  std::size_t length() const;  // number of real (unmasked) tokens
};

/// [CLS] + greedy longest-match subwords, truncated to max_len, padded with
/// [PAD]. An unmatched word remainder becomes one [UNK].
TokenSequence tokenize(std::string_view text, const Vocabulary& vocab, std::size_t max_len = 64);

/// Inverse of tokenize for in-vocabulary text: joins pieces, drops specials.
std::string decode(std::span<const int> ids, const Vocabulary& vocab);

}  // namespace mmf
