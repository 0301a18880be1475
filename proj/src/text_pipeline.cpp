#include "mmf/text_pipeline.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <set>
#include <utility>

#include "mmf/errors.hpp"
#include "mmf/unicode.hpp"

namespace mmf {

namespace {

constexpr std::size_t kMaxWordChars = 100;

std::u32string collect_emoji_sequence(const std::u32string& cps, std::size_t& i) {
  std::u32string seq{cps[i]};
  ++i;
  while (i < cps.size()) {
    if (cps[i] == 0x200d && i + 1 < cps.size() && unicode::is_emoji(cps[i + 1])) {
      seq.push_back(cps[i]);
      seq.push_back(cps[i + 1]);
      i += 2;
    } else if (unicode::is_emoji_modifier(cps[i]) && cps[i] != 0x200d) {
      seq.push_back(cps[i]);
      ++i;
    } else {
      break;
    }
  }
  return seq;
}

}  // namespace

std::string normalize_text(std::string_view raw, const NormalizerConfig& rules) {
  std::string source = rules.transliterate ? rules.transliterate(raw) : std::string(raw);
  const std::u32string cps = unicode::decode_utf8(source);

  std::u32string custom_punct;
  if (rules.punctuation) custom_punct = unicode::decode_utf8(*rules.punctuation);
  auto is_punct = [&](char32_t cp) {
    if (rules.punctuation) return custom_punct.find(cp) != std::u32string::npos;
    return unicode::is_default_punctuation(cp);
  };

  std::u32string cleaned;
  cleaned.reserve(cps.size());
  std::size_t i = 0;
  while (i < cps.size()) {
    const char32_t cp = cps[i];
    if (unicode::is_emoji(cp)) {
      const std::u32string seq = collect_emoji_sequence(cps, i);
      cleaned.push_back(U' ');
      if (rules.emoji_policy == EmojiPolicy::kMapToToken) {
        std::string word = rules.emoji_token;
        if (auto it = rules.emoji_table.find(unicode::encode_utf8(seq)); it != rules.emoji_table.end()) {
          word = it->second;
        } else if (auto first = rules.emoji_table.find(unicode::encode_utf8(seq[0]));
                   first != rules.emoji_table.end()) {
          word = first->second;
        }
        cleaned += unicode::decode_utf8(word);
        cleaned.push_back(U' ');
      }
      continue;
    }
    ++i;
    if (unicode::is_whitespace(cp) || is_punct(cp)) {
      cleaned.push_back(U' ');
    } else if (unicode::is_non_textual(cp) || (unicode::is_emoji_modifier(cp) && cp != 0x200d)) {
      continue;
    } else {
      cleaned.push_back(cp);
    }
  }

  std::vector<std::string> words = unicode::split_words(unicode::encode_utf8(cleaned));
  std::string out;
  for (auto& w : words) {
    if (auto it = rules.corrections.find(w); it != rules.corrections.end()) w = it->second;
    if (w.empty()) continue;
    if (!out.empty()) out.push_back(' ');
    out += w;
  }
  return out;
}

// ---------------------------------------------------------------------------

Vocabulary::Vocabulary() : Vocabulary(std::vector<std::string>{"[PAD]", "[UNK]", "[CLS]", "[SEP]"}) {}

Vocabulary::Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  static const std::array<std::string_view, 4> specials{"[PAD]", "[UNK]", "[CLS]", "[SEP]"};
  if (tokens_.size() < specials.size()) throw DataError("vocabulary lacks the four special tokens");
  for (std::size_t i = 0; i < specials.size(); ++i) {
    if (tokens_[i] != specials[i]) {
      throw DataError("vocabulary id " + std::to_string(i) + " must be " + std::string(specials[i]) + ", found " +
                      tokens_[i]);
    }
  }
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    const auto& t = tokens_[i];
    if (t.empty() || t == kContinuation) throw DataError("vocabulary token " + std::to_string(i) + " is empty");
    if (t.find_first_of(" \t\r\n") != std::string::npos) {
      throw DataError("vocabulary token " + std::to_string(i) + " contains whitespace");
    }
    if (!index_.emplace(t, static_cast<int>(i)).second) throw DataError("duplicate vocabulary token " + t);
  }
}

std::optional<int> Vocabulary::find(std::string_view token) const {
  auto it = index_.find(std::string(token));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw DataError("token id " + std::to_string(id) + " out of range for vocabulary of " +
                    std::to_string(tokens_.size()));
  }
  return tokens_[static_cast<std::size_t>(id)];
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot write vocabulary " + path.string());
  for (const auto& t : tokens_) os << t << '\n';
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot read vocabulary " + path.string());
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(is, line)) tokens.push_back(line);
  return Vocabulary(std::move(tokens));
}

// ---------------------------------------------------------------------------

Vocabulary train_vocabulary(std::span<const std::string> corpus, std::size_t target_size) {
  if (corpus.empty()) throw ConfigError("train_vocabulary: corpus is empty");

  std::map<std::string, long long> word_counts;
  std::set<char32_t> chars;
  for (const auto& line : corpus) {
    for (auto& w : unicode::split_words(line)) {
      for (char32_t cp : unicode::decode_utf8(w)) chars.insert(cp);
      ++word_counts[w];
    }
  }
  if (word_counts.empty()) throw ConfigError("train_vocabulary: corpus contains no words");
  if (target_size <= chars.size() + 4) {
    throw ConfigError("train_vocabulary: target size " + std::to_string(target_size) + " must exceed " +
                      std::to_string(chars.size() + 4) + " (distinct characters + specials)");
  }

  struct Word {
    std::vector<std::string> symbols;
    long long count;
  };
  std::vector<Word> words;
  std::set<std::string> base;
  for (const auto& [w, count] : word_counts) {
    Word word{{}, count};
    const std::u32string cps = unicode::decode_utf8(w);
    for (std::size_t i = 0; i < cps.size(); ++i) {
      std::string sym = unicode::encode_utf8(cps[i]);
      if (i > 0) sym = std::string(Vocabulary::kContinuation) + sym;
      base.insert(sym);
      word.symbols.push_back(std::move(sym));
    }
    words.push_back(std::move(word));
  }

  std::vector<std::string> tokens{"[PAD]", "[UNK]", "[CLS]", "[SEP]"};
  std::set<std::string> known(tokens.begin(), tokens.end());
  for (const auto& b : base) {
    if (known.insert(b).second) tokens.push_back(b);
  }

  while (tokens.size() < target_size) {
    std::map<std::pair<std::string, std::string>, long long> pairs;
    for (const auto& w : words) {
      for (std::size_t i = 0; i + 1 < w.symbols.size(); ++i) pairs[{w.symbols[i], w.symbols[i + 1]}] += w.count;
    }
    const std::pair<std::string, std::string>* best = nullptr;
    long long best_count = 0;
    for (const auto& [pair, count] : pairs) {
      if (count > best_count) {  // map order gives the lexicographic tie-break
        best = &pair;
        best_count = count;
      }
    }
    if (best == nullptr || best_count < 2) break;

    const std::string left = best->first;
    const std::string right = best->second;
    const std::string merged = left + right.substr(Vocabulary::kContinuation.size());
    for (auto& w : words) {
      std::vector<std::string> next;
      next.reserve(w.symbols.size());
      for (std::size_t i = 0; i < w.symbols.size(); ++i) {
        if (i + 1 < w.symbols.size() && w.symbols[i] == left && w.symbols[i + 1] == right) {
          next.push_back(merged);
          ++i;
        } else {
          next.push_back(w.symbols[i]);
        }
      }
      w.symbols = std::move(next);
    }
    if (known.insert(merged).second) tokens.push_back(merged);
  }
  return Vocabulary(std::move(tokens));
}

// ---------------------------------------------------------------------------

std::size_t TokenSequence::length() const {
  return static_cast<std::size_t>(std::count(attention_mask.begin(), attention_mask.end(), 1));
}

TokenSequence tokenize(std::string_view text, const Vocabulary& vocab, std::size_t max_len) {
  if (max_len < 2) throw ConfigError("tokenize: max_len must be at least 2");
  std::vector<int> pieces{Vocabulary::kCls};
  for (const auto& word : unicode::split_words(text)) {
    if (pieces.size() >= max_len) break;
    const std::u32string cps = unicode::decode_utf8(word);
    if (cps.size() > kMaxWordChars) {
      pieces.push_back(Vocabulary::kUnk);
      continue;
    }
    std::size_t start = 0;
    while (start < cps.size()) {
      std::optional<int> match;
      std::size_t end = cps.size();
      for (; end > start; --end) {
        std::string piece = unicode::encode_utf8(std::u32string_view(cps).substr(start, end - start));
        if (start > 0) piece = std::string(Vocabulary::kContinuation) + piece;
        match = vocab.find(piece);
        if (match) break;
      }
      if (!match) {
        pieces.push_back(Vocabulary::kUnk);
        break;
      }
      pieces.push_back(*match);
      start = end;
    }
  }

  TokenSequence seq;
  seq.ids.assign(max_len, Vocabulary::kPad);
  seq.attention_mask.assign(max_len, 0);
  const std::size_t n = std::min(max_len, pieces.size());
  for (std::size_t i = 0; i < n; ++i) {
    seq.ids[i] = pieces[i];
    seq.attention_mask[i] = 1;
  }
  return seq;
}

std::string decode(std::span<const int> ids, const Vocabulary& vocab) {
  std::string out;
  for (int id : ids) {
    if (id == Vocabulary::kPad || id == Vocabulary::kCls || id == Vocabulary::kSep) continue;
    const std::string& tok = vocab.token(id);
    if (tok.starts_with(Vocabulary::kContinuation) && !out.empty()) {
      out += tok.substr(Vocabulary::kContinuation.size());
    } else {
      if (!out.empty()) out.push_back(' ');
      out += tok;
    }
  }
  return out;
}

}  // namespace mmf
