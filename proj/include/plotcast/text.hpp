#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <regex>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace plotcast {

/// Raised when raw book bytes cannot be ingested (e.g. invalid UTF-8).
class IngestError : public std::runtime_error {
public:
  IngestError(const std::string& what, std::size_t byte_offset)
      : std::runtime_error(what), byte_offset_(byte_offset) {}
  std::size_t byte_offset() const noexcept { return byte_offset_; }

private:
  std::size_t byte_offset_;
};

struct Sentence {
  std::string text;                 // original casing, whitespace collapsed
  std::vector<std::string> tokens;  // lowercased Treebank-style tokens
  int word_count = 0;
  int chapter_id = 0;
};

struct StoryBlock {
  std::string book_id;
  int index = 0;
  int chapter_id = 0;
  std::vector<Sentence> sentences;

  int word_count() const;
  std::vector<std::string> tokens() const;
  std::string text() const;
};

struct SegmenterOptions {
  std::string chapter_pattern = R"(^\s*chapter\b)";
  std::vector<std::string> abbreviations = {"mr", "mrs", "dr", "st", "vs", "e.g", "i.e"};
};

/// Returns the byte offset of the first invalid UTF-8 sequence, if any.
std::optional<std::size_t> find_invalid_utf8(std::string_view bytes);

/// Lowercased Treebank-style tokens: quotes become `` and '', contractions
/// split off ("don't" -> "do" "n't"), punctuation is its own token.
std::vector<std::string> tokenize(std::string_view text);

bool has_alnum(std::string_view token);
bool is_punctuation_token(std::string_view token);
int count_words(std::span<const std::string> tokens);

std::vector<Sentence> segment_sentences(std::string_view raw_text,
                                        const SegmenterOptions& options = {});

/// Non-overlapping windows of exactly block_size sentences; the remainder is dropped.
std::vector<StoryBlock> build_blocks(std::span<const Sentence> sentences, const std::string& book_id,
                                     int block_size = 20);

std::vector<std::string> load_abbreviations(const std::string& path);

class Vocab {
public:
  static constexpr int kPad = 0;
  static constexpr int kStart = 1;
  static constexpr int kEnd = 2;
  static constexpr int kUnk = 3;
  static constexpr int kNumSpecials = 4;

  Vocab();
  explicit Vocab(std::vector<std::string> id_to_token, int min_freq = 1);

  int size() const { return static_cast<int>(id_to_token_.size()); }
  int min_freq() const { return min_freq_; }
  bool contains(std::string_view token) const;
  int encode(std::string_view token) const;
  std::vector<int> encode(std::span<const std::string> tokens) const;
  const std::string& decode(int id) const;
  std::vector<std::string> decode(std::span<const int> ids) const;
  const std::vector<std::string>& tokens() const { return id_to_token_; }
  std::uint64_t hash() const;

  static bool is_special(int id) { return id >= 0 && id < kNumSpecials; }

private:
  std::vector<std::string> id_to_token_;
  std::unordered_map<std::string, int> token_to_id_;
  int min_freq_ = 1;
};

Vocab build_vocab(std::span<const StoryBlock> blocks, int min_freq = 10);

struct SplitRatios {
  double train = 0.70;
  double valid = 0.10;
  double test = 0.20;
};

struct CorpusSplit {
  std::vector<std::string> train;
  std::vector<std::string> valid;
  std::vector<std::string> test;
};

CorpusSplit split_corpus(std::vector<std::string> book_ids, const SplitRatios& ratios,
                         std::uint64_t seed);

/// 64-bit FNV-1a, used for content hashes throughout.
std::uint64_t fnv1a(std::string_view bytes, std::uint64_t seed = 1469598103934665603ULL);
std::string hex64(std::uint64_t value);

}  // namespace plotcast
