#include "plotcast/text.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "plotcast/random.hpp"

namespace plotcast {

namespace {

constexpr std::string_view kSpecialNames[] = {"<pad>", "<start>", "<end>", "<unk>"};

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

std::string lower_ascii(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

// Decodes one UTF-8 code point starting at i; returns 0 length on malformed input.
std::pair<char32_t, int> decode_utf8(std::string_view s, std::size_t i) {
  const auto b0 = static_cast<unsigned char>(s[i]);
  if (b0 < 0x80) return {b0, 1};
  int len = 0;
  char32_t cp = 0;
  if ((b0 & 0xE0) == 0xC0) {
    len = 2;
    cp = b0 & 0x1F;
  } else if ((b0 & 0xF0) == 0xE0) {
    len = 3;
    cp = b0 & 0x0F;
  } else if ((b0 & 0xF8) == 0xF0) {
    len = 4;
    cp = b0 & 0x07;
  } else {
    return {0, 0};
  }
  if (i + len > s.size()) return {0, 0};
  for (int k = 1; k < len; ++k) {
    const auto b = static_cast<unsigned char>(s[i + k]);
    if ((b & 0xC0) != 0x80) return {0, 0};
    cp = (cp << 6) | (b & 0x3F);
  }
  // Overlong encodings and surrogates.
  if ((len == 2 && cp < 0x80) || (len == 3 && cp < 0x800) || (len == 4 && cp < 0x10000) ||
      (cp >= 0xD800 && cp <= 0xDFFF) || cp > 0x10FFFF)
    return {0, 0};
  return {cp, len};
}

// Normalizes typographic punctuation to ASCII so the tokenizer sees one alphabet.
std::string normalize_punctuation(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size();) {
    auto [cp, len] = decode_utf8(s, i);
    if (len == 0) {
      out.push_back(s[i]);
      ++i;
      continue;
    }
    switch (cp) {
      case 0x201C: out += "\x01"; break;  // left double quote, opening marker
      case 0x201D: out += "\x02"; break;  // right double quote, closing marker
      case 0x2018: out += "`"; break;
      case 0x2019: out += "'"; break;
      case 0x2014:
      case 0x2013: out += " -- "; break;
      case 0x2026: out += "..."; break;
      case 0x00A0: out += " "; break;
      default: out.append(s.substr(i, len));
    }
    i += len;
  }
  return out;
}

bool is_open_bracket(char c) { return c == '(' || c == '[' || c == '{'; }
bool is_close_bracket(char c) { return c == ')' || c == ']' || c == '}'; }
bool is_trailing_punct(char c) {
  return c == '.' || c == ',' || c == ';' || c == ':' || c == '!' || c == '?' || is_close_bracket(c);
}

void split_contractions(const std::string& core, std::vector<std::string>& out) {
  if (core.empty()) return;
  const std::string low = lower_ascii(core);
  if (low.size() > 3 && low.ends_with("n't")) {
    out.push_back(low.substr(0, low.size() - 3));
    out.push_back("n't");
    return;
  }
  static const char* kSuffixes[] = {"'s", "'re", "'ve", "'ll", "'d", "'m"};
  for (const char* suffix : kSuffixes) {
    const std::string_view sv(suffix);
    if (low.size() > sv.size() && low.ends_with(sv)) {
      out.push_back(low.substr(0, low.size() - sv.size()));
      out.emplace_back(sv);
      return;
    }
  }
  out.push_back(low);
}

void tokenize_chunk(std::string_view chunk, bool after_space, std::vector<std::string>& out) {
  std::size_t begin = 0;
  std::size_t end = chunk.size();
  std::vector<std::string> lead;
  std::vector<std::string> trail;

  while (begin < end) {
    const char c = chunk[begin];
    if (c == '\x01' || (c == '"' && after_space)) {
      lead.emplace_back("``");
    } else if (c == '\x02') {
      lead.emplace_back("''");
    } else if (c == '`') {
      if (begin + 1 < end && chunk[begin + 1] == '`') ++begin;
      lead.emplace_back("``");
    } else if (is_open_bracket(c)) {
      lead.emplace_back(1, c);
    } else if (c == '\'' && begin + 1 < end && std::isalpha(static_cast<unsigned char>(chunk[begin + 1]))) {
      lead.emplace_back("`");
    } else if (c == '"') {
      lead.emplace_back("''");
    } else {
      break;
    }
    ++begin;
  }

  while (end > begin) {
    const char c = chunk[end - 1];
    if (c == '"' || c == '\x02' || c == '\x01') {
      trail.emplace_back("''");
      --end;
    } else if (c == '.') {
      std::size_t dots = 0;
      while (end > begin && chunk[end - 1] == '.') {
        ++dots;
        --end;
      }
      trail.emplace_back(dots >= 2 ? "..." : ".");
    } else if (is_trailing_punct(c)) {
      trail.emplace_back(1, c);
      --end;
    } else if (c == '\'' && end - begin >= 2 && chunk[end - 2] != 's') {
      trail.emplace_back("'");
      --end;
    } else {
      break;
    }
  }

  for (auto& t : lead) out.push_back(std::move(t));
  if (begin < end) {
    const std::string core(chunk.substr(begin, end - begin));
    if (core == "--" || core == "-") {
      out.push_back("--");
    } else {
      split_contractions(core, out);
    }
  }
  for (auto it = trail.rbegin(); it != trail.rend(); ++it) out.push_back(std::move(*it));
}

std::string collapse_whitespace(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  bool pending_space = false;
  for (char c : s) {
    if (is_space(c)) {
      pending_space = !out.empty();
    } else {
      if (pending_space) out.push_back(' ');
      pending_space = false;
      out.push_back(c);
    }
  }
  return out;
}

bool is_closer(std::string_view s, std::size_t i, std::size_t& len) {
  const char c = s[i];
  if (c == '"' || c == '\'' || is_close_bracket(c)) {
    len = 1;
    return true;
  }
  if (s.substr(i, 3) == "\xE2\x80\x9D" || s.substr(i, 3) == "\xE2\x80\x99") {
    len = 3;
    return true;
  }
  return false;
}

bool is_opener_or_capital(std::string_view s, std::size_t i) {
  const char c = s[i];
  if (std::isupper(static_cast<unsigned char>(c))) return true;
  if (c == '"' || c == '\'' || c == '`' || c == '(') return true;
  return s.substr(i, 3) == "\xE2\x80\x9C" || s.substr(i, 3) == "\xE2\x80\x98";
}

std::string word_before(std::string_view s, std::size_t dot) {
  std::size_t b = dot;
  while (b > 0 && !is_space(s[b - 1])) --b;
  std::string word(s.substr(b, dot - b));
  while (!word.empty() && !std::isalnum(static_cast<unsigned char>(word.front()))) word.erase(word.begin());
  return lower_ascii(word);
}

void split_segment(std::string_view seg, int chapter, const SegmenterOptions& options,
                   std::vector<Sentence>& out) {
  auto emit = [&](std::string_view piece) {
    Sentence s;
    s.text = collapse_whitespace(piece);
    if (s.text.empty()) return;
    s.tokens = tokenize(s.text);
    if (s.tokens.empty()) return;
    s.word_count = count_words(s.tokens);
    s.chapter_id = chapter;
    out.push_back(std::move(s));
  };

  std::size_t start = 0;
  std::size_t i = 0;
  while (i < seg.size()) {
    const char c = seg[i];
    if (c != '.' && c != '!' && c != '?') {
      ++i;
      continue;
    }
    std::size_t j = i + 1;
    while (j < seg.size() && (seg[j] == '.' || seg[j] == '!' || seg[j] == '?')) ++j;
    std::size_t len = 0;
    while (j < seg.size() && is_closer(seg, j, len)) j += len;
    if (j < seg.size() && !is_space(seg[j])) {
      i = j;
      continue;
    }
    std::size_t k = j;
    while (k < seg.size() && is_space(seg[k])) ++k;
    bool boundary = k >= seg.size() || is_opener_or_capital(seg, k);
    if (boundary && c == '.' && j == i + 1) {
      const std::string word = word_before(seg, i);
      if (std::find(options.abbreviations.begin(), options.abbreviations.end(), word) !=
          options.abbreviations.end())
        boundary = false;
    }
    if (boundary) {
      emit(seg.substr(start, j - start));
      start = k;
    }
    i = j;
  }
  if (start < seg.size()) emit(seg.substr(start));
}

}  // namespace

std::optional<std::size_t> find_invalid_utf8(std::string_view bytes) {
  for (std::size_t i = 0; i < bytes.size();) {
    auto [cp, len] = decode_utf8(bytes, i);
    if (len == 0) return i;
    i += len;
  }
  return std::nullopt;
}

bool has_alnum(std::string_view token) {
  for (std::size_t i = 0; i < token.size();) {
    const auto b = static_cast<unsigned char>(token[i]);
    if (b < 0x80) {
      if (std::isalnum(b)) return true;
      ++i;
      continue;
    }
    auto [cp, len] = decode_utf8(token, i);
    if (len == 0) return false;
    // General punctuation and symbols are not word characters.
    const bool punct = (cp >= 0x2000 && cp <= 0x206F) || (cp >= 0x00A0 && cp <= 0x00BF) ||
                       cp == 0x00D7 || cp == 0x00F7;
    if (!punct) return true;
    i += len;
  }
  return false;
}

bool is_punctuation_token(std::string_view token) { return !token.empty() && !has_alnum(token); }

int count_words(std::span<const std::string> tokens) {
  return static_cast<int>(std::count_if(tokens.begin(), tokens.end(),
                                        [](const std::string& t) { return has_alnum(t); }));
}

std::vector<std::string> tokenize(std::string_view text) {
  const std::string norm = normalize_punctuation(text);
  std::vector<std::string> out;
  std::size_t i = 0;
  bool after_space = true;
  while (i < norm.size()) {
    if (is_space(norm[i])) {
      after_space = true;
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < norm.size() && !is_space(norm[j])) ++j;
    std::string_view chunk(norm.data() + i, j - i);
    // "word--word" splits on the dash.
    std::size_t pos;
    bool first = true;
    while ((pos = chunk.find("--")) != std::string_view::npos) {
      if (pos > 0) tokenize_chunk(chunk.substr(0, pos), first && after_space, out);
      out.emplace_back("--");
      chunk.remove_prefix(pos + 2);
      while (!chunk.empty() && chunk.front() == '-') chunk.remove_prefix(1);
      first = false;
    }
    if (!chunk.empty()) tokenize_chunk(chunk, first ? after_space : true, out);
    after_space = false;
    i = j;
  }
  return out;
}

std::vector<Sentence> segment_sentences(std::string_view raw_text, const SegmenterOptions& options) {
  if (raw_text.empty()) return {};
  if (auto bad = find_invalid_utf8(raw_text))
    throw IngestError("invalid UTF-8 at byte offset " + std::to_string(*bad), *bad);

  const std::regex chapter_re(options.chapter_pattern,
                              std::regex::ECMAScript | std::regex::icase);
  std::vector<Sentence> out;
  std::string segment;
  int chapter = 0;

  std::size_t pos = 0;
  while (pos <= raw_text.size()) {
    std::size_t nl = raw_text.find('\n', pos);
    if (nl == std::string_view::npos) nl = raw_text.size();
    const std::string line(raw_text.substr(pos, nl - pos));
    if (std::regex_search(line, chapter_re)) {
      split_segment(segment, chapter, options, out);
      segment.clear();
      ++chapter;
    } else {
      segment += line;
      segment.push_back('\n');
    }
    pos = nl + 1;
  }
  split_segment(segment, chapter, options, out);
  return out;
}

int StoryBlock::word_count() const {
  int total = 0;
  for (const auto& s : sentences) total += s.word_count;
  return total;
}

std::vector<std::string> StoryBlock::tokens() const {
  std::vector<std::string> out;
  for (const auto& s : sentences) out.insert(out.end(), s.tokens.begin(), s.tokens.end());
  return out;
}

std::string StoryBlock::text() const {
  std::string out;
  for (const auto& s : sentences) {
    if (!out.empty()) out.push_back(' ');
    out += s.text;
  }
  return out;
}

std::vector<StoryBlock> build_blocks(std::span<const Sentence> sentences, const std::string& book_id,
                                     int block_size) {
  if (block_size < 2) throw std::invalid_argument("block_size must be at least 2");
  std::vector<StoryBlock> blocks;
  const std::size_t n_blocks = sentences.size() / static_cast<std::size_t>(block_size);
  blocks.reserve(n_blocks);
  for (std::size_t b = 0; b < n_blocks; ++b) {
    StoryBlock block;
    block.book_id = book_id;
    block.index = static_cast<int>(b);
    auto first = sentences.begin() + static_cast<std::ptrdiff_t>(b * block_size);
    block.sentences.assign(first, first + block_size);
    block.chapter_id = block.sentences.front().chapter_id;
    blocks.push_back(std::move(block));
  }
  return blocks;
}

std::vector<std::string> load_abbreviations(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open abbreviation list: " + path);
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    line = collapse_whitespace(line);
    if (line.empty() || line.front() == '#') continue;
    if (line.back() == '.') line.pop_back();
    out.push_back(lower_ascii(line));
  }
  return out;
}

Vocab::Vocab() : Vocab(std::vector<std::string>{}, 1) {}

Vocab::Vocab(std::vector<std::string> id_to_token, int min_freq) : min_freq_(min_freq) {
  id_to_token_.assign(std::begin(kSpecialNames), std::end(kSpecialNames));
  for (auto& t : id_to_token) {
    if (std::find(std::begin(kSpecialNames), std::end(kSpecialNames), t) != std::end(kSpecialNames))
      continue;
    id_to_token_.push_back(std::move(t));
  }
  for (int i = 0; i < size(); ++i) {
    auto [it, inserted] = token_to_id_.emplace(id_to_token_[i], i);
    if (!inserted) throw std::invalid_argument("duplicate vocabulary token: " + id_to_token_[i]);
  }
}

bool Vocab::contains(std::string_view token) const {
  auto it = token_to_id_.find(std::string(token));
  return it != token_to_id_.end() && !is_special(it->second);
}

int Vocab::encode(std::string_view token) const {
  auto it = token_to_id_.find(std::string(token));
  if (it == token_to_id_.end() || is_special(it->second)) return kUnk;
  return it->second;
}

std::vector<int> Vocab::encode(std::span<const std::string> tokens) const {
  std::vector<int> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(encode(t));
  return ids;
}

const std::string& Vocab::decode(int id) const {
  if (id < 0 || id >= size()) return id_to_token_[kUnk];
  return id_to_token_[static_cast<std::size_t>(id)];
}

std::vector<std::string> Vocab::decode(std::span<const int> ids) const {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (int id : ids) out.push_back(decode(id));
  return out;
}

std::uint64_t Vocab::hash() const {
  std::uint64_t h = fnv1a("vocab");
  for (const auto& t : id_to_token_) {
    h = fnv1a(t, h);
    h = fnv1a(std::string_view("\n", 1), h);
  }
  return h;
}

Vocab build_vocab(std::span<const StoryBlock> blocks, int min_freq) {
  std::map<std::string, long> freq;
  for (const auto& block : blocks)
    for (const auto& s : block.sentences)
      for (const auto& t : s.tokens) ++freq[t];

  std::vector<std::pair<std::string, long>> kept;
  for (auto& [token, count] : freq) {
    if (count < min_freq) continue;
    if (std::find(std::begin(kSpecialNames), std::end(kSpecialNames), token) != std::end(kSpecialNames))
      continue;
    kept.emplace_back(token, count);
  }
  std::stable_sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  std::vector<std::string> tokens;
  tokens.reserve(kept.size());
  for (auto& [token, count] : kept) tokens.push_back(token);
  return Vocab(std::move(tokens), min_freq);
}

CorpusSplit split_corpus(std::vector<std::string> book_ids, const SplitRatios& ratios,
                         std::uint64_t seed) {
  if (std::abs(ratios.train + ratios.valid + ratios.test - 1.0) > 1e-9)
    throw std::invalid_argument("split ratios must sum to 1");
  if (ratios.train < 0 || ratios.valid < 0 || ratios.test < 0)
    throw std::invalid_argument("split ratios must be non-negative");
  if (book_ids.size() < 3) throw std::invalid_argument("at least 3 books are required to split a corpus");

  Rng rng(seed);
  rng.shuffle(std::span<std::string>(book_ids));

  const auto n = static_cast<double>(book_ids.size());
  // Held-out splits get at least one book whenever their ratio is positive.
  auto held_out = [&](double r) -> std::size_t {
    if (r <= 0) return 0;
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(n * r + 1e-9)));
  };
  const std::size_t n_valid = held_out(ratios.valid);
  const std::size_t n_test = held_out(ratios.test);
  const std::size_t n_train = book_ids.size() - n_valid - n_test;

  CorpusSplit split;
  split.train.assign(book_ids.begin(), book_ids.begin() + static_cast<std::ptrdiff_t>(n_train));
  split.valid.assign(book_ids.begin() + static_cast<std::ptrdiff_t>(n_train),
                     book_ids.begin() + static_cast<std::ptrdiff_t>(n_train + n_valid));
  split.test.assign(book_ids.begin() + static_cast<std::ptrdiff_t>(n_train + n_valid), book_ids.end());
  return split;
}

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string hex64(std::uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(value));
  return buf;
}

}  // namespace plotcast
