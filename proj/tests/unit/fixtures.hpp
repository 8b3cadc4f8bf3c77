#pragma once

#include <regex>
#include <sstream>
#include <string>
#include <vector>

#include "plotcast/random.hpp"
#include "plotcast/text.hpp"
#include "plotcast/transformer.hpp"

namespace fixtures {

inline plotcast::Sentence sentence(const std::string& text, int chapter = 0) {
  plotcast::Sentence s;
  s.text = text;
  s.tokens = plotcast::tokenize(text);
  s.word_count = plotcast::count_words(s.tokens);
  s.chapter_id = chapter;
  return s;
}

inline plotcast::StoryBlock block(const std::vector<std::string>& texts, std::string book = "book", int index = 0,
                                  int chapter = 0) {
  plotcast::StoryBlock b;
  b.book_id = std::move(book);
  b.index = index;
  b.chapter_id = chapter;
  for (const auto& t : texts) b.sentences.push_back(sentence(t, chapter));
  return b;
}

inline std::vector<plotcast::Sentence> numbered_sentences(int n) {
  std::vector<plotcast::Sentence> out;
  for (int i = 0; i < n; ++i) out.push_back(sentence("Sentence number " + std::to_string(i) + " is here."));
  return out;
}

// d_model 8, one layer each side, vocab 11.
inline plotcast::nn::ModelConfig micro_config(int vocab = 11, int frame_dim = 3) {
  plotcast::nn::ModelConfig c;
  c.vocab_size = vocab;
  c.d_model = 8;
  c.n_heads = 2;
  c.n_layers_enc = 1;
  c.n_layers_dec = 1;
  c.d_ff = 16;
  c.max_src_len = 10;
  c.max_tgt_len = 10;
  c.frame_dim = frame_dim;
  return c;
}

/// Micro-model moved off the near-zero init so every gradient is well above
/// finite-difference noise.
inline plotcast::nn::Seq2SeqModel<double> gradcheck_model(std::uint64_t seed) {
  plotcast::nn::Seq2SeqModel<double> model(micro_config(), seed);
  plotcast::Rng rng(seed ^ 0x5eedULL);
  for (Eigen::Index i = 0; i < model.params().size(); ++i) model.params()[i] += 0.3 * rng.normal();
  return model;
}

inline Eigen::VectorXd random_frame(plotcast::Rng& rng, int dim) {
  Eigen::VectorXd f(dim);
  for (int i = 0; i < dim; ++i) f[i] = rng.uniform();
  return f / f.norm();
}

/// Random examples with ids drawn from the non-special range; target framed with START/END.
inline std::vector<plotcast::nn::Example> random_examples(plotcast::Rng& rng, int count, int vocab, int src_len,
                                                          int tgt_len, int frame_dim) {
  std::vector<plotcast::nn::Example> out;
  const auto word = [&] { return plotcast::Vocab::kNumSpecials + static_cast<int>(rng.below(vocab - plotcast::Vocab::kNumSpecials)); };
  for (int e = 0; e < count; ++e) {
    plotcast::nn::Example ex;
    for (int i = 0; i < src_len; ++i) ex.source.push_back(word());
    ex.target.push_back(plotcast::Vocab::kStart);
    for (int i = 0; i < tgt_len; ++i) ex.target.push_back(word());
    ex.target.push_back(plotcast::Vocab::kEnd);
    ex.frame = random_frame(rng, frame_dim);
    ex.frame_forecast = random_frame(rng, frame_dim);
    out.push_back(std::move(ex));
  }
  return out;
}

/// Rendered grid back into cells: columns are separated by two or more spaces.
inline std::vector<std::vector<std::string>> table_cells(const std::string& rendered) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(rendered);
  std::string line;
  static const std::regex gap("  +");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    const bool leading_blank = line.starts_with("  ");
    if (leading_blank) cells.emplace_back();
    for (std::sregex_token_iterator it(line.begin(), line.end(), gap, -1), end; it != end; ++it)
      if (!it->str().empty()) cells.push_back(*it);
    rows.push_back(cells);
  }
  return rows;
}

}  // namespace fixtures
