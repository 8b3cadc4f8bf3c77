#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "plotcast/jsonl.hpp"
#include "plotcast/text.hpp"

namespace plotcast {

struct LexicalUnit {
  std::string lemma;
  char pos = 'n';  // 'n', 'v' or 'a'

  friend bool operator==(const LexicalUnit&, const LexicalUnit&) = default;
};

struct Frame {
  std::string name;
  std::vector<LexicalUnit> units;
};

/// Ordered frame inventory; the order defines the frame-vector dimensions.
class FrameLexicon {
public:
  explicit FrameLexicon(std::vector<Frame> frames);

  int dimension() const { return static_cast<int>(frames_.size()); }
  const std::vector<Frame>& frames() const { return frames_; }
  const Frame& frame(int i) const { return frames_[static_cast<std::size_t>(i)]; }

  /// Frames triggered by a lemma, ascending, without duplicates.
  const std::vector<int>& frames_for_lemma(const std::string& lemma) const;

private:
  std::vector<Frame> frames_;
  std::unordered_map<std::string, std::vector<int>> by_lemma_;
};

class LexiconError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Lines are "frame_name<TAB>lemma.pos,lemma.pos,..."; '#' starts a comment.
FrameLexicon parse_lexicon(std::string_view contents);
FrameLexicon load_lexicon(const std::filesystem::path& path);

using FrameCounts = Eigen::VectorXd;

FrameCounts trigger_counts(std::span<const std::string> tokens, const FrameLexicon& lexicon);
FrameCounts trigger_counts(const StoryBlock& block, const FrameLexicon& lexicon);

struct IdfTable {
  Eigen::VectorXd df;
  Eigen::VectorXd idf;
  int n_blocks = 0;
};

IdfTable compute_idf(std::span<const StoryBlock> train_blocks, const FrameLexicon& lexicon);
IdfTable idf_from_counts(std::span<const FrameCounts> counts);

struct FrameVector {
  std::string book_id;
  int index = 0;
  Eigen::VectorXd values;
};

/// TF-IDF over triggered frames, L2-normalized unless zero.
Eigen::VectorXd frame_values(const FrameCounts& counts, const IdfTable& idf);
FrameVector frame_vector(const StoryBlock& block, const IdfTable& idf, const FrameLexicon& lexicon);

/// Clamps negatives to zero and rescales to unit L2 norm unless the result is zero.
Eigen::VectorXd clamp_normalize(Eigen::VectorXd v);

Json frame_vector_to_json(const FrameVector& fv);
FrameVector frame_vector_from_json(const Json& j);
Json idf_to_json(const IdfTable& idf);
IdfTable idf_from_json(const Json& j);

}  // namespace plotcast
