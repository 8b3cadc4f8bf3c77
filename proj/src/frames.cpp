#include "plotcast/frames.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "plotcast/lemma.hpp"

namespace plotcast {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

const std::vector<int> kNoFrames;

}  // namespace

FrameLexicon::FrameLexicon(std::vector<Frame> frames) : frames_(std::move(frames)) {
  std::set<std::string> names;
  for (int i = 0; i < dimension(); ++i) {
    const Frame& f = frames_[static_cast<std::size_t>(i)];
    if (!names.insert(f.name).second) throw LexiconError("duplicate frame name: " + f.name);
    if (f.units.empty()) throw LexiconError("frame has no lexical units: " + f.name);
    for (const auto& u : f.units) {
      auto& list = by_lemma_[u.lemma];
      if (list.empty() || list.back() != i) list.push_back(i);
    }
  }
}

const std::vector<int>& FrameLexicon::frames_for_lemma(const std::string& lemma) const {
  auto it = by_lemma_.find(lemma);
  return it == by_lemma_.end() ? kNoFrames : it->second;
}

FrameLexicon parse_lexicon(std::string_view contents) {
  std::vector<Frame> frames;
  std::istringstream in{std::string(contents)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped.front() == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos)
      throw LexiconError("line " + std::to_string(line_no) + ": expected frame_name<TAB>units");
    Frame frame;
    frame.name = trim(std::string_view(line).substr(0, tab));
    std::stringstream units(line.substr(tab + 1));
    std::string item;
    while (std::getline(units, item, ',')) {
      item = trim(item);
      if (item.empty()) continue;
      const auto dot = item.rfind('.');
      if (dot == std::string::npos || dot + 2 != item.size() || dot == 0)
        throw LexiconError("line " + std::to_string(line_no) + ": bad lexical unit '" + item + "'");
      LexicalUnit unit{item.substr(0, dot), item[dot + 1]};
      if (unit.pos != 'n' && unit.pos != 'v' && unit.pos != 'a')
        throw LexiconError("line " + std::to_string(line_no) + ": unknown part of speech in '" + item + "'");
      std::transform(unit.lemma.begin(), unit.lemma.end(), unit.lemma.begin(),
                     [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
      if (std::find(frame.units.begin(), frame.units.end(), unit) == frame.units.end())
        frame.units.push_back(std::move(unit));
    }
    if (frame.units.empty()) throw LexiconError("frame has no lexical units: " + frame.name);
    frames.push_back(std::move(frame));
  }
  return FrameLexicon(std::move(frames));
}

FrameLexicon load_lexicon(const std::filesystem::path& path) {
  try {
    return parse_lexicon(read_text(path));
  } catch (const LexiconError& e) {
    throw LexiconError(path.string() + ": " + e.what());
  }
}

FrameCounts trigger_counts(std::span<const std::string> tokens, const FrameLexicon& lexicon) {
  FrameCounts counts = FrameCounts::Zero(lexicon.dimension());
  std::vector<int> hit;
  for (const auto& token : tokens) {
    hit.clear();
    for (const auto& lemma : lemma_candidates(token))
      for (int f : lexicon.frames_for_lemma(lemma)) hit.push_back(f);
    std::sort(hit.begin(), hit.end());
    hit.erase(std::unique(hit.begin(), hit.end()), hit.end());
    for (int f : hit) counts[f] += 1.0;
  }
  return counts;
}

FrameCounts trigger_counts(const StoryBlock& block, const FrameLexicon& lexicon) {
  FrameCounts counts = FrameCounts::Zero(lexicon.dimension());
  for (const auto& s : block.sentences) counts += trigger_counts(s.tokens, lexicon);
  return counts;
}

IdfTable idf_from_counts(std::span<const FrameCounts> counts) {
  if (counts.empty()) throw std::invalid_argument("idf needs at least one block");
  const Eigen::Index dim = counts.front().size();
  IdfTable table;
  table.n_blocks = static_cast<int>(counts.size());
  table.df = Eigen::VectorXd::Zero(dim);
  for (const auto& c : counts) table.df += (c.array() > 0.0).cast<double>().matrix();
  table.idf = Eigen::VectorXd::Zero(dim);
  for (Eigen::Index i = 0; i < dim; ++i)
    if (table.df[i] > 0) table.idf[i] = std::log(table.n_blocks / table.df[i]);
  return table;
}

IdfTable compute_idf(std::span<const StoryBlock> train_blocks, const FrameLexicon& lexicon) {
  std::vector<FrameCounts> counts;
  counts.reserve(train_blocks.size());
  for (const auto& b : train_blocks) counts.push_back(trigger_counts(b, lexicon));
  return idf_from_counts(counts);
}

Eigen::VectorXd frame_values(const FrameCounts& counts, const IdfTable& idf) {
  const double total = counts.sum();
  if (total <= 0) return Eigen::VectorXd::Zero(counts.size());
  Eigen::VectorXd v = (counts / total).cwiseProduct(idf.idf);
  const double norm = v.norm();
  if (norm > 0) v /= norm;
  return v;
}

FrameVector frame_vector(const StoryBlock& block, const IdfTable& idf, const FrameLexicon& lexicon) {
  return FrameVector{block.book_id, block.index, frame_values(trigger_counts(block, lexicon), idf)};
}

Eigen::VectorXd clamp_normalize(Eigen::VectorXd v) {
  v = v.cwiseMax(0.0);
  const double norm = v.norm();
  if (norm > 0) v /= norm;
  return v;
}

Json frame_vector_to_json(const FrameVector& fv) {
  return Json{{"book_id", fv.book_id},
              {"index", fv.index},
              {"values", std::vector<double>(fv.values.data(), fv.values.data() + fv.values.size())}};
}

FrameVector frame_vector_from_json(const Json& j) {
  const auto values = j.at("values").get<std::vector<double>>();
  return FrameVector{j.at("book_id").get<std::string>(), j.at("index").get<int>(),
                     Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()))};
}

Json idf_to_json(const IdfTable& idf) {
  return Json{{"n_blocks", idf.n_blocks},
              {"df", std::vector<double>(idf.df.data(), idf.df.data() + idf.df.size())},
              {"idf", std::vector<double>(idf.idf.data(), idf.idf.data() + idf.idf.size())}};
}

IdfTable idf_from_json(const Json& j) {
  IdfTable t;
  t.n_blocks = j.at("n_blocks").get<int>();
  const auto df = j.at("df").get<std::vector<double>>();
  const auto idf = j.at("idf").get<std::vector<double>>();
  t.df = Eigen::Map<const Eigen::VectorXd>(df.data(), static_cast<Eigen::Index>(df.size()));
  t.idf = Eigen::Map<const Eigen::VectorXd>(idf.data(), static_cast<Eigen::Index>(idf.size()));
  return t;
}

}  // namespace plotcast
