#include "plotcast/jsonl.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace plotcast {

namespace fs = std::filesystem;

std::vector<Json> read_jsonl(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open record file: " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  const std::string data = buffer.str();

  std::vector<Json> out;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos < data.size()) {
    const std::size_t nl = data.find('\n', pos);
    if (nl == std::string::npos) break;  // torn tail
    ++line_no;
    const std::string_view line(data.data() + pos, nl - pos);
    pos = nl + 1;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    try {
      out.push_back(Json::parse(line));
    } catch (const Json::parse_error& e) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

void write_text_atomic(const fs::path& path, const std::string& contents) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << contents;
    out.flush();
    if (!out) throw std::runtime_error("short write to " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void write_jsonl(const fs::path& path, std::span<const Json> records) {
  std::string body;
  for (const auto& r : records) {
    body += r.dump();
    body.push_back('\n');
  }
  write_text_atomic(path, body);
}

JsonlAppender::JsonlAppender(fs::path path, bool sync) : path_(std::move(path)), sync_(sync) {
  if (path_.has_parent_path()) fs::create_directories(path_.parent_path());
  fd_ = ::open(path_.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  if (fd_ < 0) throw std::runtime_error("cannot open " + path_.string() + ": " + std::strerror(errno));
}

JsonlAppender::~JsonlAppender() {
  if (fd_ >= 0) ::close(fd_);
}

void JsonlAppender::append(const Json& record) {
  std::string line = record.dump();
  line.push_back('\n');
  std::lock_guard lock(mutex_);
  const char* p = line.data();
  std::size_t left = line.size();
  while (left > 0) {
    const ssize_t n = ::write(fd_, p, left);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw std::runtime_error("append to " + path_.string() + " failed: " + std::strerror(errno));
    }
    p += n;
    left -= static_cast<std::size_t>(n);
  }
  if (sync_) ::fdatasync(fd_);
}

Json block_to_json(const StoryBlock& block) {
  Json sentences = Json::array();
  for (const auto& s : block.sentences) sentences.push_back(s.text);
  return Json{{"book_id", block.book_id},
              {"index", block.index},
              {"chapter_id", block.chapter_id},
              {"sentences", std::move(sentences)}};
}

StoryBlock block_from_json(const Json& j) {
  StoryBlock block;
  block.book_id = j.at("book_id").get<std::string>();
  block.index = j.at("index").get<int>();
  block.chapter_id = j.at("chapter_id").get<int>();
  for (const auto& text : j.at("sentences")) {
    Sentence s;
    s.text = text.get<std::string>();
    s.tokens = tokenize(s.text);
    s.word_count = count_words(s.tokens);
    s.chapter_id = block.chapter_id;
    block.sentences.push_back(std::move(s));
  }
  return block;
}

}  // namespace plotcast
