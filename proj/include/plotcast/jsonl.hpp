#pragma once

#include <filesystem>
#include <mutex>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "plotcast/text.hpp"

namespace plotcast {

using Json = nlohmann::json;

/// Reads newline-delimited JSON. A final line without a terminating newline is
/// a torn append and is skipped.
std::vector<Json> read_jsonl(const std::filesystem::path& path);

/// Writes a whole record file via a temporary sibling and rename.
void write_jsonl(const std::filesystem::path& path, std::span<const Json> records);
void write_text_atomic(const std::filesystem::path& path, const std::string& contents);
std::string read_text(const std::filesystem::path& path);

/// Append-only record log. Each record goes out in a single write(2) on an
/// O_APPEND descriptor, so concurrent readers never see half a record
/// followed by the next one.
class JsonlAppender {
public:
  explicit JsonlAppender(std::filesystem::path path, bool sync = true);
  ~JsonlAppender();
  JsonlAppender(const JsonlAppender&) = delete;
  JsonlAppender& operator=(const JsonlAppender&) = delete;

  void append(const Json& record);
  const std::filesystem::path& path() const { return path_; }

private:
  std::filesystem::path path_;
  int fd_ = -1;
  bool sync_;
  std::mutex mutex_;
};

Json block_to_json(const StoryBlock& block);
StoryBlock block_from_json(const Json& j);

}  // namespace plotcast
