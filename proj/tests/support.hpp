#pragma once

// Fixture builders shared by the unit tests.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include <unistd.h>

#include "mailconv/ingest.hpp"

namespace fixture {

inline const mailconv::IngestConfig& config() {
  static const mailconv::IngestConfig c;
  return c;
}

/// A parsed record with derived fields filled in.
inline mailconv::EmailRecord record(std::string id, std::string from, std::string to, std::int64_t ts,
                                    std::string subject, std::string body = "hello there", std::int32_t tz = 0,
                                    std::uint32_t attachments = 0) {
  mailconv::EmailRecord r;
  r.message_id = std::move(id);
  r.sender_id = std::move(from);
  r.recipient_id = std::move(to);
  r.timestamp_utc = ts;
  r.tz_offset_minutes = tz;
  r.subject_raw = std::move(subject);
  r.body_raw = std::move(body);
  r.n_attachments = attachments;
  mailconv::derive_fields(r, config());
  return r;
}

/// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::uint64_t counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("mailconv-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& p, const std::string& content) {
  std::ofstream out(p, std::ios::binary);
  out << content;
}

}  // namespace fixture
