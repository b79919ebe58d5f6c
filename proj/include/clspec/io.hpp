#pragma once

#include <cassert>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "clspec/errors.hpp"

namespace clspec {

using json = nlohmann::ordered_json;

/// Full-precision decimal rendering (17 significant digits) so that written
/// CSV round-trips bit-exactly.
inline std::string format_full(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

/// Write-temp-then-rename so readers never observe a half-written file.
inline void write_atomic(const std::filesystem::path& path, std::string_view content) {
  namespace fs = std::filesystem;
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw IoError("short write to " + tmp.string());
  }
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp.string() + " to " + path.string() + ": " +
                        ec.message());
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Row-oriented CSV builder with fixed columns and full-precision doubles.
class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> columns) : columns_(std::move(columns)) {
    for (std::size_t c = 0; c < columns_.size(); ++c) {
      if (c) body_ += ',';
      body_ += columns_[c];
    }
    body_ += '\n';
  }

  class Row {
   public:
    explicit Row(CsvWriter& w) : w_(w) {}
    Row& add(double x) { return raw(format_full(x)); }
    Row& add(std::uint64_t x) { return raw(std::to_string(x)); }
    Row& add(long x) { return raw(std::to_string(x)); }
    Row& add(int x) { return raw(std::to_string(x)); }
    Row& add(const std::string& s) { return raw(s); }
    ~Row() { w_.end_row(count_); }

   private:
    Row& raw(std::string v) {
      if (count_) w_.body_ += ',';
      w_.body_ += v;
      ++count_;
      return *this;
    }
    CsvWriter& w_;
    std::size_t count_ = 0;
  };

  Row row() { return Row(*this); }
  const std::string& str() const { return body_; }
  std::size_t rows() const { return rows_; }

 private:
  void end_row(std::size_t cells) {
    assert(cells == columns_.size());
    (void)cells;
    body_ += '\n';
    ++rows_;
  }
  std::vector<std::string> columns_;
  std::string body_;
  std::size_t rows_ = 0;
  friend class Row;
};

/// FNV-1a over the canonical serialization; enough to identify a config.
inline std::string content_hash(std::string_view text) {
  std::uint64_t h = 1469598103934665603ull;
  for (const char c : text) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ull;
  }
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace clspec
