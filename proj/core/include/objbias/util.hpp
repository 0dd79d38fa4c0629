#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace objbias {

using Bytes = std::vector<std::uint8_t>;

std::string sha256_hex(std::span<const std::uint8_t> data);
std::string sha256_hex(std::string_view text);

std::string base64_encode(std::span<const std::uint8_t> data);
Bytes base64_decode(std::string_view text);

/// Stable 64-bit value derived from arbitrary text (first 8 bytes of SHA-256).
std::uint64_t stable_hash64(std::string_view text);

Bytes read_file_bytes(const std::filesystem::path& path);
std::string read_file_text(const std::filesystem::path& path);

/// Writes via a sibling temp file and rename so readers never see a torn file.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> data);
void write_file_atomic(const std::filesystem::path& path, std::string_view text);

/// ISO-8601 UTC timestamp with second precision, e.g. 2025-01-31T12:00:00Z.
std::string utc_now_iso8601();

/// Timestamp written in place of wall-clock time when running reproducibly.
inline constexpr std::string_view kReproducibleTimestamp = "1970-01-01T00:00:00Z";

std::string to_lower(std::string_view s);
std::string trim(std::string_view s);

/// Parses a JSON-lines file; blank lines are skipped. Missing file yields empty.
std::vector<nlohmann::json> read_jsonl(const std::filesystem::path& path);

/// Append-only JSON-lines writer; every line is flushed before append() returns.
class JsonlAppender {
 public:
  explicit JsonlAppender(const std::filesystem::path& path);
  void append(const nlohmann::json& line);
  const std::filesystem::path& path() const noexcept { return path_; }

 private:
  std::filesystem::path path_;
  std::mutex mutex_;
  std::ofstream out_;
};

/// Rewrites a JSON-lines file from scratch (atomic).
void write_jsonl(const std::filesystem::path& path, const std::vector<nlohmann::json>& lines);

}  // namespace objbias
