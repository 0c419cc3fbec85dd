#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace crd {

using json = nlohmann::json;

std::string read_file(const std::filesystem::path& path);
json read_json_file(const std::filesystem::path& path);

// Non-empty lines of a line-delimited JSON file, parsed in order. Errors carry
// the 1-based line number.
std::vector<json> read_jsonl(const std::filesystem::path& path);

// Writes to `<path>.tmp` and renames over `path` on commit(). An uncommitted
// writer removes its temp file on destruction.
class AtomicFileWriter {
 public:
  explicit AtomicFileWriter(std::filesystem::path path);
  ~AtomicFileWriter();
  AtomicFileWriter(const AtomicFileWriter&) = delete;
  AtomicFileWriter& operator=(const AtomicFileWriter&) = delete;

  void write(std::string_view bytes);
  void write_line(const json& record);
  void commit();

  std::size_t lines() const { return lines_; }

 private:
  std::filesystem::path path_;
  std::filesystem::path tmp_;
  std::string buffer_;
  std::size_t lines_ = 0;
  bool committed_ = false;
};

std::size_t write_jsonl_atomic(const std::filesystem::path& path, std::span<const json> records);
void write_text_atomic(const std::filesystem::path& path, std::string_view text);

std::string sha256_hex(std::string_view bytes);
std::string file_sha256(const std::filesystem::path& path);
std::string base64_encode(std::string_view bytes);

// Stable (platform independent) hashing used to derive per-item seeds.
std::uint64_t fnv1a64(std::string_view text);
std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t mix_seed(std::uint64_t seed, std::string_view key);

// Portable uniform integer in [0, bound) from a 64-bit engine output stream.
// std::uniform_int_distribution is implementation defined, which would break
// byte-identical outputs across standard libraries.
template <typename Engine>
std::uint64_t uniform_below(Engine& engine, std::uint64_t bound) {
  const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % bound);
  std::uint64_t draw = engine();
  while (draw >= limit) draw = engine();
  return draw % bound;
}

std::string to_lower_ascii(std::string_view text);
std::string trim(std::string_view text);

}  // namespace crd
