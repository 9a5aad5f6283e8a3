#pragma once

#include <openssl/evp.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <string_view>

#include "json.hpp"
#include "rateval/error.hpp"

namespace rateval::io {

using json = nlohmann::json;

/// Lowercase hex SHA-256 of a byte string.
inline std::string sha256_hex(std::string_view bytes) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int length = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest.data(), &length, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("sha256 digest failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(length * 2);
  for (unsigned int i = 0; i < length; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0x0f]);
  }
  return out;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IntegrityError("cannot open file: " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

inline std::string file_digest(const std::filesystem::path& path) { return sha256_hex(read_file(path)); }

/// Writes to a sibling temp file and renames it over the target.
inline void write_atomic(const std::filesystem::path& path, std::string_view contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IntegrityError("cannot write file: " + tmp.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw IntegrityError("short write: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

/// Calls `fn(record, line_number)` for every non-blank line of a JSON-lines
/// file. Malformed lines raise ParseError with the 1-based line number.
inline void for_each_record(const std::filesystem::path& path,
                            const std::function<void(const json&, std::size_t)>& fn) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IntegrityError("cannot open file: " + path.string());
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    json record;
    try {
      record = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(path.string(), number, std::string("malformed record: ") + e.what());
    }
    if (!record.is_object()) throw ParseError(path.string(), number, "record is not an object");
    try {
      fn(record, number);
    } catch (const json::exception& e) {
      throw ParseError(path.string(), number, e.what());
    }
  }
}

/// Fetches a required string field, raising ParseError when absent or mistyped.
inline std::string require_string(const json& record, const char* field, const std::string& file,
                                  std::size_t line) {
  auto it = record.find(field);
  if (it == record.end() || !it->is_string()) {
    throw ParseError(file, line, std::string("missing or non-string field '") + field + "'");
  }
  return it->get<std::string>();
}

/// One compact JSON object per line; UTF-8 is emitted unescaped.
inline std::string to_line(const json& record) { return record.dump(-1, ' ', false) + "\n"; }

}  // namespace rateval::io
