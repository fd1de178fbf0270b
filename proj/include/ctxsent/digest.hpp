#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace ctxsent {

/// Lowercase hex SHA-256 of `data`. Used for prompt hashes, cache keys and
/// manifest input hashes.
std::string sha256_hex(std::string_view data);

/// SHA-256 over a sequence of fields, each length-prefixed so that field
/// boundaries cannot be confused ("ab","c" != "a","bc").
class DigestBuilder {
 public:
  DigestBuilder& add(std::string_view field);
  std::string hex() const;

 private:
  std::string buffer_;
};

/// First 8 bytes of the SHA-256 of `data`, big-endian. Used to seed RNGs.
std::uint64_t digest_u64(std::string_view data);

/// SHA-256 of a file's bytes; throws IoError when unreadable.
std::string sha256_file(const std::string& path);

}  // namespace ctxsent
