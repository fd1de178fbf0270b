#include "ctxsent/digest.hpp"

#include <openssl/sha.h>

#include <array>
#include <fstream>
#include <sstream>

#include "ctxsent/error.hpp"

namespace ctxsent {

namespace {

std::array<unsigned char, SHA256_DIGEST_LENGTH> raw_sha256(std::string_view data) {
  std::array<unsigned char, SHA256_DIGEST_LENGTH> out{};
  SHA256(reinterpret_cast<const unsigned char*>(data.data()), data.size(), out.data());
  return out;
}

}  // namespace

std::string sha256_hex(std::string_view data) {
  static constexpr char kHex[] = "0123456789abcdef";
  const auto raw = raw_sha256(data);
  std::string hex;
  hex.reserve(raw.size() * 2);
  for (unsigned char byte : raw) {
    hex.push_back(kHex[byte >> 4]);
    hex.push_back(kHex[byte & 0x0f]);
  }
  return hex;
}

DigestBuilder& DigestBuilder::add(std::string_view field) {
  buffer_ += std::to_string(field.size());
  buffer_.push_back(':');
  buffer_.append(field);
  return *this;
}

std::string DigestBuilder::hex() const { return sha256_hex(buffer_); }

std::uint64_t digest_u64(std::string_view data) {
  const auto raw = raw_sha256(data);
  std::uint64_t value = 0;
  for (int i = 0; i < 8; ++i) value = (value << 8) | raw[i];
  return value;
}

std::string sha256_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return sha256_hex(ss.str());
}

}  // namespace ctxsent
