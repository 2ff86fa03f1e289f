#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace aipat {

/// Lowercase hex SHA-256 of the input.
std::string sha256_hex(std::string_view data);
std::string sha256_hex(std::span<const std::uint8_t> data);

/// Incremental SHA-256 over length-prefixed fields, so that ("ab","c") and
/// ("a","bc") hash differently.
class FieldHasher {
 public:
  FieldHasher& add(std::string_view field);
  std::string hex() const;

 private:
  std::string buffer_;
};

std::string base64_encode(std::span<const std::uint8_t> data);
/// Standard alphabet with padding; whitespace is ignored. Throws
/// ErrorKind::structural on anything else.
std::vector<std::uint8_t> base64_decode(std::string_view text);

}  // namespace aipat
