#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace guiagent {

// Lowercase hex SHA-256.
std::string sha256_hex(std::span<const std::uint8_t> bytes);
std::string sha256_hex(std::string_view text);

// Incremental digest; fields are length-prefixed so concatenation is
// unambiguous.
class DigestBuilder {
 public:
  DigestBuilder();
  ~DigestBuilder();
  DigestBuilder(const DigestBuilder&) = delete;
  DigestBuilder& operator=(const DigestBuilder&) = delete;

  DigestBuilder& field(std::string_view text);
  DigestBuilder& field(std::span<const std::uint8_t> bytes);
  std::string hex();

 private:
  void* ctx_;
};

std::string base64_encode(std::span<const std::uint8_t> bytes);

}  // namespace guiagent
