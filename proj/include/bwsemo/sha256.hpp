#pragma once

#include <string>
#include <string_view>

namespace bwsemo {

/// Lower-case hex SHA-256 digest of `bytes`.
std::string sha256_hex(std::string_view bytes);

}  // namespace bwsemo
