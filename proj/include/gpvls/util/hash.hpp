#pragma once

#include <string>
#include <string_view>

namespace gpvls::util {

/// Lowercase hex SHA-256 of the bytes.
std::string sha256_hex(std::string_view bytes);

/// Incremental SHA-256 over a sequence of chunks.
class Sha256 {
public:
    Sha256();
    ~Sha256();
    Sha256(const Sha256&) = delete;
    Sha256& operator=(const Sha256&) = delete;

    void update(std::string_view bytes);
    std::string hex_digest();

private:
    void* ctx_;
};

std::string base64_encode(std::string_view bytes);

}  // namespace gpvls::util
