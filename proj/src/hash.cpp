#include "cgt/hash.hpp"

#include <openssl/evp.h>

#include <array>
#include <cstdio>
#include <stdexcept>

namespace cgt {

std::string sha1_hex(std::string_view bytes) {
    std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest.data(), &len, EVP_sha1(), nullptr) != 1) {
        throw std::runtime_error("sha1: digest failed");
    }
    std::string out;
    out.reserve(len * 2);
    char buf[3];
    for (unsigned int i = 0; i < len; ++i) {
        std::snprintf(buf, sizeof buf, "%02x", digest[i]);
        out += buf;
    }
    return out;
}

std::string git_blob_hash(std::string_view content) {
    std::string framed = "blob " + std::to_string(content.size());
    framed.push_back('\0');
    framed.append(content);
    return sha1_hex(framed);
}

}  // namespace cgt
