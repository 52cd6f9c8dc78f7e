#include "ldmshield/hashio.hpp"

#include <openssl/evp.h>
#include <zlib.h>

#include <cstring>
#include <fstream>
#include <stdexcept>
#include <vector>

namespace ldms {

namespace {
std::string to_hex(const unsigned char* digest, unsigned len) {
    static const char* hexd = "0123456789abcdef";
    std::string out(2 * len, '0');
    for (unsigned i = 0; i < len; ++i) {
        out[2 * i] = hexd[digest[i] >> 4];
        out[2 * i + 1] = hexd[digest[i] & 0xf];
    }
    return out;
}
}  // namespace

std::string sha256_hex(const void* data, std::size_t n) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned len = 0;
    if (!EVP_Digest(data, n, digest, &len, EVP_sha256(), nullptr))
        throw std::runtime_error("sha256 failed");
    return to_hex(digest, len);
}

std::string sha256_hex(const std::string& s) { return sha256_hex(s.data(), s.size()); }

std::string sha256_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open for hashing: " + path);
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    if (!ctx) throw std::runtime_error("sha256 ctx failed");
    EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
    std::vector<char> buf(1 << 16);
    while (in) {
        in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
        std::streamsize got = in.gcount();
        if (got > 0) EVP_DigestUpdate(ctx, buf.data(), static_cast<std::size_t>(got));
    }
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned len = 0;
    EVP_DigestFinal_ex(ctx, digest, &len);
    EVP_MD_CTX_free(ctx);
    return to_hex(digest, len);
}

std::string sha256_tensor(const Tensor& t) {
    std::vector<unsigned char> bytes;
    bytes.reserve(8 + t.shape().size() * 4 + t.size() * 8);
    auto push_u32 = [&](std::uint32_t v) {
        for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xff));
    };
    push_u32(static_cast<std::uint32_t>(t.rank()));
    for (int d : t.shape()) push_u32(static_cast<std::uint32_t>(d));
    for (std::size_t i = 0; i < t.size(); ++i) {
        std::uint64_t u;
        double v = t[i];
        std::memcpy(&u, &v, 8);
        for (int b = 0; b < 8; ++b) bytes.push_back(static_cast<unsigned char>((u >> (8 * b)) & 0xff));
    }
    return sha256_hex(bytes.data(), bytes.size());
}

std::uint32_t crc32_bytes(const void* data, std::size_t n, std::uint32_t seed) {
    return static_cast<std::uint32_t>(
        ::crc32(seed, static_cast<const Bytef*>(data), static_cast<uInt>(n)));
}

}  // namespace ldms
