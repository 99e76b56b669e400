#pragma once

#include <cstdint>
#include <cstring>
#include <span>
#include <string>

namespace appp {

// Incremental FNV-1a over raw bytes. Used for fingerprints and param hashes.
class Hasher {
public:
    Hasher& bytes(const void* data, std::size_t n) {
        const auto* p = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < n; ++i) {
            h_ ^= p[i];
            h_ *= 0x100000001b3ULL;
        }
        return *this;
    }
    Hasher& u64(std::uint64_t v) { return bytes(&v, sizeof v); }
    Hasher& f64(double v) { return bytes(&v, sizeof v); }
    Hasher& reals(std::span<const double> v) {
        u64(v.size());
        return bytes(v.data(), v.size_bytes());
    }
    Hasher& str(const std::string& s) {
        u64(s.size());
        return bytes(s.data(), s.size());
    }
    std::uint64_t value() const { return h_; }
    std::string hex() const;

private:
    std::uint64_t h_ = 0xcbf29ce484222325ULL;
};

std::string to_hex(std::uint64_t v);

inline std::string Hasher::hex() const { return to_hex(h_); }

inline std::string to_hex(std::uint64_t v) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[static_cast<std::size_t>(i)] = digits[v & 0xf];
        v >>= 4;
    }
    return s;
}

} // namespace appp
