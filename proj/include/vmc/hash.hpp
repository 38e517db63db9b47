#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

namespace vmc {

/// FNV-1a 64-bit running hash. Used for checkpoint payload integrity and
/// provenance records, not for security.
class Fnv1a {
public:
    void update(const void* data, std::size_t n) {
        const auto* p = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < n; ++i) {
            h_ ^= p[i];
            h_ *= 0x100000001b3ULL;
        }
    }

    std::uint64_t value() const { return h_; }

    std::string hex() const {
        static const char* digits = "0123456789abcdef";
        std::string s = "fnv1a64:";
        for (int i = 15; i >= 0; --i) s.push_back(digits[(h_ >> (4 * i)) & 0xF]);
        return s;
    }

private:
    std::uint64_t h_ = 0xcbf29ce484222325ULL;
};

inline std::string hash_bytes(const void* data, std::size_t n) {
    Fnv1a h;
    h.update(data, n);
    return h.hex();
}

}  // namespace vmc
