#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace unite {

inline constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
inline constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

// 64-bit FNV-1a. Stable across platforms and runs.
constexpr std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = kFnvOffset) noexcept {
    for (unsigned char c : bytes) {
        h ^= c;
        h *= kFnvPrime;
    }
    return h;
}

std::string hex64(std::uint64_t value);

// Hash of a file's bytes, hex-encoded. Throws DataError when unreadable.
std::string file_fingerprint(const std::string& path);

}  // namespace unite
