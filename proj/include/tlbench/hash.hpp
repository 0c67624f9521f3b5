#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace tlbench {

/// 64-bit FNV-1a. Used for stable ids (plan hashes, per-dataset seeds), not
/// for security.
constexpr std::uint64_t fnv1a64(std::string_view text, std::uint64_t h = 0xcbf29ce484222325ULL) {
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

/// Lower-case, zero-padded 16-digit hex.
std::string hex64(std::uint64_t value);

} // namespace tlbench
