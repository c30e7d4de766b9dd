#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace posaudit {

// splitmix64; used to derive deterministic per-call RNG seeds.
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t hash_str(std::string_view s, std::uint64_t seed = 0xcbf29ce484222325ULL) {
    std::uint64_t h = seed;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return mix64(h);
}

inline std::uint64_t hash_combine(std::uint64_t a, std::uint64_t b) {
    return mix64(a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2)));
}

// Positions and lengths throughout the library are in Unicode scalar values.
// Text is carried as UTF-8; these helpers map between byte and scalar indices.
namespace utf8 {

inline bool is_continuation(unsigned char c) { return (c & 0xC0) == 0x80; }

inline std::size_t length(std::string_view s) {
    std::size_t n = 0;
    for (unsigned char c : s)
        if (!is_continuation(c)) ++n;
    return n;
}

inline std::size_t byte_to_char(std::string_view s, std::size_t byte_idx) {
    if (byte_idx > s.size()) throw std::out_of_range("byte_to_char: index past end");
    std::size_t n = 0;
    for (std::size_t i = 0; i < byte_idx; ++i)
        if (!is_continuation(static_cast<unsigned char>(s[i]))) ++n;
    return n;
}

inline std::size_t char_to_byte(std::string_view s, std::size_t char_idx) {
    std::size_t n = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (!is_continuation(static_cast<unsigned char>(s[i]))) {
            if (n == char_idx) return i;
            ++n;
        }
    }
    if (n == char_idx) return s.size();
    throw std::out_of_range("char_to_byte: index past end");
}

// Prefix-sum of scalar counts per byte; O(1) lookups for repeated conversion.
class IndexMap {
  public:
    explicit IndexMap(std::string_view s) : chars_at_byte_(s.size() + 1, 0) {
        std::size_t n = 0;
        for (std::size_t i = 0; i < s.size(); ++i) {
            chars_at_byte_[i] = n;
            if (!is_continuation(static_cast<unsigned char>(s[i]))) ++n;
        }
        chars_at_byte_[s.size()] = n;
    }
    std::size_t byte_to_char(std::size_t byte_idx) const { return chars_at_byte_.at(byte_idx); }
    std::size_t char_count() const { return chars_at_byte_.back(); }

  private:
    std::vector<std::size_t> chars_at_byte_;
};

}  // namespace utf8

}  // namespace posaudit
