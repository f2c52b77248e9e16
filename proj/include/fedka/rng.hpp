#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace fedka {

using Rng = std::mt19937_64;

constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ULL) {
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

// Named streams: each (master, name, a, b) tuple gets an independent seed, so
// consuming draws from one stream never shifts another.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::string_view stream,
                                    std::uint64_t a = 0, std::uint64_t b = 0) {
    std::uint64_t h = splitmix64(master ^ fnv1a(stream));
    h = splitmix64(h ^ splitmix64(a + 0x632be59bd9b4e019ULL));
    h = splitmix64(h ^ splitmix64(b + 0x8cb92ba72f3d8dd7ULL));
    return h;
}

inline Rng make_rng(std::uint64_t master, std::string_view stream, std::uint64_t a = 0,
                    std::uint64_t b = 0) {
    return Rng(derive_seed(master, stream, a, b));
}

}  // namespace fedka
