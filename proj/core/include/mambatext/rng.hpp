#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace mambatext {

// All randomness in the toolkit flows from one master seed through named
// sub-streams ("corpus", "split", "init", "shuffle", ...), so any component
// can be reproduced in isolation.

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t master, std::string_view stream) {
    // FNV-1a over the stream name, then mixed with the master seed.
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (char c : stream) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ull;
    }
    return splitmix64(master ^ splitmix64(h));
}

inline std::mt19937_64 make_rng(std::uint64_t master, std::string_view stream) {
    return std::mt19937_64(derive_seed(master, stream));
}

}  // namespace mambatext
