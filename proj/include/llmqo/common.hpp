#pragma once

#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>


namespace llmqo {

/** Base class of every domain error raised by the library.  The CLI maps these to exit code 1. */
struct Error : std::runtime_error
{
    using std::runtime_error::runtime_error;
};

/** Malformed input text (catalog files, SQL, JSON Lines records). */
struct ParseError : Error
{
    std::size_t line = 0;
    std::size_t column = 0;

    ParseError(const std::string &what, std::size_t line = 0, std::size_t column = 0)
        : Error(line ? what + " (line " + std::to_string(line) + ", column " + std::to_string(column) + ")" : what)
        , line(line)
        , column(column)
    { }
};

/** FNV-1a, 64 bit.  Used wherever a hash must be stable across runs and platforms. */
struct Fnv1a
{
    static constexpr uint64_t OFFSET = 0xcbf29ce484222325ULL;
    static constexpr uint64_t PRIME = 0x100000001b3ULL;

    uint64_t state = OFFSET;

    Fnv1a & bytes(std::string_view s) {
        for (unsigned char c : s) {
            state ^= c;
            state *= PRIME;
        }
        return *this;
    }

    Fnv1a & u64(uint64_t v) {
        for (int i = 0; i != 8; ++i) {
            state ^= (v >> (8 * i)) & 0xff;
            state *= PRIME;
        }
        return *this;
    }

    uint64_t digest() const { return state; }
};

inline uint64_t fnv1a(std::string_view s) { return Fnv1a{}.bytes(s).digest(); }

/** splitmix64 finalizer; mixes seeds derived from ids into well-distributed RNG seeds. */
inline uint64_t mix64(uint64_t x)
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/** Seeded generator with platform-independent draws (the standard distributions are implementation-defined). */
class Rng
{
    std::mt19937_64 engine_;

    public:
    explicit Rng(uint64_t seed) : engine_(seed) { }

    /** Uniform integer in [0, n). */
    uint64_t below(uint64_t n) {
        if (n <= 1) return 0;
        const uint64_t limit = std::numeric_limits<uint64_t>::max() - std::numeric_limits<uint64_t>::max() % n;
        uint64_t r;
        do r = engine_(); while (r >= limit);
        return r % n;
    }

    /** Uniform integer in [lo, hi]. */
    int64_t between(int64_t lo, int64_t hi) {
        return lo + int64_t(below(uint64_t(hi - lo) + 1));
    }

    /** Uniform real in [0, 1). */
    double unit() { return double(engine_() >> 11) * 0x1.0p-53; }

    bool coin() { return engine_() >> 63; }

    template<typename T>
    void shuffle(std::vector<T> &v) {
        for (std::size_t i = v.size(); i > 1; --i)
            std::swap(v[i - 1], v[below(i)]);
    }
};

std::string read_file(const std::string &path);
void write_file(const std::string &path, std::string_view contents);

std::string_view trim(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);

}
