#pragma once

#include <cstdint>

namespace fedrlhf {

/**
 * Counter-based pseudo-random stream.
 *
 * Every draw is a pure function of (seed, stream, counter), so two streams
 * constructed with the same (seed, stream id) replay bit-for-bit, and
 * substreams derived for different (client, round, purpose) tuples are
 * statistically independent without any shared mutable state.
 *
 * The mixer is SplitMix64 applied to the seed/stream/counter triple; this is
 * not cryptographic, it only has to be well distributed and reproducible.
 */
class RngStream {
public:
    RngStream() : RngStream(0, 0) {}
    RngStream(std::uint64_t seed, std::uint64_t stream_id)
        : seed_(seed), stream_(stream_id), counter_(0) {}

    std::uint64_t seed() const { return seed_; }
    std::uint64_t stream_id() const { return stream_; }
    std::uint64_t counter() const { return counter_; }

    /// Derives an independent stream; the child starts at counter 0.
    RngStream substream(std::uint64_t id) const {
        return RngStream(seed_, mix3(stream_, 0x9e3779b97f4a7c15ULL, id));
    }

    /// Derives an independent stream keyed to the current position, consuming
    /// one draw from this stream. Repeated forks yield distinct children, and
    /// a fork costs the parent the same single draw no matter how much the
    /// child is used.
    RngStream fork(std::uint64_t purpose) {
        return RngStream(seed_, mix3(stream_, purpose, next_u64()));
    }

    std::uint64_t next_u64() { return mix3(seed_, stream_, counter_++); }

    /// Uniform on [0, 1) with 53 random mantissa bits.
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    /// Uniform integer in [0, n). Uses rejection to avoid modulo bias.
    std::uint64_t next_below(std::uint64_t n);

    /// Standard normal via Box-Muller; consumes exactly two uniform draws.
    double next_gaussian();

    /// Samples an index from `probs` (length n, sums to ~1).
    int next_index(const double* probs, int n);

private:
    static std::uint64_t splitmix64(std::uint64_t x) {
        x += 0x9e3779b97f4a7c15ULL;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
        return x ^ (x >> 31);
    }
    static std::uint64_t mix3(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
        return splitmix64(splitmix64(splitmix64(a) ^ b) ^ c);
    }

    std::uint64_t seed_;
    std::uint64_t stream_;
    std::uint64_t counter_;
};

}  // namespace fedrlhf
