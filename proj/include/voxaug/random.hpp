#pragma once

#include <array>
#include <cstdint>
#include <string_view>

namespace voxaug {

// Philox4x32-10 block function (Salmon et al., SC'11). Counter-based, so any
// draw is a pure function of (key, counter).
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter,
                                        std::array<std::uint32_t, 2> key);

std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t fnv1a64(std::string_view s);

// Deterministic random stream. A stream is identified by (seed, stream id);
// `spawn` derives child streams whose contents depend only on the parent
// identity and the child tag, never on how many values the parent has drawn.
// The distributions below are implemented here rather than taken from
// <random> because the standard distributions are not reproducible across
// standard library implementations.
class RandomStream {
public:
    explicit RandomStream(std::uint64_t seed, std::uint64_t stream_id = 0);

    RandomStream spawn(std::uint64_t tag) const;
    RandomStream spawn(std::string_view tag) const;

    std::uint64_t seed() const noexcept { return seed_; }
    std::uint64_t stream_id() const noexcept { return stream_id_; }

    std::uint64_t next_u64();
    // [0, 1) with 53 random bits.
    double uniform();
    // [lo, hi]
    double uniform(double lo, double hi);
    // Unbiased integer in [0, n).
    std::uint64_t uniform_int(std::uint64_t n);
    bool bernoulli(double p);
    // Standard normal via Box-Muller; consumes two uniforms per call.
    double normal();
    double normal(double mean, double stddev);

private:
    std::uint64_t seed_;
    std::uint64_t stream_id_;
    std::uint64_t counter_ = 0;
    std::array<std::uint64_t, 2> buffer_{};
    int buffered_ = 0;
};

} // namespace voxaug
