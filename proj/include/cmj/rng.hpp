#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>

namespace cmj {

// Counter-based pseudo-random stream (SplitMix64). Hand-rolled so that draws are
// bit-identical across platforms and standard libraries; replica streams are derived
// from (seed, stream index) and are independent of thread scheduling.
class RngStream {
  public:
    explicit RngStream(std::uint64_t seed) : state_(mix(seed ^ 0x6a09e667f3bcc909ull)) {}

    static RngStream substream(std::uint64_t seed, std::uint64_t index) {
        RngStream r(0);
        r.state_ = mix(mix(seed) ^ mix(index * 0x9e3779b97f4a7c15ull + 0x243f6a8885a308d3ull));
        return r;
    }

    std::uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ull;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    // Strictly inside (0,1); safe to pass to log().
    double uniform01() {
        return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
    }

    double exponential(double rate) {
        if (rate <= 0.0) throw std::domain_error("RngStream::exponential: rate must be > 0");
        return -std::log(uniform01()) / rate;
    }

    double normal() {
        double u1 = uniform01();
        double u2 = uniform01();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
    }

    // Knuth multiplication method; means used here are O(1) or smaller.
    std::uint64_t poisson(double mean) {
        if (mean < 0.0) throw std::domain_error("RngStream::poisson: mean must be >= 0");
        if (mean == 0.0) return 0;
        if (mean > 64.0) {
            // Normal approximation keeps the draw O(1) for the rare large-mean call.
            double x = std::floor(mean + std::sqrt(mean) * normal() + 0.5);
            return x < 0.0 ? 0 : static_cast<std::uint64_t>(x);
        }
        double limit = std::exp(-mean);
        double prod = uniform01();
        std::uint64_t k = 0;
        while (prod > limit) {
            prod *= uniform01();
            ++k;
        }
        return k;
    }

  private:
    static std::uint64_t mix(std::uint64_t z) {
        z += 0x9e3779b97f4a7c15ull;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    std::uint64_t state_;
};

}  // namespace cmj
