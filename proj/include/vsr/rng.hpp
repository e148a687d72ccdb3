#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "vsr/tensor.hpp"

namespace vsr {

// Deterministic random source. A stream is a splitmix64 sequence whose state
// is derived from (root seed, site label), so every draw site owns an
// independent stream and adding sites never perturbs existing ones. Gaussians
// come from Box-Muller on the stream's uniforms. Identical seed and labels
// give identical draws on every platform.
class RngStream {
public:
    RngStream(std::uint64_t state) : state_(state) {}

    std::uint64_t next_u64();
    // Uniform in [0,1), 53-bit resolution.
    double uniform();
    // Uniform in [lo,hi).
    double uniform(double lo, double hi);
    // Standard normal.
    double gaussian();
    // Uniform integer in [0,n).
    std::uint64_t next_below(std::uint64_t n);

    void fill_gaussian(Tensor& t, double mean = 0.0, double stddev = 1.0);

private:
    std::uint64_t state_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

class Rng {
public:
    explicit Rng(std::uint64_t seed) : seed_(seed) {}

    std::uint64_t seed() const { return seed_; }

    // Independent stream for a named draw site ("init/g.stem.weight",
    // "stage1/noise/42", ...).
    RngStream stream(std::string_view label) const;

    static std::uint64_t mix(std::uint64_t a, std::uint64_t b);

private:
    std::uint64_t seed_;
};

}  // namespace vsr
