#include "vsr/rng.hpp"

#include <cmath>
#include <numbers>

namespace vsr {
namespace {

inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

inline std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xCBF29CE484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001B3ull;
    }
    return h;
}

}  // namespace

std::uint64_t RngStream::next_u64() { return splitmix64(state_); }

double RngStream::uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RngStream::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double RngStream::gaussian() {
    if (have_spare_) {
        have_spare_ = false;
        return spare_;
    }
    // u1 in (0,1] so the log is finite.
    const double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
}

std::uint64_t RngStream::next_below(std::uint64_t n) {
    // Rejection-free modulo is biased; n here is tiny (batch indices), and
    // determinism matters more than the ~2^-60 bias.
    return n ? next_u64() % n : 0;
}

void RngStream::fill_gaussian(Tensor& t, double mean, double stddev) {
    for (double& v : t.values()) v = mean + stddev * gaussian();
}

RngStream Rng::stream(std::string_view label) const {
    return RngStream(mix(seed_, fnv1a(label)));
}

std::uint64_t Rng::mix(std::uint64_t a, std::uint64_t b) {
    std::uint64_t s = a ^ (b + 0x9E3779B97F4A7C15ull + (a << 6) + (a >> 2));
    // one scramble round so consecutive seeds decorrelate
    return splitmix64(s);
}

}  // namespace vsr
