#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace vad {

// Derive an independent stream seed from a base seed (splitmix64 step).
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Deterministic generator. The standard distributions are implementation-defined,
// so uniform/normal are mapped by hand; sequences are reproducible everywhere.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    // [0,1) with 53 bits.
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Inclusive [lo,hi].
    long long uniform_int(long long lo, long long hi) {
        const auto span = static_cast<unsigned long long>(hi - lo) + 1ULL;
        return lo + static_cast<long long>(gen_() % span);
    }

    // Box-Muller; the spare is cached, so draw order stays well-defined.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    template <class Container>
    void fill_normal(Container& out) {
        for (auto& v : out) v = static_cast<typename Container::value_type>(normal());
    }

    template <class Container>
    void fill_uniform(Container& out, double lo, double hi) {
        for (auto& v : out) v = static_cast<typename Container::value_type>(uniform(lo, hi));
    }

    // Fisher-Yates over [0,n); std::shuffle is not portable across standard libraries.
    template <class Vec>
    void shuffle(Vec& v) {
        for (long long i = static_cast<long long>(v.size()) - 1; i > 0; --i) {
            const long long j = uniform_int(0, i);
            std::swap(v[static_cast<std::size_t>(i)], v[static_cast<std::size_t>(j)]);
        }
    }

private:
    std::mt19937_64 gen_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace vad
