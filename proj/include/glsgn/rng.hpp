#pragma once

#include <cstdint>

namespace glsgn {

// Counter-based generator: output i is a SplitMix64 finalizer applied to
// key + i * golden. Streams derived from (master seed, index) are independent
// of generation order, so per-sample work can fan out freely.
class CounterRng {
public:
    explicit CounterRng(uint64_t key, uint64_t counter = 0) : key_(key), counter_(counter) {}

    static CounterRng stream(uint64_t master_seed, uint64_t index);

    uint64_t next_u64();
    // Uniform in [0, 1) with 53 random bits.
    double uniform();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    // Uniform integer in [0, n).
    uint64_t below(uint64_t n);
    bool bernoulli(double p) { return uniform() < p; }

    uint64_t key() const { return key_; }
    uint64_t counter() const { return counter_; }

private:
    uint64_t key_;
    uint64_t counter_;
};

uint64_t mix64(uint64_t x);

} // namespace glsgn
