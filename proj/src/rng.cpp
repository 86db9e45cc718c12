#include "glsgn/rng.hpp"

namespace glsgn {

namespace {
constexpr uint64_t kGolden = 0x9E3779B97F4A7C15ull;
}

uint64_t mix64(uint64_t x) {
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

CounterRng CounterRng::stream(uint64_t master_seed, uint64_t index) {
    return CounterRng(mix64(mix64(master_seed) ^ (index * kGolden + 0x632BE59BD9B4E019ull)));
}

uint64_t CounterRng::next_u64() {
    return mix64(key_ + (++counter_) * kGolden);
}

double CounterRng::uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

uint64_t CounterRng::below(uint64_t n) {
    if (n <= 1)
        return 0;
    // Rejection keeps the draw exactly uniform.
    const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    uint64_t x;
    do {
        x = next_u64();
    } while (x >= limit);
    return x % n;
}

} // namespace glsgn
