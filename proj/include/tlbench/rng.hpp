#pragma once

#include <array>
#include <cstddef>
#include <cstdint>

namespace tlbench {

/// Named sub-streams of a run's generator. Every stochastic consumer draws
/// from its own stream so that, e.g., changing the dropout rate does not
/// shift the batch order.
///
/// Consumption order within a stream:
///   Init             parameters in canonical order, each tensor row-major
///   Dropout          one uniform per element of every dropout call, in
///                    forward-execution order
///   Shuffle          one Fisher-Yates pass per epoch
///   FineTuneDropout  as Dropout, during fine-tuning
///   FineTuneShuffle  as Shuffle, during fine-tuning
///   KeySample        ProbSparse key subset, keyed by key length
///   Synthetic        generated datasets, one substream per series
enum class RngStream : std::uint32_t {
    Init = 1,
    Dropout = 2,
    Shuffle = 3,
    FineTuneDropout = 4,
    FineTuneShuffle = 5,
    KeySample = 6,
    Synthetic = 7,
};

/// Counter-based Philox-4x32-10 generator. The 64-bit seed is the key; the
/// stream id and a 64-bit block index form the counter, so any (seed, stream,
/// position) triple is reproducible without replaying earlier draws.
class Rng {
public:
    Rng(std::uint64_t seed, RngStream stream, std::uint64_t substream = 0);

    std::uint32_t next_u32();
    std::uint64_t next_u64();
    /// Uniform double in [0, 1) with 53 random bits.
    double uniform();
    double uniform(double lo, double hi);
    /// Uniform integer in [0, n). n must be positive.
    std::uint64_t below(std::uint64_t n);

    /// Number of 32-bit words consumed so far.
    std::uint64_t position() const { return block_ == 0 ? 0 : (block_ - 1) * 4 + lane_; }

    static std::array<std::uint32_t, 4> philox(std::array<std::uint32_t, 4> counter,
                                               std::array<std::uint32_t, 2> key);

private:
    void refill();

    std::array<std::uint32_t, 2> key_;
    std::uint32_t stream_;
    std::uint32_t substream_;
    std::uint64_t block_ = 0;
    std::array<std::uint32_t, 4> buffer_{};
    unsigned lane_ = 4;
};

} // namespace tlbench
