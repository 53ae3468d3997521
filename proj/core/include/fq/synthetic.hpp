// synthetic.hpp - deterministic synthetic models with planted outlier
// channels, the substrate for calibration, evaluation, and the sweeps.
#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "fq/matrix.hpp"
#include "fq/pipeline.hpp"

namespace fq {

// Deterministic uniform/gaussian source. Distributions are derived from raw
// mt19937_64 output (not std::*_distribution) so generated archives are
// byte-identical across standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}
    Rng(std::uint64_t seed, std::uint64_t stream)
        : gen_(seed ^ (0x9E3779B97F4A7C15ULL * (stream + 1))) {}

    // Uniform in [0, 1).
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }
    // Uniform in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    // Standard normal via Box-Muller.
    double gaussian();
    // Integer in [0, n).
    std::int64_t index(std::int64_t n) {
        return static_cast<std::int64_t>(gen_() % static_cast<std::uint64_t>(n));
    }

private:
    std::mt19937_64 gen_;
};

struct SyntheticOptions {
    std::int64_t layers = 16;
    std::int64_t rows = 32;      // tokens per calibration sample
    std::int64_t samples = 8;    // calibration samples per layer
    std::int64_t in_channels = 128;
    std::int64_t out_channels = 128;
    double outlier_fraction = 0.01;
    double outlier_min = 20.0;   // outlier channel scale relative to the typical channel
    double outlier_max = 100.0;
    double channel_spread = 0.5;      // lognormal sigma of bulk per-channel scales
    double act_tail_prob_max = 0.08;  // per-layer heavy-tail mixing, drawn U[0, max]
    double act_tail_scale = 5.0;
    double weight_row_spread = 0.25;  // lognormal sigma of per-row weight scale
    std::uint64_t seed = 42;
};

struct SyntheticLayer {
    std::string name;
    Matrix weight;
    std::vector<Matrix> calib;
    Matrix test_input;  // one held-out sample from the same distribution
    std::vector<std::int64_t> outlier_channels;
};

SyntheticLayer make_synthetic_layer(const SyntheticOptions& options, std::int64_t index);

Model make_synthetic_model(const SyntheticOptions& options);
std::vector<SyntheticLayer> make_synthetic_layers(const SyntheticOptions& options);

}  // namespace fq
