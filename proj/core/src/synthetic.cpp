#include "fq/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace fq {

double Rng::gaussian() {
    // u1 in (0, 1] so the log is finite.
    const double u1 = static_cast<double>((gen_() >> 11) + 1) * 0x1.0p-53;
    const double u2 = static_cast<double>(gen_() >> 11) * 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

namespace {

std::vector<std::int64_t> pick_outlier_channels(Rng& rng, std::int64_t channels,
                                                double fraction) {
    std::int64_t count = 0;
    if (fraction > 0.0) {
        count = std::llround(fraction * static_cast<double>(channels));
        count = std::clamp<std::int64_t>(count, 1, channels);
    }
    std::vector<std::int64_t> all(static_cast<std::size_t>(channels));
    for (std::int64_t i = 0; i < channels; ++i) all[static_cast<std::size_t>(i)] = i;
    // Partial Fisher-Yates.
    for (std::int64_t i = 0; i < count; ++i) {
        const std::int64_t j = i + rng.index(channels - i);
        std::swap(all[static_cast<std::size_t>(i)], all[static_cast<std::size_t>(j)]);
    }
    std::vector<std::int64_t> picked(all.begin(), all.begin() + count);
    std::sort(picked.begin(), picked.end());
    return picked;
}

Matrix activation_sample(Rng& rng, std::int64_t rows, std::int64_t cols,
                         const std::vector<double>& channel_scale, double tail_prob,
                         double tail_scale) {
    Matrix m(rows, cols);
    for (std::int64_t i = 0; i < rows; ++i) {
        for (std::int64_t j = 0; j < cols; ++j) {
            double v = rng.gaussian();
            if (rng.uniform() < tail_prob) v *= tail_scale;
            m.at(i, j) = v * channel_scale[static_cast<std::size_t>(j)];
        }
    }
    return m;
}

}  // namespace

SyntheticLayer make_synthetic_layer(const SyntheticOptions& options, std::int64_t index) {
    if (options.outlier_min > options.outlier_max || options.outlier_min < 0.0) {
        throw std::invalid_argument("synthetic: bad outlier factor range");
    }
    Rng rng(options.seed, static_cast<std::uint64_t>(index));
    SyntheticLayer layer;
    layer.name = "layer" + std::to_string(index);
    layer.outlier_channels =
        pick_outlier_channels(rng, options.in_channels, options.outlier_fraction);

    // Bulk channels vary mildly around scale 1; outlier channels sit at
    // factor x the typical channel.
    std::vector<double> channel_scale(static_cast<std::size_t>(options.in_channels));
    for (auto& s : channel_scale) s = std::exp(options.channel_spread * rng.gaussian());
    for (std::int64_t c : layer.outlier_channels) {
        channel_scale[static_cast<std::size_t>(c)] =
            rng.uniform(options.outlier_min, options.outlier_max);
    }

    const double tail_prob = rng.uniform(0.0, options.act_tail_prob_max);

    layer.weight = Matrix(options.in_channels, options.out_channels);
    for (std::int64_t i = 0; i < options.in_channels; ++i) {
        const double row_scale = std::exp(options.weight_row_spread * rng.gaussian());
        for (std::int64_t j = 0; j < options.out_channels; ++j) {
            layer.weight.at(i, j) = rng.gaussian() * row_scale;
        }
    }

    layer.calib.reserve(static_cast<std::size_t>(options.samples));
    for (std::int64_t s = 0; s < options.samples; ++s) {
        layer.calib.push_back(activation_sample(rng, options.rows, options.in_channels,
                                                channel_scale, tail_prob,
                                                options.act_tail_scale));
    }
    layer.test_input = activation_sample(rng, options.rows, options.in_channels, channel_scale,
                                         tail_prob, options.act_tail_scale);
    return layer;
}

std::vector<SyntheticLayer> make_synthetic_layers(const SyntheticOptions& options) {
    std::vector<SyntheticLayer> layers;
    layers.reserve(static_cast<std::size_t>(options.layers));
    for (std::int64_t i = 0; i < options.layers; ++i) {
        layers.push_back(make_synthetic_layer(options, i));
    }
    return layers;
}

Model make_synthetic_model(const SyntheticOptions& options) {
    Model model;
    model.layers.reserve(static_cast<std::size_t>(options.layers));
    for (auto& syn : make_synthetic_layers(options)) {
        model.layers.push_back({std::move(syn.name), std::move(syn.weight), std::move(syn.calib)});
    }
    return model;
}

}  // namespace fq
