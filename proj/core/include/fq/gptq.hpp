// gptq.hpp - column-wise weight quantization with Hessian-guided error
// compensation, restricted to a single frozen per-tensor scale.
#pragma once

#include <cstdint>
#include <span>

#include "fq/matrix.hpp"
#include "fq/quantize.hpp"

namespace fq {

// Damped second-moment estimate H = sum 2*X^T X + damping*mean(diag)*I over
// flattened calibration activations.
struct HessianEstimate {
    Matrix h;
    double damping = 0.0;
    std::int64_t sample_count = 0;
};

HessianEstimate hessian_from_calibration(std::span<const Matrix> flattened_acts,
                                         double damping);

// Quantizes input channels (rows of w_flat) in index order on the fixed
// per-tensor grid of `params`, propagating each channel's rounding residual
// into the not-yet-quantized channels through the Cholesky factor of H^-1.
// Lazy batched updates run in blocks of 128 channels.
QuantizedTensor gptq_optimize(const Matrix& w_flat, const HessianEstimate& hessian,
                              const QuantParams& params);

// tr((W - sQ)^T H (W - sQ)): the objective gptq_optimize minimizes greedily.
double reconstruction_objective(const Matrix& w_flat, const QuantizedTensor& qt,
                                const Matrix& h);

}  // namespace fq
