#include "fq/gptq.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace fq {

namespace {

constexpr std::int64_t kUpdateBlock = 128;

// In-place lower Cholesky; throws when a pivot is not positive.
void cholesky_lower(Matrix& a) {
    const std::int64_t n = a.rows;
    for (std::int64_t j = 0; j < n; ++j) {
        double d = a.at(j, j);
        for (std::int64_t k = 0; k < j; ++k) d -= a.at(j, k) * a.at(j, k);
        if (!(d > 0.0)) {
            throw std::runtime_error("ill-conditioned Hessian, increase damping");
        }
        const double pivot = std::sqrt(d);
        a.at(j, j) = pivot;
        for (std::int64_t i = j + 1; i < n; ++i) {
            double s = a.at(i, j);
            for (std::int64_t k = 0; k < j; ++k) s -= a.at(i, k) * a.at(j, k);
            a.at(i, j) = s / pivot;
        }
        for (std::int64_t i = 0; i < j; ++i) a.at(i, j) = 0.0;
    }
}

// inv(L) for lower-triangular L by forward substitution.
Matrix invert_lower(const Matrix& l) {
    const std::int64_t n = l.rows;
    Matrix inv(n, n);
    for (std::int64_t j = 0; j < n; ++j) {
        inv.at(j, j) = 1.0 / l.at(j, j);
        for (std::int64_t i = j + 1; i < n; ++i) {
            double s = 0.0;
            for (std::int64_t k = j; k < i; ++k) s += l.at(i, k) * inv.at(k, j);
            inv.at(i, j) = -s / l.at(i, i);
        }
    }
    return inv;
}

// Upper Cholesky factor U of H^-1 (H^-1 = U^T U), the factor whose rows
// drive the error-propagation updates.
Matrix inverse_upper_factor(const Matrix& h) {
    Matrix l = h;
    cholesky_lower(l);
    const Matrix linv = invert_lower(l);
    // H^-1 = linv^T linv, built symmetric by construction.
    const std::int64_t n = h.rows;
    Matrix hinv(n, n);
    for (std::int64_t i = 0; i < n; ++i) {
        for (std::int64_t j = i; j < n; ++j) {
            double s = 0.0;
            for (std::int64_t k = std::max(i, j); k < n; ++k) {
                s += linv.at(k, i) * linv.at(k, j);
            }
            hinv.at(i, j) = s;
            hinv.at(j, i) = s;
        }
    }
    cholesky_lower(hinv);  // hinv = L2 L2^T
    return transpose(hinv);
}

}  // namespace

HessianEstimate hessian_from_calibration(std::span<const Matrix> flattened_acts,
                                         double damping) {
    if (flattened_acts.empty()) {
        throw std::invalid_argument("hessian_from_calibration: empty calibration set");
    }
    if (damping <= 0.0) {
        throw std::invalid_argument("hessian_from_calibration: damping must be > 0");
    }
    const std::int64_t dim = flattened_acts.front().cols;
    HessianEstimate est;
    est.damping = damping;
    est.h = Matrix(dim, dim);
    for (const Matrix& x : flattened_acts) {
        if (x.cols != dim) {
            throw std::invalid_argument("hessian_from_calibration: width mismatch");
        }
        for (std::int64_t r = 0; r < x.rows; ++r) {
            for (std::int64_t i = 0; i < dim; ++i) {
                const double xi = x.at(r, i);
                if (xi == 0.0) continue;
                for (std::int64_t j = 0; j < dim; ++j) {
                    est.h.at(i, j) += 2.0 * xi * x.at(r, j);
                }
            }
        }
        est.sample_count += x.rows;
    }
    double diag_mean = 0.0;
    for (std::int64_t i = 0; i < dim; ++i) diag_mean += est.h.at(i, i);
    diag_mean /= static_cast<double>(dim);
    for (std::int64_t i = 0; i < dim; ++i) est.h.at(i, i) += damping * diag_mean;
    return est;
}

QuantizedTensor gptq_optimize(const Matrix& w_flat, const HessianEstimate& hessian,
                              const QuantParams& params) {
    const std::int64_t k_dim = w_flat.rows;
    const std::int64_t n_out = w_flat.cols;
    if (hessian.h.rows != k_dim || hessian.h.cols != k_dim) {
        throw std::invalid_argument("gptq_optimize: Hessian dimension mismatch");
    }
    if (params.scale <= 0.0) {
        throw std::invalid_argument("gptq_optimize: per-tensor scale must be > 0");
    }

    const Matrix u = inverse_upper_factor(hessian.h);
    const double s = params.scale;
    const double qmax = static_cast<double>(params.qmax());

    Matrix work = w_flat;
    QuantizedTensor out;
    out.params = params;
    out.q = IntMatrix(k_dim, n_out);

    const std::int64_t block = k_dim < kUpdateBlock ? k_dim : kUpdateBlock;
    std::vector<double> err(static_cast<std::size_t>(block * n_out), 0.0);

    for (std::int64_t b0 = 0; b0 < k_dim; b0 += block) {
        const std::int64_t b1 = std::min(b0 + block, k_dim);
        for (std::int64_t j = b0; j < b1; ++j) {
            const double d = u.at(j, j);
            for (std::int64_t c = 0; c < n_out; ++c) {
                const double w = work.at(j, c);
                const double q = std::clamp(std::round(w / s), -qmax, qmax);
                out.q.at(j, c) = static_cast<std::int32_t>(q);
                err[static_cast<std::size_t>((j - b0) * n_out + c)] = (w - q * s) / d;
            }
            // Propagate into the rest of the block immediately.
            for (std::int64_t k = j + 1; k < b1; ++k) {
                const double ujk = u.at(j, k);
                if (ujk == 0.0) continue;
                for (std::int64_t c = 0; c < n_out; ++c) {
                    work.at(k, c) -= ujk * err[static_cast<std::size_t>((j - b0) * n_out + c)];
                }
            }
        }
        // Lazy batched update of everything past the block.
        for (std::int64_t k = b1; k < k_dim; ++k) {
            for (std::int64_t j = b0; j < b1; ++j) {
                const double ujk = u.at(j, k);
                if (ujk == 0.0) continue;
                for (std::int64_t c = 0; c < n_out; ++c) {
                    work.at(k, c) -= ujk * err[static_cast<std::size_t>((j - b0) * n_out + c)];
                }
            }
        }
    }
    return out;
}

double reconstruction_objective(const Matrix& w_flat, const QuantizedTensor& qt,
                                const Matrix& h) {
    if (qt.q.rows != w_flat.rows || qt.q.cols != w_flat.cols) {
        throw std::invalid_argument("reconstruction_objective: shape mismatch");
    }
    if (h.rows != w_flat.rows || h.cols != w_flat.rows) {
        throw std::invalid_argument("reconstruction_objective: Hessian dimension mismatch");
    }
    Matrix delta(w_flat.rows, w_flat.cols);
    for (std::int64_t i = 0; i < w_flat.size(); ++i) {
        delta.data[i] = w_flat.data[i] - static_cast<double>(qt.q.data[i]) * qt.params.scale;
    }
    // tr(D^T H D) = sum over output columns c of d_c^T H d_c.
    double total = 0.0;
    for (std::int64_t c = 0; c < delta.cols; ++c) {
        for (std::int64_t i = 0; i < delta.rows; ++i) {
            const double di = delta.at(i, c);
            if (di == 0.0) continue;
            double hrow = 0.0;
            for (std::int64_t j = 0; j < delta.rows; ++j) {
                hrow += h.at(i, j) * delta.at(j, c);
            }
            total += di * hrow;
        }
    }
    return total;
}

}  // namespace fq
