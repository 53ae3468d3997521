// smoothing.hpp - cross-channel magnitude migration between activations and
// weights so both become flatter before channel flattening.
#pragma once

#include <span>
#include <utility>
#include <vector>

#include "fq/matrix.hpp"

namespace fq {

// Per-channel scales s with X' = X diag(s)^-1, W' = diag(s) W.
//
// s_j = sigmoid((max|X_j| - mu)/sigma)^alpha
//     / sigmoid((max|W_j| - mu)/sigma)^(1-alpha)
//
// mu and sigma are the mean and population standard deviation of the
// activation channel maxima, shared by both sigmoid arguments; sigma = 0
// degenerates to a sigmoid argument of 0. Normalizing the weight maxima by
// the activation moments keeps the weight sigmoid nearly constant when the
// activation spread is outlier-dominated, so smoothing shrinks outlier
// channels without scattering the bulk.
struct SmoothingScales {
    double alpha = 0.5;
    std::vector<double> s;
    double mu = 0.0;
    double sigma = 0.0;
};

SmoothingScales smoothing_scales(std::span<const double> act_maxes,
                                 std::span<const double> weight_maxes, double alpha);

// X'[i,j] = X[i,j]/s_j and W'[j,k] = s_j*W[j,k]; the product X'W' equals XW
// up to floating-point reassociation.
std::pair<Matrix, Matrix> apply_smoothing(const Matrix& x, const Matrix& w,
                                          const SmoothingScales& scales);

Matrix divide_columns(const Matrix& x, std::span<const double> s);
Matrix scale_rows(const Matrix& w, std::span<const double> s);

}  // namespace fq
