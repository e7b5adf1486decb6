#pragma once

// Straight-path rectified flow: z_t = (1 - t) x0 + t eps, velocity eps - x0.

#include "tryon/core/error.hpp"
#include "tryon/core/rng.hpp"
#include "tryon/nn/params.hpp"

namespace tryon::train {

using nn::Mat;

template <class T>
Mat<T> rf_interpolate(const Mat<T>& x0, const Mat<T>& eps, double t) {
    require(x0.rows() == eps.rows() && x0.cols() == eps.cols(), "rf_interpolate: shape mismatch ", x0.rows(), "x",
            x0.cols(), " vs ", eps.rows(), "x", eps.cols());
    require<ValueError>(t >= 0.0 && t <= 1.0, "rf_interpolate: t ", t, " outside [0, 1]");
    if (t == 0.0) return x0;
    if (t == 1.0) return eps;
    return (static_cast<T>(1.0 - t) * x0.array() + static_cast<T>(t) * eps.array()).matrix();
}

template <class T>
Mat<T> rf_target(const Mat<T>& x0, const Mat<T>& eps) {
    require(x0.rows() == eps.rows() && x0.cols() == eps.cols(), "rf_target: shape mismatch");
    return eps - x0;
}

/// t ~ U[0, 1), one draw.
inline double sample_t(Rng& rng) { return rng.uniform(); }

}  // namespace tryon::train
