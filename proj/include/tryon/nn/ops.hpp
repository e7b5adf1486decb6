#pragma once

// Differentiable building blocks with hand-written backward passes.
// Token matrices are row-major (tokens x features).

#include <cmath>
#include <numbers>
#include <vector>

#include "tryon/nn/params.hpp"

namespace tryon::nn {

// ---------------------------------------------------------------- linear

/// Indices of a (weight: out x in, bias: 1 x out) pair inside a ParamStore.
struct Linear {
    int weight = -1;
    int bias = -1;

    template <class T>
    static Linear add(ParamStore<T>& s, const std::string& prefix, int in, int out) {
        Linear l;
        l.weight = s.add(prefix + ".weight", out, in);
        l.bias = s.add(prefix + ".bias", 1, out);
        return l;
    }

    template <class T>
    Mat<T> forward(const ParamStore<T>& p, const Mat<T>& x) const {
        Mat<T> y = x * p[weight].transpose();
        y.rowwise() += p[bias].row(0);
        return y;
    }

    /// Accumulates weight/bias grads when `grads` is non-null; returns dX when want_input.
    template <class T>
    Mat<T> backward(const ParamStore<T>& p, const Mat<T>& x, const Mat<T>& dy, ParamStore<T>* grads,
                    bool want_input) const {
        if (grads) {
            (*grads)[weight].noalias() += dy.transpose() * x;
            (*grads)[bias].row(0) += dy.colwise().sum();
        }
        if (!want_input) return {};
        return dy * p[weight];
    }
};

// ---------------------------------------------------------------- activations

template <class T>
Mat<T> silu(const Mat<T>& x) {
    return x.unaryExpr([](T v) { return v / (T(1) + std::exp(-v)); });
}

template <class T>
Mat<T> silu_backward(const Mat<T>& x, const Mat<T>& dy) {
    return dy.binaryExpr(x, [](T g, T v) {
        const T s = T(1) / (T(1) + std::exp(-v));
        return g * (s * (T(1) + v * (T(1) - s)));
    });
}

/// tanh-approximated GELU.
template <class T>
Mat<T> gelu(const Mat<T>& x) {
    constexpr T c = T(0.7978845608028654);  // sqrt(2/pi)
    return x.unaryExpr([](T v) { return T(0.5) * v * (T(1) + std::tanh(c * (v + T(0.044715) * v * v * v))); });
}

template <class T>
Mat<T> gelu_backward(const Mat<T>& x, const Mat<T>& dy) {
    constexpr T c = T(0.7978845608028654);
    return dy.binaryExpr(x, [](T g, T v) {
        const T u = c * (v + T(0.044715) * v * v * v);
        const T th = std::tanh(u);
        const T du = c * (T(1) + T(3) * T(0.044715) * v * v);
        return g * (T(0.5) * (T(1) + th) + T(0.5) * v * (T(1) - th * th) * du);
    });
}

// ---------------------------------------------------------------- layer norm

/// Parameter-free layer norm over features (affine comes from modulation).
template <class T>
struct LayerNormCache {
    Mat<T> xhat;
    Eigen::Matrix<T, Eigen::Dynamic, 1> rstd;
};

template <class T>
Mat<T> layer_norm(const Mat<T>& x, LayerNormCache<T>& cache, T eps = T(1e-6)) {
    const auto d = static_cast<T>(x.cols());
    cache.xhat.resize(x.rows(), x.cols());
    cache.rstd.resize(x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const T mean = x.row(i).sum() / d;
        const auto centered = (x.row(i).array() - mean).matrix();
        const T var = centered.squaredNorm() / d;
        const T r = T(1) / std::sqrt(var + eps);
        cache.rstd(i) = r;
        cache.xhat.row(i) = centered * r;
    }
    return cache.xhat;
}

template <class T>
Mat<T> layer_norm_backward(const LayerNormCache<T>& cache, const Mat<T>& dxhat) {
    const auto d = static_cast<T>(dxhat.cols());
    Mat<T> dx(dxhat.rows(), dxhat.cols());
    for (Eigen::Index i = 0; i < dxhat.rows(); ++i) {
        const T mean_g = dxhat.row(i).sum() / d;
        const T mean_gx = dxhat.row(i).dot(cache.xhat.row(i)) / d;
        dx.row(i) = cache.rstd(i) * (dxhat.row(i).array() - mean_g - cache.xhat.row(i).array() * mean_gx).matrix();
    }
    return dx;
}

/// y = xhat * (1 + scale) + shift, scale/shift broadcast over rows.
template <class T>
Mat<T> modulate(const Mat<T>& xhat, const RowVec<T>& shift, const RowVec<T>& scale) {
    Mat<T> y = xhat.array().rowwise() * (scale.array() + T(1));
    y.rowwise() += shift;
    return y;
}

// ---------------------------------------------------------------- rotary positions

/// Per-token rotation tables for 2-D rotary embedding. Each head of width
/// head_dim is split into a row part (axis_dims[0]) and a column part
/// (axis_dims[1]); consecutive feature pairs rotate by pos * theta^(-2j/axis_dim).
template <class T>
struct RopeTable {
    int head_dim = 0;
    Mat<T> cos;  // tokens x head_dim/2
    Mat<T> sin;

    static RopeTable build(const std::vector<std::pair<int, int>>& positions, int head_dim, int row_dims,
                           int col_dims, double theta) {
        require(row_dims % 2 == 0 && col_dims % 2 == 0 && row_dims + col_dims == head_dim,
                "rope dims ", row_dims, "+", col_dims, " must be even and sum to head dim ", head_dim);
        RopeTable t;
        t.head_dim = head_dim;
        const auto n = static_cast<Eigen::Index>(positions.size());
        t.cos.resize(n, head_dim / 2);
        t.sin.resize(n, head_dim / 2);
        for (Eigen::Index i = 0; i < n; ++i) {
            for (int j = 0; j < head_dim / 2; ++j) {
                const bool row_axis = j < row_dims / 2;
                const int jj = row_axis ? j : j - row_dims / 2;
                const int axis_dim = row_axis ? row_dims : col_dims;
                const double freq = std::pow(theta, -2.0 * jj / axis_dim);
                const double pos = row_axis ? positions[i].first : positions[i].second;
                t.cos(i, j) = static_cast<T>(std::cos(pos * freq));
                t.sin(i, j) = static_cast<T>(std::sin(pos * freq));
            }
        }
        return t;
    }

    /// Rotates every head of x in place; inverse=true applies the transpose.
    void apply(Mat<T>& x, bool inverse = false) const {
        const int pairs = head_dim / 2;
        const auto heads = x.cols() / head_dim;
        for (Eigen::Index i = 0; i < x.rows(); ++i)
            for (Eigen::Index h = 0; h < heads; ++h)
                for (int j = 0; j < pairs; ++j) {
                    const Eigen::Index a = h * head_dim + 2 * j;
                    const T c = cos(i, j);
                    const T s = inverse ? -sin(i, j) : sin(i, j);
                    const T x0 = x(i, a), x1 = x(i, a + 1);
                    x(i, a) = x0 * c - x1 * s;
                    x(i, a + 1) = x0 * s + x1 * c;
                }
    }
};

// ---------------------------------------------------------------- attention

template <class T>
struct AttentionCache {
    Mat<T> q, k, v;          // after rotary
    std::vector<Mat<T>> probs;  // per head, tokens x tokens
};

/// Multi-head softmax attention over already-projected q, k, v (tokens x d).
template <class T>
Mat<T> attention(Mat<T> q, Mat<T> k, Mat<T> v, int n_heads, const RopeTable<T>& rope, AttentionCache<T>& cache) {
    const auto n = q.rows();
    const auto d = q.cols();
    const auto dh = d / n_heads;
    rope.apply(q);
    rope.apply(k);
    const T scale = T(1) / std::sqrt(static_cast<T>(dh));
    Mat<T> out(n, d);
    cache.probs.resize(static_cast<std::size_t>(n_heads));
    for (int h = 0; h < n_heads; ++h) {
        Mat<T> s = (q.middleCols(h * dh, dh) * k.middleCols(h * dh, dh).transpose()) * scale;
        for (Eigen::Index i = 0; i < n; ++i) {
            const T mx = s.row(i).maxCoeff();
            s.row(i) = (s.row(i).array() - mx).exp().matrix();
            s.row(i) /= s.row(i).sum();
        }
        out.middleCols(h * dh, dh).noalias() = s * v.middleCols(h * dh, dh);
        cache.probs[static_cast<std::size_t>(h)] = std::move(s);
    }
    cache.q = std::move(q);
    cache.k = std::move(k);
    cache.v = std::move(v);
    return out;
}

/// Returns (dq, dk, dv) with respect to the pre-rotary projections.
template <class T>
void attention_backward(const AttentionCache<T>& cache, const Mat<T>& dout, int n_heads, const RopeTable<T>& rope,
                        Mat<T>& dq, Mat<T>& dk, Mat<T>& dv) {
    const auto n = cache.q.rows();
    const auto d = cache.q.cols();
    const auto dh = d / n_heads;
    const T scale = T(1) / std::sqrt(static_cast<T>(dh));
    dq.setZero(n, d);
    dk.setZero(n, d);
    dv.setZero(n, d);
    for (int h = 0; h < n_heads; ++h) {
        const Mat<T>& p = cache.probs[static_cast<std::size_t>(h)];
        const auto go = dout.middleCols(h * dh, dh);
        dv.middleCols(h * dh, dh).noalias() = p.transpose() * go;
        Mat<T> dp = go * cache.v.middleCols(h * dh, dh).transpose();
        // softmax backward: ds = p * (dp - rowsum(dp * p))
        Eigen::Matrix<T, Eigen::Dynamic, 1> inner = (dp.array() * p.array()).rowwise().sum();
        Mat<T> ds = (p.array() * (dp.array().colwise() - inner.array())).matrix() * scale;
        dq.middleCols(h * dh, dh).noalias() = ds * cache.k.middleCols(h * dh, dh);
        dk.middleCols(h * dh, dh).noalias() = ds.transpose() * cache.q.middleCols(h * dh, dh);
    }
    rope.apply(dq, true);
    rope.apply(dk, true);
}

// ---------------------------------------------------------------- sinusoidal features

/// [cos(s * w_i), sin(s * w_i)] with w_i = 10000^(-i/half); s = value * 1000.
template <class T>
RowVec<T> sinusoidal(double value, int dim) {
    const int half = dim / 2;
    RowVec<T> out = RowVec<T>::Zero(dim);
    for (int i = 0; i < half; ++i) {
        const double freq = std::exp(-std::log(10000.0) * i / half);
        const double arg = value * 1000.0 * freq;
        out(i) = static_cast<T>(std::cos(arg));
        out(half + i) = static_cast<T>(std::sin(arg));
    }
    return out;
}

}  // namespace tryon::nn
