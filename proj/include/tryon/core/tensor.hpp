#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "tryon/core/error.hpp"

namespace tryon {

/// Dense channel-major (C, H, W) float array. The strong types below add the
/// per-role invariants; spatial ops that do not care about role take this.
struct Tensor3 {
    int channels = 0;
    int height = 0;
    int width = 0;
    std::vector<float> values;

    Tensor3() = default;
    Tensor3(int c, int h, int w, float fill = 0.0f) : channels(c), height(h), width(w) {
        require(c > 0 && h > 0 && w > 0, "tensor dims must be positive, got ", c, "x", h, "x", w);
        values.assign(static_cast<std::size_t>(c) * h * w, fill);
    }
    Tensor3(int c, int h, int w, std::vector<float> v) : channels(c), height(h), width(w), values(std::move(v)) {
        require(values.size() == static_cast<std::size_t>(c) * h * w, "value count ", values.size(),
                " does not match shape ", c, "x", h, "x", w);
    }

    std::size_t size() const noexcept { return values.size(); }
    std::size_t index(int c, int y, int x) const noexcept {
        return (static_cast<std::size_t>(c) * height + y) * width + x;
    }
    float& at(int c, int y, int x) noexcept { return values[index(c, y, x)]; }
    float at(int c, int y, int x) const noexcept { return values[index(c, y, x)]; }

    std::span<float> plane(int c) {
        return {values.data() + static_cast<std::size_t>(c) * height * width,
                static_cast<std::size_t>(height) * width};
    }
    std::span<const float> plane(int c) const {
        return {values.data() + static_cast<std::size_t>(c) * height * width,
                static_cast<std::size_t>(height) * width};
    }

    bool same_shape(const Tensor3& o) const noexcept {
        return channels == o.channels && height == o.height && width == o.width;
    }
    std::string shape_string() const {
        return detail::concat(channels, "x", height, "x", width);
    }

    friend bool operator==(const Tensor3&, const Tensor3&) = default;
};

/// RGB image in model range [-1, 1].
struct ImageTensor : Tensor3 {
    ImageTensor() = default;
    ImageTensor(int h, int w, float fill = 0.0f) : Tensor3(3, h, w, fill) {}
    explicit ImageTensor(Tensor3 t) : Tensor3(std::move(t)) {
        require(channels == 3, "image tensor needs 3 channels, got ", channels);
    }
};

/// Single-channel binary mask; 1 marks the region to regenerate.
struct MaskTensor : Tensor3 {
    MaskTensor() = default;
    MaskTensor(int h, int w, float fill = 0.0f) : Tensor3(1, h, w, fill) { validate(); }
    explicit MaskTensor(Tensor3 t) : Tensor3(std::move(t)) {
        require(channels == 1, "mask tensor needs 1 channel, got ", channels);
        validate();
    }

    double sum() const {
        double s = 0.0;
        for (float v : values) s += v;
        return s;
    }

private:
    void validate() const {
        for (float v : values)
            require<ValueError>(v == 0.0f || v == 1.0f, "mask values must be exactly 0 or 1, found ", v);
    }
};

/// Codec-space grid: (c_lat, H/f, W/f).
struct LatentTensor : Tensor3 {
    LatentTensor() = default;
    LatentTensor(int c, int h, int w, float fill = 0.0f) : Tensor3(c, h, w, fill) {}
    explicit LatentTensor(Tensor3 t) : Tensor3(std::move(t)) {}
};

/// Transformer token view of a latent grid after 2x2 packing.
/// values is row-major (token_count x token_dim).
struct PackedTokens {
    int token_count = 0;
    int token_dim = 0;
    int grid_h = 0;  // latent rows before packing
    int grid_w = 0;  // latent cols before packing
    std::vector<float> values;

    float& at(int token, int feature) noexcept {
        return values[static_cast<std::size_t>(token) * token_dim + feature];
    }
    float at(int token, int feature) const noexcept {
        return values[static_cast<std::size_t>(token) * token_dim + feature];
    }
    int rows() const noexcept { return grid_h / 2; }
    int cols() const noexcept { return grid_w / 2; }

    friend bool operator==(const PackedTokens&, const PackedTokens&) = default;
};

}  // namespace tryon
