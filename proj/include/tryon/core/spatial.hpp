#pragma once

// Spatial algebra of the try-on canvas: side-by-side concatenation, pair
// masks, masking, space-to-depth and 2x2 token packing.
//
// Block ordering (fixed, checkpoints depend on it):
//   space_to_depth(x, r): out channel = c * r*r + dy * r + dx
//   pack(latent):         token = (y/2) * (W/2) + (x/2), feature = c * 4 + dy * 2 + dx
// i.e. channel-outermost, row-major inside each block.

#include <algorithm>
#include <initializer_list>

#include "tryon/core/error.hpp"
#include "tryon/core/tensor.hpp"

namespace tryon {

/// Side-by-side concatenation of two same-shape tensors along width.
inline Tensor3 hconcat(const Tensor3& left, const Tensor3& right) {
    require(left.same_shape(right), "hconcat: ", left.shape_string(), " vs ", right.shape_string());
    const int h = left.height, w = left.width;
    Tensor3 out(left.channels, h, 2 * w);
    for (int c = 0; c < left.channels; ++c)
        for (int y = 0; y < h; ++y) {
            std::copy_n(&left.values[left.index(c, y, 0)], w, &out.values[out.index(c, y, 0)]);
            std::copy_n(&right.values[right.index(c, y, 0)], w, &out.values[out.index(c, y, w)]);
        }
    return out;
}

/// Places garment in columns [0, W) and person in [W, 2W).
inline ImageTensor concat_width(const ImageTensor& garment, const ImageTensor& person) {
    require(garment.same_shape(person), "concat_width: garment ", garment.shape_string(), " vs person ",
            person.shape_string());
    return ImageTensor(hconcat(garment, person));
}

/// Zero mask on the garment half, person mask on the right half.
inline MaskTensor build_pair_mask(const MaskTensor& person_mask) {
    const int h = person_mask.height, w = person_mask.width;
    MaskTensor out(h, 2 * w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const float v = person_mask.at(0, y, x);
            require<ValueError>(v == 0.0f || v == 1.0f, "build_pair_mask: non-binary value ", v);
            out.at(0, y, w + x) = v;
        }
    return out;
}

/// pair * (1 - mask), mask broadcast over the three channels.
inline ImageTensor apply_mask(const ImageTensor& pair, const MaskTensor& mask) {
    require(pair.height == mask.height && pair.width == mask.width, "apply_mask: image ",
            pair.shape_string(), " vs mask ", mask.shape_string());
    ImageTensor out = pair;
    const std::size_t plane = static_cast<std::size_t>(pair.height) * pair.width;
    for (int c = 0; c < 3; ++c)
        for (std::size_t i = 0; i < plane; ++i)
            if (mask.values[i] != 0.0f) out.values[c * plane + i] = 0.0f;
    return out;
}

inline Tensor3 space_to_depth(const Tensor3& x, int r) {
    require(r >= 1, "space_to_depth: factor must be >= 1, got ", r);
    require(x.height % r == 0 && x.width % r == 0, "space_to_depth: ", x.shape_string(),
            " not divisible by factor ", r);
    const int oh = x.height / r, ow = x.width / r;
    Tensor3 out(x.channels * r * r, oh, ow);
    for (int c = 0; c < x.channels; ++c)
        for (int dy = 0; dy < r; ++dy)
            for (int dx = 0; dx < r; ++dx) {
                const int oc = (c * r + dy) * r + dx;
                for (int y = 0; y < oh; ++y)
                    for (int xx = 0; xx < ow; ++xx) out.at(oc, y, xx) = x.at(c, y * r + dy, xx * r + dx);
            }
    return out;
}

inline Tensor3 depth_to_space(const Tensor3& x, int r) {
    require(r >= 1, "depth_to_space: factor must be >= 1, got ", r);
    require(x.channels % (r * r) == 0, "depth_to_space: ", x.channels, " channels not divisible by ", r * r);
    const int oc_count = x.channels / (r * r);
    Tensor3 out(oc_count, x.height * r, x.width * r);
    for (int c = 0; c < oc_count; ++c)
        for (int dy = 0; dy < r; ++dy)
            for (int dx = 0; dx < r; ++dx) {
                const int ic = (c * r + dy) * r + dx;
                for (int y = 0; y < x.height; ++y)
                    for (int xx = 0; xx < x.width; ++xx) out.at(c, y * r + dy, xx * r + dx) = x.at(ic, y, xx);
            }
    return out;
}

inline PackedTokens pack(const Tensor3& latent) {
    require(latent.height % 2 == 0 && latent.width % 2 == 0, "pack: latent ", latent.shape_string(),
            " needs even height and width");
    PackedTokens p;
    p.grid_h = latent.height;
    p.grid_w = latent.width;
    p.token_count = (latent.height / 2) * (latent.width / 2);
    p.token_dim = latent.channels * 4;
    p.values.assign(static_cast<std::size_t>(p.token_count) * p.token_dim, 0.0f);
    const int cols = latent.width / 2;
    for (int y = 0; y < latent.height; ++y)
        for (int x = 0; x < latent.width; ++x) {
            const int token = (y / 2) * cols + x / 2;
            const int sub = (y % 2) * 2 + x % 2;
            for (int c = 0; c < latent.channels; ++c) p.at(token, c * 4 + sub) = latent.at(c, y, x);
        }
    return p;
}

inline LatentTensor unpack(const PackedTokens& p) {
    require(p.token_dim % 4 == 0, "unpack: token_dim ", p.token_dim, " not divisible by 4");
    require(p.grid_h % 2 == 0 && p.grid_w % 2 == 0 && p.token_count * 4 == p.grid_h * p.grid_w,
            "unpack: ", p.token_count, " tokens inconsistent with grid ", p.grid_h, "x", p.grid_w);
    require(p.values.size() == static_cast<std::size_t>(p.token_count) * p.token_dim,
            "unpack: value count mismatch");
    LatentTensor out(p.token_dim / 4, p.grid_h, p.grid_w);
    const int cols = p.grid_w / 2;
    for (int y = 0; y < p.grid_h; ++y)
        for (int x = 0; x < p.grid_w; ++x) {
            const int token = (y / 2) * cols + x / 2;
            const int sub = (y % 2) * 2 + x % 2;
            for (int c = 0; c < out.channels; ++c) out.at(c, y, x) = p.at(token, c * 4 + sub);
        }
    return out;
}

/// Columns [W, 2W) of a side-by-side canvas.
inline ImageTensor crop_right_half(const ImageTensor& pair) {
    require(pair.width % 2 == 0, "crop_right_half: width ", pair.width, " is odd");
    const int w = pair.width / 2;
    ImageTensor out(pair.height, w);
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < pair.height; ++y)
            std::copy_n(&pair.values[pair.index(c, y, w)], w, &out.values[out.index(c, y, 0)]);
    return out;
}

inline ImageTensor crop_left_half(const ImageTensor& pair) {
    require(pair.width % 2 == 0, "crop_left_half: width ", pair.width, " is odd");
    const int w = pair.width / 2;
    ImageTensor out(pair.height, w);
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < pair.height; ++y)
            std::copy_n(&pair.values[pair.index(c, y, 0)], w, &out.values[out.index(c, y, 0)]);
    return out;
}

/// Channel-concatenate token streams that share a token count (noise | masked | mask).
inline PackedTokens concat_features(std::initializer_list<const PackedTokens*> parts) {
    require(parts.size() > 0, "concat_features: no inputs");
    const PackedTokens& first = **parts.begin();
    PackedTokens out;
    out.token_count = first.token_count;
    out.grid_h = first.grid_h;
    out.grid_w = first.grid_w;
    for (const auto* p : parts) {
        require(p->token_count == first.token_count, "concat_features: token counts ", p->token_count, " vs ",
                first.token_count);
        out.token_dim += p->token_dim;
    }
    out.values.resize(static_cast<std::size_t>(out.token_count) * out.token_dim);
    for (int t = 0; t < out.token_count; ++t) {
        int off = 0;
        for (const auto* p : parts) {
            std::copy_n(&p->values[static_cast<std::size_t>(t) * p->token_dim], p->token_dim,
                        &out.values[static_cast<std::size_t>(t) * out.token_dim + off]);
            off += p->token_dim;
        }
    }
    return out;
}

}  // namespace tryon
