#pragma once

// The one preprocessing path used by both training and inference:
//   concat_width -> build_pair_mask -> apply_mask -> encode -> pack   (masked latent)
//   space_to_depth(pair mask, f) -> pack                              (mask tokens)
// plus the caption encoding and the rotary grid of the packed canvas.

#include <cstdint>

#include "tryon/codec/autoencoder.hpp"
#include "tryon/core/rng.hpp"
#include "tryon/core/spatial.hpp"
#include "tryon/dit/model.hpp"
#include "tryon/text/text.hpp"

namespace tryon::pipeline {

using nn::Mat;

struct Conditioning {
    PackedTokens p_masked;
    PackedTokens p_om;
    text::TextEncoding<float> text;
    dit::Positions positions;
    int token_rows = 0;  // packed grid
    int token_cols = 0;
};

struct PreparedInputs : Conditioning {
    PackedTokens z_T;
};

/// Token matrix view (token_count x token_dim) of packed tokens.
template <class T = float>
Mat<T> as_matrix(const PackedTokens& p) {
    Mat<T> m(p.token_count, p.token_dim);
    for (int i = 0; i < p.token_count; ++i)
        for (int j = 0; j < p.token_dim; ++j) m(i, j) = static_cast<T>(p.at(i, j));
    return m;
}

template <class T>
PackedTokens from_matrix(const Mat<T>& m, const PackedTokens& like) {
    require(m.rows() == like.token_count && m.cols() == like.token_dim, "from_matrix: ", m.rows(), "x", m.cols(),
            " vs ", like.token_count, "x", like.token_dim);
    PackedTokens p = like;
    for (int i = 0; i < p.token_count; ++i)
        for (int j = 0; j < p.token_dim; ++j) p.values[static_cast<std::size_t>(i) * p.token_dim + j] = static_cast<float>(m(i, j));
    return p;
}

/// Standard-normal tokens shaped like `like`, drawn in row-major order.
inline PackedTokens normal_tokens(const PackedTokens& like, Rng& rng) {
    PackedTokens p = like;
    for (auto& v : p.values) v = static_cast<float>(rng.normal());
    return p;
}

inline Conditioning prepare_conditioning(const ImageTensor& garment, const ImageTensor& person, const MaskTensor& mask,
                                         const text::Caption& caption, const codec::Codec& codec,
                                         const text::TextEncoder& text_encoder) {
    require(mask.height == person.height && mask.width == person.width, "prepare_inputs: mask ",
            mask.shape_string(), " vs person ", person.shape_string());
    const ImageTensor pair = concat_width(garment, person);
    const MaskTensor pair_mask = build_pair_mask(mask);
    const ImageTensor masked = apply_mask(pair, pair_mask);
    Conditioning c;
    c.p_masked = pack(codec.encode(masked));
    c.p_om = pack(space_to_depth(pair_mask, codec.factor()));
    require(c.p_masked.token_count == c.p_om.token_count, "prepare_inputs: token count mismatch");
    c.token_rows = c.p_masked.grid_h / 2;
    c.token_cols = c.p_masked.grid_w / 2;
    c.positions = dit::grid_positions(c.token_rows, c.token_cols);
    c.text = text_encoder.encode(caption);
    return c;
}

inline PreparedInputs prepare_inputs(const ImageTensor& garment, const ImageTensor& person, const MaskTensor& mask,
                                     const text::Caption& caption, const codec::Codec& codec,
                                     const text::TextEncoder& text_encoder, std::uint64_t noise_seed) {
    PreparedInputs p;
    static_cast<Conditioning&>(p) = prepare_conditioning(garment, person, mask, caption, codec, text_encoder);
    Rng rng(derive_seed(noise_seed, 0x2015E));
    p.z_T = normal_tokens(p.p_masked, rng);
    return p;
}

/// Clean latent tokens of the unmasked pair: the quantity the sampler must reach.
inline PackedTokens target_tokens(const ImageTensor& garment, const ImageTensor& person, const codec::Codec& codec) {
    return pack(codec.encode(concat_width(garment, person)));
}

/// Channel concatenation [z_t, p_masked, p_om] as a token matrix.
template <class T = float>
Mat<T> model_tokens(const PackedTokens& z, const Conditioning& c) {
    return as_matrix<T>(concat_features({&z, &c.p_masked, &c.p_om}));
}

template <class T = float>
dit::DitInput<T> model_input(const PackedTokens& z, const Conditioning& c, double t, double guidance) {
    dit::DitInput<T> in;
    in.image_tokens = model_tokens<T>(z, c);
    in.positions = c.positions;
    in.text = c.text.active().template cast<T>();
    in.pooled = c.text.pooled.template cast<T>();
    in.t = t;
    in.guidance = guidance;
    return in;
}

}  // namespace tryon::pipeline
