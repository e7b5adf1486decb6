#pragma once

// Euler sampling over the uniform time grid t_i = 1 - i/N and the decode,
// crop and paste-back stages that turn the final tokens into an image.

#include <cmath>
#include <concepts>

#include "tryon/pipeline/prepare.hpp"

namespace tryon::pipeline {

struct InferenceConfig {
    int num_steps = 28;
    double guidance = 30.0;
    std::uint64_t seed = 0;
    bool paste_back = true;
    text::CaptionMode caption_mode = text::CaptionMode::integrated;

    void validate() const {
        require<ValueError>(num_steps >= 1, "num_steps must be >= 1, got ", num_steps);
        require<ValueError>(guidance >= 0.0, "guidance must be >= 0, got ", guidance);
    }
};

/// Anything that maps a model input to velocity tokens.
template <class M>
concept VelocityModel = requires(const M& m, const dit::DitInput<float>& in) {
    { m.forward(in) } -> std::convertible_to<Mat<float>>;
};

/// Test double that knows the clean tokens: on the straight path through x0
/// the velocity is (z_t - x0) / t = eps - x0.
struct ExactVelocity {
    Mat<float> x0;  // token_count x token_dim of the clean latent
    int token_dim = 0;

    explicit ExactVelocity(const PackedTokens& clean) : x0(as_matrix(clean)), token_dim(clean.token_dim) {}

    Mat<float> forward(const dit::DitInput<float>& in) const {
        require<ValueError>(in.t > 0.0, "exact velocity undefined at t = 0");
        const Mat<float> z = in.image_tokens.leftCols(token_dim);
        return ((z - x0).array() / static_cast<float>(in.t)).matrix();
    }
};

template <VelocityModel M>
PackedTokens denoise_loop(const M& model, const PreparedInputs& in, const InferenceConfig& cfg) {
    cfg.validate();
    Mat<float> z = as_matrix(in.z_T);
    const int n = cfg.num_steps;
    for (int i = 0; i < n; ++i) {
        const double t = 1.0 - static_cast<double>(i) / n;
        const double t_next = 1.0 - static_cast<double>(i + 1) / n;
        const Mat<float> v = model.forward(model_input(from_matrix(z, in.z_T), in, t, cfg.guidance));
        require(v.rows() == z.rows() && v.cols() == z.cols(), "denoise: model output ", v.rows(), "x", v.cols(),
                " vs latent tokens ", z.rows(), "x", z.cols());
        if (!v.allFinite()) fail<NumericError>("denoise: non-finite velocity at step ", i, " (t=", t, ")");
        z += static_cast<float>(t_next - t) * v;
        if (!z.allFinite()) fail<NumericError>("denoise: non-finite latent after step ", i);
    }
    return from_matrix(z, in.z_T);
}

struct TryOnOutput {
    ImageTensor image;  // person half, H x W
    ImageTensor panel;  // full decoded canvas, H x 2W
};

inline TryOnOutput postprocess(const PackedTokens& z0, const ImageTensor& person, const MaskTensor& mask,
                               const codec::Codec& codec, bool paste_back) {
    TryOnOutput out;
    out.panel = codec.decode(unpack(z0));
    out.image = crop_right_half(out.panel);
    require(out.image.same_shape(person), "postprocess: decoded ", out.image.shape_string(), " vs person ",
            person.shape_string());
    if (paste_back)
        for (int c = 0; c < 3; ++c)
            for (int y = 0; y < person.height; ++y)
                for (int x = 0; x < person.width; ++x)
                    if (mask.at(0, y, x) == 0.0f) out.image.at(c, y, x) = person.at(c, y, x);
    return out;
}

template <VelocityModel M>
TryOnOutput try_on(const ImageTensor& garment, const ImageTensor& person, const MaskTensor& mask,
                   const text::Caption& caption, const M& model, const codec::Codec& codec,
                   const text::TextEncoder& text_encoder, const InferenceConfig& cfg) {
    const auto in = prepare_inputs(garment, person, mask, caption, codec, text_encoder, cfg.seed);
    return postprocess(denoise_loop(model, in, cfg), person, mask, codec, cfg.paste_back);
}

}  // namespace tryon::pipeline
