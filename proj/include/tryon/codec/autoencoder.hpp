#pragma once

// Latent image codec. Two modes:
//   invertible  encode = space_to_depth(x, f); decode is its exact inverse.
//   learned     a strided f x f convolution followed by a 1x1 convolution
//               (per-patch MLP) down to c_lat channels, and the mirror
//               decoder. Receptive fields never cross patch borders, so the
//               width-split consistency of the invertible mode also holds
//               here exactly.
// Learned latents are standardized with a scalar shift/scale fitted after
// training, so diffusion noise and latents share a scale.

#include <string>
#include <string_view>
#include <vector>

#include "tryon/core/rng.hpp"
#include "tryon/core/spatial.hpp"
#include "tryon/nn/ops.hpp"
#include "tryon/train/optim.hpp"

namespace tryon::codec {

using nn::Mat;

enum class CodecMode { invertible, learned };

inline std::string_view to_string(CodecMode m) { return m == CodecMode::invertible ? "invertible" : "learned"; }

inline CodecMode parse_codec_mode(std::string_view s) {
    if (s == "invertible") return CodecMode::invertible;
    if (s == "learned") return CodecMode::learned;
    fail<ValueError>("unknown codec mode '", s, "' (expected invertible or learned)");
}

struct CodecConfig {
    CodecMode mode = CodecMode::invertible;
    int factor = 8;
    int latent_channels = 0;  // 0 = mode default: 3*f^2 (invertible) or 16 (learned)
    int hidden = 64;
    std::uint64_t seed = 0;

    int channels() const {
        if (latent_channels > 0) return latent_channels;
        return mode == CodecMode::invertible ? 3 * factor * factor : 16;
    }

    void validate() const {
        require<ValueError>(factor >= 1, "codec factor must be >= 1, got ", factor);
        if (mode == CodecMode::invertible)
            require<ValueError>(channels() == 3 * factor * factor, "invertible codec needs c_lat == 3*f^2 = ",
                                3 * factor * factor, ", got ", channels());
        require<ValueError>(hidden > 0, "codec hidden width must be positive");
    }
};

struct CodecTrainConfig {
    int steps = 1500;
    double lr = 3e-3;
    int batch_images = 8;

    void validate() const {
        require<ValueError>(steps >= 0, "codec train steps must be >= 0");
        require<ValueError>(lr > 0.0 && batch_images >= 1, "codec lr must be > 0 and batch_images >= 1");
    }
};

struct CodecTrainReport {
    double initial_heldout_mse = 0.0;
    double final_heldout_mse = 0.0;
    std::vector<std::pair<int, double>> heldout_history;  // (step, mse)
};

class Codec {
public:
    Codec() : Codec(CodecConfig{}) {}

    explicit Codec(const CodecConfig& cfg) : cfg_(cfg) {
        cfg_.validate();
        if (cfg_.mode == CodecMode::learned) build_learned();
    }

    const CodecConfig& config() const noexcept { return cfg_; }
    int factor() const noexcept { return cfg_.factor; }
    int latent_channels() const { return cfg_.channels(); }
    nn::ParamStore<float>& params() noexcept { return params_; }
    const nn::ParamStore<float>& params() const noexcept { return params_; }

    LatentTensor encode(const ImageTensor& image) const {
        require(image.height % cfg_.factor == 0 && image.width % cfg_.factor == 0, "encode: image ",
                image.shape_string(), " not divisible by codec factor ", cfg_.factor);
        Tensor3 s2d = space_to_depth(image, cfg_.factor);
        if (cfg_.mode == CodecMode::invertible) return LatentTensor(std::move(s2d));
        const Mat<float> z = encode_patches(to_rows(s2d));
        return LatentTensor(from_rows(z, s2d.height, s2d.width));
    }

    ImageTensor decode(const LatentTensor& latent) const {
        require(latent.channels == latent_channels(), "decode: latent has ", latent.channels,
                " channels, codec expects ", latent_channels());
        if (cfg_.mode == CodecMode::invertible) return ImageTensor(depth_to_space(latent, cfg_.factor));
        Mat<float> x = decode_rows(to_rows(latent));
        x = x.cwiseMax(-1.0f).cwiseMin(1.0f);
        return ImageTensor(depth_to_space(from_rows(x, latent.height, latent.width), cfg_.factor));
    }

    /// Fits the learned codec by minimizing patch reconstruction MSE with
    /// AdamW (no weight decay), then standardizes the latent scale.
    CodecTrainReport train(const std::vector<ImageTensor>& train_images, const std::vector<ImageTensor>& heldout,
                           int steps, double lr, int batch_images = 8, int eval_every = 50) {
        require<ValueError>(cfg_.mode == CodecMode::learned, "train_codec: invertible codec has nothing to train");
        require<ValueError>(steps >= 0 && lr > 0.0, "train_codec: steps must be >= 0 and lr > 0");
        require<ValueError>(!train_images.empty(), "train_codec: no training images");
        CodecTrainReport rep;
        const Mat<float> held = patches_of(heldout.empty() ? train_images : heldout);
        rep.initial_heldout_mse = reconstruction_mse(held);
        rep.heldout_history.emplace_back(0, rep.initial_heldout_mse);
        rep.final_heldout_mse = rep.initial_heldout_mse;
        if (steps == 0) return rep;

        // Training runs on raw (unstandardized) latents.
        params_["codec.latent_shift"](0, 0) = 0.0f;
        params_["codec.latent_scale"](0, 0) = 1.0f;

        train::AdamW<float> opt(params_, train::AdamWConfig{0.9, 0.999, 1e-8, 0.0});
        std::vector<std::string> names;
        for (const auto& n : params_.names())
            if (!n.starts_with("codec.latent_")) names.push_back(n);

        Rng rng(derive_seed(cfg_.seed, 0xC0DEC));
        for (int step = 1; step <= steps; ++step) {
            std::vector<ImageTensor> batch;
            for (int b = 0; b < batch_images; ++b) batch.push_back(train_images[rng.below(train_images.size())]);
            const Mat<float> x = patches_of(batch);
            auto grads = params_.zeros_like();
            reconstruction_grad(x, grads);
            train::NamedGrads<float> named;
            for (const auto& n : names) named.emplace(n, grads[n]);
            opt.step(params_, named, names, lr);
            if (step % eval_every == 0 || step == steps) {
                rep.final_heldout_mse = reconstruction_mse(held);
                rep.heldout_history.emplace_back(step, rep.final_heldout_mse);
            }
        }
        fit_latent_scale(patches_of(train_images));
        return rep;
    }

    /// Mean squared reconstruction error in pixel space over whole images.
    double reconstruction_mse(const std::vector<ImageTensor>& images) const {
        double se = 0.0;
        std::size_t n = 0;
        for (const auto& im : images) {
            const auto rec = decode(encode(im));
            for (std::size_t i = 0; i < im.values.size(); ++i) {
                const double d = static_cast<double>(rec.values[i]) - im.values[i];
                se += d * d;
            }
            n += im.values.size();
        }
        return n ? se / static_cast<double>(n) : 0.0;
    }

private:
    CodecConfig cfg_;
    nn::ParamStore<float> params_;
    nn::Linear enc1_, enc2_, dec1_, dec2_;

    int patch_dim() const { return 3 * cfg_.factor * cfg_.factor; }

    void build_learned() {
        const int c = cfg_.channels();
        enc1_ = nn::Linear::add(params_, "codec.enc1", patch_dim(), cfg_.hidden);
        enc2_ = nn::Linear::add(params_, "codec.enc2", cfg_.hidden, c);
        dec1_ = nn::Linear::add(params_, "codec.dec1", c, cfg_.hidden);
        dec2_ = nn::Linear::add(params_, "codec.dec2", cfg_.hidden, patch_dim());
        params_.add("codec.latent_shift", 1, 1);
        params_.add("codec.latent_scale", 1, 1);
        params_["codec.latent_scale"](0, 0) = 1.0f;
        Rng rng(derive_seed(cfg_.seed, 0xC0DE));
        for (const auto* l : {&enc1_, &enc2_, &dec1_, &dec2_}) {
            auto& w = params_[l->weight];
            nn::init_truncated_normal(w, 1.0 / std::sqrt(static_cast<double>(w.cols())), rng);
        }
    }

    // (C, H, W) grid -> (H*W) x C rows, row-major over positions
    static Mat<float> to_rows(const Tensor3& t) {
        Mat<float> m(static_cast<Eigen::Index>(t.height) * t.width, t.channels);
        for (int c = 0; c < t.channels; ++c)
            for (int i = 0; i < t.height * t.width; ++i) m(i, c) = t.values[static_cast<std::size_t>(c) * t.height * t.width + i];
        return m;
    }
    static Tensor3 from_rows(const Mat<float>& m, int h, int w) {
        Tensor3 t(static_cast<int>(m.cols()), h, w);
        for (int c = 0; c < t.channels; ++c)
            for (int i = 0; i < h * w; ++i) t.values[static_cast<std::size_t>(c) * h * w + i] = m(i, c);
        return t;
    }

    Mat<float> patches_of(const std::vector<ImageTensor>& images) const {
        Eigen::Index rows = 0;
        for (const auto& im : images) rows += static_cast<Eigen::Index>(im.height / cfg_.factor) * (im.width / cfg_.factor);
        Mat<float> all(rows, patch_dim());
        Eigen::Index r = 0;
        for (const auto& im : images) {
            const Mat<float> p = to_rows(space_to_depth(im, cfg_.factor));
            all.middleRows(r, p.rows()) = p;
            r += p.rows();
        }
        return all;
    }

    Mat<float> encode_patches(const Mat<float>& x) const {
        Mat<float> z = enc2_.forward(params_, nn::silu(enc1_.forward(params_, x)));
        const float shift = params_["codec.latent_shift"](0, 0), scale = params_["codec.latent_scale"](0, 0);
        return (z.array() - shift) / scale;
    }

    Mat<float> decode_rows(const Mat<float>& z) const {
        const float shift = params_["codec.latent_shift"](0, 0), scale = params_["codec.latent_scale"](0, 0);
        const Mat<float> raw = (z.array() * scale + shift).matrix();
        return dec2_.forward(params_, nn::silu(dec1_.forward(params_, raw)));
    }

    double reconstruction_mse(const Mat<float>& x) const {
        const Mat<float> rec = decode_rows(encode_patches(x)).cwiseMax(-1.0f).cwiseMin(1.0f);
        return static_cast<double>((rec - x).squaredNorm()) / static_cast<double>(x.size());
    }

    void reconstruction_grad(const Mat<float>& x, nn::ParamStore<float>& g) const {
        const Mat<float> h1 = enc1_.forward(params_, x);
        const Mat<float> a1 = nn::silu(h1);
        const Mat<float> z = enc2_.forward(params_, a1);
        const Mat<float> h2 = dec1_.forward(params_, z);
        const Mat<float> a2 = nn::silu(h2);
        const Mat<float> rec = dec2_.forward(params_, a2);
        const Mat<float> drec = (rec - x) * (2.0f / static_cast<float>(x.size()));
        Mat<float> da2 = dec2_.backward(params_, a2, drec, &g, true);
        Mat<float> dz = dec1_.backward(params_, z, nn::silu_backward(h2, da2), &g, true);
        Mat<float> da1 = enc2_.backward(params_, a1, dz, &g, true);
        enc1_.backward(params_, x, nn::silu_backward(h1, da1), &g, false);
    }

    void fit_latent_scale(const Mat<float>& x) {
        const Mat<float> z = enc2_.forward(params_, nn::silu(enc1_.forward(params_, x)));
        const double mean = static_cast<double>(z.sum()) / static_cast<double>(z.size());
        double var = 0.0;
        for (Eigen::Index i = 0; i < z.size(); ++i) var += (z.data()[i] - mean) * (z.data()[i] - mean);
        var /= static_cast<double>(z.size());
        params_["codec.latent_shift"](0, 0) = static_cast<float>(mean);
        params_["codec.latent_scale"](0, 0) = static_cast<float>(std::sqrt(var) + 1e-6);
    }
};

}  // namespace tryon::codec
