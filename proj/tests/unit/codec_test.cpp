#include <gtest/gtest.h>

#include "tryon/codec/autoencoder.hpp"

using namespace tryon;
using codec::Codec;
using codec::CodecConfig;
using codec::CodecMode;

namespace {

ImageTensor random_image(Rng& rng, int h, int w) {
    ImageTensor im(h, w);
    for (auto& v : im.values) v = static_cast<float>(rng.uniform(-1.0, 1.0));
    return im;
}

// Smooth piecewise-constant images the learned codec can actually fit.
std::vector<ImageTensor> blocky_images(std::uint64_t seed, int n) {
    Rng rng(seed);
    std::vector<ImageTensor> out;
    for (int i = 0; i < n; ++i) {
        ImageTensor im(16, 16);
        const float base[3] = {float(rng.uniform(-1, 1)), float(rng.uniform(-1, 1)), float(rng.uniform(-1, 1))};
        const int split = static_cast<int>(rng.range(2, 14));
        for (int c = 0; c < 3; ++c)
            for (int y = 0; y < 16; ++y)
                for (int x = 0; x < 16; ++x) im.at(c, y, x) = y < split ? base[c] : -base[c];
        out.push_back(im);
    }
    return out;
}

}  // namespace

TEST(InvertibleCodec, RoundTripIsBitExact) {
    Rng rng(1);
    for (int f : {2, 4, 8}) {
        Codec c(CodecConfig{CodecMode::invertible, f});
        EXPECT_EQ(c.latent_channels(), 3 * f * f);
        for (int trial = 0; trial < 10; ++trial) {
            const auto x = random_image(rng, 16, 32);
            const auto z = c.encode(x);
            EXPECT_EQ(z.height, 16 / f);
            EXPECT_EQ(z.width, 32 / f);
            EXPECT_EQ(c.decode(z), x);
        }
    }
}

TEST(InvertibleCodec, ZeroLatentDecodesToZeroImage) {
    Codec c(CodecConfig{CodecMode::invertible, 4});
    EXPECT_EQ(c.decode(LatentTensor(48, 2, 4)), ImageTensor(8, 16, 0.0f));
}

TEST(Codec, RejectsBadShapesAndConfigs) {
    Codec c(CodecConfig{CodecMode::invertible, 8});
    EXPECT_THROW(c.encode(ImageTensor(12, 16)), ShapeError);
    EXPECT_THROW(c.decode(LatentTensor(16, 2, 2)), ShapeError);
    EXPECT_THROW(Codec(CodecConfig{CodecMode::invertible, 8, 16}), ValueError);
    EXPECT_THROW(codec::parse_codec_mode("vae"), ValueError);
    EXPECT_THROW(c.train(blocky_images(0, 2), {}, 10, 1e-3), ValueError);
}

TEST(LearnedCodec, ShapeChainAtFactorEight) {
    Codec c(CodecConfig{CodecMode::learned, 8});
    const auto z = c.encode(ImageTensor(64, 96));
    EXPECT_EQ(z.channels, 16);
    EXPECT_EQ(z.height, 8);
    EXPECT_EQ(z.width, 12);
    const auto x = c.decode(z);
    EXPECT_EQ(x.height, 64);
    EXPECT_EQ(x.width, 96);
    for (float v : x.values) {
        EXPECT_GE(v, -1.0f);
        EXPECT_LE(v, 1.0f);
    }
}

TEST(LearnedCodec, WidthSplitConsistencyIsExact) {
    Rng rng(2);
    Codec c(CodecConfig{CodecMode::learned, 4});
    const auto a = random_image(rng, 16, 16);
    const auto b = random_image(rng, 16, 16);
    const auto joint = c.encode(concat_width(a, b));
    const auto za = c.encode(a), zb = c.encode(b);
    EXPECT_EQ(Tensor3(joint), hconcat(za, zb));
}

TEST(LearnedCodec, TrainingReducesHeldOutError) {
    Codec c(CodecConfig{CodecMode::learned, 4, 16, 32, 3});
    const auto rep = c.train(blocky_images(10, 64), blocky_images(11, 16), 300, 3e-3);
    RecordProperty("initial_mse", std::to_string(rep.initial_heldout_mse));
    RecordProperty("final_mse", std::to_string(rep.final_heldout_mse));
    EXPECT_LT(rep.final_heldout_mse, 0.5 * rep.initial_heldout_mse);
    // standardization leaves reconstructions essentially unchanged
    EXPECT_NEAR(c.reconstruction_mse(blocky_images(11, 16)), rep.final_heldout_mse, 1e-3);
}

TEST(LearnedCodec, ZeroStepsLeavesParametersUnchanged) {
    Codec c(CodecConfig{CodecMode::learned, 4});
    const auto before = c.params();
    c.train(blocky_images(0, 4), {}, 0, 1e-3);
    EXPECT_EQ(c.params(), before);
}

TEST(LearnedCodec, SameSeedGivesIdenticalParameters) {
    Codec a(CodecConfig{CodecMode::learned, 4, 16, 32, 5});
    Codec b(CodecConfig{CodecMode::learned, 4, 16, 32, 5});
    a.train(blocky_images(1, 8), {}, 20, 1e-3);
    b.train(blocky_images(1, 8), {}, 20, 1e-3);
    EXPECT_EQ(a.params(), b.params());
}
