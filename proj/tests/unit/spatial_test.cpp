#include <gtest/gtest.h>

#include "tryon/core/rng.hpp"
#include "tryon/core/spatial.hpp"

using namespace tryon;

namespace {

Tensor3 random_tensor(Rng& rng, int c, int h, int w) {
    Tensor3 t(c, h, w);
    for (auto& v : t.values) v = static_cast<float>(rng.uniform(-1.0, 1.0));
    return t;
}

ImageTensor random_image(Rng& rng, int h, int w) { return ImageTensor(random_tensor(rng, 3, h, w)); }

MaskTensor random_mask(Rng& rng, int h, int w) {
    MaskTensor m(h, w);
    for (auto& v : m.values) v = rng.uniform() < 0.3 ? 1.0f : 0.0f;
    return m;
}

}  // namespace

TEST(ConcatWidth, DoublesWidthAndKeepsHalves) {
    Rng rng(1);
    const auto g = random_image(rng, 16, 12);
    const auto p = random_image(rng, 16, 12);
    const auto c = concat_width(g, p);
    EXPECT_EQ(c.channels, 3);
    EXPECT_EQ(c.height, 16);
    EXPECT_EQ(c.width, 24);
    EXPECT_EQ(crop_left_half(c), g);
    EXPECT_EQ(crop_right_half(c), p);
}

TEST(ConcatWidth, IdenticalInputsGiveIdenticalHalves) {
    Rng rng(2);
    const auto x = random_image(rng, 8, 8);
    const auto c = concat_width(x, x);
    for (int ch = 0; ch < 3; ++ch)
        for (int y = 0; y < 8; ++y)
            for (int col = 0; col < 8; ++col) EXPECT_EQ(c.at(ch, y, col), c.at(ch, y, col + 8));
}

TEST(ConcatWidth, RejectsShapeMismatch) {
    EXPECT_THROW(concat_width(ImageTensor(8, 8), ImageTensor(8, 16)), ShapeError);
}

TEST(PairMask, GarmentSideIsZeroAndMassIsConserved) {
    Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        const auto m = random_mask(rng, 16, 12);
        const auto pm = build_pair_mask(m);
        ASSERT_EQ(pm.width, 24);
        for (int y = 0; y < 16; ++y)
            for (int x = 0; x < 12; ++x) {
                EXPECT_EQ(pm.at(0, y, x), 0.0f);
                EXPECT_EQ(pm.at(0, y, x + 12), m.at(0, y, x));
            }
        EXPECT_EQ(pm.sum(), m.sum());
    }
    EXPECT_EQ(build_pair_mask(MaskTensor(4, 4)).sum(), 0.0);
}

TEST(PairMask, RejectsNonBinaryValues) {
    Tensor3 t(1, 2, 2, 0.0f);
    t.values[1] = 0.5f;
    EXPECT_THROW(MaskTensor{t}, ValueError);
}

TEST(ApplyMask, ZeroesMaskedRegionOnly) {
    Rng rng(4);
    const auto img = random_image(rng, 8, 8);
    const auto m = random_mask(rng, 8, 8);
    const auto out = apply_mask(img, m);
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < 8; ++y)
            for (int x = 0; x < 8; ++x)
                EXPECT_EQ(out.at(c, y, x), m.at(0, y, x) == 1.0f ? 0.0f : img.at(c, y, x));
    EXPECT_EQ(apply_mask(out, m), out);  // idempotent
}

TEST(ApplyMask, DegenerateMasks) {
    Rng rng(5);
    const auto img = random_image(rng, 8, 8);
    EXPECT_EQ(apply_mask(img, MaskTensor(8, 8, 0.0f)), img);
    EXPECT_EQ(apply_mask(img, MaskTensor(8, 8, 1.0f)), ImageTensor(8, 8, 0.0f));
    EXPECT_THROW(apply_mask(img, MaskTensor(8, 4)), ShapeError);
}

TEST(SpaceToDepth, RoundTripsForAllFactors) {
    Rng rng(6);
    for (int r : {2, 4, 8}) {
        for (int trial = 0; trial < 10; ++trial) {
            const auto x = random_tensor(rng, 1 + trial % 3, 16, 32);
            const auto y = space_to_depth(x, r);
            EXPECT_EQ(y.channels, x.channels * r * r);
            EXPECT_EQ(y.height, 16 / r);
            EXPECT_EQ(y.width, 32 / r);
            EXPECT_EQ(depth_to_space(y, r), x);
        }
    }
}

TEST(SpaceToDepth, OrderingIsRowMajorWithinBlock) {
    Tensor3 x(1, 2, 2, std::vector<float>{1, 2, 3, 4});
    const auto y = space_to_depth(x, 2);
    ASSERT_EQ(y.channels, 4);
    EXPECT_EQ(y.values, (std::vector<float>{1, 2, 3, 4}));
}

TEST(SpaceToDepth, ConstantStaysConstantAndMaskGoesTo64Channels) {
    const Tensor3 x(1, 64, 96, 1.0f);
    const auto y = space_to_depth(x, 8);
    EXPECT_EQ(y.channels, 64);
    EXPECT_EQ(y.height, 8);
    EXPECT_EQ(y.width, 12);
    for (float v : y.values) EXPECT_EQ(v, 1.0f);
    EXPECT_THROW(space_to_depth(Tensor3(1, 10, 16), 8), ShapeError);
}

TEST(Pack, ShapeChainMatchesPacking) {
    // 16-channel latent of a 64x96 canvas at f=8, and the 64-channel mask grid.
    const LatentTensor lat(16, 8, 12);
    const auto p = pack(lat);
    EXPECT_EQ(p.token_dim, 64);
    EXPECT_EQ(p.token_count, 4 * 6);
    const auto pm = pack(space_to_depth(Tensor3(1, 64, 96), 8));
    EXPECT_EQ(pm.token_dim, 256);
    EXPECT_EQ(pm.token_count, 24);
}

TEST(Pack, RoundTripAndOrdering) {
    Rng rng(7);
    for (int trial = 0; trial < 20; ++trial) {
        const auto x = random_tensor(rng, 4, 6, 10);
        EXPECT_EQ(Tensor3(unpack(pack(x))), x);
    }
    Tensor3 x(1, 2, 4, std::vector<float>{1, 2, 3, 4, 5, 6, 7, 8});
    const auto p = pack(x);
    ASSERT_EQ(p.token_count, 2);
    EXPECT_EQ(p.values, (std::vector<float>{1, 2, 5, 6, 3, 4, 7, 8}));
    EXPECT_THROW(pack(Tensor3(4, 3, 4)), ShapeError);
}

TEST(Crop, RejectsOddWidth) {
    EXPECT_THROW(crop_right_half(ImageTensor(4, 1023)), ShapeError);
    const auto out = crop_right_half(ImageTensor(4, 16));
    EXPECT_EQ(out.width, 8);
}

TEST(ConcatFeatures, StacksChannels) {
    Rng rng(8);
    const auto a = pack(random_tensor(rng, 2, 4, 4));
    const auto b = pack(random_tensor(rng, 3, 4, 4));
    const auto c = concat_features({&a, &b});
    EXPECT_EQ(c.token_dim, 20);
    for (int t = 0; t < c.token_count; ++t) {
        EXPECT_EQ(c.at(t, 0), a.at(t, 0));
        EXPECT_EQ(c.at(t, 8), b.at(t, 0));
    }
}
