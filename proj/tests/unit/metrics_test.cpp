#include <gtest/gtest.h>

#include <cmath>

#include "tryon/core/rng.hpp"
#include "tryon/metrics/metrics.hpp"

using namespace tryon;
using namespace tryon::metrics;

namespace {

ImageTensor random_image(int h, int w, std::uint64_t seed) {
    Rng rng(seed);
    ImageTensor img(h, w);
    for (auto& v : img.values) v = static_cast<float>(rng.uniform(-1.0, 1.0));
    return img;
}

// Direct per-window SSIM: gathers the 11x11 neighbourhood of every pixel with
// symmetric reflection and forms the weighted moments explicitly.
double ssim_bruteforce(const ImageTensor& a, const ImageTensor& b) {
    const double sigma = 1.5;
    double w[11][11], ws = 0.0;
    for (int i = 0; i < 11; ++i)
        for (int j = 0; j < 11; ++j) ws += w[i][j] = std::exp(-((i - 5) * (i - 5) + (j - 5) * (j - 5)) / (2 * sigma * sigma));
    auto refl = [](int i, int n) {
        while (i < 0 || i >= n) i = i < 0 ? -i - 1 : 2 * n - i - 1;
        return i;
    };
    const double c1 = 1e-4, c2 = 9e-4;
    double total = 0.0;
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < a.height; ++y)
            for (int x = 0; x < a.width; ++x) {
                long double mx = 0, my = 0, xx = 0, yy = 0, xy = 0;
                for (int i = 0; i < 11; ++i)
                    for (int j = 0; j < 11; ++j) {
                        const int yy_ = refl(y + i - 5, a.height), xx_ = refl(x + j - 5, a.width);
                        const long double p = (a.at(c, yy_, xx_) + 1.0) / 2.0, q = (b.at(c, yy_, xx_) + 1.0) / 2.0;
                        const long double k = w[i][j] / ws;
                        mx += k * p;
                        my += k * q;
                        xx += k * p * p;
                        yy += k * q * q;
                        xy += k * p * q;
                    }
                const long double vx = xx - mx * mx, vy = yy - my * my, cxy = xy - mx * my;
                total += static_cast<double>(((2 * mx * my + c1) * (2 * cxy + c2)) /
                                             ((mx * mx + my * my + c1) * (vx + vy + c2)));
            }
    return total / (3.0 * a.height * a.width);
}

FeatureMatrix gaussian_features(int n, int d, double shift, std::uint64_t seed) {
    Rng rng(seed);
    FeatureMatrix f{MatD(n, d), "synthetic"};
    for (Eigen::Index i = 0; i < f.values.size(); ++i) f.values.data()[i] = rng.normal() + shift;
    return f;
}

double kid_bruteforce(const FeatureMatrix& a, const FeatureMatrix& b) {
    const int m = static_cast<int>(a.rows()), n = static_cast<int>(b.rows());
    const int d = static_cast<int>(a.values.cols());
    auto k = [d](const Eigen::RowVectorXd& x, const Eigen::RowVectorXd& y) {
        double dot = 0.0;
        for (int i = 0; i < d; ++i) dot += x(i) * y(i);
        const double base = dot / d + 1.0;
        return base * base * base;
    };
    double xx = 0, yy = 0, xy = 0;
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j)
            if (i != j) xx += k(a.values.row(i), a.values.row(j));
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            if (i != j) yy += k(b.values.row(i), b.values.row(j));
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) xy += k(a.values.row(i), b.values.row(j));
    return xx / (m * (m - 1.0)) + yy / (n * (n - 1.0)) - 2.0 * xy / (double(m) * n);
}

}  // namespace

TEST(Ssim, MatchesBruteforceWindowOn8x8) {
    const auto a = random_image(8, 8, 1), b = random_image(8, 8, 2);
    EXPECT_NEAR(ssim(a, b), ssim_bruteforce(a, b), 1e-10);
    EXPECT_NEAR(ssim(a, a), ssim_bruteforce(a, a), 1e-10);
}

TEST(Ssim, MatchesBruteforceOnNonSquare) {
    const auto a = random_image(13, 6, 3), b = random_image(13, 6, 4);
    EXPECT_NEAR(ssim(a, b), ssim_bruteforce(a, b), 1e-10);
}

TEST(Ssim, IdentityIsOneAndInversionIsLow) {
    const auto a = random_image(32, 24, 5);
    EXPECT_NEAR(ssim(a, a), 1.0, 1e-12);
    ImageTensor inv = a;
    for (auto& v : inv.values) v = -v;  // 1 - x in [0, 1]
    EXPECT_LT(ssim(a, inv), 0.5);
}

TEST(Ssim, RejectsShapeMismatch) {
    EXPECT_THROW(ssim(random_image(8, 8, 1), random_image(8, 9, 1)), ShapeError);
}

TEST(Ssim, ReflectIndexIsSymmetric) {
    EXPECT_EQ(reflect_index(-1, 5), 0);
    EXPECT_EQ(reflect_index(-2, 5), 1);
    EXPECT_EQ(reflect_index(5, 5), 4);
    EXPECT_EQ(reflect_index(6, 5), 3);
    EXPECT_EQ(reflect_index(12, 5), 2);
    EXPECT_EQ(reflect_index(3, 1), 0);
}

TEST(Fid, SelfDistanceIsZero) {
    const auto a = gaussian_features(200, 8, 0.0, 7);
    EXPECT_NEAR(fid(a, a), 0.0, 1e-6);
}

TEST(Fid, OneDimensionalUnitShift) {
    // N(0,1) vs N(1,1): mean term 1, covariance term 0.
    const auto a = gaussian_features(10000, 1, 0.0, 11), b = gaussian_features(10000, 1, 1.0, 12);
    EXPECT_NEAR(fid(a, b), 1.0, 0.05);
}

TEST(Fid, MatchesClosedFormForDiagonalCovariances) {
    // Scaled copies: Sa = I, Sb = 4 I (exactly, up to sample estimation shared by both).
    auto a = gaussian_features(500, 4, 0.0, 13);
    FeatureMatrix b = a;
    b.values *= 2.0;
    const Eigen::RowVectorXd ma = a.values.colwise().mean();
    const MatD ca = a.values.rowwise() - ma;
    const MatD sa = ca.transpose() * ca / 499.0;
    // Tr(Sa + 4Sa - 2*2Sa) = Tr(Sa); means scale by 2.
    EXPECT_NEAR(fid(a, b), ma.squaredNorm() + sa.trace(), 1e-8);
}

TEST(Fid, NonNegativeAndSymmetric) {
    const auto a = gaussian_features(50, 16, 0.0, 14), b = gaussian_features(60, 16, 0.3, 15);
    EXPECT_GE(fid(a, b), 0.0);
    EXPECT_NEAR(fid(a, b), fid(b, a), 1e-8);
}

TEST(Fid, RejectsMixedExtractors) {
    auto a = gaussian_features(10, 4, 0.0, 1), b = gaussian_features(10, 4, 0.0, 2);
    b.extractor_id = "other";
    EXPECT_THROW(fid(a, b), ValueError);
    EXPECT_THROW(kid(a, b), ValueError);
}

TEST(Kid, MatchesBruteforceOracle) {
    const auto a = gaussian_features(16, 5, 0.0, 21), b = gaussian_features(16, 5, 0.5, 22);
    EXPECT_NEAR(kid(a, b), kid_bruteforce(a, b), 1e-10);
    const auto c = gaussian_features(11, 5, 0.0, 23);
    EXPECT_NEAR(kid(a, c), kid_bruteforce(a, c), 1e-10);
}

TEST(Kid, NullMeanWithinTwoStandardErrors) {
    std::vector<double> v;
    for (int r = 0; r < 100; ++r)
        v.push_back(kid(gaussian_features(32, 8, 0.0, 1000 + 2 * r), gaussian_features(32, 8, 0.0, 1001 + 2 * r)));
    double mean = 0.0;
    for (double x : v) mean += x / v.size();
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean) / (v.size() - 1);
    EXPECT_LE(std::abs(mean), 2.0 * std::sqrt(var / v.size()));
}

TEST(Kid, DetectsShift) {
    const auto a = gaussian_features(64, 8, 0.0, 31), b = gaussian_features(64, 8, 1.0, 32);
    EXPECT_GT(kid(a, b), 0.1);
}

TEST(MaskedError, ConstantOffsetGivesClosedForm) {
    auto gt = random_image(16, 12, 41);
    for (auto& v : gt.values) v = std::clamp(v, -0.7f, 0.7f);
    MaskTensor m(16, 12);
    for (int y = 4; y < 12; ++y)
        for (int x = 2; x < 9; ++x) m.at(0, y, x) = 1.0f;
    ImageTensor pred = gt;
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < 16; ++y)
            for (int x = 0; x < 12; ++x) pred.at(c, y, x) += m.at(0, y, x) > 0 ? 0.2f : 0.9f;
    const auto e = masked_error(pred, gt, m);  // 0.2 in [-1,1] is 0.1 in [0,1]
    EXPECT_NEAR(e.mse, 0.01, 1e-7);
    EXPECT_NEAR(e.psnr, 20.0, 1e-4);
}

TEST(MaskedError, IdenticalGivesSentinel) {
    const auto gt = random_image(8, 8, 42);
    MaskTensor m(8, 8, 1.0f);
    const auto e = masked_error(gt, gt, m);
    EXPECT_EQ(e.mse, 0.0);
    EXPECT_EQ(e.psnr, kPsnrSentinel);
    EXPECT_THROW(masked_error(gt, gt, MaskTensor(8, 8)), ValueError);
}

TEST(Features, DeterministicAndIdStable) {
    const FeatureExtractor a(64, 0), b(64, 0), c(64, 1);
    EXPECT_EQ(a.id(), b.id());
    EXPECT_NE(a.id(), c.id());
    const auto img = random_image(64, 48, 50);
    EXPECT_EQ(a.features(img), b.features(img));
    EXPECT_EQ(a.features(img).size(), 64);
}

TEST(Features, ConstantImagesGiveIdenticalRows) {
    const FeatureExtractor fx(32, 0);
    const auto f = fx.extract({ImageTensor(16, 16, 0.3f), ImageTensor(16, 16, 0.3f)});
    EXPECT_EQ(f.values.row(0), f.values.row(1));
}

TEST(Features, SeparateColourClasses) {
    const FeatureExtractor fx(64, 0);
    std::vector<ImageTensor> red, blue;
    Rng rng(60);
    for (int i = 0; i < 10; ++i) {
        ImageTensor r(32, 24), b(32, 24);
        for (int y = 0; y < 32; ++y)
            for (int x = 0; x < 24; ++x) {
                const float n = static_cast<float>(rng.uniform(-0.1, 0.1));
                r.at(0, y, x) = 0.8f + n, r.at(1, y, x) = -0.8f, r.at(2, y, x) = -0.8f;
                b.at(0, y, x) = -0.8f, b.at(1, y, x) = -0.8f, b.at(2, y, x) = 0.8f + n;
            }
        red.push_back(r);
        blue.push_back(b);
    }
    const auto fr = fx.extract(red), fb = fx.extract(blue);
    const Eigen::RowVectorXd mr = fr.values.colwise().mean(), mb = fb.values.colwise().mean();
    double within = 0.0;
    for (int i = 0; i < 10; ++i) within = std::max({within, (fr.values.row(i) - mr).norm(), (fb.values.row(i) - mb).norm()});
    EXPECT_GT((mr - mb).norm(), 5.0 * within);
}

TEST(Evaluate, ReportsAndWarns) {
    const FeatureExtractor fx(64, 0);
    std::vector<ImageTensor> p, g;
    std::vector<MaskTensor> m;
    std::vector<std::string> ids;
    for (int i = 0; i < 4; ++i) {
        g.push_back(random_image(16, 16, 70 + i));
        p.push_back(g.back());
        m.emplace_back(16, 16, 1.0f);
        ids.push_back("s" + std::to_string(i));
    }
    const auto r = evaluate(p, g, m, ids, fx);
    EXPECT_NEAR(r.ssim, 1.0, 1e-12);
    EXPECT_EQ(r.masked_psnr, kPsnrSentinel);
    EXPECT_EQ(r.proxy_perceptual, 0.0);
    EXPECT_NEAR(r.kid, kid(fx.extract(p), fx.extract(g)), 1e-15);
    EXPECT_EQ(r.rows.size(), 4u);
    ASSERT_FALSE(r.warnings.empty());
    EXPECT_NE(r.warnings.front().find("below d_feat"), std::string::npos);
    EXPECT_EQ(r.to_json().at("extractor_id"), fx.id());
}
