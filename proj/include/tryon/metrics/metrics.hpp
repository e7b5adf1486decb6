#pragma once

// Image metrics. Images are [-1, 1] tensors and are mapped to [0, 1] first.
//   ssim         11x11 Gaussian window (sigma 1.5), K1 0.01, K2 0.03, range 1,
//                window centered on every pixel with symmetric border reflection,
//                mean over pixels and channels
//   fid / kid    on features of a fixed, seeded, never-trained conv network
//   masked_error MSE / PSNR over masked pixels
//   proxy_perceptual  mean L2 distance between paired feature rows; a stand-in
//                for a learned perceptual metric, not comparable to one

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <cstring>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "tryon/core/error.hpp"
#include "tryon/core/rng.hpp"
#include "tryon/core/tensor.hpp"

namespace tryon::metrics {

using MatD = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline constexpr double kPsnrSentinel = 100.0;

inline double to_unit(float v) { return (static_cast<double>(v) + 1.0) * 0.5; }

/// Index into [0, n) with symmetric reflection: -1 -> 0, n -> n-1.
inline int reflect_index(int i, int n) {
    if (n == 1) return 0;
    const int period = 2 * n;
    i %= period;
    if (i < 0) i += period;
    return i < n ? i : period - 1 - i;
}

/// Normalized 1-D Gaussian taps of length 2*radius+1.
inline std::vector<double> gaussian_taps(int radius = 5, double sigma = 1.5) {
    std::vector<double> w(static_cast<std::size_t>(2 * radius + 1));
    double s = 0.0;
    for (int i = -radius; i <= radius; ++i) s += w[static_cast<std::size_t>(i + radius)] = std::exp(-0.5 * i * i / (sigma * sigma));
    for (auto& v : w) v /= s;
    return w;
}

struct SsimConstants {
    static constexpr double k1 = 0.01, k2 = 0.03, range = 1.0;
    static constexpr double c1 = (k1 * range) * (k1 * range);
    static constexpr double c2 = (k2 * range) * (k2 * range);
};

namespace detail {

// Separable Gaussian filter of a (h x w) plane with symmetric borders.
inline MatD blur(const MatD& x, const std::vector<double>& taps) {
    const int r = static_cast<int>(taps.size() / 2);
    const int h = static_cast<int>(x.rows()), w = static_cast<int>(x.cols());
    MatD tmp(h, w), out(h, w);
    for (int y = 0; y < h; ++y)
        for (int c = 0; c < w; ++c) {
            double s = 0.0;
            for (int k = -r; k <= r; ++k) s += taps[static_cast<std::size_t>(k + r)] * x(y, reflect_index(c + k, w));
            tmp(y, c) = s;
        }
    for (int y = 0; y < h; ++y)
        for (int c = 0; c < w; ++c) {
            double s = 0.0;
            for (int k = -r; k <= r; ++k) s += taps[static_cast<std::size_t>(k + r)] * tmp(reflect_index(y + k, h), c);
            out(y, c) = s;
        }
    return out;
}

inline MatD unit_plane(const ImageTensor& img, int c) {
    MatD m(img.height, img.width);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) m(y, x) = to_unit(img.at(c, y, x));
    return m;
}

}  // namespace detail

inline double ssim(const ImageTensor& a, const ImageTensor& b) {
    require(a.same_shape(b), "ssim: shape ", a.shape_string(), " vs ", b.shape_string());
    const auto taps = gaussian_taps();
    using K = SsimConstants;
    double total = 0.0;
    for (int c = 0; c < 3; ++c) {
        const MatD x = detail::unit_plane(a, c), y = detail::unit_plane(b, c);
        const MatD mx = detail::blur(x, taps), my = detail::blur(y, taps);
        const MatD sxx = detail::blur(x.cwiseProduct(x), taps) - mx.cwiseProduct(mx);
        const MatD syy = detail::blur(y.cwiseProduct(y), taps) - my.cwiseProduct(my);
        const MatD sxy = detail::blur(x.cwiseProduct(y), taps) - mx.cwiseProduct(my);
        const auto num = (2.0 * mx.array() * my.array() + K::c1) * (2.0 * sxy.array() + K::c2);
        const auto den = (mx.array().square() + my.array().square() + K::c1) * (sxx.array() + syy.array() + K::c2);
        total += (num / den).mean();
    }
    return total / 3.0;
}

// ---------------------------------------------------------------- features

struct FeatureMatrix {
    MatD values;  // n x d_feat
    std::string extractor_id;

    Eigen::Index rows() const { return values.rows(); }
};

/// Two stride-2 3x3 convolutions with ReLU, per-channel spatial mean and
/// standard deviation, then a fixed linear map to d_feat. Weights are drawn
/// once from the seed and never trained.
class FeatureExtractor {
public:
    explicit FeatureExtractor(int d_feat = 64, std::uint64_t seed = 0) : d_feat_(d_feat), seed_(seed) {
        require<ValueError>(d_feat >= 1, "d_feat must be >= 1");
        Rng rng(derive_seed(seed, 0xFEA7));
        auto fill = [&](MatD& m, int rows, int cols, double std) {
            m.resize(rows, cols);
            for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal() * std;
        };
        fill(w1_, kC1, 3 * 9, std::sqrt(2.0 / 27.0));
        fill(w2_, kC2, kC1 * 9, std::sqrt(2.0 / (kC1 * 9.0)));
        fill(proj_, d_feat_, 2 * kC2, 1.0 / std::sqrt(2.0 * kC2));
        std::uint64_t h = 0xcbf29ce484222325ULL;
        for (const MatD* m : {&w1_, &w2_, &proj_})
            for (Eigen::Index i = 0; i < m->size(); ++i) {
                std::uint64_t bits;
                std::memcpy(&bits, m->data() + i, sizeof bits);
                h = (h ^ bits) * 0x100000001b3ULL;
            }
        std::ostringstream id;
        id << "randconv2-c" << kC1 << "x" << kC2 << "-d" << d_feat_ << "-s" << seed_ << "-" << std::hex
           << std::setw(16) << std::setfill('0') << h;
        id_ = id.str();
    }

    const std::string& id() const noexcept { return id_; }
    int d_feat() const noexcept { return d_feat_; }

    Eigen::RowVectorXd features(const ImageTensor& img) const {
        MatD x(3, static_cast<Eigen::Index>(img.height) * img.width);
        for (int c = 0; c < 3; ++c)
            for (int i = 0; i < img.height * img.width; ++i)
                x(c, i) = to_unit(img.values[static_cast<std::size_t>(c) * img.height * img.width + i]);
        int h = img.height, w = img.width;
        MatD a1 = conv(x, h, w, w1_);
        const MatD a2 = conv(a1, h, w, w2_);
        Eigen::VectorXd pooled(2 * kC2);
        for (int c = 0; c < kC2; ++c) {
            const double mean = a2.row(c).mean();
            pooled(c) = mean;
            pooled(kC2 + c) = std::sqrt(std::max(0.0, a2.row(c).array().square().mean() - mean * mean));
        }
        return (proj_ * pooled).transpose();
    }

    FeatureMatrix extract(const std::vector<ImageTensor>& images) const {
        FeatureMatrix f{MatD(static_cast<Eigen::Index>(images.size()), d_feat_), id_};
        for (std::size_t i = 0; i < images.size(); ++i) {
            require(images[i].same_shape(images.front()), "extract_features: mixed shapes ",
                    images.front().shape_string(), " vs ", images[i].shape_string());
            f.values.row(static_cast<Eigen::Index>(i)) = features(images[i]);
        }
        return f;
    }

private:
    static constexpr int kC1 = 16, kC2 = 32;
    int d_feat_;
    std::uint64_t seed_;
    MatD w1_, w2_, proj_;
    std::string id_;

    // 3x3, stride 2, zero padding 1, ReLU. x is (C, h*w); h, w updated in place.
    static MatD conv(const MatD& x, int& h, int& w, const MatD& weight) {
        const int cin = static_cast<int>(x.rows());
        const int oh = (h + 1) / 2, ow = (w + 1) / 2;
        MatD cols(cin * 9, static_cast<Eigen::Index>(oh) * ow);
        for (int c = 0; c < cin; ++c)
            for (int ky = 0; ky < 3; ++ky)
                for (int kx = 0; kx < 3; ++kx)
                    for (int oy = 0; oy < oh; ++oy)
                        for (int ox = 0; ox < ow; ++ox) {
                            const int iy = oy * 2 + ky - 1, ix = ox * 2 + kx - 1;
                            cols((c * 3 + ky) * 3 + kx, oy * ow + ox) =
                                (iy < 0 || ix < 0 || iy >= h || ix >= w) ? 0.0 : x(c, iy * w + ix);
                        }
        h = oh;
        w = ow;
        return (weight * cols).cwiseMax(0.0);
    }
};

inline void check_same_extractor(const FeatureMatrix& a, const FeatureMatrix& b) {
    require<ValueError>(a.extractor_id == b.extractor_id, "feature matrices come from different extractors: ",
                        a.extractor_id, " vs ", b.extractor_id);
    require(a.values.cols() == b.values.cols(), "feature dims differ: ", a.values.cols(), " vs ", b.values.cols());
}

namespace detail {

inline MatD covariance(const MatD& x, const Eigen::RowVectorXd& mean) {
    const MatD c = x.rowwise() - mean;
    return (c.transpose() * c) / static_cast<double>(x.rows() - 1);
}

/// Symmetric PSD square root with negative eigenvalues clipped to 0.
inline MatD psd_sqrt(const MatD& m) {
    Eigen::SelfAdjointEigenSolver<MatD> es(0.5 * (m + m.transpose()));
    const Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace detail

/// |mu_a - mu_b|^2 + Tr(S_a + S_b - 2 (S_a S_b)^(1/2)). The trace of the
/// product root is taken as Tr sqrt(S_a^(1/2) S_b S_a^(1/2)), which is
/// symmetric and has the same eigenvalues. Results in [-1e-6, 0) are clamped to 0.
inline double fid(const FeatureMatrix& a, const FeatureMatrix& b) {
    check_same_extractor(a, b);
    require<ValueError>(a.rows() >= 2 && b.rows() >= 2, "fid needs at least 2 samples per set");
    const Eigen::RowVectorXd ma = a.values.colwise().mean(), mb = b.values.colwise().mean();
    const MatD sa = detail::covariance(a.values, ma), sb = detail::covariance(b.values, mb);
    const MatD ra = detail::psd_sqrt(sa);
    const MatD inner = ra * sb * ra;
    Eigen::SelfAdjointEigenSolver<MatD> es(0.5 * (inner + inner.transpose()), Eigen::EigenvaluesOnly);
    const double tr_root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
    const double v = (ma - mb).squaredNorm() + sa.trace() + sb.trace() - 2.0 * tr_root;
    return (v < 0.0 && v > -1e-6) ? 0.0 : v;
}

inline double kid_kernel(const Eigen::RowVectorXd& x, const Eigen::RowVectorXd& y) {
    return std::pow(x.dot(y) / static_cast<double>(x.size()) + 1.0, 3);
}

/// Unbiased MMD^2 with the cubic polynomial kernel.
inline double kid(const FeatureMatrix& a, const FeatureMatrix& b) {
    check_same_extractor(a, b);
    const double m = static_cast<double>(a.rows()), n = static_cast<double>(b.rows());
    require<ValueError>(m >= 2 && n >= 2, "kid needs at least 2 samples per set");
    const double d = static_cast<double>(a.values.cols());
    auto kern = [d](const MatD& x, const MatD& y) -> MatD {
        return ((x * y.transpose()).array() / d + 1.0).cube().matrix();
    };
    const MatD kaa = kern(a.values, a.values), kbb = kern(b.values, b.values), kab = kern(a.values, b.values);
    const double saa = kaa.sum() - kaa.trace(), sbb = kbb.sum() - kbb.trace();
    return saa / (m * (m - 1)) + sbb / (n * (n - 1)) - 2.0 * kab.sum() / (m * n);
}

struct MaskedError {
    double mse = 0.0;
    double psnr = kPsnrSentinel;
};

inline MaskedError masked_error(const ImageTensor& pred, const ImageTensor& gt, const MaskTensor& mask) {
    require(pred.same_shape(gt), "masked_error: ", pred.shape_string(), " vs ", gt.shape_string());
    require(mask.height == gt.height && mask.width == gt.width, "masked_error: mask ", mask.shape_string());
    double se = 0.0;
    long n = 0;
    for (int y = 0; y < gt.height; ++y)
        for (int x = 0; x < gt.width; ++x) {
            if (mask.at(0, y, x) == 0.0f) continue;
            for (int c = 0; c < 3; ++c) {
                const double d = to_unit(pred.at(c, y, x)) - to_unit(gt.at(c, y, x));
                se += d * d;
            }
            n += 3;
        }
    require<ValueError>(n > 0, "masked_error: empty mask");
    MaskedError e;
    e.mse = se / static_cast<double>(n);
    e.psnr = e.mse > 0.0 ? std::min(kPsnrSentinel, 10.0 * std::log10(1.0 / e.mse)) : kPsnrSentinel;
    return e;
}

/// Mean L2 distance between paired feature rows.
inline double proxy_perceptual(const FeatureMatrix& a, const FeatureMatrix& b) {
    check_same_extractor(a, b);
    require(a.rows() == b.rows() && a.rows() > 0, "proxy_perceptual: need equal, non-zero row counts");
    return (a.values - b.values).rowwise().norm().mean();
}

struct SampleRow {
    std::string id;
    double ssim = 0.0;
    double masked_mse = 0.0;
    double masked_psnr = 0.0;
};

struct MetricReport {
    double ssim = 0.0;
    double fid = 0.0;
    double kid = 0.0;
    double masked_mse = 0.0;
    double masked_psnr = 0.0;
    double proxy_perceptual = 0.0;
    std::size_t n = 0;
    std::string extractor_id;
    std::vector<std::string> warnings;
    std::vector<SampleRow> rows;

    nlohmann::json to_json() const {
        return {{"ssim", ssim},
                {"fid", fid},
                {"kid", kid},
                {"masked_mse", masked_mse},
                {"masked_psnr", masked_psnr},
                {"proxy_perceptual", proxy_perceptual},
                {"proxy_perceptual_note", "feature-space L2 under the fixed random extractor; not LPIPS"},
                {"n", n},
                {"extractor_id", extractor_id},
                {"warnings", warnings}};
    }

    std::string rows_csv() const {
        std::ostringstream o;
        o << std::setprecision(17) << "id,ssim,masked_mse,masked_psnr\n";
        for (const auto& r : rows) o << r.id << ',' << r.ssim << ',' << r.masked_mse << ',' << r.masked_psnr << '\n';
        return o.str();
    }
};

/// Paired evaluation; `ids` name the CSV rows.
inline MetricReport evaluate(const std::vector<ImageTensor>& pred, const std::vector<ImageTensor>& gt,
                             const std::vector<MaskTensor>& masks, const std::vector<std::string>& ids,
                             const FeatureExtractor& fx) {
    require<ValueError>(!pred.empty(), "evaluate: no pairs");
    require(pred.size() == gt.size() && gt.size() == masks.size() && masks.size() == ids.size(),
            "evaluate: list sizes differ");
    MetricReport r;
    r.n = pred.size();
    r.extractor_id = fx.id();
    for (std::size_t i = 0; i < pred.size(); ++i) {
        SampleRow row{ids[i], ssim(pred[i], gt[i]), 0.0, kPsnrSentinel};
        if (masks[i].sum() > 0.0) {
            const auto e = masked_error(pred[i], gt[i], masks[i]);
            row.masked_mse = e.mse;
            row.masked_psnr = e.psnr;
        } else {
            r.warnings.push_back("sample " + ids[i] + ": empty mask, masked error not computed");
        }
        r.ssim += row.ssim / static_cast<double>(r.n);
        r.masked_mse += row.masked_mse / static_cast<double>(r.n);
        r.masked_psnr += row.masked_psnr / static_cast<double>(r.n);
        r.rows.push_back(row);
    }
    const auto fp = fx.extract(pred), fg = fx.extract(gt);
    if (static_cast<int>(r.n) < fx.d_feat())
        r.warnings.push_back("n = " + std::to_string(r.n) + " is below d_feat = " + std::to_string(fx.d_feat()) +
                             "; fid is rank-deficient");
    if (r.n >= 2) {
        r.fid = fid(fp, fg);
        r.kid = kid(fp, fg);
    } else {
        r.warnings.push_back("fid/kid need at least 2 pairs");
    }
    r.proxy_perceptual = proxy_perceptual(fp, fg);
    return r;
}

}  // namespace tryon::metrics
