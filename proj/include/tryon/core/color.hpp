#pragma once

// HSV helpers and the named hue palette shared by the synthetic generator
// and the hue-transfer evaluation.

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <string_view>

#include "tryon/core/tensor.hpp"

namespace tryon {

struct Rgb {
    double r = 0, g = 0, b = 0;  // [0, 1]
};

struct Hsv {
    double h = 0, s = 0, v = 0;  // h in degrees [0, 360)
};

inline Rgb hsv_to_rgb(Hsv c) {
    const double h = std::fmod(std::fmod(c.h, 360.0) + 360.0, 360.0) / 60.0;
    const double chroma = c.v * c.s;
    const double x = chroma * (1.0 - std::abs(std::fmod(h, 2.0) - 1.0));
    const double m = c.v - chroma;
    double r = 0, g = 0, b = 0;
    switch (static_cast<int>(h)) {
        case 0: r = chroma, g = x; break;
        case 1: r = x, g = chroma; break;
        case 2: g = chroma, b = x; break;
        case 3: g = x, b = chroma; break;
        case 4: r = x, b = chroma; break;
        default: r = chroma, b = x; break;
    }
    return {r + m, g + m, b + m};
}

inline Hsv rgb_to_hsv(Rgb c) {
    const double mx = std::max({c.r, c.g, c.b}), mn = std::min({c.r, c.g, c.b});
    const double d = mx - mn;
    Hsv out{0.0, mx > 0.0 ? d / mx : 0.0, mx};
    if (d <= 0.0) return out;
    if (mx == c.r)
        out.h = 60.0 * std::fmod((c.g - c.b) / d, 6.0);
    else if (mx == c.g)
        out.h = 60.0 * ((c.b - c.r) / d + 2.0);
    else
        out.h = 60.0 * ((c.r - c.g) / d + 4.0);
    if (out.h < 0.0) out.h += 360.0;
    return out;
}

struct PaletteColor {
    std::string_view name;
    double hue;
};

inline constexpr std::array<PaletteColor, 6> kPalette{{
    {"red", 0.0},
    {"yellow", 55.0},
    {"green", 120.0},
    {"cyan", 180.0},
    {"blue", 230.0},
    {"magenta", 300.0},
}};

/// Pixels below this saturation (skin, background, grays) carry no hue vote.
inline constexpr double kHueMinSaturation = 0.35;
inline constexpr double kHueMinValue = 0.2;

inline double hue_distance(double a, double b) {
    const double d = std::abs(std::fmod(a - b, 360.0));
    return std::min(d, 360.0 - d);
}

inline int nearest_palette_index(double hue) {
    int best = 0;
    for (int i = 1; i < static_cast<int>(kPalette.size()); ++i)
        if (hue_distance(hue, kPalette[i].hue) < hue_distance(hue, kPalette[best].hue)) best = i;
    return best;
}

/// Pixel (y, x) of a [-1, 1] image as RGB in [0, 1].
inline Rgb pixel_rgb(const ImageTensor& img, int y, int x) {
    auto u = [&](int c) { return std::clamp((static_cast<double>(img.at(c, y, x)) + 1.0) * 0.5, 0.0, 1.0); };
    return {u(0), u(1), u(2)};
}

/// Majority palette bucket over saturated pixels (restricted to `region` when
/// given); nullopt when no pixel is saturated enough to vote.
inline std::optional<int> dominant_palette_index(const ImageTensor& img, const MaskTensor* region = nullptr) {
    std::array<long, kPalette.size()> votes{};
    long total = 0;
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            if (region && region->at(0, y, x) == 0.0f) continue;
            const Hsv h = rgb_to_hsv(pixel_rgb(img, y, x));
            if (h.s < kHueMinSaturation || h.v < kHueMinValue) continue;
            ++votes[static_cast<std::size_t>(nearest_palette_index(h.h))];
            ++total;
        }
    if (total == 0) return std::nullopt;
    return static_cast<int>(std::max_element(votes.begin(), votes.end()) - votes.begin());
}

}  // namespace tryon
