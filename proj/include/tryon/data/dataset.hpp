#pragma once

// Procedural garment/person pairs and the on-disk dataset layout
//   <root>/image/<id>.png          person wearing the garment
//   <root>/cloth/<id>.png          flat garment on a plain background
//   <root>/agnostic-mask/<id>.png  clothing region of the person (0/255)
//   <root>/caption/<id>.txt        line 1 garment description, line 2 person description
//   <root>/manifest.json

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "tryon/core/color.hpp"
#include "tryon/core/error.hpp"
#include "tryon/core/rng.hpp"
#include "tryon/io/png.hpp"

namespace tryon::data {

namespace fs = std::filesystem;

inline constexpr int kGeneratorVersion = 1;

struct TryOnSample {
    ImageTensor garment;
    ImageTensor person;
    MaskTensor mask;
    std::string garment_caption;
    std::string person_caption;
    std::string sample_id;
};

enum class Pattern { solid, stripes, checks, dots };

inline constexpr std::array<std::string_view, 4> kPatternNames{"solid", "stripes", "checks", "dots"};

inline std::string_view to_string(Pattern p) { return kPatternNames[static_cast<std::size_t>(p)]; }

inline Pattern parse_pattern(std::string_view s) {
    for (std::size_t i = 0; i < kPatternNames.size(); ++i)
        if (kPatternNames[i] == s) return static_cast<Pattern>(i);
    fail<ValueError>("unknown pattern '", s, "'");
}

struct SynthConfig {
    int n_samples = 256;
    int height = 64;
    int width = 48;
    std::uint64_t seed = 0;
    std::vector<std::string> palette;  // color names from kPalette; empty = all
    std::vector<Pattern> patterns{Pattern::solid, Pattern::stripes, Pattern::checks, Pattern::dots};
    double pose_jitter = 0.1;  // torso translation as a fraction of image size
    int mask_dilation = 3;

    void validate() const {
        require<ValueError>(n_samples >= 0, "n_samples must be >= 0");
        require<ValueError>(height > 0 && width > 0 && height % 16 == 0 && width % 16 == 0,
                            "image size ", height, "x", width, " must be positive and divisible by 16");
        require<ValueError>(!patterns.empty(), "at least one pattern required");
        require<ValueError>(pose_jitter >= 0.0 && pose_jitter < 0.25, "pose_jitter must be in [0, 0.25)");
        require<ValueError>(mask_dilation >= 2, "mask dilation must be >= 2 px");
        for (const auto& name : palette) palette_index(name);
    }

    static int palette_index(std::string_view name) {
        for (std::size_t i = 0; i < kPalette.size(); ++i)
            if (kPalette[i].name == name) return static_cast<int>(i);
        fail<ValueError>("unknown palette color '", name, "'");
    }

    std::vector<int> palette_indices() const {
        std::vector<int> out;
        if (palette.empty())
            for (int i = 0; i < static_cast<int>(kPalette.size()); ++i) out.push_back(i);
        else
            for (const auto& n : palette) out.push_back(palette_index(n));
        return out;
    }
};

/// A generated sample plus the generator's ground-truth labels.
struct SynthRecord {
    TryOnSample sample;
    int hue_index = 0;
    Pattern pattern = Pattern::solid;
    MaskTensor torso;  // undilated garment region on the person
};

namespace detail {

struct Canvas {
    int h, w;
    std::vector<Rgb> px;
    Canvas(int h_, int w_, Rgb fill) : h(h_), w(w_), px(static_cast<std::size_t>(h_) * w_, fill) {}
    Rgb& at(int y, int x) { return px[static_cast<std::size_t>(y) * w + x]; }

    ImageTensor to_image() const {
        ImageTensor img(h, w);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const Rgb& c = px[static_cast<std::size_t>(y) * w + x];
                img.at(0, y, x) = static_cast<float>(c.r * 2.0 - 1.0);
                img.at(1, y, x) = static_cast<float>(c.g * 2.0 - 1.0);
                img.at(2, y, x) = static_cast<float>(c.b * 2.0 - 1.0);
            }
        return io::quantize(img);
    }
};

// Trapezoid with horizontal top/bottom edges, tested at pixel centers.
struct Trapezoid {
    double cx, y0, y1, top_half, bottom_half;
    bool contains(double x, double y) const {
        if (y < y0 || y >= y1) return false;
        const double a = (y - y0) / (y1 - y0);
        const double half = top_half + a * (bottom_half - top_half);
        return std::abs(x - cx) < half;
    }
};

inline bool in_segment(double px, double py, double ax, double ay, double bx, double by, double radius) {
    const double dx = bx - ax, dy = by - ay;
    const double len2 = dx * dx + dy * dy;
    const double t = len2 > 0 ? std::clamp(((px - ax) * dx + (py - ay) * dy) / len2, 0.0, 1.0) : 0.0;
    const double ex = ax + t * dx - px, ey = ay + t * dy - py;
    return ex * ex + ey * ey <= radius * radius;
}

struct Look {
    int hue_index;
    Pattern pattern;
    double sat, val;
};

// Pattern color at garment-local coordinates (u, v) in pixels.
inline Rgb garment_color(const Look& g, double u, double v) {
    const double hue = kPalette[static_cast<std::size_t>(g.hue_index)].hue;
    const Hsv base{hue, g.sat, g.val};
    const Hsv dark{hue, g.sat, g.val * 0.55};
    const Hsv light{hue, 0.45, 1.0};
    const int period = 6;
    const int iu = static_cast<int>(std::floor(u)), iv = static_cast<int>(std::floor(v));
    auto mod = [](int a, int m) { return ((a % m) + m) % m; };
    switch (g.pattern) {
        case Pattern::solid: return hsv_to_rgb(base);
        case Pattern::stripes: return hsv_to_rgb(mod(iv, period) < period / 2 ? base : dark);
        case Pattern::checks:
            return hsv_to_rgb(((iu / (period / 2) + iv / (period / 2)) & 1) ? dark : base);
        case Pattern::dots: {
            const double du = std::fmod(u, period) - period / 2.0 + (u < 0 ? period : 0);
            const double dv = std::fmod(v, period) - period / 2.0 + (v < 0 ? period : 0);
            return hsv_to_rgb(du * du + dv * dv <= 2.25 ? light : base);
        }
    }
    return hsv_to_rgb(base);
}

inline MaskTensor dilate(const MaskTensor& m, int radius) {
    MaskTensor out(m.height, m.width);
    for (int y = 0; y < m.height; ++y)
        for (int x = 0; x < m.width; ++x) {
            if (m.at(0, y, x) == 0.0f) continue;
            for (int dy = -radius; dy <= radius; ++dy)
                for (int dx = -radius; dx <= radius; ++dx) {
                    const int yy = y + dy, xx = x + dx;
                    if (dx * dx + dy * dy > radius * radius || yy < 0 || xx < 0 || yy >= m.height || xx >= m.width)
                        continue;
                    out.at(0, yy, xx) = 1.0f;
                }
        }
    return out;
}

}  // namespace detail

inline std::string sample_id(int index) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%06d", index);
    return buf;
}

/// Fully determined by (cfg.seed, index).
inline SynthRecord render_sample(const SynthConfig& cfg, int index) {
    cfg.validate();
    using namespace detail;
    Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(index)));
    const int H = cfg.height, W = cfg.width;
    const auto hues = cfg.palette_indices();

    Look look;
    look.hue_index = hues[rng.below(hues.size())];
    look.pattern = cfg.patterns[rng.below(cfg.patterns.size())];
    look.sat = rng.uniform(0.7, 0.9);
    look.val = rng.uniform(0.75, 0.95);

    const Rgb background = hsv_to_rgb({rng.uniform(0.0, 360.0), rng.uniform(0.0, 0.12), rng.uniform(0.8, 0.95)});
    const Rgb skin = hsv_to_rgb({rng.uniform(18.0, 32.0), rng.uniform(0.15, 0.28), rng.uniform(0.6, 0.9)});
    const Rgb pants = hsv_to_rgb({rng.uniform(0.0, 360.0), rng.uniform(0.0, 0.15), rng.uniform(0.2, 0.4)});
    const double jx = rng.uniform(-cfg.pose_jitter, cfg.pose_jitter) * W;
    const double jy = rng.uniform(-cfg.pose_jitter, cfg.pose_jitter) * H;

    // Person, in drawing order: legs, arms, torso, head.
    const double cx = W / 2.0 + jx;
    const Trapezoid torso{cx, 0.30 * H + jy, 0.68 * H + jy, 0.26 * W, 0.20 * W};
    Canvas person(H, W, background);
    MaskTensor torso_mask(H, W);
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            const double px = x + 0.5, py = y + 0.5;
            Rgb* c = &person.at(y, x);
            for (double side : {-1.0, 1.0}) {
                if (in_segment(px, py, cx + side * 0.1 * W, torso.y1, cx + side * 0.12 * W, H + 2.0, 0.07 * W))
                    *c = pants;
                if (in_segment(px, py, cx + side * 0.24 * W, torso.y0 + 2.0, cx + side * 0.36 * W, 0.62 * H + jy,
                               0.05 * W))
                    *c = skin;
            }
            if (torso.contains(px, py)) {
                *c = garment_color(look, px - (cx - torso.top_half), py - torso.y0);
                torso_mask.at(0, y, x) = 1.0f;
            }
            const double hx = px - cx, hy = py - (0.17 * H + jy);
            if (hx * hx + hy * hy <= std::pow(0.09 * H, 2)) {
                *c = skin;
                torso_mask.at(0, y, x) = 0.0f;
            }
        }

    // Flat garment: canonical torso with short sleeves, no jitter.
    const Rgb plain = hsv_to_rgb({rng.uniform(0.0, 360.0), rng.uniform(0.0, 0.04), rng.uniform(0.9, 0.98)});
    const Trapezoid flat{W / 2.0, 0.30 * H, 0.68 * H, 0.26 * W, 0.20 * W};
    Canvas garment(H, W, plain);
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            const double px = x + 0.5, py = y + 0.5;
            bool on = flat.contains(px, py);
            for (double side : {-1.0, 1.0})
                on = on || in_segment(px, py, W / 2.0 + side * 0.24 * W, flat.y0 + 2.0, W / 2.0 + side * 0.34 * W,
                                      flat.y0 + 0.12 * H, 0.05 * W);
            if (on) garment.at(y, x) = garment_color(look, px - (flat.cx - flat.top_half), py - flat.y0);
        }

    SynthRecord rec;
    rec.hue_index = look.hue_index;
    rec.pattern = look.pattern;
    rec.torso = torso_mask;
    rec.sample.sample_id = sample_id(index);
    rec.sample.garment = garment.to_image();
    rec.sample.person = person.to_image();
    rec.sample.mask = dilate(torso_mask, cfg.mask_dilation);
    rec.sample.garment_caption = "a " + std::string(to_string(look.pattern)) + " " +
                                 std::string(kPalette[static_cast<std::size_t>(look.hue_index)].name) + " top";
    rec.sample.person_caption = "standing, front view";
    return rec;
}

inline nlohmann::json synth_config_json(const SynthConfig& c) {
    nlohmann::json pats = nlohmann::json::array();
    for (auto p : c.patterns) pats.push_back(to_string(p));
    return {{"n_samples", c.n_samples}, {"height", c.height},  {"width", c.width},
            {"seed", c.seed},           {"palette", c.palette}, {"patterns", pats},
            {"pose_jitter", c.pose_jitter}, {"mask_dilation", c.mask_dilation}};
}

namespace detail {

inline void write_text(const fs::path& p, const std::string& s) {
    std::ofstream f(p, std::ios::binary);
    if (!f) throw IoError("cannot open for writing", p.string());
    f << s;
    if (!f) throw IoError("write failed", p.string());
}

}  // namespace detail

/// Writes samples first_index .. first_index + n_samples - 1 of `cfg` under
/// `out_dir`; returns the sample ids.
inline std::vector<std::string> generate_synthetic(const SynthConfig& cfg, const fs::path& out_dir,
                                                   int first_index = 0) {
    require<ValueError>(first_index >= 0, "first_index must be >= 0");
    cfg.validate();
    for (const char* sub : {"image", "cloth", "agnostic-mask", "caption"}) {
        std::error_code ec;
        fs::create_directories(out_dir / sub, ec);
        if (ec) throw IoError("cannot create directory: " + ec.message(), (out_dir / sub).string());
    }
    std::vector<std::string> ids;
    for (int i = first_index; i < first_index + cfg.n_samples; ++i) {
        const auto rec = render_sample(cfg, i);
        const auto& s = rec.sample;
        io::save_image(out_dir / "image" / (s.sample_id + ".png"), s.person);
        io::save_image(out_dir / "cloth" / (s.sample_id + ".png"), s.garment);
        io::save_mask(out_dir / "agnostic-mask" / (s.sample_id + ".png"), s.mask);
        detail::write_text(out_dir / "caption" / (s.sample_id + ".txt"), s.garment_caption + "\n" + s.person_caption + "\n");
        ids.push_back(s.sample_id);
    }
    const nlohmann::json manifest{
        {"generator", "tryon-synthetic"}, {"generator_version", kGeneratorVersion}, {"config", synth_config_json(cfg)},
        {"first_index", first_index}, {"sample_ids", ids}};
    detail::write_text(out_dir / "manifest.json", manifest.dump(2) + "\n");
    return ids;
}

struct LoadedDataset {
    std::vector<TryOnSample> samples;  // sorted by sample_id
    int skipped = 0;
    std::vector<std::string> warnings;
};

/// Reads every sample whose four files exist; others are skipped with a warning.
inline LoadedDataset load_dataset(const fs::path& root) {
    if (!fs::is_directory(root)) throw IoError("dataset directory not found", root.string());
    std::vector<std::string> stems;
    for (const char* sub : {"image", "cloth", "agnostic-mask"}) {
        if (!fs::is_directory(root / sub)) continue;
        for (const auto& e : fs::directory_iterator(root / sub))
            if (e.path().extension() == ".png") stems.push_back(e.path().stem().string());
    }
    if (fs::is_directory(root / "caption"))
        for (const auto& e : fs::directory_iterator(root / "caption"))
            if (e.path().extension() == ".txt") stems.push_back(e.path().stem().string());
    std::sort(stems.begin(), stems.end());
    stems.erase(std::unique(stems.begin(), stems.end()), stems.end());

    LoadedDataset out;
    for (const auto& id : stems) {
        const fs::path img = root / "image" / (id + ".png"), cloth = root / "cloth" / (id + ".png"),
                       mask = root / "agnostic-mask" / (id + ".png"), cap = root / "caption" / (id + ".txt");
        std::string missing;
        for (const auto* p : {&img, &cloth, &mask, &cap})
            if (!fs::exists(*p)) missing += (missing.empty() ? "" : ", ") + p->string();
        if (!missing.empty()) {
            ++out.skipped;
            out.warnings.push_back("sample " + id + " skipped: missing " + missing);
            continue;
        }
        TryOnSample s;
        s.sample_id = id;
        s.person = io::load_image(img);
        s.garment = io::load_image(cloth);
        s.mask = io::load_mask(mask);
        require(s.person.same_shape(s.garment), "sample ", id, ": person ", s.person.shape_string(), " vs garment ",
                s.garment.shape_string());
        require(s.mask.height == s.person.height && s.mask.width == s.person.width, "sample ", id, ": mask ",
                s.mask.shape_string(), " vs person ", s.person.shape_string());
        std::ifstream f(cap, std::ios::binary);
        if (!f) throw IoError("cannot read caption", cap.string());
        std::getline(f, s.garment_caption);
        std::getline(f, s.person_caption);
        out.samples.push_back(std::move(s));
    }
    return out;
}

/// Seeded shuffle split; the train part holds round(n * train_fraction) samples.
template <class Sample>
std::pair<std::vector<Sample>, std::vector<Sample>> split(const std::vector<Sample>& samples, double train_fraction,
                                                          std::uint64_t seed) {
    require<ValueError>(train_fraction > 0.0 && train_fraction < 1.0, "train_fraction must be in (0,1), got ",
                        train_fraction);
    std::vector<std::size_t> order(samples.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed(seed, 0x5B117));
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(samples.size())));
    std::pair<std::vector<Sample>, std::vector<Sample>> out;
    for (std::size_t i = 0; i < order.size(); ++i) (i < n_train ? out.first : out.second).push_back(samples[order[i]]);
    return out;
}

}  // namespace tryon::data
