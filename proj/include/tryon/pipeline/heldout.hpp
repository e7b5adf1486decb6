#pragma once

// Held-out evaluation: run try-on on every sample, score the outputs against
// the ground-truth person images, and count dominant-hue matches between
// each garment and the generated masked region.

#include <optional>
#include <string>
#include <vector>

#include "tryon/core/color.hpp"
#include "tryon/data/dataset.hpp"
#include "tryon/metrics/metrics.hpp"
#include "tryon/pipeline/inference.hpp"

namespace tryon::pipeline {

struct HeldoutResult {
    metrics::MetricReport report;
    int hue_matches = 0;
    int hue_total = 0;
    std::vector<TryOnOutput> outputs;

    double hue_rate() const { return hue_total > 0 ? static_cast<double>(hue_matches) / hue_total : 0.0; }
};

/// True when the garment and the generated masked region share a dominant
/// palette hue. Images without enough saturated pixels never match.
inline bool hue_match(const ImageTensor& garment, const ImageTensor& generated, const MaskTensor& mask) {
    const std::optional<int> g = dominant_palette_index(garment, nullptr);
    const std::optional<int> o = dominant_palette_index(generated, &mask);
    return g && o && *g == *o;
}

/// Every sample uses cfg.seed for its noise and cfg.caption_mode for its caption.
template <VelocityModel M>
HeldoutResult evaluate_heldout(const M& model, const codec::Codec& codec, const text::TextEncoder& text_encoder,
                               const std::vector<data::TryOnSample>& samples, const InferenceConfig& cfg,
                               const metrics::FeatureExtractor& fx) {
    require<ValueError>(!samples.empty(), "held-out evaluation needs at least one sample");
    HeldoutResult r;
    std::vector<ImageTensor> pred, gt;
    std::vector<MaskTensor> masks;
    std::vector<std::string> ids;
    for (const auto& s : samples) {
        const auto caption = text::caption_for(cfg.caption_mode, s.garment_caption, s.person_caption);
        r.outputs.push_back(try_on(s.garment, s.person, s.mask, caption, model, codec, text_encoder, cfg));
        pred.push_back(r.outputs.back().image);
        gt.push_back(s.person);
        masks.push_back(s.mask);
        ids.push_back(s.sample_id);
        r.hue_matches += hue_match(s.garment, pred.back(), s.mask) ? 1 : 0;
        ++r.hue_total;
    }
    r.report = metrics::evaluate(pred, gt, masks, ids, fx);
    return r;
}

}  // namespace tryon::pipeline
