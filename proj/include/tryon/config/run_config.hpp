#pragma once

// Run configuration: one JSON document with sections data, codec, model,
// train, infer and eval. Every key has a default; unknown keys are errors.
// The model's token_dim_in and out_dim are not configurable: they follow
// from the codec (4*c_lat + 4*c_lat + 4*f^2 and 4*c_lat).

#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <set>
#include <sstream>
#include <string>

#include "json.hpp"

#include "tryon/codec/autoencoder.hpp"
#include "tryon/data/dataset.hpp"
#include "tryon/dit/config.hpp"
#include "tryon/dit/selection.hpp"
#include "tryon/pipeline/inference.hpp"
#include "tryon/text/text.hpp"
#include "tryon/train/train_config.hpp"

namespace tryon::config {

using nlohmann::json;

struct DataConfig {
    data::SynthConfig synth;
    int heldout_samples = 32;  // rendered after the training indices
};

struct EvalConfig {
    int d_feat = 64;
    std::uint64_t extractor_seed = 0;
};

struct RunConfig {
    DataConfig data;
    codec::CodecConfig codec{codec::CodecMode::learned, 4, 16, 64, 0};
    codec::CodecTrainConfig codec_train;
    dit::ModelConfig model;
    text::TextConfig text;
    train::TrainConfig train;
    pipeline::InferenceConfig infer;
    EvalConfig eval;

    /// Model config with the codec-derived token widths filled in.
    dit::ModelConfig model_config() const {
        dit::ModelConfig m = model;
        const int f = codec.factor, c = codec.channels();
        m.token_dim_in = 4 * c + 4 * c + 4 * f * f;
        m.out_dim = 4 * c;
        m.d_text = text.d_text;
        return m;
    }

    void validate() const {
        data.synth.validate();
        require<ValueError>(data.heldout_samples >= 0, "data.heldout_samples must be >= 0");
        codec.validate();
        codec_train.validate();
        require<ValueError>(data.synth.height % (2 * codec.factor) == 0 && data.synth.width % (2 * codec.factor) == 0,
                            "image size must be divisible by 2*codec.factor = ", 2 * codec.factor);
        model_config().validate();
        text.validate();
        train.validate();
        infer.validate();
        require<ValueError>(eval.d_feat >= 1, "eval.d_feat must be >= 1");
    }
};

namespace detail {

/// Reads keys of one section, remembering which were consumed.
class Section {
public:
    Section(const json& j, std::string name) : j_(j), name_(std::move(name)) {
        require<ValueError>(j_.is_object(), "config section '", name_, "' must be an object");
    }

    template <class T>
    void get(const char* key, T& out) {
        seen_.insert(key);
        if (!j_.contains(key)) return;
        try {
            out = j_.at(key).get<T>();
        } catch (const json::exception& e) {
            fail<ValueError>("config ", name_, ".", key, ": ", e.what());
        }
    }

    void finish() const {
        for (const auto& [k, v] : j_.items())
            require<ValueError>(seen_.count(k) > 0, "unknown config key '", name_, ".", k, "'");
    }

private:
    const json& j_;
    std::string name_;
    std::set<std::string> seen_;
};

}  // namespace detail

inline json to_json(const RunConfig& c) {
    json patterns = json::array();
    for (auto p : c.data.synth.patterns) patterns.push_back(data::to_string(p));
    const auto& s = c.data.synth;
    const auto& m = c.model;
    const auto& t = c.train;
    return json{
        {"data",
         {{"n_samples", s.n_samples},
          {"heldout_samples", c.data.heldout_samples},
          {"height", s.height},
          {"width", s.width},
          {"seed", s.seed},
          {"palette", s.palette},
          {"patterns", patterns},
          {"pose_jitter", s.pose_jitter},
          {"mask_dilation", s.mask_dilation}}},
        {"codec",
         {{"mode", codec::to_string(c.codec.mode)},
          {"factor", c.codec.factor},
          {"latent_channels", c.codec.channels()},
          {"hidden", c.codec.hidden},
          {"seed", c.codec.seed},
          {"train_steps", c.codec_train.steps},
          {"train_lr", c.codec_train.lr},
          {"train_batch_images", c.codec_train.batch_images}}},
        {"model",
         {{"d_model", m.d_model},
          {"n_heads", m.n_heads},
          {"n_mmdit", m.n_mmdit},
          {"n_singledit", m.n_singledit},
          {"d_text", c.text.d_text},
          {"rope_row_dims", m.rope_row_dims},
          {"rope_col_dims", m.rope_col_dims},
          {"rope_theta", m.rope_theta},
          {"mlp_ratio", m.mlp_ratio},
          {"init_std", m.init_std},
          {"seed", m.seed},
          {"vocab_size", c.text.vocab_size},
          {"max_tokens", c.text.max_tokens},
          {"text_seed", c.text.seed}}},
        {"train",
         {{"steps", t.steps},
          {"batch_size", t.batch_size},
          {"lr", t.lr},
          {"trainable_mode", dit::to_string(t.trainable_mode)},
          {"caption_mode", text::to_string(t.caption_mode)},
          {"caption_dropout_p", t.caption_dropout_p},
          {"guidance_train", t.guidance_train},
          {"seed", t.seed},
          {"weighting", t.weighting},
          {"t_sampling", t.t_sampling},
          {"loss_on_masked_only", t.loss_on_masked_only},
          {"weight_decay", t.weight_decay},
          {"base_steps", t.base_steps},
          {"base_lr", t.base_lr},
          {"base_guidance_max", t.base_guidance_max},
          {"log_every", t.log_every},
          {"checkpoint_every", t.checkpoint_every}}},
        {"infer",
         {{"num_steps", c.infer.num_steps},
          {"guidance", c.infer.guidance},
          {"seed", c.infer.seed},
          {"paste_back", c.infer.paste_back},
          {"caption_mode", text::to_string(c.infer.caption_mode)}}},
        {"eval", {{"d_feat", c.eval.d_feat}, {"extractor_seed", c.eval.extractor_seed}}},
    };
}

/// Overlays `j` on the defaults in `base`; rejects unknown keys and invalid values.
inline RunConfig from_json(const json& j, RunConfig c = {}) {
    require<ValueError>(j.is_object(), "run config must be a JSON object");
    for (const auto& [k, v] : j.items())
        require<ValueError>(k == "data" || k == "codec" || k == "model" || k == "train" || k == "infer" || k == "eval",
                            "unknown config section '", k, "'");
    const json empty = json::object();
    auto section = [&](const char* name) -> const json& { return j.contains(name) ? j.at(name) : empty; };

    {
        detail::Section s(section("data"), "data");
        auto& sy = c.data.synth;
        s.get("n_samples", sy.n_samples);
        s.get("heldout_samples", c.data.heldout_samples);
        s.get("height", sy.height);
        s.get("width", sy.width);
        s.get("seed", sy.seed);
        s.get("palette", sy.palette);
        std::vector<std::string> patterns;
        for (auto p : sy.patterns) patterns.emplace_back(data::to_string(p));
        s.get("patterns", patterns);
        sy.patterns.clear();
        for (const auto& p : patterns) sy.patterns.push_back(data::parse_pattern(p));
        s.get("pose_jitter", sy.pose_jitter);
        s.get("mask_dilation", sy.mask_dilation);
        s.finish();
    }
    {
        detail::Section s(section("codec"), "codec");
        std::string mode(codec::to_string(c.codec.mode));
        s.get("mode", mode);
        c.codec.mode = codec::parse_codec_mode(mode);
        s.get("factor", c.codec.factor);
        c.codec.latent_channels = 0;
        s.get("latent_channels", c.codec.latent_channels);
        s.get("hidden", c.codec.hidden);
        s.get("seed", c.codec.seed);
        s.get("train_steps", c.codec_train.steps);
        s.get("train_lr", c.codec_train.lr);
        s.get("train_batch_images", c.codec_train.batch_images);
        s.finish();
    }
    {
        detail::Section s(section("model"), "model");
        auto& m = c.model;
        s.get("d_model", m.d_model);
        s.get("n_heads", m.n_heads);
        s.get("n_mmdit", m.n_mmdit);
        s.get("n_singledit", m.n_singledit);
        s.get("d_text", c.text.d_text);
        s.get("rope_row_dims", m.rope_row_dims);
        s.get("rope_col_dims", m.rope_col_dims);
        s.get("rope_theta", m.rope_theta);
        s.get("mlp_ratio", m.mlp_ratio);
        s.get("init_std", m.init_std);
        s.get("seed", m.seed);
        s.get("vocab_size", c.text.vocab_size);
        s.get("max_tokens", c.text.max_tokens);
        s.get("text_seed", c.text.seed);
        s.finish();
    }
    {
        detail::Section s(section("train"), "train");
        auto& t = c.train;
        s.get("steps", t.steps);
        s.get("batch_size", t.batch_size);
        s.get("lr", t.lr);
        std::string mode(dit::to_string(t.trainable_mode));
        s.get("trainable_mode", mode);
        t.trainable_mode = dit::parse_trainable_mode(mode);
        std::string cap(text::to_string(t.caption_mode));
        s.get("caption_mode", cap);
        t.caption_mode = text::parse_caption_mode(cap);
        s.get("caption_dropout_p", t.caption_dropout_p);
        s.get("guidance_train", t.guidance_train);
        s.get("seed", t.seed);
        s.get("weighting", t.weighting);
        s.get("t_sampling", t.t_sampling);
        s.get("loss_on_masked_only", t.loss_on_masked_only);
        s.get("weight_decay", t.weight_decay);
        s.get("base_steps", t.base_steps);
        s.get("base_lr", t.base_lr);
        s.get("base_guidance_max", t.base_guidance_max);
        s.get("log_every", t.log_every);
        s.get("checkpoint_every", t.checkpoint_every);
        s.finish();
    }
    {
        detail::Section s(section("infer"), "infer");
        s.get("num_steps", c.infer.num_steps);
        s.get("guidance", c.infer.guidance);
        s.get("seed", c.infer.seed);
        s.get("paste_back", c.infer.paste_back);
        std::string mode(text::to_string(c.infer.caption_mode));
        s.get("caption_mode", mode);
        c.infer.caption_mode = text::parse_caption_mode(mode);
        s.finish();
    }
    {
        detail::Section s(section("eval"), "eval");
        s.get("d_feat", c.eval.d_feat);
        s.get("extractor_seed", c.eval.extractor_seed);
        s.finish();
    }
    c.validate();
    return c;
}

inline RunConfig load_run_config(const std::filesystem::path& p) {
    std::ifstream f(p, std::ios::binary);
    if (!f) throw IoError("cannot read config", p.string());
    json j;
    try {
        j = json::parse(f);
    } catch (const json::parse_error& e) {
        fail<ValueError>("config ", p.string(), " is not valid JSON: ", e.what());
    }
    return from_json(j);
}

inline std::string dump(const RunConfig& c) { return to_json(c).dump(2) + "\n"; }

}  // namespace tryon::config
