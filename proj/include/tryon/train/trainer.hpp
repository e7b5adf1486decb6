#pragma once

// Rectified-flow training with selective parameter updates.
//
// train() runs up to three stages:
//   codec     fit the learned codec (skipped for the invertible codec)
//   base      generic inpainting stage, all parameters, shuffled garments,
//             garment-free ordinary caption
//   finetune  the configured trainable mode on correctly paired samples
//
// Step s of a stage draws every random number from Rng(derive_seed(seed,
// stage, s)) and its batch from a per-epoch permutation seeded by (seed,
// stage, epoch), so a run resumed from a checkpoint at step s replays the
// uninterrupted run exactly.

#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "tryon/config/run_config.hpp"
#include "tryon/data/dataset.hpp"
#include "tryon/dit/selection.hpp"
#include "tryon/pipeline/prepare.hpp"
#include "tryon/train/checkpoint.hpp"
#include "tryon/train/flow.hpp"
#include "tryon/train/optim.hpp"

namespace tryon::train {

enum class Stage { base, finetune, done };

inline std::string_view to_string(Stage s) {
    switch (s) {
        case Stage::base: return "base";
        case Stage::finetune: return "finetune";
        case Stage::done: return "done";
    }
    return "?";
}

inline Stage parse_stage(std::string_view s) {
    for (auto st : {Stage::base, Stage::finetune, Stage::done})
        if (to_string(st) == s) return st;
    fail<ValueError>("unknown training stage '", s, "'");
}

/// One batch element. `garment` is normally the sample's own garment; the
/// base stage substitutes another sample's.
struct StepItem {
    const data::TryOnSample* sample = nullptr;
    const ImageTensor* garment = nullptr;
};

struct StepOptions {
    double caption_dropout_p = 0.1;
    text::CaptionMode caption_mode = text::CaptionMode::integrated;
    double guidance = 3.5;
    double guidance_max = -1.0;  // >= 0: draw guidance ~ U[0, guidance_max) per item after t
    bool loss_on_masked_only = false;
};

struct StepDraws {
    std::vector<double> t;
    std::vector<bool> caption_dropped;
};

inline text::Caption training_caption(const data::TryOnSample& s, text::CaptionMode mode) {
    return text::caption_for(mode, s.garment_caption, s.person_caption);
}

/// Mean RF loss of the batch; accumulates d(loss)/d(param) into `grads` for
/// parameters flagged in `trainable`. Per item, draws in order: caption
/// dropout, t, guidance (when drawn), then the noise tokens.
inline double loss_and_grads(const dit::DiT<float>& model, const std::vector<char>& trainable,
                             const std::vector<StepItem>& batch, const codec::Codec& codec,
                             const text::TextEncoder& text_encoder, const StepOptions& opt, Rng& rng,
                             nn::ParamStore<float>& grads, StepDraws* draws = nullptr) {
    require<ValueError>(!batch.empty(), "training step: empty batch");
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    double total = 0.0;
    for (const auto& item : batch) {
        const auto& s = *item.sample;
        const text::Caption caption =
            text::drop_caption(training_caption(s, opt.caption_mode), opt.caption_dropout_p, rng);
        const double t = sample_t(rng);
        const double g = opt.guidance_max >= 0.0 ? rng.uniform(0.0, opt.guidance_max) : opt.guidance;
        const auto cond = pipeline::prepare_conditioning(*item.garment, s.person, s.mask, caption, codec, text_encoder);
        const PackedTokens eps = pipeline::normal_tokens(cond.p_masked, rng);
        const Mat<float> x0 = pipeline::as_matrix(pipeline::target_tokens(*item.garment, s.person, codec));
        const Mat<float> e = pipeline::as_matrix(eps);
        const PackedTokens zt = pipeline::from_matrix(rf_interpolate(x0, e, t), eps);
        if (draws) {
            draws->t.push_back(t);
            draws->caption_dropped.push_back(caption.empty());
        }

        dit::ForwardCache<float> cache;
        const Mat<float> v = model.forward(pipeline::model_input(zt, cond, t, g), cache);
        Mat<float> diff = v - rf_target(x0, e);

        double count = static_cast<double>(diff.size());
        if (opt.loss_on_masked_only) {
            int rows = 0;
            for (int i = 0; i < cond.p_om.token_count; ++i) {
                bool any = false;
                for (int j = 0; j < cond.p_om.token_dim && !any; ++j) any = cond.p_om.at(i, j) != 0.0f;
                if (any)
                    ++rows;
                else
                    diff.row(i).setZero();
            }
            count = static_cast<double>(rows) * static_cast<double>(diff.cols());
            if (rows == 0) continue;
        }
        double sq = 0.0;
        for (Eigen::Index i = 0; i < diff.size(); ++i) sq += static_cast<double>(diff.data()[i]) * diff.data()[i];
        total += sq / count * inv_b;
        const Mat<float> dout = diff * static_cast<float>(2.0 / count * inv_b);
        model.backward(cache, dout, grads, trainable);
    }
    return total;
}

/// One optimizer update restricted to `selection`; returns the batch loss.
inline double training_step(dit::DiT<float>& model, const dit::TrainableSelection& selection, AdamW<float>& opt,
                            double lr, const std::vector<StepItem>& batch, const codec::Codec& codec,
                            const text::TextEncoder& text_encoder, const StepOptions& options, Rng& rng,
                            StepDraws* draws = nullptr) {
    auto grads = model.params().zeros_like();
    const double loss =
        loss_and_grads(model, selection.mask(model.params()), batch, codec, text_encoder, options, rng, grads, draws);
    if (!std::isfinite(loss)) fail<NumericError>("training step produced non-finite loss ", loss);
    NamedGrads<float> named;
    for (const auto& n : selection.parameter_paths) named.emplace(n, grads[n]);
    opt.step(model.params(), named, selection.parameter_paths, lr);
    return loss;
}

struct LossRow {
    Stage stage;
    int step;
    double loss;
    double lr;
    std::string mode;
};

struct TrainState {
    config::RunConfig cfg;
    codec::Codec codec;
    text::TextEncoder text;
    dit::DiT<float> model;
    Stage stage = Stage::base;
    int step = 0;  // completed steps of `stage`
    AdamW<float> opt;
    dit::TrainableSelection selection;
    codec::CodecTrainReport codec_report;
};

/// Selection and optimizer for a stage (the base stage trains everything).
inline void enter_stage(TrainState& st, Stage stage) {
    st.stage = stage;
    st.step = 0;
    const auto mode = stage == Stage::base ? dit::TrainableMode::full : st.cfg.train.trainable_mode;
    st.selection = dit::select_trainable(st.model, mode);
    st.opt = AdamW<float>(st.model.params(), AdamWConfig{0.9, 0.999, 1e-8, st.cfg.train.weight_decay});
}

struct TrainHooks {
    std::function<void(const LossRow&)> on_loss;
    std::function<void(const TrainState&)> on_checkpoint;  // periodic and stage-final
    std::function<void(const std::string&)> on_message;
};

inline std::uint64_t stage_tag(Stage s) { return s == Stage::base ? 0xBA5E : 0xF17E; }

/// Sample indices of batch `step` (1-based) of a stage.
inline std::vector<std::size_t> batch_indices(std::size_t n, int batch_size, std::uint64_t seed, Stage stage,
                                              int step) {
    std::vector<std::size_t> out;
    std::vector<std::size_t> perm;
    long cached_epoch = -1;
    for (int b = 0; b < batch_size; ++b) {
        const long k = static_cast<long>(step - 1) * batch_size + b;
        const long epoch = k / static_cast<long>(n);
        if (epoch != cached_epoch) {
            perm.resize(n);
            for (std::size_t i = 0; i < n; ++i) perm[i] = i;
            Rng rng(derive_seed(seed, stage_tag(stage), 0xE0C0000000ULL + static_cast<std::uint64_t>(epoch)));
            for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
            cached_epoch = epoch;
        }
        out.push_back(perm[static_cast<std::size_t>(k % static_cast<long>(n))]);
    }
    return out;
}

/// Fresh state: initialized model, untrained codec and frozen text table.
inline TrainState initial_state(const config::RunConfig& cfg) {
    cfg.validate();
    TrainState st{cfg, codec::Codec(cfg.codec), text::TextEncoder(cfg.text), dit::DiT<float>(cfg.model_config()), {}, 0, {}, {}, {}};
    enter_stage(st, Stage::base);
    return st;
}

inline double stage_lr(const TrainState& st) {
    return st.stage == Stage::base ? st.cfg.train.base_lr : st.cfg.train.lr;
}

inline int stage_steps(const TrainState& st) {
    return st.stage == Stage::base ? st.cfg.train.base_steps : st.cfg.train.steps;
}

/// Runs one step of the current stage and advances st.step.
inline double advance(TrainState& st, const std::vector<data::TryOnSample>& samples) {
    const auto& tc = st.cfg.train;
    const int step = st.step + 1;
    Rng rng(derive_seed(tc.seed, stage_tag(st.stage), static_cast<std::uint64_t>(step)));
    std::vector<StepItem> batch;
    for (std::size_t i : batch_indices(samples.size(), tc.batch_size, tc.seed, st.stage, step)) {
        StepItem it{&samples[i], &samples[i].garment};
        if (st.stage == Stage::base) it.garment = &samples[rng.below(samples.size())].garment;
        batch.push_back(it);
    }
    StepOptions opt;
    opt.caption_mode = st.stage == Stage::base ? text::CaptionMode::ordinary : tc.caption_mode;
    opt.caption_dropout_p = tc.caption_dropout_p;
    opt.guidance = tc.guidance_train;
    if (st.stage == Stage::base) opt.guidance_max = tc.base_guidance_max;
    opt.loss_on_masked_only = st.stage == Stage::finetune && tc.loss_on_masked_only;
    const double loss = training_step(st.model, st.selection, st.opt, stage_lr(st), batch, st.codec, st.text, opt, rng);
    st.step = step;
    return loss;
}

/// Fits the learned codec on every garment and person image (10% held out
/// for the report) and freezes it.
inline void fit_codec(TrainState& st, const std::vector<data::TryOnSample>& samples) {
    if (st.cfg.codec.mode != codec::CodecMode::learned || st.cfg.codec_train.steps == 0) return;
    std::vector<ImageTensor> images;
    for (const auto& s : samples) {
        images.push_back(s.garment);
        images.push_back(s.person);
    }
    std::vector<ImageTensor> fit = images, held;
    if (images.size() >= 10) std::tie(fit, held) = data::split(images, 0.9, derive_seed(st.cfg.train.seed, 0xC0DEC));
    const auto& ct = st.cfg.codec_train;
    st.codec_report = st.codec.train(fit, held, ct.steps, ct.lr, ct.batch_images);
}

/// Runs (or resumes) the remaining stages, stopping on entry to `stop_at`.
/// Pass the state returned by initial_state() or by from_checkpoint().
inline void run_training(TrainState& st, const std::vector<data::TryOnSample>& samples, const TrainHooks& hooks = {},
                         Stage stop_at = Stage::done) {
    if (st.stage == Stage::done) return;
    if (st.stage == Stage::base && st.step == 0 && st.cfg.train.base_steps + st.cfg.train.steps > 0)
        require<ValueError>(!samples.empty(), "training dataset is empty");
    if (st.stage == Stage::base && st.step == 0) {
        fit_codec(st, samples);
        if (hooks.on_message && st.cfg.codec.mode == codec::CodecMode::learned)
            hooks.on_message(tryon::detail::concat("codec held-out mse ", st.codec_report.initial_heldout_mse, " -> ",
                                            st.codec_report.final_heldout_mse));
    }
    const int every = st.cfg.train.checkpoint_every;
    while (st.stage != Stage::done && st.stage != stop_at) {
        while (st.step < stage_steps(st)) {
            const double loss = advance(st, samples);
            if (hooks.on_loss && st.step % st.cfg.train.log_every == 0)
                hooks.on_loss({st.stage, st.step, loss, stage_lr(st), std::string(dit::to_string(st.selection.mode))});
            if (hooks.on_checkpoint && every > 0 && st.step % every == 0 && st.step < stage_steps(st))
                hooks.on_checkpoint(st);
        }
        if (st.stage == Stage::base) {
            if (hooks.on_checkpoint && st.step > 0) hooks.on_checkpoint(st);
            enter_stage(st, Stage::finetune);
        } else {
            st.stage = Stage::done;
        }
    }
}

// ---------------------------------------------------------------- checkpoints

inline Checkpoint to_checkpoint(const TrainState& st) {
    Checkpoint ck;
    ck.meta = {
        {"config", config::to_json(st.cfg)},
        {"stage", to_string(st.stage)},
        {"step", st.step},
        {"rng", {{"scheme", "per-step derive_seed(train.seed, stage, step)"}, {"seed", st.cfg.train.seed}}},
        {"model_signature", st.cfg.model_config().signature()},
        {"trainable_mode", dit::to_string(st.selection.mode)},
        {"trainable", st.selection.parameter_paths},
        {"optimizer", {{"type", "adamw"}, {"step_count", st.opt.step_count()}}},
        {"codec_report",
         {{"initial_heldout_mse", st.codec_report.initial_heldout_mse},
          {"final_heldout_mse", st.codec_report.final_heldout_mse}}},
    };
    ck.add_store("model", st.model.params());
    ck.add_store("codec", st.codec.params());
    ck.add_store("text", st.text.params());
    if (st.stage != Stage::done) {
        for (const auto& n : st.selection.parameter_paths) {
            const auto& m = st.opt.first_moment()[n];
            const auto& v = st.opt.second_moment()[n];
            ck.tensors.push_back({"optim.m/" + n, static_cast<int>(m.rows()), static_cast<int>(m.cols()),
                                  std::vector<float>(m.data(), m.data() + m.size())});
            ck.tensors.push_back({"optim.v/" + n, static_cast<int>(v.rows()), static_cast<int>(v.cols()),
                                  std::vector<float>(v.data(), v.data() + v.size())});
        }
    }
    return ck;
}

inline TrainState from_checkpoint(const Checkpoint& ck) {
    const auto cfg = config::from_json(ck.meta.at("config"));
    TrainState st{cfg, codec::Codec(cfg.codec), text::TextEncoder(cfg.text),
                  dit::DiT<float>::uninitialized(cfg.model_config()), {}, 0, {}, {}, {}};
    const auto sig = ck.meta.at("model_signature").get<std::string>();
    require(sig == cfg.model_config().signature(), "checkpoint model signature ", sig, " != config signature ",
            cfg.model_config().signature());
    ck.restore_store("model", st.model.params());
    ck.restore_store("codec", st.codec.params());
    ck.restore_store("text", st.text.params());
    st.codec_report.initial_heldout_mse = ck.meta.at("codec_report").at("initial_heldout_mse").get<double>();
    st.codec_report.final_heldout_mse = ck.meta.at("codec_report").at("final_heldout_mse").get<double>();
    const Stage stage = parse_stage(ck.meta.at("stage").get<std::string>());
    if (stage == Stage::done) {
        enter_stage(st, Stage::finetune);
        st.stage = Stage::done;
        st.step = ck.meta.at("step").get<int>();
        st.opt.set_step_count(ck.meta.at("optimizer").at("step_count").get<long>());
        return st;
    }
    enter_stage(st, stage);
    st.step = ck.meta.at("step").get<int>();
    st.opt.set_step_count(ck.meta.at("optimizer").at("step_count").get<long>());
    for (const auto& n : st.selection.parameter_paths) {
        for (auto [prefix, store] : {std::pair{"optim.m/", &st.opt.first_moment()}, std::pair{"optim.v/", &st.opt.second_moment()}}) {
            const NamedTensor* t = ck.find(prefix + n);
            if (!t) fail<ValueError>("checkpoint is missing optimizer state ", prefix, n);
            auto& m = (*store)[n];
            require(t->rows == m.rows() && t->cols == m.cols(), "optimizer state shape mismatch for ", n);
            std::copy(t->values.begin(), t->values.end(), m.data());
        }
    }
    return st;
}

/// Convenience wrapper: fresh state, all stages, final state.
inline TrainState train(const config::RunConfig& cfg, const std::vector<data::TryOnSample>& samples,
                        const TrainHooks& hooks = {}) {
    TrainState st = initial_state(cfg);
    run_training(st, samples, hooks);
    return st;
}

}  // namespace tryon::train
