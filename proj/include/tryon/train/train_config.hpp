#pragma once

#include <cstdint>
#include <string>

#include "tryon/core/error.hpp"
#include "tryon/dit/selection.hpp"
#include "tryon/text/text.hpp"

namespace tryon::train {

struct TrainConfig {
    int steps = 2000;
    int batch_size = 8;
    double lr = 1e-3;
    dit::TrainableMode trainable_mode = dit::TrainableMode::singledit_attention;
    text::CaptionMode caption_mode = text::CaptionMode::integrated;
    double caption_dropout_p = 0.1;
    double guidance_train = 3.5;
    std::uint64_t seed = 0;
    std::string weighting = "uniform";
    std::string t_sampling = "uniform";
    bool loss_on_masked_only = false;
    double weight_decay = 0.01;
    // Generic-inpainting stage that stands in for a pretrained base model:
    // every parameter trains, garments are shuffled across samples and the
    // caption is the garment-free ordinary one, so it learns to fill the mask
    // but not to copy the garment.
    int base_steps = 1500;
    double base_lr = 1e-3;
    double base_guidance_max = 32.0;  // base stage draws guidance ~ U[0, max)
    int log_every = 1;
    int checkpoint_every = 500;  // 0 = final checkpoint only

    void validate() const {
        require<ValueError>(steps >= 0, "train.steps must be >= 0");
        require<ValueError>(batch_size >= 1, "train.batch_size must be >= 1");
        require<ValueError>(lr > 0.0 && base_lr > 0.0, "learning rates must be > 0");
        require<ValueError>(caption_dropout_p >= 0.0 && caption_dropout_p <= 1.0, "caption_dropout_p must be in [0,1]");
        require<ValueError>(guidance_train >= 0.0, "guidance_train must be >= 0");
        require<ValueError>(weighting == "uniform", "only uniform weighting is implemented, got ", weighting);
        require<ValueError>(t_sampling == "uniform", "only uniform t sampling is implemented, got ", t_sampling);
        require<ValueError>(weight_decay >= 0.0, "weight_decay must be >= 0");
        require<ValueError>(base_steps >= 0, "base_steps must be >= 0");
        require<ValueError>(base_guidance_max >= 0.0, "base_guidance_max must be >= 0");
        require<ValueError>(log_every >= 1 && checkpoint_every >= 0, "log_every >= 1 and checkpoint_every >= 0");
    }
};

}  // namespace tryon::train
