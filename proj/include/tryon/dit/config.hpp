#pragma once

#include <cstdint>
#include <string>

#include "tryon/core/error.hpp"

namespace tryon::dit {

struct ModelConfig {
    int d_model = 64;
    int n_heads = 4;
    int n_mmdit = 2;
    int n_singledit = 4;
    int d_text = 64;
    int token_dim_in = 192;  // 4*c_lat (noise) + 4*c_lat (masked latent) + 4*f^2 (mask)
    int out_dim = 64;        // 4*c_lat
    int rope_row_dims = 8;
    int rope_col_dims = 8;
    double rope_theta = 100.0;
    int mlp_ratio = 4;
    double init_std = 0.02;
    std::uint64_t seed = 0;

    int head_dim() const { return d_model / n_heads; }

    void validate() const {
        require<ValueError>(d_model > 0 && n_heads > 0 && d_model % n_heads == 0, "d_model ", d_model,
                            " must be divisible by n_heads ", n_heads);
        require<ValueError>(rope_row_dims + rope_col_dims == head_dim(), "rope dims ", rope_row_dims, "+",
                            rope_col_dims, " must sum to head dim ", head_dim());
        require<ValueError>(rope_row_dims % 2 == 0 && rope_col_dims % 2 == 0, "rope dims must be even");
        require<ValueError>(n_mmdit >= 0 && n_singledit >= 0, "block counts must be non-negative");
        require<ValueError>(d_text > 0 && token_dim_in > 0 && out_dim > 0, "dims must be positive");
        require<ValueError>(mlp_ratio > 0 && rope_theta > 0.0, "mlp_ratio and rope_theta must be positive");
    }

    /// Shape signature used to reject checkpoint/config mismatches.
    std::string signature() const {
        return detail::concat("d", d_model, "-h", n_heads, "-mm", n_mmdit, "-s", n_singledit, "-txt", d_text, "-in",
                              token_dim_in, "-out", out_dim, "-rope", rope_row_dims, "/", rope_col_dims, "-mlp",
                              mlp_ratio);
    }

    /// Parameters in one attention projection (weight + bias).
    std::size_t projection_params() const {
        return static_cast<std::size_t>(d_model) * d_model + static_cast<std::size_t>(d_model);
    }
    /// q, k, v, o for both streams.
    std::size_t mmdit_attention_params_per_block() const { return 8 * projection_params(); }
    /// q, k, v, o for the merged stream.
    std::size_t singledit_attention_params_per_block() const { return 4 * projection_params(); }
};

}  // namespace tryon::dit
