#pragma once

#include <algorithm>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "tryon/dit/model.hpp"

namespace tryon::dit {

enum class TrainableMode { all_attention, mmdit_attention, singledit_attention, full };

inline std::string_view to_string(TrainableMode m) {
    switch (m) {
        case TrainableMode::all_attention: return "all_attention";
        case TrainableMode::mmdit_attention: return "mmdit_attention";
        case TrainableMode::singledit_attention: return "singledit_attention";
        case TrainableMode::full: return "full";
    }
    return "?";
}

inline TrainableMode parse_trainable_mode(std::string_view s) {
    for (auto m : {TrainableMode::all_attention, TrainableMode::mmdit_attention, TrainableMode::singledit_attention,
                   TrainableMode::full})
        if (to_string(m) == s) return m;
    fail<ValueError>("unknown trainable mode '", s,
                     "' (expected all_attention, mmdit_attention, singledit_attention or full)");
}

/// The named subset of model parameters that an optimizer may update.
struct TrainableSelection {
    TrainableMode mode = TrainableMode::full;
    std::vector<std::string> parameter_paths;  // in parameter-store order

    bool contains(const std::string& name) const {
        return std::find(parameter_paths.begin(), parameter_paths.end(), name) != parameter_paths.end();
    }

    template <class T>
    std::vector<char> mask(const nn::ParamStore<T>& store) const {
        std::vector<char> m(static_cast<std::size_t>(store.size()), 0);
        for (const auto& n : parameter_paths) m[static_cast<std::size_t>(store.id(n))] = 1;
        return m;
    }

    template <class T>
    std::size_t count(const nn::ParamStore<T>& store) const {
        std::size_t n = 0;
        for (const auto& p : parameter_paths) n += static_cast<std::size_t>(store[p].size());
        return n;
    }
};

namespace detail {

inline bool is_attention_projection(const std::string& name, std::string_view block_prefix) {
    if (!name.starts_with(block_prefix)) return false;
    const auto at = name.find(".attn.");
    return at != std::string::npos;
}

}  // namespace detail

/// q/k/v/o projections of the chosen blocks; `full` takes every parameter.
template <class T>
TrainableSelection select_trainable(const DiT<T>& model, TrainableMode mode) {
    TrainableSelection s;
    s.mode = mode;
    for (const auto& name : model.params().names()) {
        bool take = false;
        switch (mode) {
            case TrainableMode::full: take = true; break;
            case TrainableMode::mmdit_attention: take = detail::is_attention_projection(name, "mmdit."); break;
            case TrainableMode::singledit_attention: take = detail::is_attention_projection(name, "single."); break;
            case TrainableMode::all_attention:
                take = detail::is_attention_projection(name, "mmdit.") ||
                       detail::is_attention_projection(name, "single.");
                break;
        }
        if (take) s.parameter_paths.push_back(name);
    }
    return s;
}

template <class T>
TrainableSelection select_trainable(const DiT<T>& model, std::string_view mode) {
    return select_trainable(model, parse_trainable_mode(mode));
}

/// Closed-form selected-parameter count for a config.
inline std::size_t analytic_trainable_count(const ModelConfig& c, TrainableMode mode) {
    const std::size_t mm = static_cast<std::size_t>(c.n_mmdit) * c.mmdit_attention_params_per_block();
    const std::size_t single = static_cast<std::size_t>(c.n_singledit) * c.singledit_attention_params_per_block();
    switch (mode) {
        case TrainableMode::mmdit_attention: return mm;
        case TrainableMode::singledit_attention: return single;
        case TrainableMode::all_attention: return mm + single;
        case TrainableMode::full: break;
    }
    const std::size_t d = static_cast<std::size_t>(c.d_model), hid = d * static_cast<std::size_t>(c.mlp_ratio);
    auto lin = [](std::size_t in, std::size_t out) { return in * out + out; };
    std::size_t n = lin(static_cast<std::size_t>(c.token_dim_in), d) + 2 * lin(static_cast<std::size_t>(c.d_text), d) +
                    4 * lin(d, d);
    n += static_cast<std::size_t>(c.n_mmdit) * (2 * lin(d, 6 * d) + 8 * lin(d, d) + 2 * (lin(d, hid) + lin(hid, d)));
    n += static_cast<std::size_t>(c.n_singledit) * (lin(d, 3 * d) + 4 * lin(d, d) + lin(d, hid) + lin(hid, d));
    n += lin(d, 2 * d) + lin(d, static_cast<std::size_t>(c.out_dim));
    return n;
}

}  // namespace tryon::dit
