#pragma once

#include <cmath>
#include <map>
#include <string>

#include "tryon/core/error.hpp"
#include "tryon/nn/params.hpp"

namespace tryon::train {

struct AdamWConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
};

template <class T>
using NamedGrads = std::map<std::string, nn::Mat<T>>;

/// Decoupled-weight-decay Adam. Moment buffers exist for every parameter of
/// the store but only the names passed to step() are touched.
template <class T>
class AdamW {
public:
    AdamW() = default;
    AdamW(const nn::ParamStore<T>& params, AdamWConfig cfg = {})
        : cfg_(cfg), m_(params.zeros_like()), v_(params.zeros_like()) {}

    const AdamWConfig& config() const noexcept { return cfg_; }
    long step_count() const noexcept { return t_; }
    nn::ParamStore<T>& first_moment() noexcept { return m_; }
    nn::ParamStore<T>& second_moment() noexcept { return v_; }
    const nn::ParamStore<T>& first_moment() const noexcept { return m_; }
    const nn::ParamStore<T>& second_moment() const noexcept { return v_; }
    void set_step_count(long t) noexcept { t_ = t; }

    /// grads must hold exactly the names in `selected`; a gradient for any
    /// other parameter is a contract violation.
    template <class Names>
    void step(nn::ParamStore<T>& params, const NamedGrads<T>& grads, const Names& selected, double lr) {
        require<ValueError>(lr >= 0.0, "learning rate must be non-negative, got ", lr);
        std::size_t matched = 0;
        for (const auto& [name, g] : grads) {
            bool in_selection = false;
            for (const auto& s : selected)
                if (s == name) {
                    in_selection = true;
                    break;
                }
            require<ValueError>(in_selection, "gradient supplied for frozen parameter ", name);
            ++matched;
        }
        require<ValueError>(matched == std::size(selected), "expected gradients for ", std::size(selected),
                            " selected parameters, got ", matched);

        ++t_;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
        for (const auto& [name, g] : grads) {
            const int id = params.id(name);
            auto& p = params[id];
            require(g.rows() == p.rows() && g.cols() == p.cols(), "gradient shape mismatch for ", name);
            auto& m = m_[id];
            auto& v = v_[id];
            for (Eigen::Index i = 0; i < p.size(); ++i) {
                const double gi = static_cast<double>(g.data()[i]);
                const double mi = cfg_.beta1 * static_cast<double>(m.data()[i]) + (1.0 - cfg_.beta1) * gi;
                const double vi = cfg_.beta2 * static_cast<double>(v.data()[i]) + (1.0 - cfg_.beta2) * gi * gi;
                m.data()[i] = static_cast<T>(mi);
                v.data()[i] = static_cast<T>(vi);
                double pi = static_cast<double>(p.data()[i]);
                pi -= lr * cfg_.weight_decay * pi;
                pi -= lr * (mi / bc1) / (std::sqrt(vi / bc2) + cfg_.eps);
                p.data()[i] = static_cast<T>(pi);
            }
        }
    }

private:
    AdamWConfig cfg_;
    nn::ParamStore<T> m_, v_;
    long t_ = 0;
};

}  // namespace tryon::train
