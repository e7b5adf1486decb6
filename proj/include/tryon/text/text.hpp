#pragma once

// Captions, hash tokenization and a frozen toy text encoder that yields both
// a token sequence (consumed by the text stream of the transformer) and a
// pooled vector (added to the conditioning vector).

#include <cctype>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "tryon/core/error.hpp"
#include "tryon/core/rng.hpp"
#include "tryon/nn/ops.hpp"
#include "tryon/nn/params.hpp"

namespace tryon::text {

using nn::Mat;
using nn::RowVec;

struct Caption {
    std::string text;
    bool is_integrated = false;

    bool empty() const noexcept { return text.empty(); }
    bool operator==(const Caption&) const = default;
};

enum class CaptionMode { integrated, ordinary, none };

inline std::string_view to_string(CaptionMode m) {
    switch (m) {
        case CaptionMode::integrated: return "integrated";
        case CaptionMode::ordinary: return "ordinary";
        case CaptionMode::none: return "none";
    }
    return "?";
}

inline CaptionMode parse_caption_mode(std::string_view s) {
    for (auto m : {CaptionMode::integrated, CaptionMode::ordinary, CaptionMode::none})
        if (to_string(m) == s) return m;
    fail<ValueError>("unknown caption mode '", s, "' (expected integrated, ordinary or none)");
}

namespace detail {
inline constexpr std::string_view kHead = "Side-by-side: [LEFT] ";
inline constexpr std::string_view kMid = " on a plain background; [RIGHT] a person wearing ";
inline constexpr std::string_view kSep = ", ";
inline constexpr std::string_view kTail = ".";
}  // namespace detail

/// "Side-by-side: [LEFT] <g> on a plain background; [RIGHT] a person wearing <g>, <p>."
inline Caption build_integrated_caption(std::string_view garment_desc, std::string_view person_desc) {
    require<ValueError>(!garment_desc.empty(), "integrated caption: empty garment description");
    require<ValueError>(!person_desc.empty(), "integrated caption: empty person description");
    std::string s;
    s.append(detail::kHead).append(garment_desc).append(detail::kMid).append(garment_desc);
    s.append(detail::kSep).append(person_desc).append(detail::kTail);
    return {std::move(s), true};
}

/// Inverse of build_integrated_caption; nullopt if `c` does not follow the template.
inline std::optional<std::pair<std::string, std::string>> parse_integrated_caption(std::string_view c) {
    using namespace detail;
    if (!c.starts_with(kHead) || !c.ends_with(kTail)) return std::nullopt;
    const std::string_view body = c.substr(kHead.size(), c.size() - kHead.size() - kTail.size());
    const auto mid = body.find(kMid);
    if (mid == std::string_view::npos) return std::nullopt;
    const std::string_view g = body.substr(0, mid);
    std::string_view rest = body.substr(mid + kMid.size());
    if (!rest.starts_with(g) || !rest.substr(g.size()).starts_with(kSep)) return std::nullopt;
    const std::string_view p = rest.substr(g.size() + kSep.size());
    if (g.empty() || p.empty()) return std::nullopt;
    return std::pair<std::string, std::string>{std::string(g), std::string(p)};
}

inline Caption ordinary_caption() { return {"A model is wearing a top.", false}; }

inline Caption caption_for(CaptionMode mode, std::string_view garment_desc, std::string_view person_desc) {
    switch (mode) {
        case CaptionMode::integrated: return build_integrated_caption(garment_desc, person_desc);
        case CaptionMode::ordinary: return ordinary_caption();
        case CaptionMode::none: break;
    }
    return {};
}

/// With probability p returns the empty caption. Always consumes one draw.
inline Caption drop_caption(const Caption& c, double p, Rng& rng) {
    require<ValueError>(p >= 0.0 && p <= 1.0, "caption dropout probability must be in [0,1], got ", p);
    return rng.uniform() < p ? Caption{} : c;
}

struct TextConfig {
    int vocab_size = 4096;
    int max_tokens = 32;
    int d_text = 64;
    std::uint64_t seed = 0;

    void validate() const {
        require<ValueError>(vocab_size >= 2, "vocab_size must be >= 2");
        require<ValueError>(max_tokens >= 1, "max_tokens must be >= 1");
        require<ValueError>(d_text >= 2 && d_text % 2 == 0, "d_text must be even and >= 2");
    }
};

struct TokenIds {
    std::vector<int> ids;  // max_tokens entries, 0 = padding
    int length = 0;

    bool operator==(const TokenIds&) const = default;
};

inline std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

/// Lowercase, split on anything that is not alphanumeric, hash each word to
/// [1, vocab_size). Truncates or pads with 0 to max_tokens.
inline TokenIds tokenize(const Caption& c, int vocab_size, int max_tokens) {
    require<ValueError>(vocab_size >= 2 && max_tokens >= 1, "tokenize: bad vocab_size/max_tokens");
    TokenIds out;
    out.ids.assign(static_cast<std::size_t>(max_tokens), 0);
    std::string word;
    auto flush = [&] {
        if (word.empty()) return;
        if (out.length < max_tokens)
            out.ids[static_cast<std::size_t>(out.length++)] =
                1 + static_cast<int>(fnv1a(word) % static_cast<std::uint64_t>(vocab_size - 1));
        word.clear();
    };
    for (unsigned char ch : c.text) {
        if (std::isalnum(ch))
            word.push_back(static_cast<char>(std::tolower(ch)));
        else
            flush();
    }
    flush();
    return out;
}

template <class T>
struct TextEncoding {
    Mat<T> sequence;  // max_tokens x d_text, rows >= length are zero
    RowVec<T> pooled;  // d_text
    int length = 0;

    Mat<T> active() const { return sequence.topRows(length); }
};

/// Frozen random embedding table plus sinusoidal token positions.
class TextEncoder {
public:
    TextEncoder() : TextEncoder(TextConfig{}) {}

    explicit TextEncoder(const TextConfig& cfg) : cfg_(cfg) {
        cfg_.validate();
        params_.add("text.embedding", cfg_.vocab_size, cfg_.d_text);
        Rng rng(derive_seed(cfg_.seed, 0x7E47));
        nn::init_truncated_normal(params_["text.embedding"], 1.0, rng);
        params_["text.embedding"].row(0).setZero();
    }

    const TextConfig& config() const noexcept { return cfg_; }
    nn::ParamStore<float>& params() noexcept { return params_; }
    const nn::ParamStore<float>& params() const noexcept { return params_; }

    TokenIds tokenize(const Caption& c) const { return text::tokenize(c, cfg_.vocab_size, cfg_.max_tokens); }

    template <class T = float>
    TextEncoding<T> encode(const TokenIds& tok) const {
        require<ValueError>(static_cast<int>(tok.ids.size()) == cfg_.max_tokens, "encode_text: expected ",
                            cfg_.max_tokens, " token ids, got ", tok.ids.size());
        const auto& table = params_["text.embedding"];
        TextEncoding<T> e;
        e.length = tok.length;
        e.sequence = Mat<T>::Zero(cfg_.max_tokens, cfg_.d_text);
        e.pooled = RowVec<T>::Zero(cfg_.d_text);
        for (int i = 0; i < tok.length; ++i) {
            const int id = tok.ids[static_cast<std::size_t>(i)];
            require<ValueError>(id >= 1 && id < cfg_.vocab_size, "encode_text: token id ", id,
                                " outside vocabulary [1, ", cfg_.vocab_size, ")");
            e.sequence.row(i) = table.row(id).template cast<T>() + position(i).template cast<T>();
            e.pooled += e.sequence.row(i);
        }
        if (tok.length > 0) e.pooled /= static_cast<T>(tok.length);
        return e;
    }

    template <class T = float>
    TextEncoding<T> encode(const Caption& c) const {
        return encode<T>(tokenize(c));
    }

private:
    TextConfig cfg_;
    nn::ParamStore<float> params_;

    RowVec<float> position(int i) const { return nn::sinusoidal<float>(i / 1000.0, cfg_.d_text); }
};

}  // namespace tryon::text
